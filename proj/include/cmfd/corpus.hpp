#ifndef CMFD_CORPUS_HPP
#define CMFD_CORPUS_HPP

// Corpus manifests, ground-truth files and corpus generation.
//
// Manifest: one record per line, whitespace-separated key=value tokens,
// '#' starts a comment. A value may list alternatives with '|'; a line
// expands to the Cartesian product of its lists.
//
//   source=texture:7:512x512 src=40,40,112,112 dst=330,300 rot=0|10|20 out=t7_r{rot}.png
//
// Keys: source (image path or texture:<seed>:<W>x<H>), src=x,y,w,h,
// dst=cx,cy, rot, scale, seed, noise, noise_seed, jpeg (0 = none), out,
// gt, group. out/gt/group may use {key} placeholders.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "cmfd/codec.hpp"
#include "cmfd/imgcore.hpp"
#include "cmfd/parallel.hpp"
#include "cmfd/synth.hpp"

namespace cmfd {

namespace fs = std::filesystem;

inline constexpr int kGroundTruthSchemaVersion = 1;

class ManifestError : public std::runtime_error {
 public:
  ManifestError(int line, const std::string& what)
      : std::runtime_error("manifest line " + std::to_string(line) + ": " + what), line_(line) {}
  int line() const noexcept { return line_; }

 private:
  int line_;
};

struct TextureSource {
  std::uint64_t seed = 0;
  int width = 0;
  int height = 0;
};

struct ManifestRecord {
  int line = 0;
  std::string source;  // as written
  ForgerySpec forgery;
  double noise = 0;
  std::uint64_t noise_seed = 0;
  int jpeg = 0;  // 0 = no recompression
  std::string out;
  std::string gt;
  std::string group;
};

namespace detail {

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

inline double parse_double(const std::string& s, const std::string& what) {
  std::size_t used = 0;
  double v = 0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (s.empty() || used != s.size()) throw std::invalid_argument(what + ": not a number: '" + s + "'");
  return v;
}

inline long long parse_int(const std::string& s, const std::string& what) {
  std::size_t used = 0;
  long long v = 0;
  try {
    v = std::stoll(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (s.empty() || used != s.size()) throw std::invalid_argument(what + ": not an integer: '" + s + "'");
  return v;
}

inline std::string substitute(std::string tmpl, const std::map<std::string, std::string>& values) {
  for (const auto& [k, v] : values) {
    const std::string ph = "{" + k + "}";
    for (auto pos = tmpl.find(ph); pos != std::string::npos; pos = tmpl.find(ph, pos + v.size()))
      tmpl.replace(pos, ph.size(), v);
  }
  if (const auto open = tmpl.find('{'); open != std::string::npos) {
    const auto close = tmpl.find('}', open);
    throw std::invalid_argument("unknown placeholder " + tmpl.substr(open, close == std::string::npos ? 1 : close - open + 1));
  }
  return tmpl;
}

inline const std::set<std::string>& manifest_keys() {
  static const std::set<std::string> keys{"source", "src", "dst", "rot", "scale", "seed",
                                          "noise", "noise_seed", "jpeg", "out", "gt", "group"};
  return keys;
}

inline ManifestRecord make_record(int line, const std::map<std::string, std::string>& v,
                                  std::uint64_t default_seed) {
  for (const char* req : {"source", "src", "dst", "out"})
    if (!v.contains(req)) throw std::invalid_argument(std::string("missing key '") + req + "'");
  ManifestRecord r;
  r.line = line;
  r.source = v.at("source");

  const auto src = split(v.at("src"), ',');
  if (src.size() != 4) throw std::invalid_argument("src expects x,y,w,h");
  r.forgery.src = {static_cast<int>(parse_int(src[0], "src")), static_cast<int>(parse_int(src[1], "src")),
                   static_cast<int>(parse_int(src[2], "src")), static_cast<int>(parse_int(src[3], "src"))};
  const auto dst = split(v.at("dst"), ',');
  if (dst.size() != 2) throw std::invalid_argument("dst expects cx,cy");
  r.forgery.dst_cx = parse_double(dst[0], "dst");
  r.forgery.dst_cy = parse_double(dst[1], "dst");

  const auto get = [&](const char* k, const std::string& dflt) {
    const auto it = v.find(k);
    return it == v.end() ? dflt : it->second;
  };
  r.forgery.rotation = parse_double(get("rot", "0"), "rot");
  r.forgery.scale = parse_double(get("scale", "1"), "scale");
  const long long seed = parse_int(get("seed", std::to_string(default_seed)), "seed");
  if (seed < 0) throw std::invalid_argument("seed must be >= 0");
  r.forgery.seed = static_cast<std::uint64_t>(seed);
  r.noise = parse_double(get("noise", "0"), "noise");
  if (!(r.noise >= 0)) throw std::invalid_argument("noise must be >= 0");
  const long long nseed = parse_int(get("noise_seed", std::to_string(seed)), "noise_seed");
  if (nseed < 0) throw std::invalid_argument("noise_seed must be >= 0");
  r.noise_seed = static_cast<std::uint64_t>(nseed);
  const long long q = parse_int(get("jpeg", "0"), "jpeg");
  if (q < 0 || q > 100) throw std::invalid_argument("jpeg must be 0 (none) or a quality in [1, 100]");
  r.jpeg = static_cast<int>(q);
  validate(r.forgery, RangePolicy::experimental);

  std::map<std::string, std::string> ph(v.begin(), v.end());
  ph.erase("out");
  ph.erase("gt");
  ph.erase("group");
  ph.try_emplace("rot", "0");
  ph.try_emplace("scale", "1");
  ph.try_emplace("seed", std::to_string(seed));
  ph.try_emplace("noise", "0");
  ph.try_emplace("noise_seed", std::to_string(nseed));
  ph.try_emplace("jpeg", "0");
  ph["line"] = std::to_string(line);
  r.out = substitute(v.at("out"), ph);
  if (r.out.empty()) throw std::invalid_argument("out is empty");
  r.gt = v.contains("gt") ? substitute(v.at("gt"), ph)
                          : (fs::path(r.out).parent_path() / (fs::path(r.out).stem().string() + ".gt.json")).string();
  r.group = v.contains("group")
                ? substitute(v.at("group"), ph)
                : r.source + ";" + v.at("src") + ";" + v.at("dst") + ";" + get("rot", "0") + ";" +
                      get("scale", "1") + ";" + std::to_string(seed);
  return r;
}

}  // namespace detail

/// Parses and expands a manifest. Errors carry the offending line number.
inline std::vector<ManifestRecord> parse_manifest(std::istream& in, std::uint64_t default_seed = 0) {
  std::vector<ManifestRecord> out;
  std::set<std::string> outputs;
  std::string text;
  int lineno = 0;
  while (std::getline(in, text)) {
    ++lineno;
    if (auto hash = text.find('#'); hash != std::string::npos) text.erase(hash);
    std::istringstream ts(text);
    std::vector<std::pair<std::string, std::vector<std::string>>> fields;
    std::string tok;
    try {
      while (ts >> tok) {
        const auto eq = tok.find('=');
        if (eq == std::string::npos || eq == 0) throw std::invalid_argument("expected key=value, got '" + tok + "'");
        std::string key = tok.substr(0, eq);
        if (!detail::manifest_keys().contains(key)) throw std::invalid_argument("unknown key '" + key + "'");
        for (const auto& f : fields)
          if (f.first == key) throw std::invalid_argument("duplicate key '" + key + "'");
        auto alts = detail::split(tok.substr(eq + 1), '|');
        for (const auto& a : alts)
          if (a.empty()) throw std::invalid_argument("empty value for '" + key + "'");
        fields.emplace_back(std::move(key), std::move(alts));
      }
      if (fields.empty()) continue;

      std::vector<std::size_t> idx(fields.size(), 0);
      std::size_t total = 1;
      for (const auto& f : fields) total *= f.second.size();
      for (std::size_t n = 0; n < total; ++n) {
        std::map<std::string, std::string> values;
        for (std::size_t k = 0; k < fields.size(); ++k) values[fields[k].first] = fields[k].second[idx[k]];
        ManifestRecord rec = detail::make_record(lineno, values, default_seed);
        if (!outputs.insert(rec.out).second) throw std::invalid_argument("output '" + rec.out + "' produced twice");
        out.push_back(std::move(rec));
        for (std::size_t k = fields.size(); k-- > 0;) {
          if (++idx[k] < fields[k].second.size()) break;
          idx[k] = 0;
        }
      }
    } catch (const ManifestError&) {
      throw;
    } catch (const std::exception& e) {
      throw ManifestError(lineno, e.what());
    }
  }
  return out;
}

inline std::vector<ManifestRecord> parse_manifest_file(const fs::path& path, std::uint64_t default_seed = 0) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read manifest: " + path.string());
  return parse_manifest(in, default_seed);
}

inline std::optional<TextureSource> parse_texture_source(const std::string& s) {
  if (!s.starts_with("texture:")) return std::nullopt;
  const auto parts = detail::split(s.substr(8), ':');
  if (parts.size() != 2) throw std::invalid_argument("texture source expects texture:<seed>:<W>x<H>");
  const auto dims = detail::split(parts[1], 'x');
  if (dims.size() != 2) throw std::invalid_argument("texture source expects texture:<seed>:<W>x<H>");
  const long long seed = detail::parse_int(parts[0], "texture seed");
  if (seed < 0) throw std::invalid_argument("texture seed must be >= 0");
  return TextureSource{static_cast<std::uint64_t>(seed), static_cast<int>(detail::parse_int(dims[0], "texture width")),
                       static_cast<int>(detail::parse_int(dims[1], "texture height"))};
}

// ---------------------------------------------------------------------------
// Ground-truth files

struct CorpusEntry {
  std::string image_id;
  fs::path image_path;
  fs::path gt_path;
  ForgerySpec forgery;
  double noise = 0;
  int jpeg = 0;
  std::string group;
  GroundTruth gt;
};

inline GrayImage mask_image(const std::vector<std::uint8_t>& mask, int w, int h) {
  GrayImage m(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) m.set(x, y, mask[static_cast<std::size_t>(y) * w + x] ? 1.0 : 0.0);
  return m;
}

inline nlohmann::ordered_json ground_truth_json(const ManifestRecord& r, const GroundTruth& gt,
                                                const std::string& image_name, const std::string& src_mask,
                                                const std::string& dst_mask) {
  nlohmann::ordered_json j;
  j["schema_version"] = kGroundTruthSchemaVersion;
  j["image"] = image_name;
  j["width"] = gt.width;
  j["height"] = gt.height;
  j["source"] = r.source;
  j["group"] = r.group;
  j["forgery"] = {{"src", {r.forgery.src.x, r.forgery.src.y, r.forgery.src.w, r.forgery.src.h}},
                  {"dst_center", {r.forgery.dst_cx, r.forgery.dst_cy}},
                  {"rotation", r.forgery.rotation},
                  {"scale", r.forgery.scale},
                  {"seed", r.forgery.seed}};
  j["perturbation"] = {{"noise_sigma", r.noise},
                       {"noise_seed", r.noise_seed},
                       {"jpeg_quality", r.jpeg > 0 ? nlohmann::ordered_json(r.jpeg) : nlohmann::ordered_json(nullptr)}};
  const Affine& a = gt.dst_to_src;
  j["dst_to_src"] = {a.a, a.b, a.c, a.d, a.e, a.f};
  j["src_mask"] = src_mask;
  j["dst_mask"] = dst_mask;
  return j;
}

/// Reads a ground-truth file; masks are regenerated from the recorded
/// forgery, which reproduces the written mask files exactly.
inline CorpusEntry load_corpus_entry(const fs::path& gt_path) {
  std::ifstream in(gt_path);
  if (!in) throw std::runtime_error("cannot read ground truth: " + gt_path.string());
  nlohmann::json j;
  try {
    in >> j;
    CorpusEntry e;
    e.gt_path = gt_path;
    e.image_path = gt_path.parent_path() / j.at("image").get<std::string>();
    e.image_id = e.image_path.stem().string();
    const auto& f = j.at("forgery");
    const auto src = f.at("src").get<std::vector<int>>();
    const auto dst = f.at("dst_center").get<std::vector<double>>();
    if (src.size() != 4 || dst.size() != 2) throw std::runtime_error("bad forgery geometry");
    e.forgery.src = {src[0], src[1], src[2], src[3]};
    e.forgery.dst_cx = dst[0];
    e.forgery.dst_cy = dst[1];
    e.forgery.rotation = f.at("rotation").get<double>();
    e.forgery.scale = f.at("scale").get<double>();
    e.forgery.seed = f.at("seed").get<std::uint64_t>();
    const auto& p = j.at("perturbation");
    e.noise = p.at("noise_sigma").get<double>();
    e.jpeg = p.at("jpeg_quality").is_null() ? 0 : p.at("jpeg_quality").get<int>();
    e.group = j.value("group", std::string{});
    e.gt = ground_truth_for(j.at("width").get<int>(), j.at("height").get<int>(), e.forgery,
                            RangePolicy::unrestricted);
    return e;
  } catch (const nlohmann::json::exception& ex) {
    throw std::runtime_error("malformed ground truth " + gt_path.string() + ": " + ex.what());
  }
}

// ---------------------------------------------------------------------------
// Generation

struct SynthResult {
  fs::path image;
  fs::path gt;
};

namespace detail {

using SourceImage = std::variant<GrayImage, RgbImage>;

inline SourceImage load_source(const std::string& source, const fs::path& base) {
  if (auto tex = parse_texture_source(source)) return make_texture(tex->seed, tex->width, tex->height);
  const fs::path p = fs::path(source).is_absolute() ? fs::path(source) : base / source;
  DecodedImage d = load_image(p.string());
  if (d.is_color) return std::move(d.rgb);
  return std::move(d.gray);
}

template <class Image>
Image synthesize(const Image& src, const ManifestRecord& r, GroundTruth& gt) {
  auto [forged, truth] = apply_copy_move(src, r.forgery, RangePolicy::experimental);
  gt = std::move(truth);
  if (r.noise > 0) forged = add_gaussian_noise(forged, r.noise, r.noise_seed);
  if (r.jpeg > 0) forged = jpeg_recompress(forged, r.jpeg);
  return forged;
}

}  // namespace detail

/// Generates every record of a manifest. Relative sources resolve against
/// source_dir, outputs against out_dir. Records are independent and run
/// in parallel; the first failure (in manifest order) is rethrown with its
/// line number after all workers finish.
inline std::vector<SynthResult> run_manifest(const std::vector<ManifestRecord>& records,
                                             const fs::path& source_dir, const fs::path& out_dir,
                                             int threads = 1) {
  std::map<std::string, detail::SourceImage> sources;
  for (const auto& r : records) {
    if (sources.contains(r.source)) continue;
    try {
      sources.emplace(r.source, detail::load_source(r.source, source_dir));
    } catch (const std::exception& e) {
      throw ManifestError(r.line, e.what());
    }
  }

  std::vector<SynthResult> results(records.size());
  std::vector<std::string> errors(records.size());
  parallel_for(records.size(), threads, [&](std::size_t n) {
    const ManifestRecord& r = records[n];
    try {
      const fs::path image = out_dir / r.out;
      const fs::path gtp = out_dir / r.gt;
      if (image.has_parent_path()) fs::create_directories(image.parent_path());
      if (gtp.has_parent_path()) fs::create_directories(gtp.parent_path());
      GroundTruth gt;
      std::visit([&](const auto& src) { save_image(image.string(), detail::synthesize(src, r, gt)); },
                 sources.at(r.source));
      const std::string stem = image.stem().string();
      const fs::path sm = image.parent_path() / (stem + ".srcmask.png");
      const fs::path dm = image.parent_path() / (stem + ".dstmask.png");
      save_image(sm.string(), mask_image(gt.src_mask, gt.width, gt.height));
      save_image(dm.string(), mask_image(gt.dst_mask, gt.width, gt.height));
      const auto rel = [&](const fs::path& p) { return fs::relative(p, gtp.parent_path()).generic_string(); };
      std::ofstream os(gtp);
      os << ground_truth_json(r, gt, rel(image), rel(sm), rel(dm)).dump(2) << '\n';
      if (!os) throw std::runtime_error("cannot write " + gtp.string());
      results[n] = {image, gtp};
    } catch (const std::exception& e) {
      errors[n] = e.what();
    }
  });
  for (std::size_t n = 0; n < records.size(); ++n)
    if (!errors[n].empty()) throw ManifestError(records[n].line, errors[n]);
  return results;
}

// ---------------------------------------------------------------------------
// Scanning

inline bool is_image_file(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  if (ext != ".png" && ext != ".jpg" && ext != ".jpeg" && ext != ".bmp" && ext != ".tif" && ext != ".tiff")
    return false;
  const std::string stem = p.stem().string();
  return !stem.ends_with(".srcmask") && !stem.ends_with(".dstmask");
}

/// Image files under dir (recursive, sorted), mask files excluded.
inline std::vector<fs::path> list_images(const fs::path& dir) {
  std::vector<fs::path> out;
  if (!fs::is_directory(dir)) throw std::runtime_error("not a directory: " + dir.string());
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file() && is_image_file(e.path())) out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

inline fs::path ground_truth_path_for(const fs::path& image) {
  return image.parent_path() / (image.stem().string() + ".gt.json");
}

}  // namespace cmfd

#endif  // CMFD_CORPUS_HPP
