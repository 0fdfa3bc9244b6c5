#ifndef CMFD_PIPELINE_HPP
#define CMFD_PIPELINE_HPP

// End-to-end detection: grayscale -> keypoints -> descriptors -> Hamming
// kNN -> ratio filter, with per-stage timings and ground-truth metrics.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "cmfd/descriptor.hpp"
#include "cmfd/detector.hpp"
#include "cmfd/imgcore.hpp"
#include "cmfd/matcher.hpp"
#include "cmfd/surf_baseline.hpp"
#include "cmfd/synth.hpp"

namespace cmfd {

inline constexpr int kReportSchemaVersion = 1;

enum class DescriptorKind { brisk, surf_baseline };
enum class Verdict { clean, inconclusive, forged };

inline std::string_view to_string(DescriptorKind k) {
  return k == DescriptorKind::brisk ? "brisk" : "surf_baseline";
}
inline std::string_view to_string(Verdict v) {
  switch (v) {
    case Verdict::clean: return "clean";
    case Verdict::inconclusive: return "inconclusive";
    case Verdict::forged: return "forged";
  }
  return "clean";
}
inline std::string_view to_string(Smoothing s) { return s == Smoothing::box ? "box" : "gaussian"; }

struct PipelineConfig {
  DetectorParams detector;
  PatternParams pattern;
  MatcherParams matcher;
  int verdict_min_pairs = 3;
  DescriptorKind descriptor = DescriptorKind::brisk;
  double tol_px = 4.0;
  int threads = 1;

  void validate() const {
    detector.validate();
    pattern.validate();
    matcher.validate();
    if (verdict_min_pairs < 1) throw std::invalid_argument("verdict_min_pairs must be >= 1");
    if (!(tol_px >= 0)) throw std::invalid_argument("tol_px must be >= 0");
    if (threads < 1) throw std::invalid_argument("threads must be >= 1");
  }
};

/// Sets one config field by its flag / config-file name.
inline void set_config_value(PipelineConfig& cfg, std::string_view key, const std::string& value) {
  const auto num = [&]() {
    std::size_t used = 0;
    double v = 0;
    try {
      v = std::stod(value, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != value.size() || value.empty())
      throw std::invalid_argument("config: '" + std::string(key) + "' expects a number, got '" + value + "'");
    return v;
  };
  const auto integer = [&]() {
    const double v = num();
    if (v != std::floor(v)) throw std::invalid_argument("config: '" + std::string(key) + "' expects an integer");
    return static_cast<int>(v);
  };
  if (key == "octaves") cfg.detector.n_octaves = integer();
  else if (key == "layers") cfg.detector.layers_per_octave = integer();
  else if (key == "hessian_threshold") cfg.detector.hessian_threshold = num();
  else if (key == "initial_step") cfg.detector.initial_step = integer();
  else if (key == "delta_max") cfg.pattern.delta_max_coeff = num();
  else if (key == "delta_min") cfg.pattern.delta_min_coeff = num();
  else if (key == "n_rotations") cfg.pattern.n_rotations = integer();
  else if (key == "smoothing") {
    if (value == "box") cfg.pattern.smoothing = Smoothing::box;
    else if (value == "gaussian") cfg.pattern.smoothing = Smoothing::gaussian;
    else throw std::invalid_argument("config: smoothing must be box or gaussian");
  } else if (key == "rho") cfg.matcher.rho = num();
  else if (key == "min_pair_distance") cfg.matcher.min_pair_distance = num();
  else if (key == "k") cfg.matcher.k = integer();
  else if (key == "verdict_min_pairs") cfg.verdict_min_pairs = integer();
  else if (key == "tol_px") cfg.tol_px = num();
  else if (key == "threads") cfg.threads = integer();
  else if (key == "descriptor") {
    if (value == "brisk") cfg.descriptor = DescriptorKind::brisk;
    else if (value == "surf_baseline") cfg.descriptor = DescriptorKind::surf_baseline;
    else throw std::invalid_argument("config: descriptor must be brisk or surf_baseline");
  } else {
    throw std::invalid_argument("config: unknown key '" + std::string(key) + "'");
  }
}

/// key=value lines; '#' starts a comment.
inline void load_config_file(const std::string& path, PipelineConfig& cfg) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read config file: " + path);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument(path + ":" + std::to_string(lineno) + ": expected key=value");
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
    };
    try {
      set_config_value(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

struct StageTimings {
  double detect = 0;  // seconds
  double describe = 0;
  double match = 0;
};

/// A match pair with its endpoint keypoints.
struct ReportPair {
  MatchPair match;
  Keypoint a;  // keypoint of match.i
  Keypoint b;  // keypoint of match.j
};

struct DetectionReport {
  std::string image_id;
  PipelineConfig params;
  int image_width = 0;
  int image_height = 0;
  int keypoint_count = 0;
  int described_keypoint_count = 0;
  std::vector<ReportPair> matched_pairs;
  int matched_keypoint_count = 0;  // distinct pair endpoints
  std::optional<int> valid_pair_count;
  std::optional<int> valid_keypoint_count;
  std::optional<double> correct_detection_ratio;  // percent of pairs
  std::optional<double> forged_region_keypoint_ratio;
  StageTimings stage_timings;
  Verdict verdict = Verdict::clean;

  // Keypoints that received a descriptor; MatchPair indices point here.
  std::vector<Keypoint> keypoints;
};

inline Verdict verdict_for(std::size_t pairs, int min_pairs) noexcept {
  if (pairs >= static_cast<std::size_t>(min_pairs)) return Verdict::forged;
  return pairs == 0 ? Verdict::clean : Verdict::inconclusive;
}

namespace detail {

using Clock = std::chrono::steady_clock;

inline double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

inline int distinct_endpoints(std::span<const MatchPair> pairs) {
  std::set<int> ids;
  for (const auto& p : pairs) {
    ids.insert(p.i);
    ids.insert(p.j);
  }
  return static_cast<int>(ids.size());
}

}  // namespace detail

/// Descriptors plus the keypoints they were computed at.
template <class Descriptor>
struct Described {
  std::vector<Descriptor> descriptors;
  std::vector<Keypoint> keypoints;
};

inline Described<BinaryDescriptor> describe_binary(const GrayImage& img, const IntegralImage& ii,
                                                   std::span<const Keypoint> kps,
                                                   const SamplingPattern& pattern, int threads) {
  Described<BinaryDescriptor> out;
  out.descriptors = describe_all(img, ii, kps, pattern, threads);
  out.keypoints.reserve(out.descriptors.size());
  for (const auto& d : out.descriptors) out.keypoints.push_back(kps[d.keypoint_index]);
  return out;
}

inline Described<SurfDescriptor> describe_surf(const IntegralImage& ii, std::span<const Keypoint> kps,
                                               int threads) {
  Described<SurfDescriptor> out;
  out.descriptors = surf_describe_all(ii, kps, threads);
  out.keypoints.reserve(out.descriptors.size());
  for (const auto& d : out.descriptors) out.keypoints.push_back(kps[d.keypoint_index]);
  return out;
}

/// Runs the full chain on a grayscale image.
inline DetectionReport detect_forgery(const GrayImage& img, const PipelineConfig& cfg,
                                      std::string image_id = {}) {
  cfg.validate();
  DetectorParams dp = cfg.detector;
  dp.threads = cfg.threads;
  MatcherParams mp = cfg.matcher;
  mp.threads = cfg.threads;

  DetectionReport rep;
  rep.image_id = std::move(image_id);
  rep.params = cfg;
  rep.image_width = img.width();
  rep.image_height = img.height();

  auto t0 = detail::Clock::now();
  const IntegralImage ii(img);
  const std::vector<Keypoint> kps = detect(ii, dp);
  rep.stage_timings.detect = detail::seconds_since(t0);
  rep.keypoint_count = static_cast<int>(kps.size());

  std::vector<MatchPair> pairs;
  if (cfg.descriptor == DescriptorKind::brisk) {
    t0 = detail::Clock::now();
    const SamplingPattern pattern = build_pattern(1.0, cfg.pattern);
    auto described = describe_binary(img, ii, kps, pattern, cfg.threads);
    rep.stage_timings.describe = detail::seconds_since(t0);
    t0 = detail::Clock::now();
    pairs = knn_match(std::span<const BinaryDescriptor>(described.descriptors),
                      std::span<const Keypoint>(described.keypoints), mp);
    rep.stage_timings.match = detail::seconds_since(t0);
    rep.keypoints = std::move(described.keypoints);
  } else {
    t0 = detail::Clock::now();
    auto described = describe_surf(ii, kps, cfg.threads);
    rep.stage_timings.describe = detail::seconds_since(t0);
    t0 = detail::Clock::now();
    pairs = knn_match(std::span<const SurfDescriptor>(described.descriptors),
                      std::span<const Keypoint>(described.keypoints), mp);
    rep.stage_timings.match = detail::seconds_since(t0);
    rep.keypoints = std::move(described.keypoints);
  }

  rep.described_keypoint_count = static_cast<int>(rep.keypoints.size());
  rep.matched_keypoint_count = detail::distinct_endpoints(pairs);
  rep.matched_pairs.reserve(pairs.size());
  for (const auto& p : pairs) rep.matched_pairs.push_back({p, rep.keypoints[p.i], rep.keypoints[p.j]});
  rep.verdict = verdict_for(pairs.size(), cfg.verdict_min_pairs);
  return rep;
}

inline DetectionReport detect_forgery(const RgbImage& img, const PipelineConfig& cfg,
                                      std::string image_id = {}) {
  return detect_forgery(to_grayscale(img), cfg, std::move(image_id));
}

// ---------------------------------------------------------------------------
// Ground-truth metrics

inline int pixel_of(double v) noexcept { return static_cast<int>(std::lround(v)); }

/// One endpoint in the source region, the other in the pasted region, and
/// the pasted endpoint maps back to within tol_px of the source endpoint.
inline bool is_valid_pair(const Keypoint& a, const Keypoint& b, const GroundTruth& gt, double tol_px) {
  const auto check = [&](const Keypoint& src, const Keypoint& dst) {
    if (!gt.in_src(pixel_of(src.x), pixel_of(src.y)) || !gt.in_dst(pixel_of(dst.x), pixel_of(dst.y)))
      return false;
    const Point2 q = gt.map_to_src(dst.x, dst.y);
    return std::hypot(q.x - src.x, q.y - src.y) <= tol_px;
  };
  return check(a, b) || check(b, a);
}

namespace detail {

inline void check_inside(std::span<const Keypoint> kps, const GroundTruth& gt) {
  for (const auto& k : kps)
    if (k.x < 0 || k.y < 0 || k.x > gt.width - 1 || k.y > gt.height - 1)
      throw std::invalid_argument("ground truth dimensions do not match the keypoints' image");
}

}  // namespace detail

inline int count_valid_pairs(std::span<const MatchPair> pairs, std::span<const Keypoint> kps,
                             const GroundTruth& gt, double tol_px = 4.0) {
  detail::check_inside(kps, gt);
  int valid = 0;
  for (const auto& p : pairs)
    if (is_valid_pair(kps[p.i], kps[p.j], gt, tol_px)) ++valid;
  return valid;
}

/// 100 * valid / matched; absent when nothing was matched.
inline std::optional<double> detection_ratio_percent(int valid, int matched) {
  if (matched <= 0) return std::nullopt;
  return 100.0 * valid / matched;
}

inline std::optional<double> correct_detection_ratio(std::span<const MatchPair> pairs,
                                                     std::span<const Keypoint> kps,
                                                     const GroundTruth& gt, double tol_px = 4.0) {
  return detection_ratio_percent(count_valid_pairs(pairs, kps, gt, tol_px),
                                 static_cast<int>(pairs.size()));
}

/// Alternative reading of the ratio: keypoints inside either forged region
/// over all keypoints, in percent.
inline std::optional<double> forged_region_keypoint_ratio(std::span<const Keypoint> kps,
                                                          const GroundTruth& gt) {
  if (kps.empty()) return std::nullopt;
  detail::check_inside(kps, gt);
  int inside = 0;
  for (const auto& k : kps) {
    const int x = pixel_of(k.x), y = pixel_of(k.y);
    if (gt.in_src(x, y) || gt.in_dst(x, y)) ++inside;
  }
  return 100.0 * inside / static_cast<double>(kps.size());
}

/// valid(perturbed) / valid(clean); absent when the clean run has none.
inline std::optional<double> relative_detection_efficiency(int valid_perturbed, int valid_clean) {
  if (valid_clean <= 0) return std::nullopt;
  return static_cast<double>(valid_perturbed) / valid_clean;
}

inline std::optional<double> relative_detection_efficiency(std::span<const MatchPair> pairs_perturbed,
                                                           std::span<const Keypoint> kps_perturbed,
                                                           std::span<const MatchPair> pairs_clean,
                                                           std::span<const Keypoint> kps_clean,
                                                           const GroundTruth& gt, double tol_px = 4.0) {
  return relative_detection_efficiency(count_valid_pairs(pairs_perturbed, kps_perturbed, gt, tol_px),
                                       count_valid_pairs(pairs_clean, kps_clean, gt, tol_px));
}

inline std::vector<MatchPair> plain_pairs(const DetectionReport& rep) {
  std::vector<MatchPair> out;
  out.reserve(rep.matched_pairs.size());
  for (const auto& p : rep.matched_pairs) out.push_back(p.match);
  return out;
}

/// Fills the ground-truth fields of a report.
inline void attach_ground_truth(DetectionReport& rep, const GroundTruth& gt) {
  if (gt.width != rep.image_width || gt.height != rep.image_height)
    throw std::invalid_argument("ground truth dimensions do not match the image");
  const auto pairs = plain_pairs(rep);
  std::set<int> valid_ids;
  int valid = 0;
  for (const auto& p : pairs)
    if (is_valid_pair(rep.keypoints[p.i], rep.keypoints[p.j], gt, rep.params.tol_px)) {
      ++valid;
      valid_ids.insert(p.i);
      valid_ids.insert(p.j);
    }
  rep.valid_pair_count = valid;
  rep.valid_keypoint_count = static_cast<int>(valid_ids.size());
  rep.correct_detection_ratio = detection_ratio_percent(valid, static_cast<int>(pairs.size()));
  rep.forged_region_keypoint_ratio = forged_region_keypoint_ratio(rep.keypoints, gt);
}

// ---------------------------------------------------------------------------
// JSON

inline nlohmann::ordered_json config_to_json(const PipelineConfig& c) {
  nlohmann::ordered_json j;
  j["detector"] = {{"n_octaves", c.detector.n_octaves},
                   {"layers_per_octave", c.detector.layers_per_octave},
                   {"hessian_threshold", c.detector.hessian_threshold},
                   {"initial_step", c.detector.initial_step}};
  j["descriptor"] = {{"kind", to_string(c.descriptor)},
                     {"delta_max_coeff", c.pattern.delta_max_coeff},
                     {"delta_min_coeff", c.pattern.delta_min_coeff},
                     {"ring_radii", c.pattern.ring_radii},
                     {"ring_counts", c.pattern.ring_counts},
                     {"smoothing", to_string(c.pattern.smoothing)},
                     {"n_rotations", c.pattern.n_rotations}};
  j["matcher"] = {{"rho", c.matcher.rho},
                  {"min_pair_distance", c.matcher.min_pair_distance},
                  {"k", c.matcher.k}};
  j["verdict_min_pairs"] = c.verdict_min_pairs;
  j["tol_px"] = c.tol_px;
  return j;
}

inline nlohmann::ordered_json keypoint_to_json(const Keypoint& k) {
  return {{"x", k.x}, {"y", k.y}, {"scale", k.scale}, {"response", k.response}};
}

/// Timings and parallelism go in trailing blocks so that everything else is
/// reproducible byte for byte.
inline nlohmann::ordered_json to_json(const DetectionReport& r, bool include_timings = true) {
  nlohmann::ordered_json j;
  j["schema_version"] = kReportSchemaVersion;
  j["image_id"] = r.image_id;
  j["image_width"] = r.image_width;
  j["image_height"] = r.image_height;
  j["params"] = config_to_json(r.params);
  j["keypoint_count"] = r.keypoint_count;
  j["described_keypoint_count"] = r.described_keypoint_count;
  j["matched_pair_count"] = r.matched_pairs.size();
  j["matched_keypoint_count"] = r.matched_keypoint_count;
  const auto opt = [](const auto& v) -> nlohmann::ordered_json {
    if (v) return *v;
    return nullptr;
  };
  j["valid_pair_count"] = opt(r.valid_pair_count);
  j["valid_keypoint_count"] = opt(r.valid_keypoint_count);
  j["correct_detection_ratio"] = opt(r.correct_detection_ratio);
  j["forged_region_keypoint_ratio"] = opt(r.forged_region_keypoint_ratio);
  j["verdict"] = to_string(r.verdict);
  auto pairs = nlohmann::ordered_json::array();
  for (const auto& p : r.matched_pairs) {
    nlohmann::ordered_json pj;
    pj["i"] = p.match.i;
    pj["j"] = p.match.j;
    if (r.params.descriptor == DescriptorKind::brisk)
      pj["distance"] = static_cast<int>(p.match.distance);
    else
      pj["distance"] = p.match.distance;
    pj["ratio"] = p.match.ratio;
    pj["a"] = keypoint_to_json(p.a);
    pj["b"] = keypoint_to_json(p.b);
    pairs.push_back(std::move(pj));
  }
  j["matched_pairs"] = std::move(pairs);
  if (include_timings) {
    j["stage_timings"] = {{"detect", r.stage_timings.detect},
                          {"describe", r.stage_timings.describe},
                          {"match", r.stage_timings.match}};
    j["parallelism"] = r.params.threads;
  }
  return j;
}

// ---------------------------------------------------------------------------
// Benchmark

struct BenchInput {
  std::string image_id;
  GrayImage image;
};

struct BenchRow {
  std::string image_id;
  std::string stage;  // detect | describe | match
  std::string kind;   // brisk | surf_baseline
  double seconds = 0;
  double speedup = 0;  // surf describe / brisk describe for the image
  int keypoints = 0;
};

namespace detail {

template <class Fn>
double median_seconds(int repeats, Fn&& fn) {
  std::vector<double> t;
  t.reserve(static_cast<std::size_t>(repeats));
  for (int r = 0; r < repeats; ++r) {
    const auto t0 = Clock::now();
    fn();
    t.push_back(seconds_since(t0));
  }
  std::sort(t.begin(), t.end());
  return t[t.size() / 2];
}

}  // namespace detail

/// Per-image, per-stage median wall-clock timings for both descriptor
/// kinds over the same keypoints. A warm-up pass is discarded.
inline std::vector<BenchRow> benchmark(std::span<const BenchInput> images, const PipelineConfig& cfg,
                                       int repeats = 5) {
  cfg.validate();
  if (repeats < 1) throw std::invalid_argument("benchmark: repeats must be >= 1");
  DetectorParams dp = cfg.detector;
  dp.threads = cfg.threads;
  MatcherParams mp = cfg.matcher;
  mp.threads = cfg.threads;
  const SamplingPattern pattern = build_pattern(1.0, cfg.pattern);

  std::vector<BenchRow> rows;
  for (const auto& in : images) {
    const IntegralImage ii(in.image);
    const auto kps = detect(ii, dp);
    auto binary = describe_binary(in.image, ii, kps, pattern, cfg.threads);
    auto surf = describe_surf(ii, kps, cfg.threads);
    (void)knn_match(std::span<const BinaryDescriptor>(binary.descriptors),
                    std::span<const Keypoint>(binary.keypoints), mp);

    const auto time_detect = [&] {
      return detail::median_seconds(repeats, [&] { (void)detect(IntegralImage(in.image), dp); });
    };
    const double det_brisk = time_detect();
    const double det_surf = time_detect();
    const double desc_brisk = detail::median_seconds(
        repeats, [&] { (void)describe_all(in.image, ii, kps, pattern, cfg.threads); });
    const double desc_surf =
        detail::median_seconds(repeats, [&] { (void)surf_describe_all(ii, kps, cfg.threads); });
    const double match_brisk = detail::median_seconds(repeats, [&] {
      (void)knn_match(std::span<const BinaryDescriptor>(binary.descriptors),
                      std::span<const Keypoint>(binary.keypoints), mp);
    });
    const double match_surf = detail::median_seconds(repeats, [&] {
      (void)knn_match(std::span<const SurfDescriptor>(surf.descriptors),
                      std::span<const Keypoint>(surf.keypoints), mp);
    });
    const double speedup = desc_brisk > 0 ? desc_surf / desc_brisk : 0.0;
    const int n = static_cast<int>(kps.size());
    rows.push_back({in.image_id, "detect", "brisk", det_brisk, speedup, n});
    rows.push_back({in.image_id, "detect", "surf_baseline", det_surf, speedup, n});
    rows.push_back({in.image_id, "describe", "brisk", desc_brisk, speedup, n});
    rows.push_back({in.image_id, "describe", "surf_baseline", desc_surf, speedup, n});
    rows.push_back({in.image_id, "match", "brisk", match_brisk, speedup, n});
    rows.push_back({in.image_id, "match", "surf_baseline", match_surf, speedup, n});
  }
  return rows;
}

inline std::string bench_csv(std::span<const BenchRow> rows) {
  std::ostringstream os;
  os << "image_id,stage,kind,seconds,speedup\n";
  os.precision(9);
  for (const auto& r : rows)
    os << r.image_id << ',' << r.stage << ',' << r.kind << ',' << r.seconds << ',' << r.speedup << '\n';
  return os.str();
}

}  // namespace cmfd

#endif  // CMFD_PIPELINE_HPP
