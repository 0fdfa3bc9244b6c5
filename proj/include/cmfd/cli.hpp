#ifndef CMFD_CLI_HPP
#define CMFD_CLI_HPP

// Subcommand implementations behind tools/cmfd. Each returns the process
// exit code and never throws.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <opencv2/imgcodecs.hpp>

#include "cmfd/annotate.hpp"
#include "cmfd/codec.hpp"
#include "cmfd/corpus.hpp"
#include "cmfd/parallel.hpp"
#include "cmfd/pipeline.hpp"

namespace cmfd {

inline constexpr int kExitClean = 0;
inline constexpr int kExitForged = 1;
inline constexpr int kExitError = 2;

inline int exit_code_for(Verdict v) noexcept { return v == Verdict::forged ? kExitForged : kExitClean; }

struct DetectOptions {
  fs::path image;
  fs::path out_dir = ".";
  std::optional<fs::path> ground_truth;
  PipelineConfig cfg;
};

struct SynthOptions {
  fs::path manifest;
  std::optional<fs::path> out_dir;  // default: the manifest's directory
  std::uint64_t seed = 0;           // for records without seed=
  int threads = 1;
};

struct EvalOptions {
  fs::path corpus;
  fs::path out_dir = ".";
  PipelineConfig cfg;
};

struct BenchOptions {
  fs::path corpus;
  fs::path out_dir = ".";
  PipelineConfig cfg;
  int repeats = 5;
};

namespace detail {

inline void write_text(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream os(p, std::ios::binary);
  os << text;
  if (!os) throw std::runtime_error("cannot write " + p.string());
}

inline std::string fmt(double v) {
  std::ostringstream os;
  os.precision(10);
  os << v;
  return os.str();
}

template <class T>
std::string fmt(const std::optional<T>& v) {
  if (!v) return {};
  if constexpr (std::is_integral_v<T>) return std::to_string(*v);
  else return fmt(static_cast<double>(*v));
}

}  // namespace detail

inline int cmd_detect(const DetectOptions& opt, std::ostream& out, std::ostream& err) {
  try {
    opt.cfg.validate();
    DecodedImage img;
    try {
      img = load_image(opt.image);
    } catch (const std::exception& e) {
      err << "error: " << e.what() << '\n';
      return kExitError;
    }
    const std::string id = opt.image.stem().string();
    DetectionReport rep = img.is_color ? detect_forgery(img.rgb, opt.cfg, id) : detect_forgery(img.gray, opt.cfg, id);
    if (opt.ground_truth) attach_ground_truth(rep, load_corpus_entry(*opt.ground_truth).gt);

    fs::create_directories(opt.out_dir);
    detail::write_text(opt.out_dir / "report.json", to_json(rep).dump(2) + "\n");
    const Annotation ann = img.is_color ? annotate(img.rgb, rep) : annotate(img.gray, rep);
    const fs::path annotated = opt.out_dir / "annotated.png";
    if (!cv::imwrite(annotated.string(), ann.image)) throw std::runtime_error("cannot write " + annotated.string());

    out << id << ": " << to_string(rep.verdict) << ", " << rep.keypoint_count << " keypoints, "
        << rep.matched_pairs.size() << " pairs";
    if (rep.correct_detection_ratio) out << ", correct detection ratio " << *rep.correct_detection_ratio << '%';
    out << '\n';
    return exit_code_for(rep.verdict);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitError;
  }
}

inline int cmd_synth(const SynthOptions& opt, std::ostream& out, std::ostream& err) {
  try {
    const auto records = parse_manifest_file(opt.manifest, opt.seed);
    const fs::path base = opt.manifest.has_parent_path() ? opt.manifest.parent_path() : fs::path(".");
    const fs::path dest = opt.out_dir.value_or(base);
    const auto results = run_manifest(records, base, dest, opt.threads);
    out << results.size() << " forged images written under " << dest.string() << '\n';
    return 0;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitError;
  }
}

struct EvalRow {
  CorpusEntry entry;
  DetectionReport report;
  std::optional<double> rde;
};

inline std::string metrics_csv(const std::vector<EvalRow>& rows) {
  std::ostringstream os;
  os << "image_id,group,rotation,scale,noise,jpeg,keypoint_count,matched_pair_count,valid_pair_count,"
        "correct_detection_ratio,forged_region_keypoint_ratio,relative_detection_efficiency,verdict\n";
  for (const auto& r : rows) {
    const auto& e = r.entry;
    std::string group = e.group;
    std::replace(group.begin(), group.end(), ',', ' ');
    os << e.image_id << ',' << group << ',' << detail::fmt(e.forgery.rotation) << ','
       << detail::fmt(e.forgery.scale) << ',' << detail::fmt(e.noise) << ',' << e.jpeg << ','
       << r.report.keypoint_count << ',' << r.report.matched_pairs.size() << ','
       << detail::fmt(r.report.valid_pair_count) << ',' << detail::fmt(r.report.correct_detection_ratio) << ','
       << detail::fmt(r.report.forged_region_keypoint_ratio) << ',' << detail::fmt(r.rde) << ','
       << to_string(r.report.verdict) << '\n';
  }
  return os.str();
}

/// Mean relative detection efficiency per perturbation level. Only images
/// with a single perturbation and a defined efficiency contribute.
inline std::string curves_csv(const std::vector<EvalRow>& rows) {
  std::map<double, std::vector<double>> jpeg, noise;
  for (const auto& r : rows) {
    if (!r.rde) continue;
    if (r.entry.jpeg > 0 && r.entry.noise == 0) jpeg[r.entry.jpeg].push_back(*r.rde);
    if (r.entry.noise > 0 && r.entry.jpeg == 0) noise[r.entry.noise].push_back(*r.rde);
  }
  std::ostringstream os;
  os << "perturbation,level,images,mean_relative_detection_efficiency\n";
  const auto emit = [&](const char* kind, const std::vector<std::pair<double, std::vector<double>>>& levels) {
    for (const auto& [level, vals] : levels) {
      double sum = 0;
      for (double v : vals) sum += v;
      os << kind << ',' << detail::fmt(level) << ',' << vals.size() << ',' << detail::fmt(sum / vals.size()) << '\n';
    }
  };
  emit("jpeg", {jpeg.rbegin(), jpeg.rend()});
  emit("noise", {noise.begin(), noise.end()});
  return os.str();
}

/// Runs detection on every corpus image that has ground truth. Images are
/// processed in parallel, one thread each.
inline std::vector<EvalRow> evaluate_corpus(const fs::path& dir, const PipelineConfig& cfg, std::ostream& err) {
  std::vector<CorpusEntry> entries;
  for (const auto& img : list_images(dir)) {
    const fs::path gt = ground_truth_path_for(img);
    if (!fs::exists(gt)) {
      err << "warning: no ground truth for " << img.string() << ", skipped\n";
      continue;
    }
    try {
      entries.push_back(load_corpus_entry(gt));
    } catch (const std::exception& e) {
      err << "warning: " << e.what() << ", skipped\n";
    }
  }

  PipelineConfig single = cfg;
  single.threads = 1;
  std::vector<std::optional<EvalRow>> slots(entries.size());
  std::vector<std::string> warnings(entries.size());
  parallel_for(entries.size(), cfg.threads, [&](std::size_t n) {
    try {
      DecodedImage img = load_image(entries[n].image_path);
      DetectionReport rep = img.is_color ? detect_forgery(img.rgb, single, entries[n].image_id)
                                         : detect_forgery(img.gray, single, entries[n].image_id);
      attach_ground_truth(rep, entries[n].gt);
      slots[n] = EvalRow{entries[n], std::move(rep), std::nullopt};
    } catch (const std::exception& e) {
      warnings[n] = e.what();
    }
  });

  std::vector<EvalRow> rows;
  for (std::size_t n = 0; n < slots.size(); ++n) {
    if (slots[n]) rows.push_back(std::move(*slots[n]));
    else err << "warning: " << entries[n].image_path.string() << ": " << warnings[n] << ", skipped\n";
  }

  std::map<std::string, int> clean_valid;
  for (const auto& r : rows)
    if (r.entry.noise == 0 && r.entry.jpeg == 0 && r.report.valid_pair_count)
      clean_valid.try_emplace(r.entry.group, *r.report.valid_pair_count);
  for (auto& r : rows) {
    const auto it = clean_valid.find(r.entry.group);
    if (it != clean_valid.end() && r.report.valid_pair_count)
      r.rde = relative_detection_efficiency(*r.report.valid_pair_count, it->second);
  }
  return rows;
}

inline int cmd_eval(const EvalOptions& opt, std::ostream& out, std::ostream& err) {
  try {
    opt.cfg.validate();
    const auto rows = evaluate_corpus(opt.corpus, opt.cfg, err);
    detail::write_text(opt.out_dir / "metrics.csv", metrics_csv(rows));
    detail::write_text(opt.out_dir / "curves.csv", curves_csv(rows));
    double sum = 0;
    int n = 0;
    for (const auto& r : rows)
      if (r.report.correct_detection_ratio) {
        sum += *r.report.correct_detection_ratio;
        ++n;
      }
    out << rows.size() << " images evaluated";
    if (n > 0) out << ", mean correct detection ratio " << sum / n << '%';
    out << '\n';
    return 0;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitError;
  }
}

inline int cmd_bench(const BenchOptions& opt, std::ostream& out, std::ostream& err) {
  try {
    opt.cfg.validate();
    std::vector<BenchInput> inputs;
    for (const auto& p : list_images(opt.corpus)) {
      try {
        DecodedImage img = load_image(p);
        inputs.push_back({p.stem().string(), img.is_color ? to_grayscale(img.rgb) : std::move(img.gray)});
      } catch (const std::exception& e) {
        err << "warning: " << e.what() << ", skipped\n";
      }
    }
    const auto rows = benchmark(inputs, opt.cfg, opt.repeats);
    detail::write_text(opt.out_dir / "bench.csv", bench_csv(rows));
    double brisk = 0, surf = 0;
    for (const auto& r : rows)
      if (r.stage == "describe") (r.kind == "brisk" ? brisk : surf) += r.seconds;
    out << inputs.size() << " images, describe brisk " << brisk << " s, surf_baseline " << surf << " s";
    if (brisk > 0) out << ", speedup " << surf / brisk;
    out << " (parallelism " << opt.cfg.threads << ")\n";
    return 0;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitError;
  }
}

}  // namespace cmfd

#endif  // CMFD_CLI_HPP
