#include <algorithm>
#include <cstdint>
#include <iostream>
#include <map>
#include <string>

#include <CLI11.hpp>

#include "cmfd/cli.hpp"

namespace {

// config key, help
const std::pair<const char*, const char*> kConfigFlags[] = {
    {"octaves", "detector octaves"},
    {"layers", "detector layers per octave"},
    {"hessian_threshold", "minimum Hessian determinant response"},
    {"initial_step", "sampling step of the first octave"},
    {"delta_max", "short-pair distance coefficient"},
    {"delta_min", "long-pair distance coefficient"},
    {"smoothing", "sample smoothing: box or gaussian"},
    {"n_rotations", "precomputed pattern rotations"},
    {"descriptor", "brisk or surf_baseline"},
    {"rho", "nearest/second-nearest ratio threshold"},
    {"min_pair_distance", "minimum spatial distance of a match, px"},
    {"k", "neighbours considered by the ratio test"},
    {"verdict_min_pairs", "pairs needed for a forged verdict"},
    {"tol_px", "correspondence tolerance for valid pairs, px"},
    {"threads", "parallelism level"},
};

struct ConfigArgs {
  std::string config_file;
  std::map<std::string, std::string> values;
};

void add_config_flags(CLI::App* cmd, ConfigArgs& args) {
  cmd->add_option("--config", args.config_file, "key=value config file; flags override it");
  for (const auto& [key, help] : kConfigFlags) {
    std::string flag = std::string("--") + key;
    std::replace(flag.begin(), flag.end(), '_', '-');
    cmd->add_option_function<std::string>(
        flag, [&args, k = std::string(key)](const std::string& v) { args.values[k] = v; }, help);
  }
}

cmfd::PipelineConfig resolve(const ConfigArgs& args) {
  cmfd::PipelineConfig cfg;
  if (!args.config_file.empty()) cmfd::load_config_file(args.config_file, cfg);
  for (const auto& [k, v] : args.values) cmfd::set_config_value(cfg, k, v);
  cfg.validate();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Copy-move forgery detection with binary keypoint descriptors"};
  app.require_subcommand(1);

  cmfd::DetectOptions det;
  std::string det_gt;
  ConfigArgs det_cfg;
  auto* detect = app.add_subcommand("detect", "detect copy-move forgery in one image");
  detect->add_option("image", det.image, "input image")->required();
  detect->add_option("-o,--out", det.out_dir, "output directory for report.json and annotated.png");
  detect->add_option("--gt", det_gt, "ground-truth file (.gt.json) for validity metrics");
  add_config_flags(detect, det_cfg);

  cmfd::SynthOptions syn;
  std::string syn_out;
  auto* synth = app.add_subcommand("synth", "generate a forged corpus from a manifest");
  synth->add_option("manifest", syn.manifest, "corpus manifest")->required();
  synth->add_option("-o,--out", syn_out, "output directory (default: manifest directory)");
  synth->add_option("--seed", syn.seed, "seed for records without seed=");
  synth->add_option("--threads", syn.threads, "parallelism level")->check(CLI::PositiveNumber);

  cmfd::EvalOptions ev;
  ConfigArgs ev_cfg;
  auto* eval = app.add_subcommand("eval", "evaluate a corpus against its ground truth");
  eval->add_option("corpus", ev.corpus, "corpus directory")->required();
  eval->add_option("-o,--out", ev.out_dir, "output directory for metrics.csv and curves.csv");
  add_config_flags(eval, ev_cfg);

  cmfd::BenchOptions bn;
  ConfigArgs bn_cfg;
  auto* bench = app.add_subcommand("bench", "time detect/describe/match for both descriptor kinds");
  bench->add_option("corpus", bn.corpus, "corpus directory")->required();
  bench->add_option("-o,--out", bn.out_dir, "output directory for bench.csv");
  bench->add_option("--repeats", bn.repeats, "timed runs per stage (median)")->check(CLI::PositiveNumber);
  add_config_flags(bench, bn_cfg);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : cmfd::kExitError;
  }

  try {
    if (*detect) {
      det.cfg = resolve(det_cfg);
      if (!det_gt.empty()) det.ground_truth = det_gt;
      return cmfd::cmd_detect(det, std::cout, std::cerr);
    }
    if (*synth) {
      if (!syn_out.empty()) syn.out_dir = syn_out;
      return cmfd::cmd_synth(syn, std::cout, std::cerr);
    }
    if (*eval) {
      ev.cfg = resolve(ev_cfg);
      return cmfd::cmd_eval(ev, std::cout, std::cerr);
    }
    if (*bench) {
      bn.cfg = resolve(bn_cfg);
      return cmfd::cmd_bench(bn, std::cout, std::cerr);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return cmfd::kExitError;
  }
  return cmfd::kExitError;
}
