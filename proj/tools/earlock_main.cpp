#include <CLI11.hpp>
#include <iostream>

#include "earlock/commands.hpp"

using namespace earlock;

namespace {

struct CommonFlags {
  std::string config_path;
  uint64_t seed = 0;
  bool seed_set = false;
  std::string rule = "ds";
  std::string metric = "euclid";
  bool no_segmentation = false;
};

RunConfig resolve_config(const CommonFlags& flags) {
  RunConfig cfg;
  if (!flags.config_path.empty()) cfg = load_run_config(flags.config_path);
  if (flags.seed_set) cfg.seed = flags.seed;
  cfg.em.seed = cfg.seed;
  cfg.validate();
  return cfg;
}

Method resolve_method(const CommonFlags& flags) {
  if (flags.no_segmentation) return Method::kNoSegmentation;
  if (flags.rule == "concat") return Method::kConcat;
  if (flags.rule == "ds") return Method::kDs;
  throw CLI::ValidationError("--rule must be concat or ds");
}

Metric resolve_metric(const CommonFlags& flags) {
  if (flags.metric == "euclid") return Metric::kEuclidean;
  if (flags.metric == "nn") return Metric::kNearestNeighbor;
  throw CLI::ValidationError("--metric must be euclid or nn");
}

void add_common(CLI::App* app, CommonFlags& flags) {
  app->add_option("--config", flags.config_path, "run-config JSON file");
  app->add_option("--seed", flags.seed, "override the config seed")
      ->each([&flags](const std::string&) { flags.seed_set = true; });
}

void add_match_flags(CLI::App* app, CommonFlags& flags) {
  app->add_option("--rule", flags.rule, "fusion rule: concat or ds")->default_str("ds");
  app->add_option("--metric", flags.metric, "distance metric: euclid or nn")
      ->default_str("euclid");
  app->add_flag("--no-segmentation", flags.no_segmentation,
                "baseline mode: whole-image SIFT, no slicing");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"earlock: ear identification from color-segmented slice regions"};
  app.require_subcommand(1);
  CommonFlags flags;

  // synth
  auto* synth = app.add_subcommand("synth", "generate a seeded synthetic dataset");
  SynthConfig synth_cfg;
  std::string synth_out;
  synth->add_option("--out", synth_out, "output dataset directory")->required();
  synth->add_option("--subjects", synth_cfg.subjects, "number of subjects");
  synth->add_option("--probes", synth_cfg.probes_per_subject, "probe images per subject");
  synth->add_option("--seed", synth_cfg.seed, "generator seed");
  synth->add_option("--width", synth_cfg.width, "image width");
  synth->add_option("--height", synth_cfg.height, "image height");
  synth->add_option("--prefix", synth_cfg.id_prefix, "subject id prefix");
  synth->add_option("--first-index", synth_cfg.first_index, "first subject index");
  synth->add_option("--format", synth_cfg.format, "image format: png or ppm");

  // enroll
  auto* enroll = app.add_subcommand("enroll", "enroll reference images into a template store");
  std::string enroll_dataset, enroll_store, dump_slices_dir;
  enroll->add_option("dataset", enroll_dataset, "dataset root directory")->required();
  enroll->add_option("store", enroll_store, "template store directory")->required();
  enroll->add_option("--dump-slices", dump_slices_dir, "write per-slice debug PNGs here");
  add_common(enroll, flags);

  // identify
  auto* identify = app.add_subcommand("identify", "rank gallery subjects for a probe image");
  std::string probe_path, store_dir;
  int top_k = 5;
  identify->add_option("probe", probe_path, "probe image")->required();
  identify->add_option("store", store_dir, "template store directory")->required();
  identify->add_option("--top", top_k, "rank cutoff (default 5)");
  add_common(identify, flags);
  add_match_flags(identify, flags);

  // verify
  auto* verify = app.add_subcommand("verify", "verify a probe image against a claimed subject");
  std::string claimed_id;
  verify->add_option("probe", probe_path, "probe image")->required();
  verify->add_option("claimed", claimed_id, "claimed subject id")->required();
  verify->add_option("store", store_dir, "template store directory")->required();
  add_common(verify, flags);
  add_match_flags(verify, flags);

  // evaluate
  auto* evaluate = app.add_subcommand("evaluate", "run the identification/verification protocol");
  std::string eval_dataset, eval_out;
  bool plots = false;
  evaluate->add_option("dataset", eval_dataset, "dataset root with probe splits")->required();
  evaluate->add_option("store", store_dir, "template store directory")->required();
  evaluate->add_option("--out", eval_out, "output directory for CSVs")->required();
  evaluate->add_flag("--plots", plots, "also emit cmc.svg and roc.svg");
  add_common(evaluate, flags);

  // calibrate
  auto* calibrate = app.add_subcommand("calibrate", "suggest psi/phi from a calibration split");
  std::string calib_dir, write_config_path;
  calibrate->add_option("calibration", calib_dir, "calibration dataset root")->required();
  calibrate->add_option("store", store_dir, "template store directory (for disjointness check)");
  calibrate->add_option("--write-config", write_config_path,
                        "write a config JSON with the calibrated thresholds");
  add_common(calibrate, flags);

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed()) {
      generate_dataset(synth_out, synth_cfg);
      std::cout << "wrote " << synth_cfg.subjects << " subjects to " << synth_out << "\n";
      return 0;
    }
    if (enroll->parsed())
      return cmd_enroll(enroll_dataset, enroll_store, resolve_config(flags), dump_slices_dir,
                        std::cout);
    if (identify->parsed())
      return cmd_identify(probe_path, store_dir, resolve_config(flags), resolve_method(flags),
                          resolve_metric(flags), top_k, std::cout);
    if (verify->parsed())
      return cmd_verify(probe_path, claimed_id, store_dir, resolve_config(flags),
                        resolve_method(flags), resolve_metric(flags), std::cout);
    if (evaluate->parsed()) {
      EvaluateOptions opts;
      opts.out_dir = eval_out;
      opts.plots = plots;
      return cmd_evaluate(eval_dataset, store_dir, resolve_config(flags), opts, std::cout);
    }
    if (calibrate->parsed()) {
      RunConfig cfg = resolve_config(flags);
      CalibrationResult res;
      const int rc = cmd_calibrate(calib_dir, store_dir, cfg, std::cout, &res);
      if (rc == 0 && !write_config_path.empty()) {
        cfg.match.psi = res.psi;
        cfg.match.phi = res.phi;
        save_run_config(cfg, write_config_path);
        std::cout << "wrote " << write_config_path << "\n";
      }
      return rc;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
