#pragma once

#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "earlock/evaluation.hpp"
#include "earlock/gmm.hpp"
#include "earlock/sift.hpp"
#include "earlock/synth.hpp"

namespace earlock {

struct RunConfig {
  FitConfig em;
  int mdl_min = 3;
  int mdl_max = 6;
  SiftConfig sift;
  MatchConfig match;
  int min_slice_pixels = 64;
  GrayMode gray_mode = GrayMode::kLuminance;
  uint64_t seed = 0;  // mirrored into em.seed

  void validate() const;
};

RunConfig load_run_config(const std::string& path);
void save_run_config(const RunConfig& config, const std::string& path);

// Directory of template files plus an index mapping subject -> file.
// Single writer (enroll), many readers.
class TemplateStore {
 public:
  explicit TemplateStore(std::string root) : root_(std::move(root)) {}

  const std::string& root() const { return root_; }
  bool exists() const;
  std::vector<std::string> subjects() const;
  bool contains(const std::string& subject) const;
  Template load(const std::string& subject) const;
  std::vector<Template> load_all() const;

  // Overwrites everything under root with the given templates.
  void write_all(const std::vector<Template>& templates) const;

 private:
  std::string root_;
};

// Full enrollment pipeline for one image: mask -> mdl_select GMM -> slices ->
// per-slice and whole-image SIFT -> fused feature sets.
Template build_template(const std::string& image_path, const std::string& subject_id,
                        const RunConfig& config, std::vector<SliceRegion>* slices_out = nullptr,
                        std::ostream* log = nullptr);

// Threshold for a (method, metric) decision: psi / phi for Euclidean rules,
// -min_pairs for the count-based nearest-neighbor rules.
double decision_threshold(const RunConfig& config, Method method, Metric metric);

struct EvaluateOptions {
  std::string out_dir;
  bool plots = false;
};

int cmd_enroll(const std::string& dataset_dir, const std::string& store_dir,
               const RunConfig& config, const std::string& dump_slices_dir, std::ostream& log);

int cmd_identify(const std::string& probe_path, const std::string& store_dir,
                 const RunConfig& config, Method method, Metric metric, int top_k,
                 std::ostream& out);

// exit code 0 accept, 1 reject
int cmd_verify(const std::string& probe_path, const std::string& claimed_id,
               const std::string& store_dir, const RunConfig& config, Method method,
               Metric metric, std::ostream& out);

int cmd_evaluate(const std::string& dataset_dir, const std::string& store_dir,
                 const RunConfig& config, const EvaluateOptions& options, std::ostream& log);

struct CalibrationResult {
  double psi = 0.0;
  double phi = 0.0;
  double psi_eer = 0.0;
  double phi_eer = 0.0;
};

int cmd_calibrate(const std::string& calibration_dir, const std::string& store_dir,
                  const RunConfig& config, std::ostream& out,
                  CalibrationResult* result = nullptr);

// Derives the mask path for an image ("{stem}.mask.png"); nullopt when the
// file is absent (whole image counts as in-crop).
std::optional<std::string> mask_path_for(const std::string& image_path);

}  // namespace earlock
