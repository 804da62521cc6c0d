#pragma once

#include <string>
#include <vector>

#include "earlock/fusion.hpp"
#include "earlock/gmm.hpp"
#include "earlock/segmentation.hpp"

namespace earlock {

enum class Method { kNoSegmentation, kConcat, kDs };
enum class Metric { kEuclidean, kNearestNeighbor };

std::string method_name(Method m);
std::string metric_name(Metric m);

// Persisted per-subject reference. Slice-indexed members run parallel over
// the feature-bearing slices.
struct Template {
  std::string subject_id;
  Gmm color_model;
  std::vector<int> slice_components;      // mixture component per slice
  std::vector<Gaussian> slice_gaussians;  // that component's Gaussian
  std::vector<FeatureSet> per_slice_features;
  FeatureSet concat_features;  // augmented union over slices
  FeatureSet whole_features;   // whole-image features for the baseline
  std::string created_at;

  void validate() const;
};

struct MatchConfig {
  double psi = 0.25;  // concatenation-rule distance threshold
  double phi = 0.10;  // DS-rule distance threshold
  double ratio = 0.8;
  int min_pairs = 4;
};

struct MatchRecord {
  std::string probe_id;
  std::string gallery_id;
  double score = 0.0;
  Method method = Method::kConcat;
  Metric metric = Metric::kEuclidean;
};

// Distance-like score (lower = better). Degenerate comparisons (no usable
// features, total DS conflict) come back as +inf.
double match_score(const Template& probe, const Template& gallery, Method method, Metric metric,
                   const MatchConfig& config);

// Scores the probe against every gallery template, ascending score order,
// ties broken by gallery_id; returns the top_k records.
std::vector<MatchRecord> identify(const Template& probe, const std::vector<Template>& gallery,
                                  int top_k, Method method, Metric metric,
                                  const MatchConfig& config);

struct ProbeRanking {
  std::string true_subject;
  std::vector<MatchRecord> ranking;  // full, ascending
};

// 1-based rank of the true subject in a ranking (0 when absent).
int true_rank(const ProbeRanking& r);

struct CmcCurve {
  std::vector<double> rates;  // rates[r-1] = identification rate at rank r
};

CmcCurve cmc_curve(const std::vector<ProbeRanking>& rankings, int gallery_size);

enum class VerifyLabel { kTruePositive, kFalsePositive, kTrueNegative, kFalseNegative };

struct VerifyResult {
  double score = 0.0;
  bool accept = false;
  VerifyLabel label = VerifyLabel::kTrueNegative;
};

VerifyResult verify(const Template& probe, const Template& claimed, double threshold,
                    Method method, Metric metric, bool genuine, const MatchConfig& config);

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
  double threshold = 0.0;
};

// Threshold sweep over the union of both score lists (accept when
// score <= threshold), deduplicated, sorted by FPR.
std::vector<RocPoint> roc_curve(const std::vector<double>& genuine,
                                const std::vector<double>& impostor);

double equal_error_rate(const std::vector<double>& genuine, const std::vector<double>& impostor,
                        double* threshold_out = nullptr);

struct VerifyRecord {
  Method method = Method::kConcat;
  Metric metric = Metric::kEuclidean;
  bool genuine = false;
  bool accept = false;
};

struct ReportRow {
  Method method;
  Metric metric;
  double accuracy_pct = 0.0;
  double fp_pct = 0.0;  // false accepts / impostor trials
  double tn_pct = 0.0;  // false rejects / genuine trials (paper's "TN" column)
  size_t genuine_trials = 0;
  size_t impostor_trials = 0;
  bool in_paper = true;
};

// One row per (method, metric) cell present in the records;
// accuracy = 100 - (fp% + tn%)/2.
std::vector<ReportRow> accuracy_report(const std::vector<VerifyRecord>& records);

}  // namespace earlock
