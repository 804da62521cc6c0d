#include "earlock/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>
#include <stdexcept>

#include "earlock/divergence.hpp"

namespace earlock {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double concat_distance(const FeatureSet& probe, const FeatureSet& reference,
                       const MatchConfig& cfg) {
  if (probe.features.empty() || reference.features.empty()) return kInf;
  const auto pairs = mutual_nn_pairs(probe, reference, cfg.ratio);
  if (pairs.empty()) return kInf;
  double sq = 0.0;
  for (const auto& p : pairs) sq += p.distance * p.distance;
  return std::sqrt(sq) / static_cast<double>(pairs.size());
}

double pair_count_score(const FeatureSet& probe, const FeatureSet& reference,
                        const MatchConfig& cfg) {
  if (probe.features.empty() || reference.features.empty()) return kInf;
  const auto pairs = mutual_nn_pairs(probe, reference, cfg.ratio);
  return -static_cast<double>(pairs.size());
}

// DS-rule distance. The fused vectors are built from the keypoints paired
// between the two ears: slices are corresponded by color similarity, each
// corresponded slice contributes its mutual-NN matched features (probe-side
// and reference-side stacks stay index-aligned after canonical sorting
// because matched features carry nearly identical keys). Unpaired keypoints
// carry no evidence about this comparison and would desynchronize the padded
// frames.
double ds_distance(const Template& probe, const Template& gallery, const MatchConfig& cfg) {
  if (probe.slice_gaussians.empty() || gallery.slice_gaussians.empty()) return kInf;
  const SliceMatch sm = correspond_slices(gallery.slice_gaussians, probe.slice_gaussians);

  std::vector<FeatureSet> probe_sets, gallery_sets;
  long total_pairs = 0;
  for (const auto& [gi, pi] : sm.pairs) {
    const auto pairs =
        mutual_nn_pairs(probe.per_slice_features[pi], gallery.per_slice_features[gi], cfg.ratio);
    if (pairs.empty()) continue;
    total_pairs += static_cast<long>(pairs.size());
    FeatureSet ps, gs;
    for (const auto& pr : pairs) {
      ps.features.push_back(probe.per_slice_features[pi].features[pr.probe_index]);
      gs.features.push_back(gallery.per_slice_features[gi].features[pr.ref_index]);
    }
    probe_sets.push_back(std::move(ps));
    gallery_sets.push_back(std::move(gs));
  }
  // too little paired evidence to form a meaningful mass comparison
  if (probe_sets.empty() || total_pairs < cfg.min_pairs) return kInf;

  std::vector<FeatureSet> all = probe_sets;
  all.insert(all.end(), gallery_sets.begin(), gallery_sets.end());
  try {
    const auto padded = zero_pad_equalize(all);
    std::vector<MassFunction> probe_masses, gallery_masses;
    for (size_t i = 0; i < probe_sets.size(); ++i) probe_masses.push_back(to_mass(padded[i]));
    for (size_t i = probe_sets.size(); i < padded.size(); ++i)
      gallery_masses.push_back(to_mass(padded[i]));
    const FusedVector s_probe = ds_fuse_all(probe_masses);
    const FusedVector s_gallery = ds_fuse_all(gallery_masses);
    return ds_match(s_probe, s_gallery, cfg.phi).distance;
  } catch (const TotalConflictError&) {
    return kInf;
  } catch (const std::runtime_error&) {
    return kInf;  // degenerate all-zero slice vector
  }
}

double slicewise_pair_count_score(const Template& probe, const Template& gallery,
                                  const MatchConfig& cfg) {
  if (probe.slice_gaussians.empty() || gallery.slice_gaussians.empty()) return kInf;
  const SliceMatch match = correspond_slices(gallery.slice_gaussians, probe.slice_gaussians);
  long total = 0;
  for (const auto& [gi, pi] : match.pairs) {
    const auto pairs =
        mutual_nn_pairs(probe.per_slice_features[pi], gallery.per_slice_features[gi], cfg.ratio);
    total += static_cast<long>(pairs.size());
  }
  return -static_cast<double>(total);
}

}  // namespace

std::string method_name(Method m) {
  switch (m) {
    case Method::kNoSegmentation: return "noseg";
    case Method::kConcat: return "concat";
    case Method::kDs: return "ds";
  }
  return "?";
}

std::string metric_name(Metric m) {
  return m == Metric::kEuclidean ? "euclid" : "nn";
}

void Template::validate() const {
  if (subject_id.empty()) throw std::runtime_error("Template: empty subject id");
  if (slice_components.size() != slice_gaussians.size() ||
      slice_components.size() != per_slice_features.size())
    throw std::runtime_error("Template: slice lists out of sync");
  for (const auto& fs : per_slice_features)
    if (fs.features.empty()) throw std::runtime_error("Template: empty per-slice feature set");
}

double match_score(const Template& probe, const Template& gallery, Method method, Metric metric,
                   const MatchConfig& config) {
  switch (method) {
    case Method::kNoSegmentation:
      return metric == Metric::kEuclidean
                 ? concat_distance(probe.whole_features, gallery.whole_features, config)
                 : pair_count_score(probe.whole_features, gallery.whole_features, config);
    case Method::kConcat:
      return metric == Metric::kEuclidean
                 ? concat_distance(probe.concat_features, gallery.concat_features, config)
                 : pair_count_score(probe.concat_features, gallery.concat_features, config);
    case Method::kDs:
      return metric == Metric::kEuclidean ? ds_distance(probe, gallery, config)
                                          : slicewise_pair_count_score(probe, gallery, config);
  }
  return kInf;
}

std::vector<MatchRecord> identify(const Template& probe, const std::vector<Template>& gallery,
                                  int top_k, Method method, Metric metric,
                                  const MatchConfig& config) {
  if (gallery.empty()) throw std::runtime_error("identify: empty gallery");
  if (top_k < 1) throw std::runtime_error("identify: rank cutoff must be >= 1");

  std::vector<MatchRecord> records;
  records.reserve(gallery.size());
  for (const auto& g : gallery) {
    MatchRecord r;
    r.probe_id = probe.subject_id;
    r.gallery_id = g.subject_id;
    r.score = match_score(probe, g, method, metric, config);
    r.method = method;
    r.metric = metric;
    records.push_back(std::move(r));
  }
  std::sort(records.begin(), records.end(), [](const MatchRecord& a, const MatchRecord& b) {
    if (a.score != b.score) return a.score < b.score;
    return a.gallery_id < b.gallery_id;
  });
  if (static_cast<int>(records.size()) > top_k) records.resize(top_k);
  return records;
}

int true_rank(const ProbeRanking& r) {
  for (size_t i = 0; i < r.ranking.size(); ++i)
    if (r.ranking[i].gallery_id == r.true_subject) return static_cast<int>(i) + 1;
  return 0;
}

CmcCurve cmc_curve(const std::vector<ProbeRanking>& rankings, int gallery_size) {
  if (rankings.empty()) throw std::runtime_error("cmc_curve: no rankings");
  if (gallery_size < 1) throw std::runtime_error("cmc_curve: gallery size must be >= 1");
  CmcCurve curve;
  curve.rates.assign(gallery_size, 0.0);
  for (const auto& r : rankings) {
    const int rank = true_rank(r);
    if (rank >= 1 && rank <= gallery_size) curve.rates[rank - 1] += 1.0;
  }
  double acc = 0.0;
  for (double& rate : curve.rates) {
    acc += rate;
    rate = acc / static_cast<double>(rankings.size());
  }
  return curve;
}

VerifyResult verify(const Template& probe, const Template& claimed, double threshold,
                    Method method, Metric metric, bool genuine, const MatchConfig& config) {
  VerifyResult res;
  res.score = match_score(probe, claimed, method, metric, config);
  res.accept = res.score <= threshold;
  if (genuine)
    res.label = res.accept ? VerifyLabel::kTruePositive : VerifyLabel::kFalseNegative;
  else
    res.label = res.accept ? VerifyLabel::kFalsePositive : VerifyLabel::kTrueNegative;
  return res;
}

std::vector<RocPoint> roc_curve(const std::vector<double>& genuine,
                                const std::vector<double>& impostor) {
  if (genuine.empty() || impostor.empty())
    throw std::runtime_error("roc_curve: empty score list");

  std::set<double> thresholds(genuine.begin(), genuine.end());
  thresholds.insert(impostor.begin(), impostor.end());

  std::vector<RocPoint> out;
  for (double t : thresholds) {
    RocPoint p;
    p.threshold = t;
    p.tpr = static_cast<double>(std::count_if(genuine.begin(), genuine.end(),
                                              [&](double s) { return s <= t; })) /
            static_cast<double>(genuine.size());
    p.fpr = static_cast<double>(std::count_if(impostor.begin(), impostor.end(),
                                              [&](double s) { return s <= t; })) /
            static_cast<double>(impostor.size());
    if (!out.empty() && out.back().fpr == p.fpr && out.back().tpr == p.tpr) continue;
    out.push_back(p);
  }
  std::sort(out.begin(), out.end(), [](const RocPoint& a, const RocPoint& b) {
    if (a.fpr != b.fpr) return a.fpr < b.fpr;
    return a.tpr < b.tpr;
  });
  return out;
}

double equal_error_rate(const std::vector<double>& genuine, const std::vector<double>& impostor,
                        double* threshold_out) {
  if (genuine.empty() || impostor.empty())
    throw std::runtime_error("equal_error_rate: empty score list");

  std::set<double> thresholds(genuine.begin(), genuine.end());
  thresholds.insert(impostor.begin(), impostor.end());

  double best_gap = kInf, best_eer = 0.5, best_t = 0.0;
  for (double t : thresholds) {
    const double frr = static_cast<double>(std::count_if(genuine.begin(), genuine.end(),
                                                         [&](double s) { return s > t; })) /
                       static_cast<double>(genuine.size());
    const double far = static_cast<double>(std::count_if(impostor.begin(), impostor.end(),
                                                         [&](double s) { return s <= t; })) /
                       static_cast<double>(impostor.size());
    const double gap = std::abs(far - frr);
    if (gap < best_gap) {
      best_gap = gap;
      best_eer = 0.5 * (far + frr);
      best_t = t;
    }
  }
  if (threshold_out) *threshold_out = best_t;
  return best_eer;
}

std::vector<ReportRow> accuracy_report(const std::vector<VerifyRecord>& records) {
  struct Tally {
    size_t genuine = 0, impostor = 0, false_accepts = 0, false_rejects = 0;
  };
  std::map<std::pair<int, int>, Tally> cells;
  for (const auto& r : records) {
    Tally& t = cells[{static_cast<int>(r.method), static_cast<int>(r.metric)}];
    if (r.genuine) {
      ++t.genuine;
      if (!r.accept) ++t.false_rejects;
    } else {
      ++t.impostor;
      if (r.accept) ++t.false_accepts;
    }
  }

  std::vector<ReportRow> rows;
  for (const auto& [key, t] : cells) {
    ReportRow row;
    row.method = static_cast<Method>(key.first);
    row.metric = static_cast<Metric>(key.second);
    row.genuine_trials = t.genuine;
    row.impostor_trials = t.impostor;
    row.fp_pct = t.impostor ? 100.0 * t.false_accepts / t.impostor : 0.0;
    row.tn_pct = t.genuine ? 100.0 * t.false_rejects / t.genuine : 0.0;
    row.accuracy_pct = 100.0 - 0.5 * (row.fp_pct + row.tn_pct);
    row.in_paper = !(row.method == Method::kDs && row.metric == Metric::kNearestNeighbor);
    rows.push_back(row);
  }
  return rows;
}

}  // namespace earlock
