#include "earlock/fusion.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>

namespace earlock {

FeatureSet concat_fuse(const std::vector<FeatureSet>& slices) {
  if (slices.empty()) throw std::runtime_error("concat_fuse: need at least one input set");
  FeatureSet out;
  out.source = kAugmentedSource;
  for (const auto& s : slices)
    out.features.insert(out.features.end(), s.features.begin(), s.features.end());
  std::sort(out.features.begin(), out.features.end(), feature_less);
  out.features.erase(std::unique(out.features.begin(), out.features.end()), out.features.end());
  return out;
}

namespace {

double descriptor_distance(const SiftFeature& a, const SiftFeature& b) {
  double acc = 0.0;
  for (int i = 0; i < 128; ++i) {
    const double d = static_cast<double>(a.descriptor[i]) - static_cast<double>(b.descriptor[i]);
    acc += d * d;
  }
  return std::sqrt(acc);
}

// index of nearest neighbor passing the ratio test, or -1
int ratio_test_nn(const SiftFeature& f, const std::vector<SiftFeature>& pool, double ratio) {
  int best = -1;
  double d1 = std::numeric_limits<double>::infinity();
  double d2 = std::numeric_limits<double>::infinity();
  for (size_t j = 0; j < pool.size(); ++j) {
    const double d = descriptor_distance(f, pool[j]);
    if (d < d1) {
      d2 = d1;
      d1 = d;
      best = static_cast<int>(j);
    } else if (d < d2) {
      d2 = d;
    }
  }
  if (best < 0) return -1;
  if (d1 == 0.0) return best;  // exact duplicate is an unambiguous match
  if (pool.size() >= 2 && d1 >= ratio * d2) return -1;
  return best;
}

}  // namespace

std::vector<DescriptorPair> mutual_nn_pairs(const FeatureSet& probe, const FeatureSet& reference,
                                            double ratio) {
  std::vector<DescriptorPair> out;
  if (probe.features.empty() || reference.features.empty()) return out;

  std::vector<int> fwd(probe.features.size());
  for (size_t i = 0; i < probe.features.size(); ++i)
    fwd[i] = ratio_test_nn(probe.features[i], reference.features, ratio);
  std::vector<int> bwd(reference.features.size());
  for (size_t j = 0; j < reference.features.size(); ++j)
    bwd[j] = ratio_test_nn(reference.features[j], probe.features, ratio);

  for (size_t i = 0; i < probe.features.size(); ++i) {
    const int j = fwd[i];
    if (j >= 0 && bwd[j] == static_cast<int>(i))
      out.push_back({static_cast<int>(i), j,
                     descriptor_distance(probe.features[i], reference.features[j])});
  }
  return out;
}

ConcatMatchResult concat_match(const FeatureSet& probe, const FeatureSet& reference, double psi,
                               double ratio, int min_pairs) {
  if (probe.features.empty() || reference.features.empty())
    throw std::runtime_error("concat_match: empty feature set");

  const auto pairs = mutual_nn_pairs(probe, reference, ratio);
  ConcatMatchResult res;
  res.pair_count = static_cast<int>(pairs.size());
  if (pairs.empty()) {
    res.distance = std::numeric_limits<double>::infinity();
    res.accept = false;
    return res;
  }
  double sq = 0.0;
  for (const auto& p : pairs) sq += p.distance * p.distance;
  res.distance = std::sqrt(sq) / static_cast<double>(res.pair_count);
  res.accept = res.distance <= psi && res.pair_count >= min_pairs;
  return res;
}

std::vector<std::vector<double>> zero_pad_equalize(const std::vector<FeatureSet>& sets) {
  if (sets.size() < 2) throw std::runtime_error("zero_pad_equalize: need at least two sets");
  size_t max_count = 0;
  for (const auto& s : sets) max_count = std::max(max_count, s.features.size());
  if (max_count == 0) throw std::runtime_error("zero_pad_equalize: all sets empty");

  const size_t L = 128 * max_count;
  std::vector<std::vector<double>> out;
  out.reserve(sets.size());
  for (const auto& s : sets) {
    std::vector<SiftFeature> sorted = s.features;
    std::sort(sorted.begin(), sorted.end(), feature_less);
    std::vector<double> v(L, 0.0);
    size_t at = 0;
    for (const auto& f : sorted)
      for (float d : f.descriptor) v[at++] = static_cast<double>(d);
    out.push_back(std::move(v));
  }
  return out;
}

MassFunction to_mass(const std::vector<double>& v) {
  if (v.empty()) throw std::runtime_error("to_mass: empty vector");
  double mx = 0.0;
  for (double x : v) {
    if (x < 0.0) throw std::runtime_error("to_mass: negative element");
    mx = std::max(mx, x);
  }
  if (mx <= 0.0) throw std::runtime_error("to_mass: all-zero vector");

  MassFunction m;
  m.frame_size = static_cast<int>(v.size());
  m.masses.resize(v.size());
  double sum = 0.0;
  for (size_t i = 0; i < v.size(); ++i) {
    m.masses[i] = v[i] / mx;  // min-max step (min is structurally 0)
    sum += m.masses[i];
  }
  for (double& x : m.masses) x /= sum;
  return m;
}

MassFunction ds_combine_pair(const MassFunction& m1, const MassFunction& m2) {
  if (m1.frame_size != m2.frame_size)
    throw std::runtime_error("ds_combine_pair: frame size mismatch");
  MassFunction out;
  out.frame_size = m1.frame_size;
  out.masses.resize(m1.masses.size());
  double agreement = 0.0;  // 1 - conflict
  for (size_t i = 0; i < out.masses.size(); ++i) {
    out.masses[i] = m1.masses[i] * m2.masses[i];
    agreement += out.masses[i];
  }
  if (agreement <= 0.0) throw TotalConflictError();
  for (double& x : out.masses) x /= agreement;
  return out;
}

FusedVector ds_fuse_all(const std::vector<MassFunction>& masses) {
  if (masses.empty()) throw std::runtime_error("ds_fuse_all: empty input");
  for (const auto& m : masses)
    if (m.frame_size != masses.front().frame_size)
      throw std::runtime_error("ds_fuse_all: frame size mismatch");

  // stage 1: consecutive pairs, odd leftover passes through
  std::vector<MassFunction> stage;
  for (size_t i = 0; i + 1 < masses.size(); i += 2)
    stage.push_back(ds_combine_pair(masses[i], masses[i + 1]));
  if (masses.size() % 2 == 1) stage.push_back(masses.back());

  // stage 2: fold the pair results
  MassFunction acc = stage.front();
  for (size_t i = 1; i < stage.size(); ++i) acc = ds_combine_pair(acc, stage[i]);

  FusedVector out;
  out.values = std::move(acc.masses);
  return out;
}

DsMatchResult ds_match(const FusedVector& s1, const FusedVector& s2, double phi) {
  if (s1.values.size() != s2.values.size())
    throw std::runtime_error("ds_match: length mismatch");
  double sq = 0.0;
  for (size_t i = 0; i < s1.values.size(); ++i) {
    const double d = s1.values[i] - s2.values[i];
    sq += d * d;
  }
  DsMatchResult res;
  res.distance = std::sqrt(sq);
  res.accept = res.distance <= phi;
  return res;
}

void validate_discrete_mass(const DiscreteMass& m) {
  if (m.frame_size < 1 || m.frame_size > 31)
    throw std::runtime_error("DiscreteMass: frame size out of range");
  const uint32_t full = (1u << m.frame_size) - 1;
  double sum = 0.0;
  for (const auto& [set, mass] : m.focal) {
    if (set == 0) throw std::runtime_error("DiscreteMass: empty set carries mass");
    if (set > full) throw std::runtime_error("DiscreteMass: focal element outside frame");
    if (!(mass > 0.0)) throw std::runtime_error("DiscreteMass: non-positive mass");
    sum += mass;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw std::runtime_error("DiscreteMass: masses do not sum to 1");
}

double belief(const DiscreteMass& m, uint32_t subset) {
  const uint32_t full = (1u << m.frame_size) - 1;
  if (subset > full) throw std::runtime_error("belief: subset outside frame");
  double acc = 0.0;
  for (const auto& [set, mass] : m.focal)
    if ((set & subset) == set) acc += mass;
  return acc;
}

double plausibility(const DiscreteMass& m, uint32_t subset) {
  const uint32_t full = (1u << m.frame_size) - 1;
  if (subset > full) throw std::runtime_error("plausibility: subset outside frame");
  double acc = 0.0;
  for (const auto& [set, mass] : m.focal)
    if ((set & subset) != 0) acc += mass;
  return acc;
}

DiscreteMass mass_from_belief(const std::vector<double>& bel, int frame_size) {
  if (frame_size < 1 || frame_size > 20)
    throw std::runtime_error("mass_from_belief: frame size out of range");
  const uint32_t count = 1u << frame_size;
  if (bel.size() != count)
    throw std::runtime_error("mass_from_belief: belief map must cover the power set");

  DiscreteMass out;
  out.frame_size = frame_size;
  for (uint32_t a = 1; a < count; ++a) {
    // m(A) = sum over B subset of A of (-1)^|A \ B| Bel(B)
    double mass = 0.0;
    uint32_t b = a;
    while (true) {
      const int gamma = std::popcount(a & ~b);
      mass += (gamma % 2 == 0 ? 1.0 : -1.0) * bel[b];
      if (b == 0) break;
      b = (b - 1) & a;
    }
    if (mass < -1e-9) throw std::runtime_error("mass_from_belief: inconsistent belief map");
    if (mass > 1e-12) out.focal[a] = mass;
  }
  validate_discrete_mass(out);
  return out;
}

}  // namespace earlock
