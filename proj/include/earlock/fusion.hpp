#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <vector>

#include "earlock/sift.hpp"

namespace earlock {

// FeatureSet source marker for fused sets.
constexpr int kAugmentedSource = -1;

struct FeatureSet {
  std::vector<SiftFeature> features;
  int source = kAugmentedSource;  // slice index, or kAugmentedSource
};

// Mass assignment over frame_size singleton hypotheses.
struct MassFunction {
  int frame_size = 0;
  std::vector<double> masses;
};

// General mass assignment over subsets of a small frame; focal elements keyed
// by bitmask, empty set structurally absent.
struct DiscreteMass {
  int frame_size = 0;
  std::map<uint32_t, double> focal;
};

struct FusedVector {
  std::vector<double> values;
};

// Dempster's rule is undefined under total conflict.
struct TotalConflictError : std::runtime_error {
  TotalConflictError() : std::runtime_error("Dempster combination: total conflict") {}
};

// Union of the input sets with exact-duplicate records removed, canonical
// feature order, source marked augmented.
FeatureSet concat_fuse(const std::vector<FeatureSet>& slices);

struct DescriptorPair {
  int probe_index = 0;
  int ref_index = 0;
  double distance = 0.0;
};

// Mutual nearest neighbors that pass the Lowe ratio test in both directions.
std::vector<DescriptorPair> mutual_nn_pairs(const FeatureSet& probe, const FeatureSet& reference,
                                            double ratio);

struct ConcatMatchResult {
  double distance = 0.0;
  bool accept = false;
  int pair_count = 0;
};

// distance = sqrt(sum of squared pair distances) / pair_count;
// accept needs distance <= psi and pair_count >= min_pairs. Zero pairs
// rejects with an infinite sentinel.
ConcatMatchResult concat_match(const FeatureSet& probe, const FeatureSet& reference, double psi,
                               double ratio = 0.8, int min_pairs = 4);

// Flattens each set (canonical order, descriptors concatenated) and
// zero-pads all vectors to the longest length.
std::vector<std::vector<double>> zero_pad_equalize(const std::vector<FeatureSet>& sets);

// Normalizes a non-negative vector into a mass over singleton hypotheses.
MassFunction to_mass(const std::vector<double>& v);

MassFunction ds_combine_pair(const MassFunction& m1, const MassFunction& m2);

// Consecutive pairs first (odd leftover passes through), then a fold of the
// stage results.
FusedVector ds_fuse_all(const std::vector<MassFunction>& masses);

struct DsMatchResult {
  double distance = 0.0;
  bool accept = false;
};

DsMatchResult ds_match(const FusedVector& s1, const FusedVector& s2, double phi);

// --- general Dempster-Shafer measures over subsets ------------------------

void validate_discrete_mass(const DiscreteMass& m);

// Bel(A) = sum of masses of subsets of A.
double belief(const DiscreteMass& m, uint32_t subset);
// Pl(A) = sum of masses of sets intersecting A.
double plausibility(const DiscreteMass& m, uint32_t subset);
// Moebius inversion of a complete belief map (indexed by bitmask, size 2^n).
DiscreteMass mass_from_belief(const std::vector<double>& bel, int frame_size);

}  // namespace earlock
