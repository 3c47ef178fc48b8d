#pragma once

#include <set>
#include <span>
#include <string>
#include <vector>

#include "usegmix/pool.hpp"
#include "usegmix/rng.hpp"

namespace usegmix {

struct TargetSelection {
    AnchorSegment segment;
    FeatureVector feature;
};

/// Probabilities over pool entries; excluded entries carry 0.
struct ReplacementDistribution {
    std::vector<double> probs;
};

/// Euclidean distance.
double feature_distance(const FeatureVector& a, const FeatureVector& b);

/// p_j ∝ exp(-w_j * D_j) over the entries with excluded[j] == false,
/// evaluated relative to the largest exponent so large w·D cannot underflow
/// the whole distribution.
std::vector<double> replacement_probabilities(std::span<const double> distances, std::span<const double> weights,
                                              std::span<const bool> excluded);

/// Distribution over `pool` for the target. The target's own segment_id is
/// always excluded in addition to `exclude`. Throws Error("no candidates")
/// when nothing is left.
ReplacementDistribution replacement_distribution(const TargetSelection& target, const SegmentPool& pool,
                                                 const std::set<std::string>& exclude = {});

/// Inverse-CDF draw using u in [0, 1); never returns a zero-probability index.
std::size_t sample_replacement(const ReplacementDistribution& dist, double u);
std::size_t sample_replacement(const ReplacementDistribution& dist, Rng& rng);

/// w[index] += 1
void penalize(SegmentPool& pool, std::size_t index);

}  // namespace usegmix
