#include "usegmix/sampler.hpp"

#include <cmath>
#include <limits>
#include <memory>

#include "usegmix/error.hpp"

namespace usegmix {

double feature_distance(const FeatureVector& a, const FeatureVector& b) {
    if (a.dim() != b.dim()) {
        throw DimensionError("feature_distance: dims " + std::to_string(a.dim()) + " and " + std::to_string(b.dim()));
    }
    double s = 0.0;
    for (std::size_t i = 0; i < a.dim(); ++i) {
        const double d = a.values[i] - b.values[i];
        s += d * d;
    }
    return std::sqrt(s);
}

std::vector<double> replacement_probabilities(std::span<const double> distances, std::span<const double> weights,
                                              std::span<const bool> excluded) {
    const std::size_t n = distances.size();
    if (weights.size() != n || excluded.size() != n) throw DimensionError("replacement_probabilities: length mismatch");

    double max_logit = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j) {
        if (!excluded[j]) max_logit = std::max(max_logit, -weights[j] * distances[j]);
    }
    if (max_logit == -std::numeric_limits<double>::infinity()) throw Error("no candidates: every pool entry is excluded");

    std::vector<double> probs(n, 0.0);
    // Neumaier-compensated normaliser.
    double sum = 0.0;
    double comp = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        if (excluded[j]) continue;
        const double v = std::exp(-weights[j] * distances[j] - max_logit);
        probs[j] = v;
        const double t = sum + v;
        comp += std::abs(sum) >= std::abs(v) ? (sum - t) + v : (v - t) + sum;
        sum = t;
    }
    sum += comp;
    for (auto& p : probs) p /= sum;
    return probs;
}

ReplacementDistribution replacement_distribution(const TargetSelection& target, const SegmentPool& pool,
                                                 const std::set<std::string>& exclude) {
    if (target.feature.dim() != pool.dim()) {
        throw DimensionError("replacement_distribution: target feature dim " + std::to_string(target.feature.dim()) +
                             " but pool dim " + std::to_string(pool.dim()));
    }
    const std::size_t n = pool.entries.size();
    std::vector<double> distances(n);
    std::vector<double> weights(n);
    auto excluded = std::make_unique<bool[]>(n);
    for (std::size_t j = 0; j < n; ++j) {
        const auto& e = pool.entries[j];
        distances[j] = feature_distance(target.feature, e.feature);
        weights[j] = e.weight;
        excluded[j] = e.anchor.segment_id == target.segment.segment_id || exclude.contains(e.anchor.segment_id);
    }
    return {replacement_probabilities(distances, weights, std::span<const bool>(excluded.get(), n))};
}

std::size_t sample_replacement(const ReplacementDistribution& dist, double u) {
    double cum = 0.0;
    std::size_t last = dist.probs.size();
    for (std::size_t j = 0; j < dist.probs.size(); ++j) {
        if (dist.probs[j] <= 0.0) continue;
        cum += dist.probs[j];
        last = j;
        if (u < cum) return j;
    }
    if (last == dist.probs.size()) throw Error("sample_replacement: distribution has no mass");
    return last;
}

std::size_t sample_replacement(const ReplacementDistribution& dist, Rng& rng) {
    return sample_replacement(dist, rng.uniform());
}

void penalize(SegmentPool& pool, std::size_t index) {
    if (index >= pool.entries.size()) {
        throw Error("penalize: index " + std::to_string(index) + " out of range for pool of " +
                    std::to_string(pool.entries.size()));
    }
    pool.entries[index].weight += 1.0;
}

}  // namespace usegmix
