#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "usegmix/raster.hpp"
#include "usegmix/segmenter.hpp"
#include "usegmix/superpixel.hpp"

namespace usegmix {

/// (mean column, mean row, sqrt(pixel count)) of a mask.
struct IdentityVector {
    double cx = 0.0;
    double cy = 0.0;
    double scnt = 0.0;
};

struct ConsensusConfig {
    int k = 15;                          ///< prompts per superpixel
    std::optional<double> cluster_tol;   ///< L2 cutoff; unset means 0.05 * sqrt(W * H)
    double freq_iou = 0.95;              ///< masks at or above this IoU count as the same mask
    double dedup_iou = 0.80;             ///< duplicate threshold across superpixels
    double min_area_frac = 0.0;          ///< anchors below this fraction of the image are dropped; 0 disables

    [[nodiscard]] double cluster_tol_for(int width, int height) const;
    bool operator==(const ConsensusConfig&) const = default;
};

struct AnchorSegment {
    BitMask mask;
    std::string source_image;
    std::string class_label;
    std::string segment_id;
};

IdentityVector identity_vector(const BitMask& m);
double identity_distance(const IdentityVector& a, const IdentityVector& b);

/// Single-linkage agglomeration: clusters are the connected components of the
/// graph joining masks whose identity vectors are within cluster_tol. Clusters
/// are ordered by their smallest index; members ascend.
std::vector<std::vector<std::size_t>> cluster_masks(std::span<const BitMask> masks, const ConsensusConfig& cfg);

/// Index (into `masks`) of the representative of the most populous IoU
/// equivalence class inside `cluster`. Classes are formed greedily in cluster
/// order; ties go to the larger representative, then the lower index.
std::size_t select_anchor_index(std::span<const BitMask> masks, std::span<const std::size_t> cluster,
                                const ConsensusConfig& cfg);
BitMask select_anchor(std::span<const BitMask> masks, std::span<const std::size_t> cluster, const ConsensusConfig& cfg);

/// Largest cluster (ties: larger mean mask area, then lower first index).
std::size_t largest_cluster(std::span<const BitMask> masks, const std::vector<std::vector<std::size_t>>& clusters);

/// Phase-1 consensus for one image. Each superpixel draws its prompts from an
/// RNG seeded by (seed, image_id, superpixel index), so results do not depend
/// on evaluation order. Prompts whose backend call fails are skipped; a
/// superpixel with at least K/2 failures yields no anchor.
std::vector<AnchorSegment> anchors_for_image(const ImageRGB& img, const SuperpixelMap& sp, Segmenter& backend,
                                             const ConsensusConfig& cfg, std::uint64_t seed,
                                             const std::string& image_id, const std::string& class_label = {});

/// Greedy in descending area (stable); drops anchors whose IoU with a kept
/// anchor reaches dedup_iou. Survivors keep their input order.
std::vector<AnchorSegment> dedup_anchors(std::vector<AnchorSegment> anchors, double dedup_iou);

}  // namespace usegmix
