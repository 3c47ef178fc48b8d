#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "usegmix/consensus.hpp"
#include "usegmix/features.hpp"
#include "usegmix/segmenter.hpp"
#include "usegmix/superpixel.hpp"

namespace usegmix {

inline constexpr int kPoolFormatVersion = 1;

enum class FeatureSource { builtin, external };

std::string to_string(FeatureSource s);
FeatureSource feature_source_from_string(const std::string& s);

struct PoolEntry {
    AnchorSegment anchor;
    FeatureVector feature;
    double weight = 1.0;
};

/// Per-class segment pool. Features are PCA projections stored at f32
/// precision so that a save/load round trip is exact.
struct SegmentPool {
    std::string class_label;
    std::vector<PoolEntry> entries;
    PCAModel pca;
    FeatureSource feature_source = FeatureSource::builtin;

    [[nodiscard]] std::size_t dim() const { return pca.out_dim(); }
    [[nodiscard]] std::optional<std::size_t> find(const std::string& segment_id) const;
    [[nodiscard]] std::vector<double> weights() const;
};

struct CorpusImage {
    std::string id;
    std::string class_label;
    ImageRGB image;
};

struct Phase1Config {
    SlicConfig slic;
    ConsensusConfig consensus;
    DescriptorConfig descriptor;
    int pca_dim = kDefaultPcaDim;

    bool operator==(const Phase1Config&) const = default;
};

/// Superpixels + consensus anchors for one image.
std::vector<AnchorSegment> phase1_anchors(const ImageRGB& img, const std::string& image_id,
                                          const std::string& class_label, const Phase1Config& cfg, Segmenter& backend,
                                          std::uint64_t seed);

/// Builtin descriptor of the anchor's bounding-box crop.
FeatureVector raw_feature(const ImageRGB& img, const BitMask& mask, const DescriptorConfig& cfg);

/// One pool per class. Images that yield no anchors are skipped with a
/// warning; a class left with no anchors is an error. With `external`
/// features every anchor's segment_id must be present in the map.
std::map<std::string, SegmentPool> build_pool(std::span<const CorpusImage> corpus, const Phase1Config& cfg,
                                              Segmenter& backend, std::uint64_t seed,
                                              const std::map<std::string, FeatureVector>* external = nullptr);

/// Checks every pool invariant; throws Error describing the first violation.
void validate_pool(const SegmentPool& pool);

/// Writes manifest.json, masks/<segment_id>.png, features.bin and pca.bin.
/// The directory is replaced as a whole via rename.
void save_pool(const SegmentPool& pool, const std::filesystem::path& dir);
SegmentPool load_pool(const std::filesystem::path& dir);

/// Every subdirectory of `root` holding a manifest.json, keyed by class label.
std::map<std::string, SegmentPool> load_pools(const std::filesystem::path& root);

}  // namespace usegmix
