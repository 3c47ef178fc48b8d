#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "usegmix/blend.hpp"
#include "usegmix/pool.hpp"
#include "usegmix/sampler.hpp"

namespace usegmix {

enum class InpaintBackend { builtin, external };

struct Phase2Config {
    double ratio_min = 0.30;
    double ratio_max = 1.00;
    int max_attempts = 10;
    int per_class_count = 600;
    InpaintBackend inpaint_backend = InpaintBackend::builtin;
    std::uint64_t master_seed = 0;
    /// Restore pool weights before every synthesized image. Off: weights
    /// accumulate over the whole generation session.
    bool reset_weights_per_image = false;

    bool operator==(const Phase2Config&) const = default;
};

void validate(const Phase2Config& cfg);

struct SynthesisRecord {
    std::string output_path;
    std::string blend_mask_path;
    std::string source_image;
    std::string class_label;
    std::vector<std::string> replaced;
    std::vector<std::string> replacements;
    double ratio = 0.0;
    std::uint64_t seed = 0;
};

nlohmann::json to_json(const SynthesisRecord& r);

/// Images under `<root>/<class>/*.png|jpg|jpeg`, classes and files in name
/// order. Image ids are file stems with characters outside [A-Za-z0-9_.-]
/// replaced by '_'. Unreadable files are skipped with a warning.
std::vector<CorpusImage> load_corpus(const std::filesystem::path& root);

/// Builds and saves one pool per class under `out_dir/<class>`.
std::map<std::string, SegmentPool> phase1_index(const std::filesystem::path& corpus_dir, const Phase1Config& cfg,
                                                Segmenter& backend, std::uint64_t seed,
                                                const std::filesystem::path& out_dir,
                                                const std::map<std::string, FeatureVector>* external = nullptr);

/// |⋃ (warped ∪ inpaint)| / (W * H)
double new_area_ratio(std::span<const BlendPlan> plans, int width, int height);

/// Pool entries that came from `image_id`, as replacement targets.
std::vector<TargetSelection> pool_targets(const SegmentPool& pool, const std::string& image_id);

/// Runs Phase 1 on an image outside the pool and projects with the pool's PCA.
std::vector<TargetSelection> compute_targets(const ImageRGB& img, const std::string& image_id, const SegmentPool& pool,
                                             const Phase1Config& cfg, Segmenter& backend, std::uint64_t seed);

struct AugmentResult {
    ImageRGB image;
    ImageRGB composite;   ///< pasted, before inpainting
    BitMask blend_union;  ///< every pixel that may differ from the source
    SynthesisRecord record;
};

/// Replaces randomly chosen target anchors with pool segments drawn by
/// replacement_distribution until the new-area ratio reaches ratio_min, then
/// inpaints the union of the artifact regions once. An attempt that ends
/// outside [ratio_min, ratio_max] is discarded (weights restored) and redrawn,
/// up to max_attempts.
AugmentResult phase2_augment(const ImageRGB& target_img, const std::string& target_id,
                             std::span<const TargetSelection> targets, SegmentPool& pool,
                             const std::map<std::string, const ImageRGB*>& images, const Phase2Config& cfg,
                             const BlendConfig& blend, Rng& rng, BackendHandle* inpainter = nullptr);

struct DatasetSummary {
    std::size_t produced = 0;
    std::size_t failed = 0;
    std::vector<SynthesisRecord> records;

    /// More than 10% of attempted images failed.
    [[nodiscard]] bool over_failure_budget() const { return failed * 10 > produced + failed; }
};

/// Per class, per_class_count images `<out>/<class>/<seq>_<source>.png`,
/// the blend-union masks under `<out>/blend_masks/`, and `<out>/records.jsonl`.
/// Each image is seeded from (master_seed, class, seq). Classes run in name
/// order, images in sequence order.
DatasetSummary generate_dataset(std::span<const CorpusImage> corpus, std::map<std::string, SegmentPool>& pools,
                                const Phase2Config& cfg, const BlendConfig& blend,
                                const std::filesystem::path& out_dir, BackendHandle* inpainter = nullptr);

std::uint64_t image_seed(std::uint64_t master_seed, const std::string& class_label, std::uint64_t seq);

/// Source | composite | blended, side by side.
ImageRGB triptych(const ImageRGB& source, const ImageRGB& composite, const ImageRGB& blended);

}  // namespace usegmix
