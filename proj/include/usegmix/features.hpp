#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "usegmix/raster.hpp"

namespace usegmix {

inline constexpr int kPatchSize = 224;
inline constexpr int kDefaultPcaDim = 128;

struct FeatureVector {
    std::vector<double> values;

    [[nodiscard]] std::size_t dim() const { return values.size(); }
    bool operator==(const FeatureVector&) const = default;
};

struct FeatureRecord {
    std::string id;
    FeatureVector feature;
};

struct DescriptorConfig {
    int bins_per_channel = 32;
    int gradient_bins = 16;

    [[nodiscard]] std::size_t dim() const { return 3 * static_cast<std::size_t>(bins_per_channel) + gradient_bins; }
    bool operator==(const DescriptorConfig&) const = default;
};

/// Principal axes of a feature set. `components` is row-major out_dim() x dim().
struct PCAModel {
    std::vector<double> mean;
    std::vector<double> components;
    std::vector<double> explained_variance;

    [[nodiscard]] std::size_t dim() const { return mean.size(); }
    [[nodiscard]] std::size_t out_dim() const { return explained_variance.size(); }
    [[nodiscard]] std::span<const double> component(std::size_t i) const {
        return std::span<const double>(components).subspan(i * dim(), dim());
    }
    bool operator==(const PCAModel&) const = default;
};

/// Bounding-box crop (background included) resized to 224x224.
ImageRGB crop_resize(const ImageRGB& img, const BitMask& m);

/// Per-channel intensity histograms followed by a gradient-magnitude
/// histogram, each L1-normalised. Gradients are central differences of the
/// channel mean, binned uniformly over [0, 255 * sqrt(2)].
FeatureVector builtin_descriptor(const ImageRGB& patch, const DescriptorConfig& cfg);

// Feature file: "USGF1", u32 count, u32 dim, then per record u16 id length,
// id bytes, dim x f32. Little-endian.
std::vector<FeatureRecord> decode_feature_records(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_feature_records(std::span<const FeatureRecord> records);
std::map<std::string, FeatureVector> ingest_external_features(const std::filesystem::path& path);
void export_features(const std::filesystem::path& path, std::span<const FeatureRecord> records);

/// Top min(p, d, n-1) eigenvectors of the sample covariance, in descending
/// eigenvalue order, each signed so its largest-magnitude entry is positive.
PCAModel pca_fit(std::span<const FeatureVector> vectors, int p = kDefaultPcaDim);
/// components * (v - mean)
FeatureVector pca_transform(const PCAModel& model, const FeatureVector& v);
/// components^T * z + mean
FeatureVector pca_inverse(const PCAModel& model, const FeatureVector& z);

/// Zero-dimensional model centred on a single vector; used for one-entry pools.
PCAModel pca_degenerate(const FeatureVector& mean);

/// Rounds every parameter to the nearest f32 so the model persists losslessly.
PCAModel quantize_f32(PCAModel model);
FeatureVector quantize_f32(FeatureVector v);

// PCA file: "USGP1", u32 d, u32 p', mean d x f32, components p' x d f32, eigenvalues p' x f32.
std::vector<std::uint8_t> encode_pca(const PCAModel& model);
PCAModel decode_pca(std::span<const std::uint8_t> bytes);

}  // namespace usegmix
