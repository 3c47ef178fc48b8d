#include "usegmix/features.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <string>

#include "usegmix/error.hpp"
#include "usegmix/image_io.hpp"

namespace usegmix {

namespace {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

constexpr char kFeatureMagic[5] = {'U', 'S', 'G', 'F', '1'};
constexpr char kPcaMagic[5] = {'U', 'S', 'G', 'P', '1'};

class ByteWriter {
public:
    explicit ByteWriter(std::vector<std::uint8_t>& out) : out_(out) {}
    void raw(const void* p, std::size_t n) {
        const auto* b = static_cast<const std::uint8_t*>(p);
        out_.insert(out_.end(), b, b + n);
    }
    void u16(std::uint16_t v) { raw(&v, sizeof(v)); }
    void u32(std::uint32_t v) { raw(&v, sizeof(v)); }
    void f32(double v) {
        const auto f = static_cast<float>(v);
        raw(&f, sizeof(f));
    }

private:
    std::vector<std::uint8_t>& out_;
};

class ByteReader {
public:
    ByteReader(std::span<const std::uint8_t> in, const char* what) : in_(in), what_(what) {}
    void raw(void* p, std::size_t n) {
        if (off_ + n > in_.size()) {
            throw DecodeError(std::string(what_) + ": truncated at byte offset " + std::to_string(off_));
        }
        std::memcpy(p, in_.data() + off_, n);
        off_ += n;
    }
    std::uint16_t u16() {
        std::uint16_t v;
        raw(&v, sizeof(v));
        return v;
    }
    std::uint32_t u32() {
        std::uint32_t v;
        raw(&v, sizeof(v));
        return v;
    }
    double f32() {
        float v;
        raw(&v, sizeof(v));
        return static_cast<double>(v);
    }
    [[nodiscard]] std::size_t offset() const { return off_; }
    [[nodiscard]] bool done() const { return off_ == in_.size(); }

private:
    std::span<const std::uint8_t> in_;
    const char* what_;
    std::size_t off_ = 0;
};

}  // namespace

ImageRGB crop_resize(const ImageRGB& img, const BitMask& m) {
    if (m.width != img.width || m.height != img.height) throw DimensionError("crop_resize: mask/image size mismatch");
    const BBox box = mask_bbox(m);
    return resize_bilinear(crop(img, box), kPatchSize, kPatchSize);
}

FeatureVector builtin_descriptor(const ImageRGB& patch, const DescriptorConfig& cfg) {
    if (patch.width != kPatchSize || patch.height != kPatchSize) {
        throw DimensionError("builtin_descriptor: patch must be 224x224, got " + std::to_string(patch.width) + "x" +
                             std::to_string(patch.height));
    }
    if (cfg.bins_per_channel < 2 || cfg.gradient_bins < 2) throw Error("builtin_descriptor: bins must be >= 2");

    const int w = patch.width;
    const int h = patch.height;
    const std::size_t cb = static_cast<std::size_t>(cfg.bins_per_channel);
    std::vector<double> hist(cfg.dim(), 0.0);
    // Three times the channel mean, kept integral so bin edges are compared exactly.
    std::vector<std::int64_t> gray3(patch.pixel_count());
    for (std::size_t i = 0; i < gray3.size(); ++i) {
        for (std::size_t c = 0; c < 3; ++c) {
            hist[c * cb + patch.data[i * 3 + c] * cb / 256] += 1.0;
        }
        gray3[i] = patch.data[i * 3] + patch.data[i * 3 + 1] + patch.data[i * 3 + 2];
    }

    // Bin b holds magnitudes in [b, b + 1) * 255 sqrt(2) / bins. In units of
    // 3 * gray: mag3^2 * bins^2 >= 2 * 765^2 * b^2.
    const std::int64_t gb = cfg.gradient_bins;
    const std::int64_t edge_scale = 2 * 765 * 765;
    double* ghist = hist.data() + 3 * cb;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            auto g = [&](int xx, int yy) { return gray3[static_cast<std::size_t>(yy) * w + xx]; };
            const std::int64_t gx = g(std::min(x + 1, w - 1), y) - g(std::max(x - 1, 0), y);
            const std::int64_t gy = g(x, std::min(y + 1, h - 1)) - g(x, std::max(y - 1, 0));
            const std::int64_t lhs = (gx * gx + gy * gy) * gb * gb;
            auto bin = static_cast<std::int64_t>(std::sqrt(static_cast<double>(lhs) / static_cast<double>(edge_scale)));
            while (bin > 0 && edge_scale * bin * bin > lhs) --bin;
            while (bin + 1 < gb && edge_scale * (bin + 1) * (bin + 1) <= lhs) ++bin;
            ghist[std::min(bin, gb - 1)] += 1.0;
        }
    }
    const double n = static_cast<double>(patch.pixel_count());
    for (auto& v : hist) v /= n;
    return {std::move(hist)};
}

std::vector<FeatureRecord> decode_feature_records(std::span<const std::uint8_t> bytes) {
    ByteReader r(bytes, "feature file");
    char magic[5];
    r.raw(magic, 5);
    if (std::memcmp(magic, kFeatureMagic, 5) != 0) throw DecodeError("feature file: bad magic (expected USGF1)");
    const std::uint32_t count = r.u32();
    const std::uint32_t dim = r.u32();
    std::vector<FeatureRecord> records;
    records.reserve(std::min<std::uint32_t>(count, 1u << 20));
    std::map<std::string, std::size_t> seen;
    for (std::uint32_t i = 0; i < count; ++i) {
        FeatureRecord rec;
        rec.id.resize(r.u16());
        r.raw(rec.id.data(), rec.id.size());
        rec.feature.values.resize(dim);
        for (auto& v : rec.feature.values) {
            v = r.f32();
            if (!std::isfinite(v)) {
                throw DecodeError("feature file: record " + std::to_string(i) + " ('" + rec.id + "') has a non-finite value");
            }
        }
        if (!seen.emplace(rec.id, i).second) {
            throw DecodeError("feature file: record " + std::to_string(i) + " duplicates id '" + rec.id + "'");
        }
        records.push_back(std::move(rec));
    }
    if (!r.done()) throw DecodeError("feature file: trailing bytes at offset " + std::to_string(r.offset()));
    return records;
}

std::vector<std::uint8_t> encode_feature_records(std::span<const FeatureRecord> records) {
    const std::size_t dim = records.empty() ? 0 : records.front().feature.dim();
    std::vector<std::uint8_t> out;
    ByteWriter w(out);
    w.raw(kFeatureMagic, 5);
    w.u32(static_cast<std::uint32_t>(records.size()));
    w.u32(static_cast<std::uint32_t>(dim));
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto& rec = records[i];
        if (rec.feature.dim() != dim) {
            throw DimensionError("feature record " + std::to_string(i) + " ('" + rec.id + "') has dim " +
                                 std::to_string(rec.feature.dim()) + ", expected " + std::to_string(dim));
        }
        if (rec.id.size() > 0xFFFF) throw Error("feature record id too long: " + rec.id.substr(0, 32) + "...");
        w.u16(static_cast<std::uint16_t>(rec.id.size()));
        w.raw(rec.id.data(), rec.id.size());
        for (const double v : rec.feature.values) w.f32(v);
    }
    return out;
}

std::map<std::string, FeatureVector> ingest_external_features(const std::filesystem::path& path) {
    std::vector<FeatureRecord> records;
    try {
        records = decode_feature_records(read_file(path));
    } catch (const DecodeError& e) {
        throw DecodeError(path.string() + ": " + e.what());
    }
    std::map<std::string, FeatureVector> out;
    for (auto& rec : records) out.emplace(std::move(rec.id), std::move(rec.feature));
    return out;
}

void export_features(const std::filesystem::path& path, std::span<const FeatureRecord> records) {
    write_file(path, encode_feature_records(records));
}

PCAModel pca_fit(std::span<const FeatureVector> vectors, int p) {
    if (vectors.size() < 2) throw Error("pca_fit: need at least 2 vectors, got " + std::to_string(vectors.size()));
    if (p < 1) throw Error("pca_fit: target dimension must be >= 1");
    const std::size_t d = vectors.front().dim();
    if (d == 0) throw DimensionError("pca_fit: zero-dimensional vectors");
    const std::size_t n = vectors.size();
    Eigen::MatrixXd x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
    for (std::size_t i = 0; i < n; ++i) {
        if (vectors[i].dim() != d) {
            throw DimensionError("pca_fit: vector " + std::to_string(i) + " has dim " + std::to_string(vectors[i].dim()) +
                                 ", expected " + std::to_string(d));
        }
        for (std::size_t j = 0; j < d; ++j) x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = vectors[i].values[j];
    }
    const Eigen::RowVectorXd mean = x.colwise().mean();
    x.rowwise() -= mean;
    const Eigen::MatrixXd cov = (x.transpose() * x) / static_cast<double>(n - 1);
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
    if (solver.info() != Eigen::Success) throw Error("pca_fit: eigendecomposition failed");

    const std::size_t out = std::min({static_cast<std::size_t>(p), d, n - 1});
    PCAModel model;
    model.mean.assign(mean.data(), mean.data() + d);
    model.components.resize(out * d);
    model.explained_variance.resize(out);
    const auto& evals = solver.eigenvalues();  // ascending
    const auto& evecs = solver.eigenvectors();
    for (std::size_t k = 0; k < out; ++k) {
        const auto col = static_cast<Eigen::Index>(d - 1 - k);
        Eigen::VectorXd v = evecs.col(col);
        Eigen::Index arg = 0;
        v.cwiseAbs().maxCoeff(&arg);
        if (v(arg) < 0.0) v = -v;
        std::copy(v.data(), v.data() + d, model.components.begin() + static_cast<std::ptrdiff_t>(k * d));
        model.explained_variance[k] = std::max(0.0, evals(col));
    }
    return model;
}

FeatureVector pca_transform(const PCAModel& model, const FeatureVector& v) {
    if (v.dim() != model.dim()) {
        throw DimensionError("pca_transform: vector has dim " + std::to_string(v.dim()) + ", model expects " +
                             std::to_string(model.dim()));
    }
    FeatureVector out;
    out.values.assign(model.out_dim(), 0.0);
    for (std::size_t k = 0; k < model.out_dim(); ++k) {
        const auto comp = model.component(k);
        double s = 0.0;
        for (std::size_t j = 0; j < model.dim(); ++j) s += comp[j] * (v.values[j] - model.mean[j]);
        out.values[k] = s;
    }
    return out;
}

FeatureVector pca_inverse(const PCAModel& model, const FeatureVector& z) {
    if (z.dim() != model.out_dim()) throw DimensionError("pca_inverse: dimension mismatch");
    FeatureVector out{model.mean};
    for (std::size_t k = 0; k < model.out_dim(); ++k) {
        const auto comp = model.component(k);
        for (std::size_t j = 0; j < model.dim(); ++j) out.values[j] += comp[j] * z.values[k];
    }
    return out;
}

PCAModel pca_degenerate(const FeatureVector& mean) {
    PCAModel m;
    m.mean = mean.values;
    return m;
}

PCAModel quantize_f32(PCAModel model) {
    auto q = [](std::vector<double>& v) {
        for (auto& x : v) x = static_cast<double>(static_cast<float>(x));
    };
    q(model.mean);
    q(model.components);
    q(model.explained_variance);
    return model;
}

FeatureVector quantize_f32(FeatureVector v) {
    for (auto& x : v.values) x = static_cast<double>(static_cast<float>(x));
    return v;
}

std::vector<std::uint8_t> encode_pca(const PCAModel& model) {
    std::vector<std::uint8_t> out;
    ByteWriter w(out);
    w.raw(kPcaMagic, 5);
    w.u32(static_cast<std::uint32_t>(model.dim()));
    w.u32(static_cast<std::uint32_t>(model.out_dim()));
    for (const double v : model.mean) w.f32(v);
    for (const double v : model.components) w.f32(v);
    for (const double v : model.explained_variance) w.f32(v);
    return out;
}

PCAModel decode_pca(std::span<const std::uint8_t> bytes) {
    ByteReader r(bytes, "pca file");
    char magic[5];
    r.raw(magic, 5);
    if (std::memcmp(magic, kPcaMagic, 5) != 0) throw DecodeError("pca file: bad magic (expected USGP1)");
    const std::size_t d = r.u32();
    const std::size_t p = r.u32();
    if (p > d) throw DecodeError("pca file: output dimension exceeds input dimension");
    PCAModel m;
    m.mean.resize(d);
    m.components.resize(p * d);
    m.explained_variance.resize(p);
    for (auto& v : m.mean) v = r.f32();
    for (auto& v : m.components) v = r.f32();
    for (auto& v : m.explained_variance) v = r.f32();
    if (!r.done()) throw DecodeError("pca file: trailing bytes at offset " + std::to_string(r.offset()));
    return m;
}

}  // namespace usegmix
