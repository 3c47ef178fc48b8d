#include "usegmix/pool.hpp"

#include <unistd.h>

#include <cmath>
#include <cstdio>
#include <iostream>
#include <set>

#include "json.hpp"
#include "usegmix/error.hpp"
#include "usegmix/image_io.hpp"
#include "usegmix/rng.hpp"

namespace usegmix {

namespace fs = std::filesystem;

namespace {

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

std::string checksum(std::span<const std::uint8_t> bytes) {
    return hex64(fnv1a64(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size())));
}

bool safe_id(const std::string& id) {
    if (id.empty() || id == "." || id == "..") return false;
    for (const char c : id) {
        const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_' ||
                        c == '-' || c == '.';
        if (!ok) return false;
    }
    return true;
}

}  // namespace

std::string to_string(FeatureSource s) { return s == FeatureSource::builtin ? "builtin" : "external"; }

FeatureSource feature_source_from_string(const std::string& s) {
    if (s == "builtin") return FeatureSource::builtin;
    if (s == "external") return FeatureSource::external;
    throw Error("unknown feature source '" + s + "'");
}

std::optional<std::size_t> SegmentPool::find(const std::string& segment_id) const {
    for (std::size_t i = 0; i < entries.size(); ++i) {
        if (entries[i].anchor.segment_id == segment_id) return i;
    }
    return std::nullopt;
}

std::vector<double> SegmentPool::weights() const {
    std::vector<double> w;
    w.reserve(entries.size());
    for (const auto& e : entries) w.push_back(e.weight);
    return w;
}

std::vector<AnchorSegment> phase1_anchors(const ImageRGB& img, const std::string& image_id,
                                          const std::string& class_label, const Phase1Config& cfg, Segmenter& backend,
                                          std::uint64_t seed) {
    const SuperpixelMap sp = slic(img, cfg.slic, derive_seed(seed, image_id));
    return anchors_for_image(img, sp, backend, cfg.consensus, seed, image_id, class_label);
}

FeatureVector raw_feature(const ImageRGB& img, const BitMask& mask, const DescriptorConfig& cfg) {
    return builtin_descriptor(crop_resize(img, mask), cfg);
}

std::map<std::string, SegmentPool> build_pool(std::span<const CorpusImage> corpus, const Phase1Config& cfg,
                                              Segmenter& backend, std::uint64_t seed,
                                              const std::map<std::string, FeatureVector>* external) {
    if (corpus.empty()) throw Error("build_pool: corpus is empty");

    std::map<std::string, std::vector<const CorpusImage*>> by_class;
    for (const auto& item : corpus) by_class[item.class_label].push_back(&item);

    std::map<std::string, SegmentPool> pools;
    for (const auto& [label, images] : by_class) {
        std::vector<AnchorSegment> anchors;
        std::vector<FeatureVector> raw;
        std::set<std::string> ids;
        for (const CorpusImage* item : images) {
            std::vector<AnchorSegment> found;
            try {
                found = phase1_anchors(item->image, item->id, label, cfg, backend, seed);
            } catch (const Error& e) {
                std::cerr << "warning: skipping image '" << item->id << "': " << e.what() << "\n";
                continue;
            }
            for (auto& a : found) {
                if (!safe_id(a.segment_id)) throw Error("segment id '" + a.segment_id + "' is not filesystem-safe");
                if (!ids.insert(a.segment_id).second) throw Error("duplicate segment id '" + a.segment_id + "' in class '" + label + "'");
                if (external != nullptr) {
                    const auto it = external->find(a.segment_id);
                    if (it == external->end()) throw Error("no external feature for segment '" + a.segment_id + "'");
                    raw.push_back(it->second);
                } else {
                    raw.push_back(raw_feature(item->image, a.mask, cfg.descriptor));
                }
                anchors.push_back(std::move(a));
            }
        }
        if (anchors.empty()) throw Error("class '" + label + "' produced no anchors");

        SegmentPool pool;
        pool.class_label = label;
        pool.feature_source = external != nullptr ? FeatureSource::external : FeatureSource::builtin;
        pool.pca = quantize_f32(raw.size() >= 2 ? pca_fit(raw, cfg.pca_dim) : pca_degenerate(raw.front()));
        for (std::size_t i = 0; i < anchors.size(); ++i) {
            pool.entries.push_back({std::move(anchors[i]), quantize_f32(pca_transform(pool.pca, raw[i])), 1.0});
        }
        pools.emplace(label, std::move(pool));
    }
    return pools;
}

void validate_pool(const SegmentPool& pool) {
    if (pool.entries.empty()) throw Error("pool '" + pool.class_label + "' has no entries");
    std::set<std::string> ids;
    for (const auto& e : pool.entries) {
        const auto& id = e.anchor.segment_id;
        if (!safe_id(id)) throw Error("pool '" + pool.class_label + "': invalid segment id '" + id + "'");
        if (!ids.insert(id).second) throw Error("pool '" + pool.class_label + "': duplicate segment id '" + id + "'");
        if (e.anchor.mask.empty()) throw Error("pool '" + pool.class_label + "': empty mask for '" + id + "'");
        if (!(e.weight >= 1.0) || !std::isfinite(e.weight)) {
            throw Error("pool '" + pool.class_label + "': weight of '" + id + "' must be >= 1");
        }
        if (e.feature.dim() != pool.dim()) {
            throw DimensionError("pool '" + pool.class_label + "': feature of '" + id + "' has dim " +
                                 std::to_string(e.feature.dim()) + ", pool dim is " + std::to_string(pool.dim()));
        }
    }
    if (pool.pca.components.size() != pool.pca.out_dim() * pool.pca.dim()) {
        throw DimensionError("pool '" + pool.class_label + "': PCA component matrix has the wrong size");
    }
}

void save_pool(const SegmentPool& pool, const fs::path& dir) {
    validate_pool(pool);
    const fs::path target = dir.lexically_normal();
    const fs::path parent = target.has_parent_path() ? target.parent_path() : fs::path(".");
    const std::string stem = target.filename().string();
    const fs::path tmp = parent / ("." + stem + ".tmp-" + std::to_string(::getpid()));
    const fs::path old = parent / ("." + stem + ".old-" + std::to_string(::getpid()));

    std::error_code ec;
    fs::create_directories(parent, ec);
    fs::remove_all(tmp, ec);
    if (!fs::create_directories(tmp / "masks", ec) || ec) throw IoError("cannot create " + (tmp / "masks").string());

    std::vector<FeatureRecord> records;
    nlohmann::json entries = nlohmann::json::array();
    for (const auto& e : pool.entries) {
        const std::string mask_rel = "masks/" + e.anchor.segment_id + ".png";
        save_png(tmp / mask_rel, e.anchor.mask);
        entries.push_back({{"segment_id", e.anchor.segment_id},
                           {"source_image", e.anchor.source_image},
                           {"mask", mask_rel},
                           {"weight", e.weight}});
        records.push_back({e.anchor.segment_id, e.feature});
    }
    const auto features = encode_feature_records(records);
    const auto pca = encode_pca(pool.pca);
    write_file(tmp / "features.bin", features);
    write_file(tmp / "pca.bin", pca);

    const nlohmann::json manifest{{"version", kPoolFormatVersion},
                                  {"class_label", pool.class_label},
                                  {"feature_source", to_string(pool.feature_source)},
                                  {"dim", pool.dim()},
                                  {"entries", entries},
                                  {"checksums", {{"features.bin", checksum(features)}, {"pca.bin", checksum(pca)}}}};
    const std::string text = manifest.dump(2) + "\n";
    write_file(tmp / "manifest.json", std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));

    fs::remove_all(old, ec);
    const bool existed = fs::exists(target);
    if (existed) {
        fs::rename(target, old, ec);
        if (ec) throw IoError("cannot move aside " + target.string() + ": " + ec.message());
    }
    fs::rename(tmp, target, ec);
    if (ec) {
        if (existed) fs::rename(old, target);
        throw IoError("cannot install " + target.string() + ": " + ec.message());
    }
    fs::remove_all(old, ec);
}

SegmentPool load_pool(const fs::path& dir) {
    const fs::path manifest_path = dir / "manifest.json";
    if (!fs::exists(manifest_path)) throw IoError("missing manifest: " + manifest_path.string());
    nlohmann::json manifest;
    try {
        const auto bytes = read_file(manifest_path);
        manifest = nlohmann::json::parse(bytes.begin(), bytes.end());
    } catch (const nlohmann::json::exception& e) {
        throw Error(manifest_path.string() + ": " + e.what());
    }

    SegmentPool pool;
    std::map<std::string, std::string> checksums;
    std::size_t dim = 0;
    std::vector<std::tuple<std::string, std::string, std::string, double>> rows;
    try {
        if (manifest.at("version").get<int>() != kPoolFormatVersion) {
            throw Error(manifest_path.string() + ": unsupported pool format version " + manifest.at("version").dump());
        }
        pool.class_label = manifest.at("class_label").get<std::string>();
        pool.feature_source = feature_source_from_string(manifest.at("feature_source").get<std::string>());
        dim = manifest.at("dim").get<std::size_t>();
        checksums = manifest.at("checksums").get<std::map<std::string, std::string>>();
        for (const auto& e : manifest.at("entries")) {
            rows.emplace_back(e.at("segment_id").get<std::string>(), e.at("source_image").get<std::string>(),
                              e.at("mask").get<std::string>(), e.at("weight").get<double>());
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(manifest_path.string() + ": malformed manifest: " + e.what());
    }

    const auto features_bytes = read_file(dir / "features.bin");
    const auto pca_bytes = read_file(dir / "pca.bin");
    if (checksums["features.bin"] != checksum(features_bytes)) throw Error((dir / "features.bin").string() + ": checksum mismatch");
    if (checksums["pca.bin"] != checksum(pca_bytes)) throw Error((dir / "pca.bin").string() + ": checksum mismatch");
    pool.pca = decode_pca(pca_bytes);
    if (pool.pca.out_dim() != dim) {
        throw DimensionError(manifest_path.string() + ": manifest dim " + std::to_string(dim) + " but PCA output dim " +
                             std::to_string(pool.pca.out_dim()));
    }
    std::map<std::string, FeatureVector> features;
    for (auto& rec : decode_feature_records(features_bytes)) features.emplace(std::move(rec.id), std::move(rec.feature));

    std::set<std::string> seen;
    for (auto& [id, source, mask_rel, weight] : rows) {
        if (!seen.insert(id).second) throw Error(manifest_path.string() + ": duplicate segment_id '" + id + "'");
        const fs::path rel = fs::path(mask_rel).lexically_normal();
        if (rel.is_absolute() || rel.empty() || *rel.begin() == "..") {
            throw Error(manifest_path.string() + ": mask path '" + mask_rel + "' escapes the pool directory");
        }
        const fs::path mask_path = dir / rel;
        if (!fs::exists(mask_path)) throw IoError("missing mask file: " + mask_path.string());
        const auto it = features.find(id);
        if (it == features.end()) throw Error((dir / "features.bin").string() + ": no feature for '" + id + "'");
        PoolEntry entry;
        entry.anchor = {load_mask(mask_path), source, pool.class_label, id};
        entry.feature = it->second;
        entry.weight = weight;
        pool.entries.push_back(std::move(entry));
    }
    validate_pool(pool);
    return pool;
}

std::map<std::string, SegmentPool> load_pools(const fs::path& root) {
    if (!fs::is_directory(root)) throw IoError("pool directory not found: " + root.string());
    std::vector<fs::path> dirs;
    for (const auto& entry : fs::directory_iterator(root)) {
        if (entry.is_directory() && fs::exists(entry.path() / "manifest.json")) dirs.push_back(entry.path());
    }
    std::sort(dirs.begin(), dirs.end());
    std::map<std::string, SegmentPool> pools;
    for (const auto& d : dirs) {
        SegmentPool p = load_pool(d);
        const std::string label = p.class_label;
        if (!pools.emplace(label, std::move(p)).second) throw Error("two pools for class '" + label + "' under " + root.string());
    }
    if (pools.empty()) throw Error("no pools found under " + root.string());
    return pools;
}

}  // namespace usegmix
