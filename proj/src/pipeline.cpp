#include "usegmix/pipeline.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <set>

#include "usegmix/error.hpp"
#include "usegmix/image_io.hpp"

namespace usegmix {

namespace fs = std::filesystem;

namespace {

std::string sanitize_id(const std::string& s) {
    std::string out = s;
    for (auto& c : out) {
        const bool ok = std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.';
        if (!ok) c = '_';
    }
    return out;
}

bool is_image_file(const fs::path& p) {
    std::string ext = p.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

}  // namespace

void validate(const Phase2Config& cfg) {
    if (!(cfg.ratio_min > 0.0 && cfg.ratio_min <= cfg.ratio_max && cfg.ratio_max <= 1.0)) {
        throw Error("phase2: need 0 < ratio_min <= ratio_max <= 1");
    }
    if (cfg.max_attempts < 1) throw Error("phase2: max_attempts must be >= 1");
    if (cfg.per_class_count < 0) throw Error("phase2: per_class_count must be >= 0");
}

nlohmann::json to_json(const SynthesisRecord& r) {
    return {{"output", r.output_path},   {"blend_mask", r.blend_mask_path}, {"source_image", r.source_image},
            {"class", r.class_label},    {"replaced", r.replaced},         {"replacements", r.replacements},
            {"ratio", r.ratio},          {"seed", r.seed}};
}

std::vector<CorpusImage> load_corpus(const fs::path& root) {
    if (!fs::is_directory(root)) throw IoError("corpus directory not found: " + root.string());
    std::vector<fs::path> class_dirs;
    for (const auto& e : fs::directory_iterator(root)) {
        if (e.is_directory()) class_dirs.push_back(e.path());
    }
    std::sort(class_dirs.begin(), class_dirs.end());

    std::vector<CorpusImage> corpus;
    for (const auto& dir : class_dirs) {
        const std::string label = dir.filename().string();
        std::vector<fs::path> files;
        for (const auto& e : fs::directory_iterator(dir)) {
            if (e.is_regular_file() && is_image_file(e.path())) files.push_back(e.path());
        }
        std::sort(files.begin(), files.end());
        std::set<std::string> ids;
        for (const auto& f : files) {
            const std::string id = sanitize_id(f.stem().string());
            if (!ids.insert(id).second) {
                std::cerr << "warning: skipping " << f << ": image id '" << id << "' already used in class '" << label << "'\n";
                continue;
            }
            try {
                corpus.push_back({id, label, load_image(f)});
            } catch (const Error& e) {
                std::cerr << "warning: skipping unreadable image " << f << ": " << e.what() << "\n";
            }
        }
    }
    if (corpus.empty()) throw Error("corpus " + root.string() + " contains no readable images");
    return corpus;
}

std::map<std::string, SegmentPool> phase1_index(const fs::path& corpus_dir, const Phase1Config& cfg, Segmenter& backend,
                                                std::uint64_t seed, const fs::path& out_dir,
                                                const std::map<std::string, FeatureVector>* external) {
    const std::vector<CorpusImage> corpus = load_corpus(corpus_dir);
    auto pools = build_pool(corpus, cfg, backend, seed, external);
    fs::create_directories(out_dir);
    for (const auto& [label, pool] : pools) save_pool(pool, out_dir / label);
    return pools;
}

double new_area_ratio(std::span<const BlendPlan> plans, int width, int height) {
    if (plans.empty()) return 0.0;
    BitMask all(width, height);
    for (const auto& p : plans) {
        all = mask_union(all, mask_union(p.warped_replacement_mask, p.inpaint_mask));
    }
    return static_cast<double>(all.count()) / (static_cast<double>(width) * height);
}

std::vector<TargetSelection> pool_targets(const SegmentPool& pool, const std::string& image_id) {
    std::vector<TargetSelection> out;
    for (const auto& e : pool.entries) {
        if (e.anchor.source_image == image_id) out.push_back({e.anchor, e.feature});
    }
    return out;
}

std::vector<TargetSelection> compute_targets(const ImageRGB& img, const std::string& image_id, const SegmentPool& pool,
                                             const Phase1Config& cfg, Segmenter& backend, std::uint64_t seed) {
    if (pool.feature_source != FeatureSource::builtin) {
        throw Error("pool '" + pool.class_label + "' uses external features; targets outside the pool cannot be projected");
    }
    std::vector<TargetSelection> out;
    for (auto& a : phase1_anchors(img, image_id, pool.class_label, cfg, backend, seed)) {
        FeatureVector f = quantize_f32(pca_transform(pool.pca, raw_feature(img, a.mask, cfg.descriptor)));
        out.push_back({std::move(a), std::move(f)});
    }
    return out;
}

AugmentResult phase2_augment(const ImageRGB& target_img, const std::string& target_id,
                             std::span<const TargetSelection> targets, SegmentPool& pool,
                             const std::map<std::string, const ImageRGB*>& images, const Phase2Config& cfg,
                             const BlendConfig& blend, Rng& rng, BackendHandle* inpainter) {
    validate(cfg);
    if (targets.empty()) throw Error("image '" + target_id + "' has no target anchors");

    const int w = target_img.width;
    const int h = target_img.height;
    const double area = static_cast<double>(w) * h;
    std::string last_error;
    bool any_candidate = false;
    double best_ratio = 0.0;

    for (int attempt = 0; attempt < cfg.max_attempts; ++attempt) {
        const std::vector<double> saved_weights = pool.weights();
        ImageRGB composite = target_img;
        std::vector<std::int32_t> provenance(target_img.pixel_count(), kOriginal);
        BitMask blend_union(w, h);
        BitMask inpaint_union(w, h);
        std::vector<std::string> replaced;
        std::vector<std::string> replacements;
        std::vector<std::size_t> remaining(targets.size());
        for (std::size_t i = 0; i < remaining.size(); ++i) remaining[i] = i;
        double ratio = 0.0;
        std::int32_t paste_label = kPasted;

        while (!remaining.empty() && ratio < cfg.ratio_min) {
            const std::size_t pick = rng.index(remaining.size());
            const TargetSelection& target = targets[remaining[pick]];
            remaining.erase(remaining.begin() + static_cast<std::ptrdiff_t>(pick));
            if (target.segment.mask.width != w || target.segment.mask.height != h) {
                throw DimensionError("target anchor '" + target.segment.segment_id + "' does not match the image");
            }

            std::size_t j = 0;
            BlendPlan plan;
            try {
                const ReplacementDistribution dist = replacement_distribution(target, pool);
                any_candidate = true;
                j = sample_replacement(dist, rng);
                const AnchorSegment& repl = pool.entries[j].anchor;
                const auto it = images.find(repl.source_image);
                if (it == images.end()) throw Error("source image '" + repl.source_image + "' of segment '" + repl.segment_id + "' is not loaded");
                plan = make_blend_plan(target_img, target.segment, *it->second, repl, blend);
            } catch (const Error& e) {
                last_error = e.what();
                continue;
            }
            penalize(pool, j);

            composite = paste(composite, plan);
            for (std::size_t i = 0; i < provenance.size(); ++i) {
                if (plan.warped_replacement_mask.bits[i]) {
                    provenance[i] = paste_label;
                } else if (plan.target_mask.bits[i] && provenance[i] == kOriginal) {
                    provenance[i] = kHole;
                }
            }
            ++paste_label;
            inpaint_union = mask_union(inpaint_union, plan.inpaint_mask);
            blend_union = mask_union(blend_union, mask_union(plan.warped_replacement_mask, plan.inpaint_mask));
            ratio = static_cast<double>(blend_union.count()) / area;
            replaced.push_back(target.segment.segment_id);
            replacements.push_back(pool.entries[j].anchor.segment_id);
        }

        if (!replaced.empty() && ratio >= cfg.ratio_min && ratio <= cfg.ratio_max) {
            AugmentResult result;
            result.image = inpaint(composite, inpaint_union, provenance, inpainter, blend);
            result.composite = std::move(composite);
            result.blend_union = std::move(blend_union);
            result.record.source_image = target_id;
            result.record.class_label = pool.class_label;
            result.record.replaced = std::move(replaced);
            result.record.replacements = std::move(replacements);
            result.record.ratio = ratio;
            return result;
        }
        best_ratio = std::max(best_ratio, ratio);
        for (std::size_t i = 0; i < pool.entries.size(); ++i) pool.entries[i].weight = saved_weights[i];
    }
    if (!any_candidate) {
        throw Error("no candidates for image '" + target_id + "': " + last_error);
    }
    throw Error("new-area ratio in [" + std::to_string(cfg.ratio_min) + ", " + std::to_string(cfg.ratio_max) +
                "] unreachable for image '" + target_id + "' after " + std::to_string(cfg.max_attempts) +
                " attempts (best " + std::to_string(best_ratio) + ")" +
                (last_error.empty() ? std::string() : "; last error: " + last_error));
}

std::uint64_t image_seed(std::uint64_t master_seed, const std::string& class_label, std::uint64_t seq) {
    return derive_seed(derive_seed(master_seed, class_label), seq);
}

DatasetSummary generate_dataset(std::span<const CorpusImage> corpus, std::map<std::string, SegmentPool>& pools,
                                const Phase2Config& cfg, const BlendConfig& blend, const fs::path& out_dir,
                                BackendHandle* inpainter) {
    validate(cfg);
    std::map<std::string, std::vector<const CorpusImage*>> by_class;
    for (const auto& item : corpus) by_class[item.class_label].push_back(&item);
    for (const auto& [label, items] : by_class) {
        if (!pools.contains(label)) throw Error("no pool for class '" + label + "'");
    }

    DatasetSummary summary;
    fs::create_directories(out_dir);
    for (const auto& [label, items] : by_class) {
        SegmentPool& pool = pools.at(label);
        std::map<std::string, const ImageRGB*> images;
        for (const CorpusImage* item : items) images.emplace(item->id, &item->image);
        const std::vector<double> initial_weights = pool.weights();
        fs::create_directories(out_dir / label);
        fs::create_directories(out_dir / "blend_masks" / label);

        for (int seq = 0; seq < cfg.per_class_count; ++seq) {
            const std::uint64_t seed = image_seed(cfg.master_seed, label, static_cast<std::uint64_t>(seq));
            Rng rng(seed);
            const CorpusImage& src = *items[rng.index(items.size())];
            if (cfg.reset_weights_per_image) {
                for (std::size_t i = 0; i < pool.entries.size(); ++i) pool.entries[i].weight = initial_weights[i];
            }
            char name[64];
            std::snprintf(name, sizeof(name), "%04d_", seq);
            const std::string file = std::string(name) + src.id + ".png";
            try {
                const auto targets = pool_targets(pool, src.id);
                AugmentResult res = phase2_augment(src.image, src.id, targets, pool, images, cfg, blend, rng, inpainter);
                res.record.seed = seed;
                res.record.output_path = label + "/" + file;
                res.record.blend_mask_path = "blend_masks/" + label + "/" + file;
                save_png(out_dir / res.record.output_path, res.image);
                save_png(out_dir / res.record.blend_mask_path, res.blend_union);
                summary.records.push_back(std::move(res.record));
                ++summary.produced;
            } catch (const Error& e) {
                std::cerr << "warning: " << label << "/" << file << " failed: " << e.what() << "\n";
                ++summary.failed;
            }
        }
    }

    std::ofstream records(out_dir / "records.jsonl", std::ios::trunc);
    if (!records) throw IoError("cannot write " + (out_dir / "records.jsonl").string());
    for (const auto& r : summary.records) records << to_json(r).dump() << "\n";
    return summary;
}

ImageRGB triptych(const ImageRGB& source, const ImageRGB& composite, const ImageRGB& blended) {
    const int w = source.width;
    const int h = source.height;
    ImageRGB out(3 * w, h);
    const ImageRGB* panels[3] = {&source, &composite, &blended};
    for (int k = 0; k < 3; ++k) {
        if (panels[k]->width != w || panels[k]->height != h) throw DimensionError("triptych: panel size mismatch");
        for (int y = 0; y < h; ++y) {
            std::copy_n(&panels[k]->data[static_cast<std::size_t>(y) * w * 3], static_cast<std::size_t>(w) * 3,
                        &out.data[(static_cast<std::size_t>(y) * 3 * w + static_cast<std::size_t>(k) * w) * 3]);
        }
    }
    return out;
}

}  // namespace usegmix
