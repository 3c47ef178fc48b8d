#include "usegmix/cli.hpp"

#include <algorithm>
#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <memory>
#include <numeric>
#include <optional>
#include <set>

#include <unistd.h>

#include "CLI11.hpp"
#include "usegmix/backend_protocol.hpp"
#include "usegmix/config.hpp"
#include "usegmix/error.hpp"
#include "usegmix/image_io.hpp"
#include "usegmix/pipeline.hpp"
#include "usegmix/rng.hpp"
#include "usegmix/toy_corpus.hpp"

namespace fs = std::filesystem;

namespace usegmix::cli {

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;
constexpr int kExitBudget = 3;

struct CommonOptions {
    std::string config_path;
    std::optional<std::uint64_t> seed;
};

std::optional<std::uint64_t> env_seed() {
    const char* s = std::getenv("USEGMIX_SEED");
    if (!s || !*s) return std::nullopt;
    char* end = nullptr;
    errno = 0;
    unsigned long long v = std::strtoull(s, &end, 10);
    if (errno != 0 || *end != '\0' || s[0] == '-') throw Error(std::string("USEGMIX_SEED is not an unsigned integer: ") + s);
    return v;
}

// --seed beats USEGMIX_SEED beats the config file.
RunConfig resolve_config(const CommonOptions& opts) {
    RunConfig cfg = opts.config_path.empty() ? RunConfig{} : load_run_config(opts.config_path);
    if (opts.seed) {
        cfg.phase2.master_seed = *opts.seed;
    } else if (auto s = env_seed()) {
        cfg.phase2.master_seed = *s;
    }
    if (const char* cmd = std::getenv("USEGMIX_BACKEND"); cmd && *cmd) cfg.backend_command = cmd;
    return cfg;
}

bool needs_backend(const RunConfig& cfg) {
    return cfg.segmenter == SegmenterKind::external || cfg.phase2.inpaint_backend == InpaintBackend::external;
}

// Owns the backend process (if any) and the segmenter built on top of it.
struct Backends {
    std::optional<BackendHandle> handle;
    std::unique_ptr<Segmenter> segmenter;

    explicit Backends(const RunConfig& cfg) {
        if (needs_backend(cfg)) {
            if (!cfg.backend_command) throw Error("an external backend is configured but no command was given (set USEGMIX_BACKEND)");
            handle.emplace(BackendHandle::spawn(*cfg.backend_command, BackendOptions{cfg.backend_timeout_s}));
        }
        if (cfg.segmenter == SegmenterKind::external) {
            segmenter = std::make_unique<ExternalSegmenter>(*handle);
        } else {
            segmenter = std::make_unique<FloodFillSegmenter>(cfg.floodfill);
        }
    }

    BackendHandle* inpainter(const RunConfig& cfg) {
        return cfg.phase2.inpaint_backend == InpaintBackend::external ? &*handle : nullptr;
    }
};

void add_common(CLI::App* cmd, CommonOptions& opts) {
    cmd->add_option("--config", opts.config_path, "JSON run configuration")->check(CLI::ExistingFile);
    cmd->add_option("--seed", opts.seed, "Master seed (overrides USEGMIX_SEED and the config)");
}

int cmd_index(const CommonOptions& common, const fs::path& corpus, const fs::path& out,
              const std::string& features_path) {
    RunConfig cfg = resolve_config(common);
    if (!features_path.empty()) cfg.features_file = features_path;
    Backends backends(cfg);
    std::optional<std::map<std::string, FeatureVector>> external;
    if (cfg.features_file) external = ingest_external_features(*cfg.features_file);
    auto pools = phase1_index(corpus, cfg.phase1, *backends.segmenter, cfg.phase2.master_seed, out,
                              external ? &*external : nullptr);
    for (const auto& [label, pool] : pools) {
        std::printf("%s: %zu segments, dim %zu\n", label.c_str(), pool.entries.size(), pool.dim());
    }
    return 0;
}

int cmd_augment(const CommonOptions& common, const fs::path& corpus_dir, const fs::path& pools_dir,
                const fs::path& out, std::optional<int> count, bool persist) {
    RunConfig cfg = resolve_config(common);
    if (count) cfg.phase2.per_class_count = *count;
    if (persist) cfg.persist_weights = true;
    validate(cfg.phase2);
    auto pools = load_pools(pools_dir);
    if (pools.empty()) throw Error("no pools found under " + pools_dir.string());
    auto corpus = load_corpus(corpus_dir);
    Backends backends(cfg);
    DatasetSummary summary = generate_dataset(corpus, pools, cfg.phase2, cfg.blend, out, backends.inpainter(cfg));
    if (cfg.persist_weights) {
        for (const auto& [label, pool] : pools) save_pool(pool, pools_dir / label);
    }
    std::printf("produced %zu, failed %zu\n", summary.produced, summary.failed);
    if (summary.over_failure_budget()) {
        std::fprintf(stderr, "usegmix: more than 10%% of images failed\n");
        return kExitBudget;
    }
    return 0;
}

int cmd_pool_stats(const fs::path& dir) {
    std::map<std::string, SegmentPool> pools;
    if (fs::exists(dir / "manifest.json")) {
        SegmentPool p = load_pool(dir);
        pools.emplace(p.class_label, std::move(p));
    } else {
        pools = load_pools(dir);
    }
    if (pools.empty()) throw Error("no pools found under " + dir.string());
    std::printf("%-16s %8s %5s %9s %8s %10s %10s %10s %12s\n", "class", "segments", "dim", "features", "sources",
                "w_min", "w_max", "w_mean", "mean_area");
    for (const auto& [label, pool] : pools) {
        const auto w = pool.weights();
        std::set<std::string> sources;
        double area = 0.0;
        for (const auto& e : pool.entries) {
            sources.insert(e.anchor.source_image);
            area += static_cast<double>(e.anchor.mask.count());
        }
        const double n = static_cast<double>(pool.entries.size());
        std::printf("%-16s %8zu %5zu %9s %8zu %10.1f %10.1f %10.3f %12.1f\n", label.c_str(), pool.entries.size(),
                    pool.dim(), to_string(pool.feature_source).c_str(), sources.size(),
                    *std::min_element(w.begin(), w.end()), *std::max_element(w.begin(), w.end()),
                    std::accumulate(w.begin(), w.end(), 0.0) / n, area / n);
    }
    return 0;
}

int cmd_preview(const CommonOptions& common, const fs::path& image_path, const fs::path& corpus_dir,
                const fs::path& pools_dir, const fs::path& out, std::string class_label) {
    RunConfig cfg = resolve_config(common);
    auto pools = load_pools(pools_dir);
    if (pools.empty()) throw Error("no pools found under " + pools_dir.string());
    if (class_label.empty()) {
        if (pools.size() != 1) throw Error("several pools found; choose one with --class");
        class_label = pools.begin()->first;
    }
    auto it = pools.find(class_label);
    if (it == pools.end()) throw Error("no pool for class '" + class_label + "'");
    SegmentPool& pool = it->second;

    auto corpus = load_corpus(corpus_dir);
    std::map<std::string, const ImageRGB*> images;
    for (const auto& c : corpus) {
        if (c.class_label == class_label) images.emplace(c.id, &c.image);
    }

    ImageRGB img = load_image(image_path);
    const std::string id = image_path.stem().string();
    Backends backends(cfg);
    const std::uint64_t seed = derive_seed(cfg.phase2.master_seed, "preview:" + id);
    auto targets = compute_targets(img, id, pool, cfg.phase1, *backends.segmenter, seed);
    Rng rng(seed);
    AugmentResult r = phase2_augment(img, id, targets, pool, images, cfg.phase2, cfg.blend, rng, backends.inpainter(cfg));
    save_png(out, triptych(img, r.composite, r.image));
    std::printf("ratio %.4f, %zu replacements\n", r.record.ratio, r.record.replacements.size());
    return 0;
}

int cmd_make_toy(const fs::path& dir, int classes, int per_class, int size, std::uint64_t seed) {
    write_toy_corpus(dir, classes, per_class, size, seed);
    std::printf("wrote %d classes x %d images (%dx%d) to %s\n", classes, per_class, size, size, dir.c_str());
    return 0;
}

// Index and augment a small toy corpus in a scratch directory.
int cmd_selfcheck() {
    const fs::path root = fs::temp_directory_path() / ("usegmix-selfcheck-" + std::to_string(::getpid()));
    struct Cleanup {
        fs::path p;
        ~Cleanup() {
            std::error_code ec;
            fs::remove_all(p, ec);
        }
    } cleanup{root};

    write_toy_corpus(root / "corpus", 2, 3, 64, 7);
    RunConfig cfg;
    cfg.phase1.slic.n_s = 12;
    cfg.phase1.consensus.k = 5;
    cfg.phase2.per_class_count = 2;
    FloodFillSegmenter seg(cfg.floodfill);
    auto pools = phase1_index(root / "corpus", cfg.phase1, seg, 7, root / "pools");
    auto reloaded = load_pools(root / "pools");
    for (const auto& [label, pool] : pools) {
        const auto& other = reloaded.at(label);
        if (other.entries.size() != pool.entries.size() || other.pca.components != pool.pca.components) {
            throw Error("selfcheck: pool '" + label + "' does not survive a save/load round trip");
        }
    }
    auto corpus = load_corpus(root / "corpus");
    DatasetSummary s = generate_dataset(corpus, reloaded, cfg.phase2, cfg.blend, root / "out");
    if (s.produced == 0) throw Error("selfcheck: no image was produced");
    for (const auto& r : s.records) {
        if (r.ratio < cfg.phase2.ratio_min || r.ratio > cfg.phase2.ratio_max) {
            throw Error("selfcheck: ratio out of range for " + r.output_path);
        }
    }
    std::printf("selfcheck ok: %zu pools, %zu images\n", pools.size(), s.produced);
    return 0;
}

}  // namespace

int run(int argc, char** argv) {
    CLI::App app{"usegmix: segment-level mixing augmentation"};
    app.require_subcommand(1);
    app.fallthrough();

    CommonOptions common;

    std::string corpus, out, pools_dir, features, image, class_label;
    std::optional<int> count;
    bool persist = false;
    int toy_classes_n = 3, toy_per_class = 6, toy_size = 96;
    std::uint64_t toy_seed = 1;

    auto* index = app.add_subcommand("index", "Build per-class segment pools from a corpus");
    index->add_option("corpus", corpus, "Corpus root (<root>/<class>/*.png)")->required()->check(CLI::ExistingDirectory);
    index->add_option("--out", out, "Pool output directory")->required();
    index->add_option("--features", features, "Precomputed feature records")->check(CLI::ExistingFile);
    add_common(index, common);

    auto* augment = app.add_subcommand("augment", "Synthesize augmented images from pools");
    augment->add_option("corpus", corpus, "Corpus root")->required()->check(CLI::ExistingDirectory);
    augment->add_option("--pools", pools_dir, "Pool directory")->required()->check(CLI::ExistingDirectory);
    augment->add_option("--out", out, "Output directory")->required();
    augment->add_option("--count", count, "Images per class")->check(CLI::PositiveNumber);
    augment->add_flag("--persist-weights", persist, "Write updated weights back to the pools");
    add_common(augment, common);

    auto* stats = app.add_subcommand("pool-stats", "Summarize pools");
    stats->add_option("pools", pools_dir, "Pool directory or a single pool")->required()->check(CLI::ExistingDirectory);

    auto* preview = app.add_subcommand("preview", "Augment one image and write a source|composite|blended strip");
    preview->add_option("image", image, "Image to augment")->required()->check(CLI::ExistingFile);
    preview->add_option("--corpus", corpus, "Corpus the pools were built from")->required()->check(CLI::ExistingDirectory);
    preview->add_option("--pools", pools_dir, "Pool directory")->required()->check(CLI::ExistingDirectory);
    preview->add_option("--out", out, "Output PNG")->required();
    preview->add_option("--class", class_label, "Pool to draw from");
    add_common(preview, common);

    auto* selfcheck = app.add_subcommand("selfcheck", "Run a small end-to-end check");

    auto* toy = app.add_subcommand("make-toy", "Write a synthetic corpus");
    toy->add_option("dir", out, "Output directory")->required();
    toy->add_option("--classes", toy_classes_n, "Number of classes")->check(CLI::Range(1, 3));
    toy->add_option("--per-class", toy_per_class, "Images per class")->check(CLI::PositiveNumber);
    toy->add_option("--size", toy_size, "Image side in pixels")->check(CLI::Range(16, 4096));
    toy->add_option("--seed", toy_seed, "Generator seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        std::cerr << app.help();
        return kExitUsage;
    }

    try {
        if (*index) return cmd_index(common, corpus, out, features);
        if (*augment) return cmd_augment(common, corpus, pools_dir, out, count, persist);
        if (*stats) return cmd_pool_stats(pools_dir);
        if (*preview) return cmd_preview(common, image, corpus, pools_dir, out, class_label);
        if (*selfcheck) return cmd_selfcheck();
        if (*toy) return cmd_make_toy(out, toy_classes_n, toy_per_class, toy_size, toy_seed);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "usegmix: %s\n", e.what());
        return kExitRuntime;
    }
    return kExitUsage;
}

}  // namespace usegmix::cli
