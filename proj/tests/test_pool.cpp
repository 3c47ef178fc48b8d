#include "doctest.h"

#include <fstream>
#include <functional>
#include <set>

#include "json.hpp"
#include "support.hpp"
#include "usegmix/error.hpp"
#include "usegmix/image_io.hpp"
#include "usegmix/pool.hpp"
#include "usegmix/toy_corpus.hpp"

using namespace usegmix;
namespace fs = std::filesystem;

namespace {

Phase1Config small_config() {
    Phase1Config cfg;
    cfg.slic.n_s = 8;
    cfg.consensus.k = 5;
    return cfg;
}

std::vector<CorpusImage> toy_corpus(const std::vector<std::string>& classes, int per_class, int size) {
    std::vector<CorpusImage> out;
    for (const auto& c : classes) {
        for (int i = 0; i < per_class; ++i) {
            out.push_back({c + std::to_string(i), c, make_toy_image(c, size, derive_seed(11, c + std::to_string(i)))});
        }
    }
    return out;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

void check_same_pool(const SegmentPool& a, const SegmentPool& b) {
    CHECK(a.class_label == b.class_label);
    CHECK(a.feature_source == b.feature_source);
    CHECK(a.pca == b.pca);
    REQUIRE(a.entries.size() == b.entries.size());
    for (std::size_t i = 0; i < a.entries.size(); ++i) {
        CHECK(a.entries[i].anchor.segment_id == b.entries[i].anchor.segment_id);
        CHECK(a.entries[i].anchor.source_image == b.entries[i].anchor.source_image);
        CHECK(a.entries[i].anchor.class_label == b.entries[i].anchor.class_label);
        CHECK(a.entries[i].anchor.mask == b.entries[i].anchor.mask);
        CHECK(a.entries[i].feature == b.entries[i].feature);
        CHECK(a.entries[i].weight == b.entries[i].weight);
    }
}

void edit_manifest(const fs::path& dir, const std::function<void(nlohmann::json&)>& f) {
    nlohmann::json j = nlohmann::json::parse(slurp(dir / "manifest.json"));
    f(j);
    std::ofstream(dir / "manifest.json") << j.dump(2);
}

}  // namespace

TEST_CASE("one uniform image gives a one-entry pool") {
    const std::vector<CorpusImage> corpus{{"u", "flat", usegmix::test::uniform_image(32, 32, 80, 80, 80)}};
    FloodFillSegmenter seg(FloodFillConfig{.max_frac = 1.0});
    const auto pools = build_pool(corpus, small_config(), seg, 1);
    REQUIRE(pools.size() == 1);
    const SegmentPool& p = pools.at("flat");
    REQUIRE(p.entries.size() == 1);
    CHECK(p.entries[0].weight == 1.0);
    CHECK(p.dim() == 0);
    validate_pool(p);
}

TEST_CASE("two classes give two pools with disjoint ids") {
    FloodFillSegmenter seg;
    const auto pools = build_pool(toy_corpus({"blobs", "tiles"}, 2, 64), small_config(), seg, 3);
    REQUIRE(pools.size() == 2);
    std::set<std::string> ids;
    for (const auto& [label, pool] : pools) {
        for (const auto& e : pool.entries) {
            CHECK(e.anchor.class_label == label);
            CHECK(e.weight == 1.0);
            CHECK(e.feature.dim() == pool.dim());
            CHECK(ids.insert(e.anchor.segment_id).second);
        }
    }
}

TEST_CASE("pool entry counts equal per-image consensus counts") {
    const auto corpus = toy_corpus({"blobs", "bands"}, 2, 64);
    const Phase1Config cfg = small_config();
    FloodFillSegmenter seg;
    const auto pools = build_pool(corpus, cfg, seg, 5);
    std::map<std::string, std::size_t> expected;
    for (const auto& item : corpus) {
        const SuperpixelMap sp = slic(item.image, cfg.slic, 0);
        expected[item.class_label] += anchors_for_image(item.image, sp, seg, cfg.consensus, 5, item.id, item.class_label).size();
    }
    for (const auto& [label, pool] : pools) CHECK(pool.entries.size() == expected.at(label));
}

TEST_CASE("pool build is deterministic") {
    const auto corpus = toy_corpus({"tiles"}, 3, 48);
    FloodFillSegmenter seg;
    const auto a = build_pool(corpus, small_config(), seg, 9);
    const auto b = build_pool(corpus, small_config(), seg, 9);
    check_same_pool(a.at("tiles"), b.at("tiles"));
}

TEST_CASE("external features") {
    const auto corpus = toy_corpus({"blobs"}, 2, 48);
    FloodFillSegmenter seg;
    const auto builtin = build_pool(corpus, small_config(), seg, 2).at("blobs");
    std::map<std::string, FeatureVector> ext;
    for (std::size_t i = 0; i < builtin.entries.size(); ++i) {
        ext[builtin.entries[i].anchor.segment_id] = FeatureVector{{double(i), double(i * i), 1.0}};
    }
    const auto pool = build_pool(corpus, small_config(), seg, 2, &ext).at("blobs");
    CHECK(pool.feature_source == FeatureSource::external);
    CHECK(pool.pca.dim() == 3);
    ext.erase(ext.begin());
    CHECK_THROWS_AS(build_pool(corpus, small_config(), seg, 2, &ext), Error);
}

TEST_CASE("save/load round trip is exact and saves are reproducible") {
    usegmix::test::TempDir dir("pool");
    FloodFillSegmenter seg;
    auto pools = build_pool(toy_corpus({"blobs", "tiles"}, 2, 64), small_config(), seg, 4);
    SegmentPool& p = pools.at("blobs");
    for (std::size_t i = 0; i < p.entries.size(); i += 2) p.entries[i].weight += 3.0;

    save_pool(p, dir.path() / "blobs");
    check_same_pool(load_pool(dir.path() / "blobs"), p);

    const std::string manifest = slurp(dir.path() / "blobs" / "manifest.json");
    const std::string features = slurp(dir.path() / "blobs" / "features.bin");
    save_pool(p, dir.path() / "blobs");
    CHECK(slurp(dir.path() / "blobs" / "manifest.json") == manifest);
    CHECK(slurp(dir.path() / "blobs" / "features.bin") == features);
    // No temporary directories left behind.
    std::size_t n = 0;
    for ([[maybe_unused]] const auto& e : fs::directory_iterator(dir.path())) ++n;
    CHECK(n == 1);

    save_pool(pools.at("tiles"), dir.path() / "tiles");
    const auto all = load_pools(dir.path());
    CHECK(all.size() == 2);
    check_same_pool(all.at("tiles"), pools.at("tiles"));

    const auto j = nlohmann::json::parse(manifest);
    CHECK(j.at("version") == 1);
    CHECK(j.at("class_label") == "blobs");
    CHECK(j.at("dim") == p.dim());
    CHECK(j.at("entries").size() == p.entries.size());
    CHECK(fs::exists(dir.path() / "blobs" / "pca.bin"));
    CHECK(fs::exists(dir.path() / "blobs" / "masks" / (p.entries[0].anchor.segment_id + ".png")));
}

TEST_CASE("invalid pools are rejected") {
    usegmix::test::TempDir dir("badpool");
    SegmentPool empty;
    empty.class_label = "e";
    CHECK_THROWS_AS(save_pool(empty, dir.path() / "e"), Error);

    FloodFillSegmenter seg;
    const SegmentPool good = build_pool(toy_corpus({"tiles"}, 2, 48), small_config(), seg, 4).at("tiles");
    REQUIRE(good.entries.size() >= 2);

    SUBCASE("missing mask file") {
        save_pool(good, dir.path() / "p");
        const std::string id = good.entries[1].anchor.segment_id;
        fs::remove(dir.path() / "p" / "masks" / (id + ".png"));
        try {
            (void)load_pool(dir.path() / "p");
            FAIL("expected an error");
        } catch (const Error& e) {
            CHECK(std::string(e.what()).find(id + ".png") != std::string::npos);
        }
    }
    SUBCASE("duplicate segment id") {
        save_pool(good, dir.path() / "p");
        edit_manifest(dir.path() / "p", [](nlohmann::json& j) { j["entries"][1]["segment_id"] = j["entries"][0]["segment_id"]; });
        try {
            (void)load_pool(dir.path() / "p");
            FAIL("expected an error");
        } catch (const Error& e) {
            CHECK(std::string(e.what()).find("duplicate") != std::string::npos);
        }
    }
    SUBCASE("checksum mismatch") {
        save_pool(good, dir.path() / "p");
        std::string bytes = slurp(dir.path() / "p" / "features.bin");
        bytes[bytes.size() - 1] ^= 0x01;
        std::ofstream(dir.path() / "p" / "features.bin", std::ios::binary) << bytes;
        CHECK_THROWS_WITH_AS(load_pool(dir.path() / "p"), doctest::Contains("checksum"), Error);
    }
    SUBCASE("dimension mismatch") {
        save_pool(good, dir.path() / "p");
        edit_manifest(dir.path() / "p", [](nlohmann::json& j) { j["dim"] = j["dim"].get<int>() + 1; });
        CHECK_THROWS_AS(load_pool(dir.path() / "p"), DimensionError);
    }
    SUBCASE("weight below one") {
        save_pool(good, dir.path() / "p");
        edit_manifest(dir.path() / "p", [](nlohmann::json& j) { j["entries"][0]["weight"] = 0.5; });
        CHECK_THROWS_AS(load_pool(dir.path() / "p"), Error);
    }
    SUBCASE("mask path outside the pool") {
        save_pool(good, dir.path() / "p");
        edit_manifest(dir.path() / "p", [](nlohmann::json& j) { j["entries"][0]["mask"] = "../elsewhere.png"; });
        CHECK_THROWS_WITH_AS(load_pool(dir.path() / "p"), doctest::Contains("escapes"), Error);
    }
    SUBCASE("missing manifest") {
        CHECK_THROWS_AS(load_pool(dir.path() / "nothing"), IoError);
    }
}

TEST_CASE("empty corpus is an error") {
    FloodFillSegmenter seg;
    CHECK_THROWS_AS(build_pool(std::vector<CorpusImage>{}, small_config(), seg, 1), Error);
}
