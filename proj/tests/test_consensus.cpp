#include "doctest.h"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <tuple>

#include "support.hpp"
#include "usegmix/consensus.hpp"
#include "usegmix/error.hpp"

using namespace usegmix;
using usegmix::test::random_mask;
using usegmix::test::rect_mask;

namespace {

using Partition = std::set<std::set<std::size_t>>;

Partition as_partition(const std::vector<std::vector<std::size_t>>& clusters) {
    Partition p;
    for (const auto& c : clusters) p.insert(std::set<std::size_t>(c.begin(), c.end()));
    return p;
}

// Textbook agglomeration: merge the closest pair of clusters (single linkage)
// while that distance is within tol.
Partition agglomerate(std::span<const BitMask> masks, double tol) {
    std::vector<IdentityVector> ids;
    for (const auto& m : masks) ids.push_back(identity_vector(m));
    std::vector<std::set<std::size_t>> cl;
    for (std::size_t i = 0; i < masks.size(); ++i) cl.push_back({i});
    for (;;) {
        double best = INFINITY;
        std::size_t ba = 0, bb = 0;
        for (std::size_t a = 0; a < cl.size(); ++a) {
            for (std::size_t b = a + 1; b < cl.size(); ++b) {
                for (auto i : cl[a]) {
                    for (auto j : cl[b]) {
                        const double dx = ids[i].cx - ids[j].cx, dy = ids[i].cy - ids[j].cy, ds = ids[i].scnt - ids[j].scnt;
                        const double d = std::sqrt(dx * dx + dy * dy + ds * ds);
                        if (d < best) {
                            best = d;
                            ba = a;
                            bb = b;
                        }
                    }
                }
            }
        }
        if (cl.size() < 2 || best > tol) break;
        cl[ba].insert(cl[bb].begin(), cl[bb].end());
        cl.erase(cl.begin() + static_cast<std::ptrdiff_t>(bb));
    }
    return Partition(cl.begin(), cl.end());
}

// Equivalence classes by the greedy rule, then the maximum by
// (members, representative area, -representative index).
std::size_t anchor_oracle(std::span<const BitMask> masks, std::span<const std::size_t> cluster, double thr) {
    std::vector<std::size_t> reps;
    std::vector<std::size_t> owner(cluster.size());
    for (std::size_t k = 0; k < cluster.size(); ++k) {
        std::size_t r = 0;
        while (r < reps.size() && mask_iou(masks[reps[r]], masks[cluster[k]]) < thr) ++r;
        if (r == reps.size()) reps.push_back(cluster[k]);
        owner[k] = r;
    }
    std::vector<std::tuple<std::size_t, std::size_t, long>> keys;
    for (std::size_t r = 0; r < reps.size(); ++r) {
        const auto members = static_cast<std::size_t>(std::count(owner.begin(), owner.end(), r));
        keys.emplace_back(members, masks[reps[r]].count(), -static_cast<long>(reps[r]));
    }
    const auto it = std::max_element(keys.begin(), keys.end());
    return static_cast<std::size_t>(-std::get<2>(*it));
}

// Greedy dedup simulated directly on (area, index) pairs.
std::vector<std::size_t> dedup_oracle(const std::vector<BitMask>& masks, double thr) {
    std::vector<std::size_t> order(masks.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](auto a, auto b) {
        return std::make_tuple(-static_cast<long>(masks[a].count()), a) < std::make_tuple(-static_cast<long>(masks[b].count()), b);
    });
    std::vector<std::size_t> kept;
    for (auto i : order) {
        if (std::none_of(kept.begin(), kept.end(), [&](auto k) { return mask_iou(masks[i], masks[k]) >= thr; })) kept.push_back(i);
    }
    std::sort(kept.begin(), kept.end());
    return kept;
}

std::vector<AnchorSegment> wrap(const std::vector<BitMask>& masks) {
    std::vector<AnchorSegment> out;
    for (std::size_t i = 0; i < masks.size(); ++i) out.push_back({masks[i], "img", "c", "id" + std::to_string(i)});
    return out;
}

class FailingLeft final : public Segmenter {
public:
    explicit FailingLeft(double cut) : cut_(cut) {}
    BitMask segment(const ImageRGB& img, Point p) override {
        if (p.x < cut_) throw BackendError("refused");
        return floodfill_segment(img, p, FloodFillConfig{.max_frac = 1.0});
    }
    [[nodiscard]] bool thread_safe() const override { return true; }
    [[nodiscard]] std::string name() const override { return "failing-left"; }

private:
    double cut_;
};

ImageRGB two_halves() {
    ImageRGB img(64, 64);
    for (int y = 0; y < 64; ++y) {
        for (int x = 0; x < 64; ++x) {
            const std::uint8_t v = x < 32 ? 30 : 220;
            img.at(x, y, 0) = v;
            img.at(x, y, 1) = static_cast<std::uint8_t>(255 - v);
            img.at(x, y, 2) = 128;
        }
    }
    return img;
}

}  // namespace

TEST_CASE("identity_vector examples") {
    BitMask one(8, 8);
    one.set(3, 4);
    const auto a = identity_vector(one);
    CHECK(a.cx == 3.0);
    CHECK(a.cy == 4.0);
    CHECK(a.scnt == 1.0);

    const auto b = identity_vector(rect_mask(5, 5, 1, 1, 2, 2));
    CHECK(b.cx == 1.5);
    CHECK(b.cy == 1.5);
    CHECK(b.scnt == 2.0);
    CHECK_THROWS_AS(identity_vector(BitMask(3, 3)), Error);
}

TEST_CASE("identity_vector matches brute-force sums on 50-pixel masks") {
    for (std::uint64_t s = 0; s < 20; ++s) {
        BitMask m(30, 30);
        Rng rng(s);
        while (m.count() < 50) m.set(static_cast<int>(rng.index(30)), static_cast<int>(rng.index(30)));
        long double sx = 0, sy = 0;
        for (std::size_t i = 0; i < m.bits.size(); ++i) {
            if (!m.bits[i]) continue;
            sx += static_cast<long double>(i % 30);
            sy += static_cast<long double>(i / 30);
        }
        const auto v = identity_vector(m);
        CHECK(std::abs(v.cx - static_cast<double>(sx / 50)) <= 1e-12);
        CHECK(std::abs(v.cy - static_cast<double>(sy / 50)) <= 1e-12);
        CHECK(std::abs(v.scnt - std::sqrt(50.0)) <= 1e-12);
    }
}

TEST_CASE("identity_vector follows translations") {
    for (std::uint64_t s = 0; s < 20; ++s) {
        const BitMask m = random_mask(20, 20, 0.2, s);
        if (m.empty()) continue;
        BitMask shifted(40, 40), base(40, 40);
        const int dx = static_cast<int>(s % 7), dy = static_cast<int>(s % 5) + 3;
        for (int y = 0; y < 20; ++y) {
            for (int x = 0; x < 20; ++x) {
                if (!m.get(x, y)) continue;
                base.set(x, y);
                shifted.set(x + dx, y + dy);
            }
        }
        const auto a = identity_vector(base), b = identity_vector(shifted);
        CHECK(b.cx - a.cx == doctest::Approx(dx).epsilon(1e-12));
        CHECK(b.cy - a.cy == doctest::Approx(dy).epsilon(1e-12));
        CHECK(b.scnt == a.scnt);
    }
}

TEST_CASE("cluster_masks examples") {
    const BitMask m = rect_mask(32, 32, 3, 3, 10, 12);
    const std::vector<BitMask> same(15, m);
    const auto one = cluster_masks(same, ConsensusConfig{});
    REQUIRE(one.size() == 1);
    CHECK(one[0].size() == 15);

    const std::vector<BitMask> single{m};
    CHECK(cluster_masks(single, ConsensusConfig{}) == std::vector<std::vector<std::size_t>>{{0}});

    // Two groups of small blobs with centroids ~100x tol apart.
    ConsensusConfig cfg;
    cfg.cluster_tol = 0.5;
    std::vector<BitMask> groups;
    for (int i = 0; i < 4; ++i) groups.push_back(rect_mask(200, 200, 0, 0, 1, 1));
    for (int i = 0; i < 3; ++i) groups.push_back(rect_mask(200, 200, 50, 0, 51, 1));
    groups.push_back(rect_mask(200, 200, 0, 0, 1, 1));
    const auto two = cluster_masks(groups, cfg);
    CHECK(two.size() == 2);
    CHECK(as_partition(two) == agglomerate(groups, 0.5));
    CHECK_THROWS_AS(cluster_masks(std::vector<BitMask>{BitMask(4, 4, true), BitMask(5, 4, true)}, cfg), DimensionError);
}

TEST_CASE("cluster_masks equals exhaustive agglomeration and is a partition") {
    for (std::uint64_t s = 0; s < 60; ++s) {
        Rng rng(s);
        std::vector<BitMask> masks;
        const std::size_t n = 2 + rng.index(12);
        for (std::size_t i = 0; i < n; ++i) {
            const int x0 = static_cast<int>(rng.index(30)), y0 = static_cast<int>(rng.index(30));
            masks.push_back(rect_mask(40, 40, x0, y0, x0 + static_cast<int>(rng.index(9)), y0 + static_cast<int>(rng.index(9))));
        }
        ConsensusConfig cfg;
        cfg.cluster_tol = 1.0 + 8.0 * rng.uniform();
        const auto clusters = cluster_masks(masks, cfg);
        std::vector<int> seen(n, 0);
        for (const auto& c : clusters) {
            for (auto i : c) ++seen[i];
        }
        CHECK(std::all_of(seen.begin(), seen.end(), [](int v) { return v == 1; }));
        CHECK(as_partition(clusters) == agglomerate(masks, *cfg.cluster_tol));
    }
}

TEST_CASE("select_anchor examples") {
    const BitMask a = rect_mask(20, 20, 0, 0, 9, 9), b = rect_mask(20, 20, 10, 10, 19, 19);
    const std::vector<BitMask> same(5, a);
    const std::vector<std::size_t> all5{0, 1, 2, 3, 4};
    CHECK(select_anchor(same, all5, ConsensusConfig{}) == a);

    const std::vector<BitMask> aab{a, a, b};
    const std::vector<std::size_t> all3{0, 1, 2};
    CHECK(select_anchor(aab, all3, ConsensusConfig{}) == a);
    // Tie on members: larger area wins, then lower index.
    const BitMask big = rect_mask(20, 20, 0, 0, 12, 12);
    const std::vector<BitMask> tie{a, big};
    CHECK(select_anchor_index(tie, std::vector<std::size_t>{0, 1}, ConsensusConfig{}) == 1);
    const std::vector<BitMask> twins{a, b};
    CHECK(select_anchor_index(twins, std::vector<std::size_t>{1, 0}, ConsensusConfig{}) == 0);
}

TEST_CASE("select_anchor equals exhaustive class enumeration and stays in the cluster") {
    for (std::uint64_t s = 0; s < 100; ++s) {
        Rng rng(s);
        std::vector<BitMask> masks;
        // Few distinct bases plus small perturbations so classes have several members.
        std::vector<BitMask> bases;
        for (int i = 0; i < 3; ++i) {
            const int x0 = static_cast<int>(rng.index(10)), y0 = static_cast<int>(rng.index(10));
            bases.push_back(rect_mask(24, 24, x0, y0, x0 + 8 + static_cast<int>(rng.index(5)), y0 + 8));
        }
        for (int i = 0; i < 10; ++i) {
            BitMask m = bases[rng.index(3)];
            if (rng.uniform() < 0.5) m.set(static_cast<int>(rng.index(24)), static_cast<int>(rng.index(24)));
            masks.push_back(m);
        }
        std::vector<std::size_t> cluster;
        for (std::size_t i = 0; i < masks.size(); ++i) {
            if (rng.uniform() < 0.8) cluster.push_back(i);
        }
        if (cluster.empty()) cluster.push_back(0);
        ConsensusConfig cfg;
        cfg.freq_iou = 0.9;
        const std::size_t got = select_anchor_index(masks, cluster, cfg);
        CHECK(std::find(cluster.begin(), cluster.end(), got) != cluster.end());
        CHECK(got == anchor_oracle(masks, cluster, cfg.freq_iou));
    }
    CHECK_THROWS(select_anchor_index(std::vector<BitMask>{BitMask(2, 2, true)}, std::vector<std::size_t>{}, ConsensusConfig{}));
}

TEST_CASE("largest_cluster tie-breaks") {
    const BitMask small = rect_mask(20, 20, 0, 0, 1, 1), large = rect_mask(20, 20, 10, 10, 15, 15);
    const std::vector<BitMask> masks{small, small, large, large, large};
    CHECK(largest_cluster(masks, {{0, 1}, {2, 3, 4}}) == 1);
    CHECK(largest_cluster(masks, {{0, 1}, {2, 3}, {4}}) == 1);
    CHECK(largest_cluster(masks, {{2}, {3}}) == 0);
}

TEST_CASE("dedup_anchors examples") {
    const BitMask a = rect_mask(20, 20, 0, 0, 9, 9);
    CHECK(dedup_anchors(wrap({a, a}), 0.8).size() == 1);
    const BitMask b = rect_mask(20, 20, 10, 10, 19, 19);
    CHECK(dedup_anchors(wrap({a, b}), 0.8).size() == 2);

    // Chain: A (100 px) ⊃ B (90) ⊃ C (81): IoU(A,B)=0.9, IoU(B,C)=0.9, IoU(A,C)=0.81 < 0.85.
    const BitMask A = rect_mask(20, 20, 0, 0, 9, 9);
    const BitMask B = rect_mask(20, 20, 0, 0, 8, 9);
    const BitMask C = rect_mask(20, 20, 0, 0, 8, 8);
    REQUIRE(mask_iou(A, B) >= 0.85);
    REQUIRE(mask_iou(B, C) >= 0.85);
    REQUIRE(mask_iou(A, C) < 0.85);
    const auto kept = dedup_anchors(wrap({C, A, B}), 0.85);
    REQUIRE(kept.size() == 2);
    CHECK(kept[0].mask == C);
    CHECK(kept[1].mask == A);
    CHECK(dedup_oracle({C, A, B}, 0.85) == std::vector<std::size_t>{0, 1});
}

TEST_CASE("dedup_anchors matches simulation and is idempotent") {
    for (std::uint64_t s = 0; s < 100; ++s) {
        Rng rng(s);
        std::vector<BitMask> masks;
        const std::size_t n = 1 + rng.index(10);
        for (std::size_t i = 0; i < n; ++i) {
            const int x0 = static_cast<int>(rng.index(6)), y0 = static_cast<int>(rng.index(6));
            masks.push_back(rect_mask(16, 16, x0, y0, x0 + 6 + static_cast<int>(rng.index(4)), y0 + 6 + static_cast<int>(rng.index(4))));
        }
        const double thr = 0.5 + 0.4 * rng.uniform();
        const auto once = dedup_anchors(wrap(masks), thr);
        const auto want = dedup_oracle(masks, thr);
        REQUIRE(once.size() == want.size());
        for (std::size_t i = 0; i < want.size(); ++i) CHECK(once[i].segment_id == "id" + std::to_string(want[i]));
        const auto twice = dedup_anchors(once, thr);
        REQUIRE(twice.size() == once.size());
        for (std::size_t i = 0; i < once.size(); ++i) CHECK(twice[i].segment_id == once[i].segment_id);
    }
}

TEST_CASE("anchors_for_image: uniform image gives one full anchor") {
    const ImageRGB img = usegmix::test::uniform_image(32, 32, 10, 200, 90);
    const SuperpixelMap sp = slic(img, SlicConfig{.n_s = 4}, 0);
    FloodFillSegmenter full(FloodFillConfig{.max_frac = 1.0});
    const auto a = anchors_for_image(img, sp, full, ConsensusConfig{}, 1, "u", "c");
    REQUIRE(a.size() == 1);
    CHECK(a[0].mask == BitMask(32, 32, true));
    CHECK(a[0].source_image == "u");
    CHECK(a[0].class_label == "c");

    // With the default 0.9 cap two truncated fills may overlap slightly below
    // the dedup threshold, so only the per-anchor coverage is fixed.
    FloodFillSegmenter capped;
    for (const auto& anchor : anchors_for_image(img, sp, capped, ConsensusConfig{}, 1, "u")) {
        CHECK(anchor.mask.count() == 921);
    }
}

TEST_CASE("anchors_for_image: two halves give two anchors") {
    const ImageRGB img = two_halves();
    const SuperpixelMap sp = slic(img, SlicConfig{.n_s = 2}, 0);
    FloodFillSegmenter seg;
    const auto a = anchors_for_image(img, sp, seg, ConsensusConfig{}, 3, "h");
    REQUIRE(a.size() == 2);
    const BitMask left = rect_mask(64, 64, 0, 0, 31, 63), right = rect_mask(64, 64, 32, 0, 63, 63);
    CHECK(((a[0].mask == left && a[1].mask == right) || (a[0].mask == right && a[1].mask == left)));
    CHECK(a[0].segment_id != a[1].segment_id);
}

TEST_CASE("anchors_for_image is deterministic and thread-count independent") {
    const ImageRGB img = usegmix::test::random_image(8, 8, 5);
    ImageRGB big(48, 48);
    for (int y = 0; y < 48; ++y) {
        for (int x = 0; x < 48; ++x) {
            for (int c = 0; c < 3; ++c) big.at(x, y, c) = img.at(x / 6, y / 6, c) / 32 * 32;
        }
    }
    const SuperpixelMap sp = slic(big, SlicConfig{.n_s = 12}, 0);
    FloodFillSegmenter seg(FloodFillConfig{.color_tol = 40});
    const int saved = omp_get_max_threads();
    omp_set_num_threads(1);
    const auto ref = anchors_for_image(big, sp, seg, ConsensusConfig{.k = 7}, 9, "r");
    for (int t : {2, 4}) {
        omp_set_num_threads(t);
        const auto again = anchors_for_image(big, sp, seg, ConsensusConfig{.k = 7}, 9, "r");
        REQUIRE(again.size() == ref.size());
        for (std::size_t i = 0; i < ref.size(); ++i) {
            CHECK(again[i].mask == ref[i].mask);
            CHECK(again[i].segment_id == ref[i].segment_id);
        }
    }
    omp_set_num_threads(saved);
}

TEST_CASE("anchors_for_image failure policy") {
    const ImageRGB img = two_halves();
    const SuperpixelMap sp = slic(img, SlicConfig{.n_s = 2}, 0);
    FailingLeft left_fails(32.0);
    const auto a = anchors_for_image(img, sp, left_fails, ConsensusConfig{}, 3, "h");
    REQUIRE(a.size() == 1);
    CHECK(a[0].mask == rect_mask(64, 64, 32, 0, 63, 63));

    FailingLeft all_fail(1000.0);
    try {
        (void)anchors_for_image(img, sp, all_fail, ConsensusConfig{}, 3, "h");
        FAIL("expected no anchors");
    } catch (const Error& e) {
        CHECK(std::string(e.what()).find("no anchors") != std::string::npos);
    }
}

TEST_CASE("min_area_frac drops small anchors") {
    ImageRGB img = usegmix::test::uniform_image(40, 40, 0, 0, 0);
    for (int y = 0; y < 3; ++y) {
        for (int x = 0; x < 3; ++x) img.at(x, y, 0) = 255;
    }
    const SuperpixelMap sp{40, 40, std::vector<std::int32_t>(1600, 1), 2};
    SuperpixelMap split = sp;
    for (int y = 0; y < 3; ++y) {
        for (int x = 0; x < 3; ++x) split.labels[static_cast<std::size_t>(y) * 40 + x] = 0;
    }
    FloodFillSegmenter seg(FloodFillConfig{.max_frac = 1.0});
    CHECK(anchors_for_image(img, split, seg, ConsensusConfig{}, 1, "m").size() == 2);
    CHECK(anchors_for_image(img, split, seg, ConsensusConfig{.min_area_frac = 0.01}, 1, "m").size() == 1);
}
