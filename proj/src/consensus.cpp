#include "usegmix/consensus.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "usegmix/error.hpp"
#include "usegmix/rng.hpp"

namespace usegmix {

double ConsensusConfig::cluster_tol_for(int width, int height) const {
    if (cluster_tol) return *cluster_tol;
    return 0.05 * std::sqrt(static_cast<double>(width) * height);
}

IdentityVector identity_vector(const BitMask& m) {
    double sx = 0.0;
    double sy = 0.0;
    std::size_t n = 0;
    for (int y = 0; y < m.height; ++y) {
        for (int x = 0; x < m.width; ++x) {
            if (m.get(x, y)) {
                sx += x;
                sy += y;
                ++n;
            }
        }
    }
    if (n == 0) throw Error("identity_vector: mask is empty");
    const auto cnt = static_cast<double>(n);
    return {sx / cnt, sy / cnt, std::sqrt(cnt)};
}

double identity_distance(const IdentityVector& a, const IdentityVector& b) {
    const double dx = a.cx - b.cx;
    const double dy = a.cy - b.cy;
    const double ds = a.scnt - b.scnt;
    return std::sqrt(dx * dx + dy * dy + ds * ds);
}

std::vector<std::vector<std::size_t>> cluster_masks(std::span<const BitMask> masks, const ConsensusConfig& cfg) {
    if (masks.empty()) throw Error("cluster_masks: no masks");
    for (const auto& m : masks) {
        if (!m.same_shape(masks.front())) throw DimensionError("cluster_masks: mask dimensions differ");
    }
    const double tol = cfg.cluster_tol_for(masks.front().width, masks.front().height);
    std::vector<IdentityVector> ids;
    ids.reserve(masks.size());
    for (const auto& m : masks) ids.push_back(identity_vector(m));

    std::vector<std::size_t> parent(masks.size());
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&](std::size_t x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    };
    for (std::size_t i = 0; i < masks.size(); ++i) {
        for (std::size_t j = i + 1; j < masks.size(); ++j) {
            if (identity_distance(ids[i], ids[j]) <= tol) {
                const std::size_t a = find(i);
                const std::size_t b = find(j);
                if (a != b) parent[std::max(a, b)] = std::min(a, b);
            }
        }
    }
    std::vector<std::vector<std::size_t>> clusters;
    std::vector<std::ptrdiff_t> slot(masks.size(), -1);
    for (std::size_t i = 0; i < masks.size(); ++i) {
        const std::size_t r = find(i);
        if (slot[r] < 0) {
            slot[r] = static_cast<std::ptrdiff_t>(clusters.size());
            clusters.emplace_back();
        }
        clusters[static_cast<std::size_t>(slot[r])].push_back(i);
    }
    return clusters;
}

std::size_t select_anchor_index(std::span<const BitMask> masks, std::span<const std::size_t> cluster,
                                const ConsensusConfig& cfg) {
    if (cluster.empty()) throw Error("select_anchor: empty cluster");
    struct EqClass {
        std::size_t rep;
        std::size_t members;
    };
    std::vector<EqClass> classes;
    for (const std::size_t idx : cluster) {
        bool placed = false;
        for (auto& c : classes) {
            if (mask_iou(masks[c.rep], masks[idx]) >= cfg.freq_iou) {
                ++c.members;
                placed = true;
                break;
            }
        }
        if (!placed) classes.push_back({idx, 1});
    }
    const EqClass* best = &classes.front();
    std::size_t best_area = masks[best->rep].count();
    for (const auto& c : classes) {
        const std::size_t area = masks[c.rep].count();
        if (c.members > best->members || (c.members == best->members && area > best_area) ||
            (c.members == best->members && area == best_area && c.rep < best->rep)) {
            best = &c;
            best_area = area;
        }
    }
    return best->rep;
}

BitMask select_anchor(std::span<const BitMask> masks, std::span<const std::size_t> cluster, const ConsensusConfig& cfg) {
    return masks[select_anchor_index(masks, cluster, cfg)];
}

std::size_t largest_cluster(std::span<const BitMask> masks, const std::vector<std::vector<std::size_t>>& clusters) {
    std::size_t best = 0;
    double best_mean = -1.0;
    for (std::size_t c = 0; c < clusters.size(); ++c) {
        double area = 0.0;
        for (const std::size_t i : clusters[c]) area += static_cast<double>(masks[i].count());
        const double mean = area / static_cast<double>(clusters[c].size());
        if (best_mean < 0.0 || clusters[c].size() > clusters[best].size() ||
            (clusters[c].size() == clusters[best].size() && mean > best_mean)) {
            best = c;
            best_mean = mean;
        }
    }
    return best;
}

std::vector<AnchorSegment> anchors_for_image(const ImageRGB& img, const SuperpixelMap& sp, Segmenter& backend,
                                             const ConsensusConfig& cfg, std::uint64_t seed,
                                             const std::string& image_id, const std::string& class_label) {
    if (sp.width != img.width || sp.height != img.height) {
        throw DimensionError("anchors_for_image: superpixel map does not match image");
    }
    if (cfg.k < 1) throw Error("anchors_for_image: k must be >= 1");

    const std::uint64_t image_seed = derive_seed(seed, image_id);
    std::vector<std::optional<BitMask>> per_region(static_cast<std::size_t>(sp.n_regions));

#pragma omp parallel for schedule(dynamic) if (backend.thread_safe())
    for (int region = 0; region < sp.n_regions; ++region) {
        Rng rng(derive_seed(image_seed, static_cast<std::uint64_t>(region)));
        std::vector<BitMask> masks;
        int failures = 0;
        for (int j = 0; j < cfg.k; ++j) {
            const Point p = sample_point_in_region(sp, region, rng);
            try {
                masks.push_back(segment_at_point(backend, img, p));
            } catch (const Error&) {
                ++failures;
            }
        }
        if (masks.empty() || 2 * failures >= cfg.k) continue;
        const auto clusters = cluster_masks(masks, cfg);
        const auto& chosen = clusters[largest_cluster(masks, clusters)];
        per_region[static_cast<std::size_t>(region)] = masks[select_anchor_index(masks, chosen, cfg)];
    }

    const double min_area = cfg.min_area_frac * static_cast<double>(img.pixel_count());
    std::vector<AnchorSegment> anchors;
    for (std::size_t region = 0; region < per_region.size(); ++region) {
        if (!per_region[region]) continue;
        if (cfg.min_area_frac > 0.0 && static_cast<double>(per_region[region]->count()) < min_area) continue;
        char suffix[32];
        std::snprintf(suffix, sizeof(suffix), "-a%03zu", region);
        anchors.push_back({std::move(*per_region[region]), image_id, class_label, image_id + suffix});
    }
    if (anchors.empty()) throw Error("no anchors for image '" + image_id + "'");
    return dedup_anchors(std::move(anchors), cfg.dedup_iou);
}

std::vector<AnchorSegment> dedup_anchors(std::vector<AnchorSegment> anchors, double dedup_iou) {
    std::vector<std::size_t> areas(anchors.size());
    for (std::size_t i = 0; i < anchors.size(); ++i) areas[i] = anchors[i].mask.count();
    std::vector<std::size_t> order(anchors.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return areas[a] > areas[b]; });

    std::vector<std::size_t> kept;
    for (const std::size_t i : order) {
        bool duplicate = false;
        for (const std::size_t k : kept) {
            if (mask_iou(anchors[i].mask, anchors[k].mask) >= dedup_iou) {
                duplicate = true;
                break;
            }
        }
        if (!duplicate) kept.push_back(i);
    }
    std::sort(kept.begin(), kept.end());
    std::vector<AnchorSegment> out;
    out.reserve(kept.size());
    for (const std::size_t i : kept) out.push_back(std::move(anchors[i]));
    return out;
}

}  // namespace usegmix
