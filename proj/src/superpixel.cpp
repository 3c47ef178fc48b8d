#include "usegmix/superpixel.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <queue>
#include <set>
#include <string>

#include "usegmix/error.hpp"

namespace usegmix {

namespace {

double srgb_to_linear(double c) {
    c /= 255.0;
    return c <= 0.04045 ? c / 12.92 : std::pow((c + 0.055) / 1.055, 2.4);
}

double lab_f(double t) {
    constexpr double kEps = 216.0 / 24389.0;
    constexpr double kKappa = 24389.0 / 27.0;
    return t > kEps ? std::cbrt(t) : (kKappa * t + 16.0) / 116.0;
}

double gradient_at(const kernels::LabImage& lab, int x, int y) {
    const int w = lab.width;
    const int h = lab.height;
    auto idx = [w](int xx, int yy) { return static_cast<std::size_t>(yy) * w + xx; };
    const std::size_t l = idx(std::max(x - 1, 0), y);
    const std::size_t r = idx(std::min(x + 1, w - 1), y);
    const std::size_t u = idx(x, std::max(y - 1, 0));
    const std::size_t d = idx(x, std::min(y + 1, h - 1));
    auto sq = [](double v) { return v * v; };
    return sq(lab.l[r] - lab.l[l]) + sq(lab.a[r] - lab.a[l]) + sq(lab.b[r] - lab.b[l]) + sq(lab.l[d] - lab.l[u]) +
           sq(lab.a[d] - lab.a[u]) + sq(lab.b[d] - lab.b[u]);
}

std::vector<kernels::SlicCenter> initial_centers(const kernels::LabImage& lab, int nx, int ny) {
    const double cell_w = static_cast<double>(lab.width) / nx;
    const double cell_h = static_cast<double>(lab.height) / ny;
    std::vector<kernels::SlicCenter> centers;
    centers.reserve(static_cast<std::size_t>(nx) * ny);
    for (int j = 0; j < ny; ++j) {
        for (int i = 0; i < nx; ++i) {
            const int cx = std::min(lab.width - 1, static_cast<int>((i + 0.5) * cell_w));
            const int cy = std::min(lab.height - 1, static_cast<int>((j + 0.5) * cell_h));
            int bx = cx;
            int by = cy;
            double best = gradient_at(lab, cx, cy);
            for (int dy = -1; dy <= 1; ++dy) {
                for (int dx = -1; dx <= 1; ++dx) {
                    const int x = cx + dx;
                    const int y = cy + dy;
                    if (x < 0 || y < 0 || x >= lab.width || y >= lab.height) continue;
                    const double g = gradient_at(lab, x, y);
                    if (g < best) {
                        best = g;
                        bx = x;
                        by = y;
                    }
                }
            }
            const std::size_t k = static_cast<std::size_t>(by) * lab.width + bx;
            centers.push_back({lab.l[k], lab.a[k], lab.b[k], static_cast<double>(bx), static_cast<double>(by)});
        }
    }
    return centers;
}

// Mean update. Sums are formed per fixed block of rows and combined in block
// order, so the result is independent of the thread count.
void update_centers(const kernels::LabImage& lab, std::span<const std::int32_t> labels,
                    std::vector<kernels::SlicCenter>& centers) {
    constexpr int kRowsPerBlock = 16;
    const std::size_t k = centers.size();
    const int blocks = (lab.height + kRowsPerBlock - 1) / kRowsPerBlock;
    // 6 accumulators per center: l, a, b, x, y, count.
    std::vector<double> partial(static_cast<std::size_t>(blocks) * k * 6, 0.0);
#pragma omp parallel for schedule(static)
    for (int blk = 0; blk < blocks; ++blk) {
        double* acc = partial.data() + static_cast<std::size_t>(blk) * k * 6;
        const int y_end = std::min(lab.height, (blk + 1) * kRowsPerBlock);
        for (int y = blk * kRowsPerBlock; y < y_end; ++y) {
            for (int x = 0; x < lab.width; ++x) {
                const std::size_t i = static_cast<std::size_t>(y) * lab.width + x;
                const std::int32_t lbl = labels[i];
                if (lbl < 0) continue;
                double* a = acc + static_cast<std::size_t>(lbl) * 6;
                a[0] += lab.l[i];
                a[1] += lab.a[i];
                a[2] += lab.b[i];
                a[3] += x;
                a[4] += y;
                a[5] += 1.0;
            }
        }
    }
    for (std::size_t c = 0; c < k; ++c) {
        double s[6] = {};
        for (int blk = 0; blk < blocks; ++blk) {
            const double* a = partial.data() + (static_cast<std::size_t>(blk) * k + c) * 6;
            for (int q = 0; q < 6; ++q) s[q] += a[q];
        }
        if (s[5] == 0.0) continue;
        centers[c] = {s[0] / s[5], s[1] / s[5], s[2] / s[5], s[3] / s[5], s[4] / s[5]};
    }
}

struct ComponentGraph {
    std::vector<std::int32_t> comp;  // per pixel
    std::vector<std::size_t> size;
    std::vector<bool> unlabeled;
    std::vector<std::set<std::int32_t>> adjacency;
};

ComponentGraph label_components(int w, int h, std::span<const std::int32_t> labels) {
    ComponentGraph g;
    g.comp.assign(labels.size(), -1);
    std::queue<std::size_t> q;
    for (std::size_t start = 0; start < labels.size(); ++start) {
        if (g.comp[start] >= 0) continue;
        const auto id = static_cast<std::int32_t>(g.size.size());
        const std::int32_t lbl = labels[start];
        std::size_t n = 0;
        g.comp[start] = id;
        q.push(start);
        while (!q.empty()) {
            const std::size_t i = q.front();
            q.pop();
            ++n;
            const int x = static_cast<int>(i % w);
            const int y = static_cast<int>(i / w);
            const int nxs[4] = {x - 1, x + 1, x, x};
            const int nys[4] = {y, y, y - 1, y + 1};
            for (int t = 0; t < 4; ++t) {
                if (nxs[t] < 0 || nys[t] < 0 || nxs[t] >= w || nys[t] >= h) continue;
                const std::size_t j = static_cast<std::size_t>(nys[t]) * w + nxs[t];
                if (g.comp[j] < 0 && labels[j] == lbl) {
                    g.comp[j] = id;
                    q.push(j);
                }
            }
        }
        g.size.push_back(n);
        g.unlabeled.push_back(lbl < 0);
    }
    g.adjacency.resize(g.size.size());
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const std::int32_t a = g.comp[static_cast<std::size_t>(y) * w + x];
            if (x + 1 < w) {
                const std::int32_t b = g.comp[static_cast<std::size_t>(y) * w + x + 1];
                if (a != b) {
                    g.adjacency[a].insert(b);
                    g.adjacency[b].insert(a);
                }
            }
            if (y + 1 < h) {
                const std::int32_t b = g.comp[static_cast<std::size_t>(y + 1) * w + x];
                if (a != b) {
                    g.adjacency[a].insert(b);
                    g.adjacency[b].insert(a);
                }
            }
        }
    }
    return g;
}

class GroupMerger {
public:
    explicit GroupMerger(ComponentGraph& g) : g_(g), parent_(g.size.size()), key_(g.size.size()) {
        std::iota(parent_.begin(), parent_.end(), 0);
        std::iota(key_.begin(), key_.end(), 0);
        groups_ = g.size.size();
    }

    std::int32_t find(std::int32_t x) {
        while (parent_[x] != x) {
            parent_[x] = parent_[parent_[x]];
            x = parent_[x];
        }
        return x;
    }

    std::size_t size(std::int32_t root) const { return g_.size[root]; }
    bool unlabeled(std::int32_t root) const { return g_.unlabeled[root]; }
    std::size_t groups() const { return groups_; }

    /// Largest adjacent group (ties: smallest key); -1 if isolated.
    std::int32_t largest_neighbor(std::int32_t root) {
        std::int32_t best = -1;
        std::set<std::int32_t> resolved;
        for (const std::int32_t n : g_.adjacency[root]) {
            const std::int32_t r = find(n);
            if (r != root) resolved.insert(r);
        }
        g_.adjacency[root] = resolved;
        for (const std::int32_t r : resolved) {
            if (best < 0 || g_.size[r] > g_.size[best] || (g_.size[r] == g_.size[best] && key_[r] < key_[best])) {
                best = r;
            }
        }
        return best;
    }

    void merge_into(std::int32_t from, std::int32_t into) {
        parent_[from] = into;
        g_.size[into] += g_.size[from];
        g_.unlabeled[into] = g_.unlabeled[into] && g_.unlabeled[from];
        key_[into] = std::min(key_[into], key_[from]);
        g_.adjacency[into].insert(g_.adjacency[from].begin(), g_.adjacency[from].end());
        g_.adjacency[from].clear();
        --groups_;
    }

    std::int32_t key(std::int32_t root) const { return key_[root]; }

private:
    ComponentGraph& g_;
    std::vector<std::int32_t> parent_;
    std::vector<std::int32_t> key_;
    std::size_t groups_ = 0;
};

int enforce_connectivity(int w, int h, int n_s, double min_region_frac, std::vector<std::int32_t>& labels) {
    ComponentGraph g = label_components(w, h, labels);
    const std::size_t n_comp = g.size.size();
    const double min_size = min_region_frac * (static_cast<double>(w) * h / n_s);

    std::vector<std::int32_t> order(n_comp);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::int32_t a, std::int32_t b) { return g.size[a] < g.size[b]; });

    GroupMerger merger(g);
    for (const std::int32_t c : order) {
        const std::int32_t root = merger.find(c);
        if (static_cast<double>(merger.size(root)) >= min_size && !merger.unlabeled(root)) continue;
        const std::int32_t into = merger.largest_neighbor(root);
        if (into >= 0) merger.merge_into(root, into);
    }

    const auto cap = static_cast<std::size_t>(2 * n_s);
    while (merger.groups() > cap) {
        std::int32_t smallest = -1;
        for (std::size_t c = 0; c < n_comp; ++c) {
            const auto r = static_cast<std::int32_t>(c);
            if (merger.find(r) != r) continue;
            if (smallest < 0 || merger.size(r) < merger.size(smallest) ||
                (merger.size(r) == merger.size(smallest) && merger.key(r) < merger.key(smallest))) {
                smallest = r;
            }
        }
        const std::int32_t into = merger.largest_neighbor(smallest);
        if (into < 0) break;
        merger.merge_into(smallest, into);
    }

    // Final labels in scan order of first appearance.
    std::vector<std::int32_t> relabel(n_comp, -1);
    std::int32_t next = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const std::int32_t r = merger.find(g.comp[i]);
        if (relabel[r] < 0) relabel[r] = next++;
        labels[i] = relabel[r];
    }
    return next;
}

}  // namespace

BitMask SuperpixelMap::region_mask(int lbl) const {
    BitMask m(width, height);
    for (std::size_t i = 0; i < labels.size(); ++i) m.bits[i] = labels[i] == lbl ? 1 : 0;
    return m;
}

kernels::LabImage to_lab(const ImageRGB& img) {
    kernels::LabImage lab;
    lab.width = img.width;
    lab.height = img.height;
    const std::size_t n = img.pixel_count();
    lab.l.resize(n);
    lab.a.resize(n);
    lab.b.resize(n);
    // D65 reference white.
    constexpr double kXn = 0.95047;
    constexpr double kYn = 1.0;
    constexpr double kZn = 1.08883;
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < static_cast<std::int64_t>(n); ++i) {
        const double r = srgb_to_linear(img.data[i * 3]);
        const double g = srgb_to_linear(img.data[i * 3 + 1]);
        const double b = srgb_to_linear(img.data[i * 3 + 2]);
        const double x = 0.4124564 * r + 0.3575761 * g + 0.1804375 * b;
        const double y = 0.2126729 * r + 0.7151522 * g + 0.0721750 * b;
        const double z = 0.0193339 * r + 0.1191920 * g + 0.9503041 * b;
        const double fx = lab_f(x / kXn);
        const double fy = lab_f(y / kYn);
        const double fz = lab_f(z / kZn);
        lab.l[i] = 116.0 * fy - 16.0;
        lab.a[i] = 500.0 * (fx - fy);
        lab.b[i] = 200.0 * (fy - fz);
    }
    return lab;
}

std::pair<int, int> slic_grid(int width, int height, int n_s) {
    // Closest product to n_s, then the most square cells, then more columns.
    int best_nx = 1;
    int best_ny = n_s;
    double best_err = 1e300;
    double best_aspect = 1e300;
    for (int nx = 1; nx <= n_s; ++nx) {
        const int ny = std::max(1, static_cast<int>(std::lround(static_cast<double>(n_s) / nx)));
        if (nx > width || ny > height) continue;
        const double err = std::abs(nx * ny - n_s);
        const double cw = static_cast<double>(width) / nx;
        const double ch = static_cast<double>(height) / ny;
        const double aspect = std::max(cw, ch) / std::min(cw, ch);
        if (err < best_err || (err == best_err && aspect <= best_aspect)) {
            best_err = err;
            best_aspect = aspect;
            best_nx = nx;
            best_ny = ny;
        }
    }
    return {best_nx, std::min(best_ny, height)};
}

SuperpixelMap slic(const ImageRGB& img, const SlicConfig& cfg, std::uint64_t /*seed*/) {
    if (cfg.n_s < 1) throw Error("slic: n_s must be >= 1");
    if (!(cfg.compactness > 0.0)) throw Error("slic: compactness must be > 0");
    if (cfg.max_iters < 1) throw Error("slic: max_iters must be >= 1");
    if (img.pixel_count() < static_cast<std::size_t>(cfg.n_s)) {
        throw Error("slic: image has " + std::to_string(img.pixel_count()) + " pixels, fewer than n_s=" +
                    std::to_string(cfg.n_s));
    }

    const kernels::LabImage lab = to_lab(img);
    const auto [nx, ny] = slic_grid(img.width, img.height, cfg.n_s);
    const double window = std::max(static_cast<double>(img.width) / nx, static_cast<double>(img.height) / ny);
    std::vector<kernels::SlicCenter> centers = initial_centers(lab, nx, ny);

    SuperpixelMap map;
    map.width = img.width;
    map.height = img.height;
    map.labels.assign(img.pixel_count(), -1);
    for (int it = 0; it < cfg.max_iters; ++it) {
        kernels::omp::slic_assign(lab, centers, window, cfg.compactness, map.labels);
        update_centers(lab, map.labels, centers);
    }
    map.n_regions = enforce_connectivity(img.width, img.height, cfg.n_s, cfg.min_region_frac, map.labels);
    return map;
}

Point sample_point_in_region(const SuperpixelMap& map, int label, Rng& rng) {
    if (label < 0 || label >= map.n_regions) {
        throw Error("sample_point_in_region: invalid label " + std::to_string(label));
    }
    std::vector<std::size_t> pixels;
    for (std::size_t i = 0; i < map.labels.size(); ++i) {
        if (map.labels[i] == label) pixels.push_back(i);
    }
    if (pixels.empty()) throw Error("sample_point_in_region: region " + std::to_string(label) + " is empty");
    const std::size_t i = pixels[rng.index(pixels.size())];
    return {static_cast<double>(i % map.width), static_cast<double>(i / map.width)};
}

}  // namespace usegmix
