#include <algorithm>
#include <cmath>
#include <limits>

#include "kernels_common.hpp"

namespace usegmix::kernels::omp {

void slic_assign(const LabImage& lab, std::span<const SlicCenter> centers, double window, double compactness,
                 std::span<std::int32_t> labels) {
    const double factor = (compactness / window) * (compactness / window);
    const int nbx = static_cast<int>((lab.width - 1) / window) + 1;
    const int nby = static_cast<int>((lab.height - 1) / window) + 1;
    auto bucket_of = [window](double v, int n) {
        return std::clamp(static_cast<int>(std::floor(v / window)), 0, n - 1);
    };
    // Centers bucketed on a grid of cell size `window`; kept in index order within a bucket.
    std::vector<std::vector<std::int32_t>> buckets(static_cast<std::size_t>(nbx) * nby);
    for (std::size_t k = 0; k < centers.size(); ++k) {
        const int bx = bucket_of(centers[k].x, nbx);
        const int by = bucket_of(centers[k].y, nby);
        buckets[static_cast<std::size_t>(by) * nbx + bx].push_back(static_cast<std::int32_t>(k));
    }

#pragma omp parallel for schedule(static)
    for (int y = 0; y < lab.height; ++y) {
        const int by = bucket_of(y, nby);
        for (int x = 0; x < lab.width; ++x) {
            const int bx = bucket_of(x, nbx);
            const std::size_t i = static_cast<std::size_t>(y) * lab.width + x;
            double best = std::numeric_limits<double>::infinity();
            std::int32_t best_k = -1;
            for (int qy = std::max(0, by - 2); qy <= std::min(nby - 1, by + 2); ++qy) {
                for (int qx = std::max(0, bx - 2); qx <= std::min(nbx - 1, bx + 2); ++qx) {
                    for (const std::int32_t k : buckets[static_cast<std::size_t>(qy) * nbx + qx]) {
                        const SlicCenter& c = centers[static_cast<std::size_t>(k)];
                        if (!detail::in_window(x, y, c, window)) continue;
                        const double d = detail::slic_distance(lab, i, x, y, c, factor);
                        if (d < best || (d == best && k < best_k)) {
                            best = d;
                            best_k = k;
                        }
                    }
                }
            }
            if (best_k >= 0) labels[i] = best_k;
        }
    }
}

void dilate(std::span<const std::uint8_t> in, int width, int height, int radius, std::span<std::uint8_t> out) {
    std::vector<std::uint8_t> horiz(in.size());
#pragma omp parallel for schedule(static)
    for (int y = 0; y < height; ++y) {
        const std::uint8_t* row = in.data() + static_cast<std::size_t>(y) * width;
        std::uint8_t* dst = horiz.data() + static_cast<std::size_t>(y) * width;
        // Distance to the most recent set pixel on the left, then on the right.
        int last = -radius - 1;
        for (int x = 0; x < width; ++x) {
            if (row[x]) last = x;
            dst[x] = (x - last) <= radius ? 1 : 0;
        }
        last = width + radius;
        for (int x = width - 1; x >= 0; --x) {
            if (row[x]) last = x;
            if (last - x <= radius) dst[x] = 1;
        }
    }
#pragma omp parallel for schedule(static)
    for (int y = 0; y < height; ++y) {
        std::uint8_t* dst = out.data() + static_cast<std::size_t>(y) * width;
        std::fill(dst, dst + width, std::uint8_t{0});
        for (int yy = std::max(0, y - radius); yy <= std::min(height - 1, y + radius); ++yy) {
            const std::uint8_t* src = horiz.data() + static_cast<std::size_t>(yy) * width;
            for (int x = 0; x < width; ++x) dst[x] |= src[x];
        }
    }
}

void laplacian_apply(const MaskedLaplacian& op, std::span<const double> x, std::span<double> y) {
    const auto n = static_cast<std::int64_t>(op.size());
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < n; ++i) {
        double acc = op.diag[i] * x[i];
        for (const std::int32_t j : op.neighbors[i]) {
            if (j >= 0) acc -= x[static_cast<std::size_t>(j)];
        }
        y[i] = acc;
    }
}

double dot(std::span<const double> a, std::span<const double> b) {
    constexpr std::size_t kChunk = 1024;
    const std::size_t n = a.size();
    const auto chunks = static_cast<std::int64_t>((n + kChunk - 1) / kChunk);
    std::vector<double> partial(static_cast<std::size_t>(chunks), 0.0);
#pragma omp parallel for schedule(static)
    for (std::int64_t c = 0; c < chunks; ++c) {
        const std::size_t lo = static_cast<std::size_t>(c) * kChunk;
        const std::size_t hi = std::min(n, lo + kChunk);
        double s = 0.0;
        for (std::size_t i = lo; i < hi; ++i) s += a[i] * b[i];
        partial[static_cast<std::size_t>(c)] = s;
    }
    double total = 0.0;
    for (const double p : partial) total += p;
    return total;
}

}  // namespace usegmix::kernels::omp
