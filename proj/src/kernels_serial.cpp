#include <algorithm>
#include <cmath>
#include <limits>

#include "kernels_common.hpp"

namespace usegmix::kernels::serial {

void slic_assign(const LabImage& lab, std::span<const SlicCenter> centers, double window, double compactness,
                 std::span<std::int32_t> labels) {
    const double factor = (compactness / window) * (compactness / window);
    std::vector<double> dist(labels.size(), std::numeric_limits<double>::infinity());
    for (std::size_t k = 0; k < centers.size(); ++k) {
        const SlicCenter& c = centers[k];
        const int xa = std::max(0, static_cast<int>(std::floor(c.x - window)) - 1);
        const int xb = std::min(lab.width - 1, static_cast<int>(std::ceil(c.x + window)) + 1);
        const int ya = std::max(0, static_cast<int>(std::floor(c.y - window)) - 1);
        const int yb = std::min(lab.height - 1, static_cast<int>(std::ceil(c.y + window)) + 1);
        for (int y = ya; y <= yb; ++y) {
            for (int x = xa; x <= xb; ++x) {
                if (!detail::in_window(x, y, c, window)) continue;
                const std::size_t i = static_cast<std::size_t>(y) * lab.width + x;
                const double d = detail::slic_distance(lab, i, x, y, c, factor);
                if (d < dist[i]) {
                    dist[i] = d;
                    labels[i] = static_cast<std::int32_t>(k);
                }
            }
        }
    }
}

void dilate(std::span<const std::uint8_t> in, int width, int height, int radius, std::span<std::uint8_t> out) {
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            std::uint8_t v = 0;
            for (int yy = std::max(0, y - radius); yy <= std::min(height - 1, y + radius) && !v; ++yy) {
                for (int xx = std::max(0, x - radius); xx <= std::min(width - 1, x + radius); ++xx) {
                    if (in[static_cast<std::size_t>(yy) * width + xx]) {
                        v = 1;
                        break;
                    }
                }
            }
            out[static_cast<std::size_t>(y) * width + x] = v;
        }
    }
}

void laplacian_apply(const MaskedLaplacian& op, std::span<const double> x, std::span<double> y) {
    for (std::size_t i = 0; i < op.size(); ++i) {
        double acc = op.diag[i] * x[i];
        for (const std::int32_t j : op.neighbors[i]) {
            if (j >= 0) acc -= x[static_cast<std::size_t>(j)];
        }
        y[i] = acc;
    }
}

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

}  // namespace usegmix::kernels::serial
