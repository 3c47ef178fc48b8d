#pragma once

#include <cmath>

#include "usegmix/kernels.hpp"

namespace usegmix::kernels::detail {

// Squared SLIC distance, color term plus spatial term scaled by (m / S)^2.
// Shared by both assignment kernels so they compare bit-identical values.
inline double slic_distance(const LabImage& lab, std::size_t i, int x, int y, const SlicCenter& c,
                            double spatial_factor) {
    const double dl = lab.l[i] - c.l;
    const double da = lab.a[i] - c.a;
    const double db = lab.b[i] - c.b;
    const double dx = x - c.x;
    const double dy = y - c.y;
    return (dl * dl + da * da + db * db) + (dx * dx + dy * dy) * spatial_factor;
}

inline bool in_window(int x, int y, const SlicCenter& c, double window) {
    return std::abs(x - c.x) <= window && std::abs(y - c.y) <= window;
}

}  // namespace usegmix::kernels::detail
