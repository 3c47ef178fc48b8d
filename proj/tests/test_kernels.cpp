#include "doctest.h"

#include <omp.h>

#include <cmath>

#include "support.hpp"
#include "usegmix/kernels.hpp"
#include "usegmix/superpixel.hpp"

using namespace usegmix;
using namespace usegmix::kernels;

namespace {

std::vector<SlicCenter> jittered_centers(const LabImage& lab, int n, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<SlicCenter> c;
    for (int i = 0; i < n; ++i) {
        const double x = rng.uniform() * (lab.width - 1), y = rng.uniform() * (lab.height - 1);
        const auto k = static_cast<std::size_t>(y) * lab.width + static_cast<std::size_t>(x);
        c.push_back({lab.l[k], lab.a[k], lab.b[k], x, y});
    }
    return c;
}

MaskedLaplacian random_laplacian(const BitMask& unknown) {
    std::vector<std::int32_t> idx(unknown.pixel_count(), -1);
    std::int32_t n = 0;
    for (std::size_t i = 0; i < idx.size(); ++i) {
        if (unknown.bits[i]) idx[i] = n++;
    }
    MaskedLaplacian op;
    for (int y = 0; y < unknown.height; ++y) {
        for (int x = 0; x < unknown.width; ++x) {
            if (!unknown.get(x, y)) continue;
            std::array<std::int32_t, 4> nb{-1, -1, -1, -1};
            double deg = 0;
            const int dx[4] = {-1, 1, 0, 0}, dy[4] = {0, 0, -1, 1};
            for (int k = 0; k < 4; ++k) {
                const int nx = x + dx[k], ny = y + dy[k];
                if (!unknown.in_bounds(nx, ny)) continue;
                deg += 1;
                nb[k] = idx[static_cast<std::size_t>(ny) * unknown.width + nx];
            }
            op.diag.push_back(deg);
            op.neighbors.push_back(nb);
        }
    }
    return op;
}

}  // namespace

TEST_CASE("omp kernels match the serial reference for every thread count") {
    const int saved = omp_get_max_threads();
    for (int threads : {1, 2, 3, 5}) {
        omp_set_num_threads(threads);
        CAPTURE(threads);

        SUBCASE("slic_assign") {
            const LabImage lab = to_lab(usegmix::test::random_image(53, 41, 7));
            for (std::uint64_t s = 0; s < 4; ++s) {
                const auto centers = jittered_centers(lab, 9, s);
                std::vector<std::int32_t> a(lab.l.size()), b(lab.l.size());
                serial::slic_assign(lab, centers, 12.0, 10.0, a);
                omp::slic_assign(lab, centers, 12.0, 10.0, b);
                CHECK(a == b);
            }
        }
        SUBCASE("dilate") {
            for (int r : {0, 1, 2, 5}) {
                const BitMask m = usegmix::test::random_mask(37, 29, 0.03, static_cast<std::uint64_t>(r));
                std::vector<std::uint8_t> a(m.bits.size()), b(m.bits.size());
                serial::dilate(m.bits, m.width, m.height, r, a);
                omp::dilate(m.bits, m.width, m.height, r, b);
                CHECK(a == b);
            }
        }
        SUBCASE("laplacian_apply and dot") {
            const BitMask unknown = usegmix::test::random_mask(64, 48, 0.7, 3);
            const MaskedLaplacian op = random_laplacian(unknown);
            std::vector<double> x(op.size()), ya(op.size()), yb(op.size());
            for (std::size_t i = 0; i < x.size(); ++i) x[i] = std::sin(0.37 * static_cast<double>(i));
            serial::laplacian_apply(op, x, ya);
            omp::laplacian_apply(op, x, yb);
            CHECK(ya == yb);
            const double ds = serial::dot(x, ya);
            const double dp = omp::dot(x, ya);
            CHECK(dp == doctest::Approx(ds).epsilon(1e-12));
        }
    }
    omp_set_num_threads(saved);
}

TEST_CASE("omp dot does not depend on the thread count") {
    std::vector<double> a(100003), b(100003);
    for (std::size_t i = 0; i < a.size(); ++i) {
        a[i] = std::cos(0.001 * static_cast<double>(i)) * 1e3;
        b[i] = std::sin(0.013 * static_cast<double>(i));
    }
    const int saved = omp_get_max_threads();
    omp_set_num_threads(1);
    const double ref = omp::dot(a, b);
    for (int t : {2, 3, 4, 7}) {
        omp_set_num_threads(t);
        CHECK(omp::dot(a, b) == ref);
    }
    omp_set_num_threads(saved);
}
