#pragma once

// Data-parallel inner loops. Every kernel has a plain serial reference in
// kernels::serial and an OpenMP version in kernels::omp; the library calls
// the omp versions, tests check them against the serial ones.

#include <array>
#include <cstdint>
#include <span>
#include <vector>

namespace usegmix::kernels {

/// CIELAB planes of an image, row-major.
struct LabImage {
    int width = 0;
    int height = 0;
    std::vector<double> l, a, b;
};

struct SlicCenter {
    double l = 0.0, a = 0.0, b = 0.0;
    double x = 0.0, y = 0.0;
};

/// 5-point Laplacian restricted to a set of unknowns. diag[i] is the number of
/// in-raster neighbours of unknown i; neighbors[i] holds the indices of
/// neighbouring unknowns, -1 for slots that are Dirichlet or off-raster.
struct MaskedLaplacian {
    std::vector<double> diag;
    std::vector<std::array<std::int32_t, 4>> neighbors;

    [[nodiscard]] std::size_t size() const { return diag.size(); }
};

namespace serial {

/// Classic center-major SLIC assignment: every center scans its window
/// |x - cx| <= window, |y - cy| <= window and claims pixels where its distance
/// is strictly lower. Pixels outside every window keep label -1.
void slic_assign(const LabImage& lab, std::span<const SlicCenter> centers, double window, double compactness,
                 std::span<std::int32_t> labels);

/// Brute-force (2r+1)^2 window dilation.
void dilate(std::span<const std::uint8_t> in, int width, int height, int radius, std::span<std::uint8_t> out);

void laplacian_apply(const MaskedLaplacian& op, std::span<const double> x, std::span<double> y);

double dot(std::span<const double> a, std::span<const double> b);

}  // namespace serial

namespace omp {

/// Pixel-major SLIC assignment. Produces exactly the labels of serial::slic_assign.
void slic_assign(const LabImage& lab, std::span<const SlicCenter> centers, double window, double compactness,
                 std::span<std::int32_t> labels);

/// Separable dilation, parallel over rows.
void dilate(std::span<const std::uint8_t> in, int width, int height, int radius, std::span<std::uint8_t> out);

void laplacian_apply(const MaskedLaplacian& op, std::span<const double> x, std::span<double> y);

/// Chunked dot product. Summation order depends only on the input length, so
/// results do not change with the thread count.
double dot(std::span<const double> a, std::span<const double> b);

}  // namespace omp

}  // namespace usegmix::kernels
