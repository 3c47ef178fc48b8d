#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace usegmix {

/// Row-major 8-bit RGB raster.
struct ImageRGB {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> data;

    ImageRGB() = default;
    /// Zero-filled image; throws DimensionError unless width, height >= 1.
    ImageRGB(int w, int h);
    ImageRGB(int w, int h, std::vector<std::uint8_t> pixels);

    [[nodiscard]] std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }
    [[nodiscard]] std::uint8_t at(int x, int y, int c) const { return data[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
    std::uint8_t& at(int x, int y, int c) { return data[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }

    bool operator==(const ImageRGB&) const = default;
};

/// Row-major binary raster. Stored one byte per pixel (0 or 1).
struct BitMask {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> bits;

    BitMask() = default;
    BitMask(int w, int h, bool fill = false);

    [[nodiscard]] std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }
    [[nodiscard]] bool get(int x, int y) const { return bits[static_cast<std::size_t>(y) * width + x] != 0; }
    void set(int x, int y, bool v = true) { bits[static_cast<std::size_t>(y) * width + x] = v ? 1 : 0; }
    [[nodiscard]] bool in_bounds(int x, int y) const { return x >= 0 && y >= 0 && x < width && y < height; }

    [[nodiscard]] std::size_t count() const;
    [[nodiscard]] bool empty() const { return count() == 0; }
    [[nodiscard]] bool same_shape(const BitMask& o) const { return width == o.width && height == o.height; }

    bool operator==(const BitMask&) const = default;
};

struct Point {
    double x = 0.0;
    double y = 0.0;
};

/// (x, y) -> (a x + b y + c, d x + e y + f)
struct AffineTransform2D {
    double a = 1.0, b = 0.0, c = 0.0;
    double d = 0.0, e = 1.0, f = 0.0;

    static AffineTransform2D identity() { return {}; }
    static AffineTransform2D scale_translate(double s, double tx, double ty) { return {s, 0.0, tx, 0.0, s, ty}; }

    [[nodiscard]] double determinant() const { return a * e - b * d; }
    [[nodiscard]] Point apply(Point p) const { return {a * p.x + b * p.y + c, d * p.x + e * p.y + f}; }
    /// Throws Error when the transform is singular.
    [[nodiscard]] AffineTransform2D inverse() const;
};

/// Inclusive pixel bounds.
struct BBox {
    int x0 = 0, y0 = 0, x1 = 0, y1 = 0;

    [[nodiscard]] int width() const { return x1 - x0 + 1; }
    [[nodiscard]] int height() const { return y1 - y0 + 1; }
    bool operator==(const BBox&) const = default;
};

/// |a ∩ b| / |a ∪ b|; 0 when both are empty.
double mask_iou(const BitMask& a, const BitMask& b);
std::size_t mask_intersection_count(const BitMask& a, const BitMask& b);

/// Tightest box around the set bits. Throws Error on an empty mask.
BBox mask_bbox(const BitMask& m);

BitMask mask_union(const BitMask& a, const BitMask& b);
BitMask mask_intersect(const BitMask& a, const BitMask& b);
/// a \ b
BitMask mask_subtract(const BitMask& a, const BitMask& b);
BitMask mask_complement(const BitMask& m);

/// Square (Chebyshev) structuring element of the given radius.
BitMask dilate(const BitMask& m, int radius);
/// Dual of dilate; pixels beyond the raster count as set, so a full mask stays full.
BitMask erode(const BitMask& m, int radius);

/// Inverse-mapping warp. Bilinear for images, nearest for masks; samples that
/// fall outside the source become black / unset.
ImageRGB warp_affine(const ImageRGB& src, const AffineTransform2D& t, int out_w, int out_h);
BitMask warp_affine(const BitMask& src, const AffineTransform2D& t, int out_w, int out_h);

ImageRGB crop(const ImageRGB& img, const BBox& box);
/// Bilinear resize with corner-aligned sampling (output corners hit source corners).
ImageRGB resize_bilinear(const ImageRGB& img, int out_w, int out_h);

}  // namespace usegmix
