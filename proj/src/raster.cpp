#include "usegmix/raster.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "usegmix/error.hpp"
#include "usegmix/kernels.hpp"

namespace usegmix {

namespace {

void require_same_shape(const BitMask& a, const BitMask& b, const char* what) {
    if (!a.same_shape(b)) {
        throw DimensionError(std::string(what) + ": mask dimensions differ (" + std::to_string(a.width) + "x" +
                             std::to_string(a.height) + " vs " + std::to_string(b.width) + "x" +
                             std::to_string(b.height) + ")");
    }
}

void require_positive(int w, int h) {
    if (w < 1 || h < 1) {
        throw DimensionError("raster dimensions must be >= 1, got " + std::to_string(w) + "x" + std::to_string(h));
    }
}

}  // namespace

ImageRGB::ImageRGB(int w, int h) : width(w), height(h) {
    require_positive(w, h);
    data.assign(pixel_count() * 3, 0);
}

ImageRGB::ImageRGB(int w, int h, std::vector<std::uint8_t> pixels) : width(w), height(h), data(std::move(pixels)) {
    require_positive(w, h);
    if (data.size() != pixel_count() * 3) {
        throw DimensionError("image data length " + std::to_string(data.size()) + " does not match " +
                             std::to_string(w) + "x" + std::to_string(h) + "x3");
    }
}

BitMask::BitMask(int w, int h, bool fill) : width(w), height(h) {
    require_positive(w, h);
    bits.assign(pixel_count(), fill ? 1 : 0);
}

std::size_t BitMask::count() const {
    return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), std::uint8_t{1}));
}

AffineTransform2D AffineTransform2D::inverse() const {
    const double det = determinant();
    if (det == 0.0 || !std::isfinite(det)) {
        throw Error("affine transform is not invertible");
    }
    AffineTransform2D inv;
    inv.a = e / det;
    inv.b = -b / det;
    inv.d = -d / det;
    inv.e = a / det;
    inv.c = -(inv.a * c + inv.b * f);
    inv.f = -(inv.d * c + inv.e * f);
    return inv;
}

std::size_t mask_intersection_count(const BitMask& a, const BitMask& b) {
    require_same_shape(a, b, "mask_intersection_count");
    std::size_t n = 0;
    for (std::size_t i = 0; i < a.bits.size(); ++i) {
        n += static_cast<std::size_t>(a.bits[i] & b.bits[i]);
    }
    return n;
}

double mask_iou(const BitMask& a, const BitMask& b) {
    require_same_shape(a, b, "mask_iou");
    std::size_t inter = 0;
    std::size_t uni = 0;
    for (std::size_t i = 0; i < a.bits.size(); ++i) {
        inter += static_cast<std::size_t>(a.bits[i] & b.bits[i]);
        uni += static_cast<std::size_t>(a.bits[i] | b.bits[i]);
    }
    return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

BBox mask_bbox(const BitMask& m) {
    BBox box{m.width, m.height, -1, -1};
    for (int y = 0; y < m.height; ++y) {
        for (int x = 0; x < m.width; ++x) {
            if (m.get(x, y)) {
                box.x0 = std::min(box.x0, x);
                box.y0 = std::min(box.y0, y);
                box.x1 = std::max(box.x1, x);
                box.y1 = std::max(box.y1, y);
            }
        }
    }
    if (box.x1 < 0) {
        throw Error("mask_bbox: mask is empty");
    }
    return box;
}

BitMask mask_union(const BitMask& a, const BitMask& b) {
    require_same_shape(a, b, "mask_union");
    BitMask out = a;
    for (std::size_t i = 0; i < out.bits.size(); ++i) out.bits[i] |= b.bits[i];
    return out;
}

BitMask mask_intersect(const BitMask& a, const BitMask& b) {
    require_same_shape(a, b, "mask_intersect");
    BitMask out = a;
    for (std::size_t i = 0; i < out.bits.size(); ++i) out.bits[i] &= b.bits[i];
    return out;
}

BitMask mask_subtract(const BitMask& a, const BitMask& b) {
    require_same_shape(a, b, "mask_subtract");
    BitMask out = a;
    for (std::size_t i = 0; i < out.bits.size(); ++i) out.bits[i] &= static_cast<std::uint8_t>(b.bits[i] ^ 1);
    return out;
}

BitMask mask_complement(const BitMask& m) {
    BitMask out = m;
    for (auto& v : out.bits) v ^= 1;
    return out;
}

BitMask dilate(const BitMask& m, int radius) {
    if (radius < 0) throw Error("dilate: radius must be >= 0");
    if (radius == 0) return m;
    BitMask out(m.width, m.height);
    kernels::omp::dilate(m.bits, m.width, m.height, radius, out.bits);
    return out;
}

BitMask erode(const BitMask& m, int radius) {
    return mask_complement(dilate(mask_complement(m), radius));
}

ImageRGB warp_affine(const ImageRGB& src, const AffineTransform2D& t, int out_w, int out_h) {
    const AffineTransform2D inv = t.inverse();
    ImageRGB out(out_w, out_h);
#pragma omp parallel for schedule(static)
    for (int y = 0; y < out_h; ++y) {
        for (int x = 0; x < out_w; ++x) {
            const Point s = inv.apply({static_cast<double>(x), static_cast<double>(y)});
            if (!(s.x >= -0.5 && s.y >= -0.5 && s.x < src.width - 0.5 && s.y < src.height - 0.5)) {
                continue;
            }
            const double sx = std::clamp(s.x, 0.0, static_cast<double>(src.width - 1));
            const double sy = std::clamp(s.y, 0.0, static_cast<double>(src.height - 1));
            const int x0 = static_cast<int>(std::floor(sx));
            const int y0 = static_cast<int>(std::floor(sy));
            const int x1 = std::min(x0 + 1, src.width - 1);
            const int y1 = std::min(y0 + 1, src.height - 1);
            const double fx = sx - x0;
            const double fy = sy - y0;
            for (int c = 0; c < 3; ++c) {
                const double top = (1.0 - fx) * src.at(x0, y0, c) + fx * src.at(x1, y0, c);
                const double bot = (1.0 - fx) * src.at(x0, y1, c) + fx * src.at(x1, y1, c);
                const double v = (1.0 - fy) * top + fy * bot;
                out.at(x, y, c) = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
            }
        }
    }
    return out;
}

BitMask warp_affine(const BitMask& src, const AffineTransform2D& t, int out_w, int out_h) {
    const AffineTransform2D inv = t.inverse();
    BitMask out(out_w, out_h);
#pragma omp parallel for schedule(static)
    for (int y = 0; y < out_h; ++y) {
        for (int x = 0; x < out_w; ++x) {
            const Point s = inv.apply({static_cast<double>(x), static_cast<double>(y)});
            const double rx = std::floor(s.x + 0.5);
            const double ry = std::floor(s.y + 0.5);
            if (rx < 0.0 || ry < 0.0 || rx >= src.width || ry >= src.height) continue;
            if (src.get(static_cast<int>(rx), static_cast<int>(ry))) out.set(x, y);
        }
    }
    return out;
}

ImageRGB crop(const ImageRGB& img, const BBox& box) {
    if (box.x0 < 0 || box.y0 < 0 || box.x1 >= img.width || box.y1 >= img.height || box.x0 > box.x1 ||
        box.y0 > box.y1) {
        throw DimensionError("crop: box outside image");
    }
    ImageRGB out(box.width(), box.height());
    for (int y = 0; y < out.height; ++y) {
        const auto* row = &img.data[(static_cast<std::size_t>(y + box.y0) * img.width + box.x0) * 3];
        std::copy(row, row + static_cast<std::size_t>(out.width) * 3, &out.data[static_cast<std::size_t>(y) * out.width * 3]);
    }
    return out;
}

ImageRGB resize_bilinear(const ImageRGB& img, int out_w, int out_h) {
    ImageRGB out(out_w, out_h);
    const double sx_scale = out_w > 1 ? static_cast<double>(img.width - 1) / (out_w - 1) : 0.0;
    const double sy_scale = out_h > 1 ? static_cast<double>(img.height - 1) / (out_h - 1) : 0.0;
#pragma omp parallel for schedule(static)
    for (int y = 0; y < out_h; ++y) {
        const double sy = y * sy_scale;
        const int y0 = std::min(static_cast<int>(std::floor(sy)), img.height - 1);
        const int y1 = std::min(y0 + 1, img.height - 1);
        const double fy = sy - y0;
        for (int x = 0; x < out_w; ++x) {
            const double sx = x * sx_scale;
            const int x0 = std::min(static_cast<int>(std::floor(sx)), img.width - 1);
            const int x1 = std::min(x0 + 1, img.width - 1);
            const double fx = sx - x0;
            for (int c = 0; c < 3; ++c) {
                const double top = (1.0 - fx) * img.at(x0, y0, c) + fx * img.at(x1, y0, c);
                const double bot = (1.0 - fx) * img.at(x0, y1, c) + fx * img.at(x1, y1, c);
                out.at(x, y, c) = static_cast<std::uint8_t>(std::clamp(std::lround((1.0 - fy) * top + fy * bot), 0L, 255L));
            }
        }
    }
    return out;
}

}  // namespace usegmix
