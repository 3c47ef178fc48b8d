#include "usegmix/segmenter.hpp"

#include <cmath>
#include <cstdlib>
#include <deque>
#include <string>

#include "usegmix/backend_protocol.hpp"
#include "usegmix/error.hpp"

namespace usegmix {

namespace {

bool point_inside(const ImageRGB& img, Point p) {
    return p.x >= 0.0 && p.y >= 0.0 && p.x < img.width && p.y < img.height;
}

void validate(const FloodFillConfig& cfg) {
    if (cfg.color_tol < 0 || cfg.color_tol > 255) throw Error("floodfill: color_tol must be in [0, 255]");
    if (cfg.connectivity != 4 && cfg.connectivity != 8) throw Error("floodfill: connectivity must be 4 or 8");
    if (!(cfg.max_frac > 0.0 && cfg.max_frac <= 1.0)) throw Error("floodfill: max_frac must be in (0, 1]");
}

}  // namespace

FloodFillSegmenter::FloodFillSegmenter(FloodFillConfig cfg) : cfg_(cfg) { validate(cfg_); }

BitMask FloodFillSegmenter::segment(const ImageRGB& img, Point p) { return floodfill_segment(img, p, cfg_); }

BitMask ExternalSegmenter::segment(const ImageRGB& img, Point p) { return request_segment(handle_, img, p); }

std::string ExternalSegmenter::name() const { return "external:" + handle_.name(); }

BitMask segment_at_point(Segmenter& backend, const ImageRGB& img, Point p) {
    if (!point_inside(img, p)) {
        throw Error("segment_at_point: prompt (" + std::to_string(p.x) + ", " + std::to_string(p.y) +
                    ") outside image");
    }
    BitMask m = backend.segment(img, p);
    if (m.width != img.width || m.height != img.height) {
        throw BackendError(backend.name() + " returned a mask of the wrong size");
    }
    if (m.empty()) throw BackendError(backend.name() + " returned an empty mask");
    if (!m.get(static_cast<int>(p.x), static_cast<int>(p.y))) {
        throw BackendError(backend.name() + " returned a mask that does not contain the prompt");
    }
    return m;
}

BitMask floodfill_segment(const ImageRGB& img, Point p, const FloodFillConfig& cfg) {
    validate(cfg);
    if (!point_inside(img, p)) throw Error("floodfill_segment: seed outside image");
    const int sx = static_cast<int>(p.x);
    const int sy = static_cast<int>(p.y);
    const std::size_t limit =
        std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(cfg.max_frac * static_cast<double>(img.pixel_count()))));

    const std::uint8_t seed[3] = {img.at(sx, sy, 0), img.at(sx, sy, 1), img.at(sx, sy, 2)};
    auto similar = [&](int x, int y) {
        for (int c = 0; c < 3; ++c) {
            if (std::abs(static_cast<int>(img.at(x, y, c)) - seed[c]) > cfg.color_tol) return false;
        }
        return true;
    };

    static constexpr int kDx[8] = {-1, 1, 0, 0, -1, 1, -1, 1};
    static constexpr int kDy[8] = {0, 0, -1, 1, -1, -1, 1, 1};

    BitMask mask(img.width, img.height);
    std::deque<std::pair<int, int>> queue;
    mask.set(sx, sy);
    std::size_t taken = 1;
    queue.emplace_back(sx, sy);
    while (!queue.empty() && taken < limit) {
        const auto [x, y] = queue.front();
        queue.pop_front();
        for (int t = 0; t < cfg.connectivity && taken < limit; ++t) {
            const int nx = x + kDx[t];
            const int ny = y + kDy[t];
            if (!mask.in_bounds(nx, ny) || mask.get(nx, ny) || !similar(nx, ny)) continue;
            mask.set(nx, ny);
            ++taken;
            queue.emplace_back(nx, ny);
        }
    }
    return mask;
}

}  // namespace usegmix
