#pragma once

#include <cstdint>
#include <vector>

#include "usegmix/kernels.hpp"
#include "usegmix/raster.hpp"
#include "usegmix/rng.hpp"

namespace usegmix {

struct SlicConfig {
    int n_s = 30;
    double compactness = 10.0;
    int max_iters = 10;
    /// Components smaller than min_region_frac * (area / n_s) are absorbed.
    double min_region_frac = 0.25;

    bool operator==(const SlicConfig&) const = default;
};

struct SuperpixelMap {
    int width = 0;
    int height = 0;
    std::vector<std::int32_t> labels;
    int n_regions = 0;

    [[nodiscard]] std::int32_t label(int x, int y) const { return labels[static_cast<std::size_t>(y) * width + x]; }
    [[nodiscard]] BitMask region_mask(int label) const;
};

kernels::LabImage to_lab(const ImageRGB& img);

/// SLIC in CIELAB. Centers start on a near-square grid, move to the lowest
/// gradient pixel of their 3x3 neighbourhood, then alternate assignment and
/// mean update for max_iters rounds. A final pass splits disconnected labels,
/// absorbs small components into their largest neighbour and caps the region
/// count at 2 * n_s.
///
/// The result depends only on (img, cfg); `seed` is accepted so callers can
/// treat every Phase-1 stage uniformly.
SuperpixelMap slic(const ImageRGB& img, const SlicConfig& cfg, std::uint64_t seed);

/// Grid shape (columns, rows) used for the initial centers.
std::pair<int, int> slic_grid(int width, int height, int n_s);

/// Uniform integer pixel of the region, in scan order index space.
Point sample_point_in_region(const SuperpixelMap& map, int label, Rng& rng);

}  // namespace usegmix
