#pragma once

#include <memory>
#include <string>

#include "usegmix/raster.hpp"

namespace usegmix {

class BackendHandle;

struct FloodFillConfig {
    int color_tol = 25;      ///< max per-channel absolute difference to the seed color
    int connectivity = 4;    ///< 4 or 8
    double max_frac = 0.9;   ///< mask is truncated (in BFS order) beyond this fraction of the image

    bool operator==(const FloodFillConfig&) const = default;
};

/// Point-prompted segmentation backend.
class Segmenter {
public:
    virtual ~Segmenter() = default;
    /// Raw backend call; use segment_at_point for the checked contract.
    virtual BitMask segment(const ImageRGB& img, Point p) = 0;
    /// Whether concurrent segment() calls are allowed.
    [[nodiscard]] virtual bool thread_safe() const = 0;
    [[nodiscard]] virtual std::string name() const = 0;
};

class FloodFillSegmenter final : public Segmenter {
public:
    explicit FloodFillSegmenter(FloodFillConfig cfg = {});
    BitMask segment(const ImageRGB& img, Point p) override;
    [[nodiscard]] bool thread_safe() const override { return true; }
    [[nodiscard]] std::string name() const override { return "builtin-floodfill"; }
    [[nodiscard]] const FloodFillConfig& config() const { return cfg_; }

private:
    FloodFillConfig cfg_;
};

/// Delegates to an external process over the wire protocol. Not thread safe:
/// one request is in flight per handle.
class ExternalSegmenter final : public Segmenter {
public:
    explicit ExternalSegmenter(BackendHandle& handle) : handle_(handle) {}
    BitMask segment(const ImageRGB& img, Point p) override;
    [[nodiscard]] bool thread_safe() const override { return false; }
    [[nodiscard]] std::string name() const override;

private:
    BackendHandle& handle_;
};

/// Runs the backend and enforces its contract: p must be inside the image,
/// the mask must be nonempty, have the image's size and contain the pixel at p.
BitMask segment_at_point(Segmenter& backend, const ImageRGB& img, Point p);

/// Maximal connected region whose pixels are within color_tol of the seed
/// pixel on every channel, truncated to max_frac of the image in BFS order.
BitMask floodfill_segment(const ImageRGB& img, Point p, const FloodFillConfig& cfg);

}  // namespace usegmix
