#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "usegmix/backend_protocol.hpp"
#include "usegmix/consensus.hpp"
#include "usegmix/raster.hpp"

namespace usegmix {

enum class BlendMode { harmonic_fill, seamless_clone };

/// band: holes plus a seam band around the pasted segment.
/// full_union: everything touched by either segment, plus the band.
enum class InpaintRegion { band, full_union };

struct BlendConfig {
    int band_width = 3;
    double solver_tol = 1e-8;
    /// Unset means 10 * number of unknowns.
    std::optional<std::int64_t> solver_max_iters;
    BlendMode mode = BlendMode::seamless_clone;
    InpaintRegion region = InpaintRegion::band;
    int inpaint_steps = kDefaultInpaintSteps;
    /// On external inpainter failure, fall back to the builtin solver instead of failing.
    bool fallback_to_builtin = false;

    bool operator==(const BlendConfig&) const = default;
};

struct BlendPlan {
    BitMask target_mask;
    BitMask warped_replacement_mask;
    ImageRGB warped_replacement_pixels;  ///< full-size; meaningful under warped_replacement_mask
    BitMask inpaint_mask;
    AffineTransform2D transform;
};

/// Per-pixel origin of a composite, used to decide which gradients to keep.
enum Provenance : std::int32_t { kHole = -1, kOriginal = 0, kPasted = 1 };

/// Isotropic scale sqrt(|dst| / |src|) and the translation that maps the
/// scaled src centroid onto the dst centroid. No rotation or shear.
AffineTransform2D fit_affine(const BitMask& src, const BitMask& dst);

/// (target \ warped) ∪ (dilate(target ∪ warped, bw) \ erode(warped, bw)) in band mode.
BitMask inpaint_region(const BitMask& target, const BitMask& warped, int band_width, InpaintRegion region);

BlendPlan make_blend_plan(const ImageRGB& target_img, const AnchorSegment& target, const ImageRGB& repl_img,
                          const AnchorSegment& repl, const BlendConfig& cfg);

ImageRGB paste(const ImageRGB& target_img, const BlendPlan& plan);

/// kPasted under the warped mask, kHole under target \ warped, kOriginal elsewhere.
std::vector<std::int32_t> plan_provenance(const BlendPlan& plan);

struct PoissonSolution {
    std::vector<double> values;  ///< full raster; equals `field` outside the solved unknowns
    std::int64_t iterations = 0;
    double relative_residual = 0.0;
};

/// Solves the 5-point Poisson equation on the pixels of `unknown`:
///   |N_p| f_p - sum_{q in N_p ∩ unknown} f_q = sum_{q in N_p \ unknown} field_q + guidance_p
/// where N_p are the in-raster 4-neighbours. Connected groups of unknowns that
/// touch no known pixel keep their `field` values. Jacobi-preconditioned CG,
/// unknowns in row-major order. Throws Error on non-convergence.
PoissonSolution solve_masked_poisson(int width, int height, const BitMask& unknown, std::span<const double> field,
                                     std::span<const double> guidance, double tol, std::optional<std::int64_t> max_iters);

/// Per-channel solve over `mask`. harmonic_fill uses zero guidance;
/// seamless_clone keeps composite gradients between neighbours of equal
/// provenance and zeroes them across seams and inside holes.
ImageRGB blend_region(const ImageRGB& composite, const BitMask& mask, std::span<const std::int32_t> provenance,
                      const BlendConfig& cfg);

ImageRGB poisson_blend(const ImageRGB& composite, const BlendPlan& plan, const BlendConfig& cfg);

/// `filled` inside mask, `base` elsewhere.
ImageRGB masked_merge(const ImageRGB& base, const ImageRGB& filled, const BitMask& mask);

/// Builtin (external == nullptr) or external inpainting of `mask`. Output
/// always equals the composite outside the mask.
ImageRGB inpaint(const ImageRGB& composite, const BitMask& mask, std::span<const std::int32_t> provenance,
                 BackendHandle* external, const BlendConfig& cfg);
ImageRGB inpaint(const ImageRGB& composite, const BlendPlan& plan, BackendHandle* external, const BlendConfig& cfg);

}  // namespace usegmix
