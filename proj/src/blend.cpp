#include "usegmix/blend.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <queue>

#include "usegmix/error.hpp"
#include "usegmix/kernels.hpp"

namespace usegmix {

namespace {

constexpr int kDx[4] = {-1, 1, 0, 0};
constexpr int kDy[4] = {0, 0, -1, 1};

}  // namespace

AffineTransform2D fit_affine(const BitMask& src, const BitMask& dst) {
    const IdentityVector s = identity_vector(src);
    const IdentityVector d = identity_vector(dst);
    const double scale = d.scnt / s.scnt;
    return AffineTransform2D::scale_translate(scale, d.cx - scale * s.cx, d.cy - scale * s.cy);
}

BitMask inpaint_region(const BitMask& target, const BitMask& warped, int band_width, InpaintRegion region) {
    if (band_width < 1) throw Error("band_width must be >= 1");
    const BitMask both = mask_union(target, warped);
    const BitMask band = mask_subtract(dilate(both, band_width), erode(warped, band_width));
    if (region == InpaintRegion::full_union) return mask_union(both, band);
    return mask_union(mask_subtract(target, warped), band);
}

BlendPlan make_blend_plan(const ImageRGB& target_img, const AnchorSegment& target, const ImageRGB& repl_img,
                          const AnchorSegment& repl, const BlendConfig& cfg) {
    if (target.mask.width != target_img.width || target.mask.height != target_img.height) {
        throw DimensionError("make_blend_plan: target mask does not match target image");
    }
    if (repl.mask.width != repl_img.width || repl.mask.height != repl_img.height) {
        throw DimensionError("make_blend_plan: replacement mask does not match replacement image");
    }
    if (repl.mask.empty()) throw Error("make_blend_plan: replacement mask is empty");

    BlendPlan plan;
    plan.transform = fit_affine(repl.mask, target.mask);
    plan.target_mask = target.mask;
    plan.warped_replacement_mask = warp_affine(repl.mask, plan.transform, target_img.width, target_img.height);
    if (plan.warped_replacement_mask.empty()) {
        throw Error("make_blend_plan: warped replacement of '" + repl.segment_id + "' is empty");
    }
    plan.warped_replacement_pixels = warp_affine(repl_img, plan.transform, target_img.width, target_img.height);
    plan.inpaint_mask = inpaint_region(plan.target_mask, plan.warped_replacement_mask, cfg.band_width, cfg.region);
    return plan;
}

ImageRGB paste(const ImageRGB& target_img, const BlendPlan& plan) {
    const BitMask& m = plan.warped_replacement_mask;
    if (m.width != target_img.width || m.height != target_img.height) throw DimensionError("paste: plan does not match image");
    ImageRGB out = target_img;
    for (std::size_t i = 0; i < m.bits.size(); ++i) {
        if (!m.bits[i]) continue;
        for (std::size_t c = 0; c < 3; ++c) out.data[i * 3 + c] = plan.warped_replacement_pixels.data[i * 3 + c];
    }
    return out;
}

std::vector<std::int32_t> plan_provenance(const BlendPlan& plan) {
    std::vector<std::int32_t> prov(plan.target_mask.pixel_count(), kOriginal);
    for (std::size_t i = 0; i < prov.size(); ++i) {
        if (plan.warped_replacement_mask.bits[i]) {
            prov[i] = kPasted;
        } else if (plan.target_mask.bits[i]) {
            prov[i] = kHole;
        }
    }
    return prov;
}

PoissonSolution solve_masked_poisson(int width, int height, const BitMask& unknown, std::span<const double> field,
                                     std::span<const double> guidance, double tol, std::optional<std::int64_t> max_iters) {
    const std::size_t npix = static_cast<std::size_t>(width) * height;
    if (unknown.width != width || unknown.height != height || field.size() != npix ||
        (!guidance.empty() && guidance.size() != npix)) {
        throw DimensionError("solve_masked_poisson: inputs do not match the raster");
    }
    if (!(tol > 0.0)) throw Error("solve_masked_poisson: tolerance must be > 0");

    PoissonSolution sol;
    sol.values.assign(field.begin(), field.end());

    // Drop groups of unknowns with no known neighbour: their system is singular.
    BitMask solvable = unknown;
    {
        std::vector<std::uint8_t> seen(npix, 0);
        std::vector<std::size_t> group;
        for (std::size_t start = 0; start < npix; ++start) {
            if (!unknown.bits[start] || seen[start]) continue;
            group.clear();
            bool anchored = false;
            std::queue<std::size_t> q;
            q.push(start);
            seen[start] = 1;
            while (!q.empty()) {
                const std::size_t i = q.front();
                q.pop();
                group.push_back(i);
                const int x = static_cast<int>(i % width);
                const int y = static_cast<int>(i / width);
                for (int t = 0; t < 4; ++t) {
                    const int nx = x + kDx[t];
                    const int ny = y + kDy[t];
                    if (nx < 0 || ny < 0 || nx >= width || ny >= height) continue;
                    const std::size_t j = static_cast<std::size_t>(ny) * width + nx;
                    if (!unknown.bits[j]) {
                        anchored = true;
                    } else if (!seen[j]) {
                        seen[j] = 1;
                        q.push(j);
                    }
                }
            }
            if (!anchored) {
                for (const std::size_t i : group) solvable.bits[i] = 0;
            }
        }
    }

    std::vector<std::int32_t> index(npix, -1);
    std::vector<std::size_t> pixel_of;
    for (std::size_t i = 0; i < npix; ++i) {
        if (solvable.bits[i]) {
            index[i] = static_cast<std::int32_t>(pixel_of.size());
            pixel_of.push_back(i);
        }
    }
    const std::size_t n = pixel_of.size();
    if (n == 0) return sol;

    kernels::MaskedLaplacian op;
    op.diag.resize(n);
    op.neighbors.resize(n);
    std::vector<double> b(n, 0.0);
    for (std::size_t k = 0; k < n; ++k) {
        const std::size_t i = pixel_of[k];
        const int x = static_cast<int>(i % width);
        const int y = static_cast<int>(i / width);
        int deg = 0;
        double rhs = guidance.empty() ? 0.0 : guidance[i];
        for (int t = 0; t < 4; ++t) {
            op.neighbors[k][t] = -1;
            const int nx = x + kDx[t];
            const int ny = y + kDy[t];
            if (nx < 0 || ny < 0 || nx >= width || ny >= height) continue;
            ++deg;
            const std::size_t j = static_cast<std::size_t>(ny) * width + nx;
            if (index[j] >= 0) {
                op.neighbors[k][t] = index[j];
            } else {
                rhs += field[j];
            }
        }
        op.diag[k] = deg;
        b[k] = rhs;
    }

    const double bnorm = std::sqrt(kernels::omp::dot(b, b));
    std::vector<double> x(n);
    for (std::size_t k = 0; k < n; ++k) x[k] = field[pixel_of[k]];
    if (bnorm == 0.0) {
        std::fill(x.begin(), x.end(), 0.0);
    } else {
        const std::int64_t limit = max_iters.value_or(10 * static_cast<std::int64_t>(n));
        std::vector<double> r(n), z(n), p(n), ap(n);
        kernels::omp::laplacian_apply(op, x, ap);
        for (std::size_t k = 0; k < n; ++k) r[k] = b[k] - ap[k];
        for (std::size_t k = 0; k < n; ++k) z[k] = r[k] / op.diag[k];
        p = z;
        double rz = kernels::omp::dot(r, z);
        double rnorm = std::sqrt(kernels::omp::dot(r, r));
        std::int64_t it = 0;
        while (rnorm > tol * bnorm) {
            if (it >= limit) {
                throw Error("poisson solver did not converge in " + std::to_string(limit) +
                            " iterations (relative residual " + std::to_string(rnorm / bnorm) + ")");
            }
            kernels::omp::laplacian_apply(op, p, ap);
            const double alpha = rz / kernels::omp::dot(p, ap);
            for (std::size_t k = 0; k < n; ++k) {
                x[k] += alpha * p[k];
                r[k] -= alpha * ap[k];
            }
            for (std::size_t k = 0; k < n; ++k) z[k] = r[k] / op.diag[k];
            const double rz_next = kernels::omp::dot(r, z);
            const double beta = rz_next / rz;
            rz = rz_next;
            for (std::size_t k = 0; k < n; ++k) p[k] = z[k] + beta * p[k];
            rnorm = std::sqrt(kernels::omp::dot(r, r));
            ++it;
        }
        sol.iterations = it;
        sol.relative_residual = rnorm / bnorm;
    }
    for (std::size_t k = 0; k < n; ++k) sol.values[pixel_of[k]] = x[k];
    return sol;
}

ImageRGB blend_region(const ImageRGB& composite, const BitMask& mask, std::span<const std::int32_t> provenance,
                      const BlendConfig& cfg) {
    const int w = composite.width;
    const int h = composite.height;
    const std::size_t npix = composite.pixel_count();
    if (mask.width != w || mask.height != h) throw DimensionError("blend_region: mask does not match composite");
    if (cfg.mode == BlendMode::seamless_clone && provenance.size() != npix) {
        throw DimensionError("blend_region: provenance does not match composite");
    }

    ImageRGB out = composite;
    std::vector<double> field(npix);
    std::vector<double> guidance;
    for (int c = 0; c < 3; ++c) {
        for (std::size_t i = 0; i < npix; ++i) field[i] = composite.data[i * 3 + c];
        if (cfg.mode == BlendMode::seamless_clone) {
            guidance.assign(npix, 0.0);
            for (int y = 0; y < h; ++y) {
                for (int x = 0; x < w; ++x) {
                    const std::size_t i = static_cast<std::size_t>(y) * w + x;
                    if (!mask.bits[i] || provenance[i] == kHole) continue;
                    double g = 0.0;
                    for (int t = 0; t < 4; ++t) {
                        const int nx = x + kDx[t];
                        const int ny = y + kDy[t];
                        if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
                        const std::size_t j = static_cast<std::size_t>(ny) * w + nx;
                        if (provenance[j] == provenance[i]) g += field[i] - field[j];
                    }
                    guidance[i] = g;
                }
            }
        }
        const PoissonSolution sol = solve_masked_poisson(w, h, mask, field, guidance, cfg.solver_tol, cfg.solver_max_iters);
        for (std::size_t i = 0; i < npix; ++i) {
            if (!mask.bits[i]) continue;
            out.data[i * 3 + c] = static_cast<std::uint8_t>(std::clamp(std::lround(sol.values[i]), 0L, 255L));
        }
    }
    return out;
}

ImageRGB poisson_blend(const ImageRGB& composite, const BlendPlan& plan, const BlendConfig& cfg) {
    return blend_region(composite, plan.inpaint_mask, plan_provenance(plan), cfg);
}

ImageRGB masked_merge(const ImageRGB& base, const ImageRGB& filled, const BitMask& mask) {
    if (base.width != filled.width || base.height != filled.height || mask.width != base.width ||
        mask.height != base.height) {
        throw DimensionError("masked_merge: size mismatch");
    }
    ImageRGB out = base;
    for (std::size_t i = 0; i < mask.bits.size(); ++i) {
        if (!mask.bits[i]) continue;
        for (std::size_t c = 0; c < 3; ++c) out.data[i * 3 + c] = filled.data[i * 3 + c];
    }
    return out;
}

ImageRGB inpaint(const ImageRGB& composite, const BitMask& mask, std::span<const std::int32_t> provenance,
                 BackendHandle* external, const BlendConfig& cfg) {
    if (external == nullptr) return blend_region(composite, mask, provenance, cfg);
    try {
        return masked_merge(composite, request_inpaint(*external, composite, mask, cfg.inpaint_steps), mask);
    } catch (const Error& e) {
        if (!cfg.fallback_to_builtin) throw;
        std::cerr << "warning: external inpainting failed, using builtin solver: " << e.what() << "\n";
        return blend_region(composite, mask, provenance, cfg);
    }
}

ImageRGB inpaint(const ImageRGB& composite, const BlendPlan& plan, BackendHandle* external, const BlendConfig& cfg) {
    return inpaint(composite, plan.inpaint_mask, plan_provenance(plan), external, cfg);
}

}  // namespace usegmix
