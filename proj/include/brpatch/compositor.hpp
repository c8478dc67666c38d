#pragma once

#include "brpatch/patch.hpp"
#include "brpatch/rng.hpp"

#include <span>
#include <vector>

namespace brpatch {

/// One draw of the placement transform T: the patch is scaled by `scale`,
/// rotated by `angle_deg` and centered at (cx, cy). A patch-local offset
/// (a, b) lands at c + scale * R(angle) * (a, b) with R the usual 2-D rotation
/// applied to (x right, y down) image coordinates.
///
/// Coordinates are continuous: pixel (row i, col j) covers [j, j+1) x [i, i+1)
/// and its center sits at (j + 0.5, i + 0.5).
struct TransformSample {
    double cx = 0.0;
    double cy = 0.0;
    double angle_deg = 0.0;
    double scale = 1.0;

    bool operator==(const TransformSample&) const = default;
};

enum class Placement { uniform_interior, fixed };

struct TransformConfig {
    double angle_min_deg = -22.5;
    double angle_max_deg = 22.5;
    double scale_min = 1.0;
    double scale_max = 1.0;
    Placement placement = Placement::uniform_interior;
    double fixed_cx = 0.0;
    double fixed_cy = 0.0;

    /// Throws DomainError when ranges are unordered or scales non-positive.
    void validate() const;

    bool operator==(const TransformConfig&) const = default;
};

struct Dims {
    int height = 0;
    int width = 0;
};

/// Read-only view of patch pixels in double precision (3 x height x width).
struct PatchView {
    int height = 0;
    int width = 0;
    std::span<const double> pixels;
};

/// Draws one transform. Uses exactly four uniforms from `rng` regardless of the
/// configuration, so paired evaluations stay aligned.
///
/// With a non-degenerate angle range the feasible centers are bounded by the
/// circumscribed circle of the scaled patch; with a fixed angle the exact
/// rotated-box half extents are used. Throws InfeasibleError when the patch at
/// maximum scale cannot fit.
TransformSample sample_transform(Rng& rng, const TransformConfig& cfg, Dims image, Dims patch);

/// Half extents (x, y) of the axis-aligned bounding box of the transformed patch.
std::pair<double, double> footprint_half_extents(Dims patch, double angle_deg, double scale);

/// True when the transformed footprint lies inside the image bounds.
bool transform_fits(const TransformSample& t, Dims image, Dims patch);

struct Composite {
    Image image;
    std::vector<double> mask; // height x width coverage in [0,1]
};

/// Differentiable overlay of the warped patch onto `image`.
///
/// Each output pixel inside the footprint bilinearly samples the patch (zero
/// outside it); the coverage mask is the sum of the bilinear weights that
/// landed on real texels. The result is
///     composed = sum_k w_k * p_k + (1 - mask) * image,
/// i.e. mask * warped + (1 - mask) * image with premultiplied sampling. Pixels
/// with zero coverage are copied bit-for-bit.
Composite compose(const Image& image, PatchView patch, const TransformSample& t);
Composite compose(const Image& image, const Patch& patch, const TransformSample& t);

/// Vector-Jacobian product of `compose` with respect to patch pixels:
/// returns d(sum(grad_out * composed)) / d(patch), shaped 3 x h x w.
std::vector<double> compose_backward(const Image& grad_out, Dims patch, const TransformSample& t);

/// Accumulating variant of compose_backward; `grad_patch` must have 3*h*w elements.
void compose_backward_accumulate(const Image& grad_out, Dims patch, const TransformSample& t,
                                 std::span<double> grad_patch);

} // namespace brpatch
