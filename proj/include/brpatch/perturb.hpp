#pragma once

#include "brpatch/patch.hpp"

#include <array>
#include <cstdint>

namespace brpatch {

/// Which way the hue-mapping shift points.
enum class HueShiftSign {
    toward_scene, ///< s_c = clamp(-(mean_c(p) - mean_c(x_t)), -H_t, +H_t)
    literal,      ///< s_c = dH_c if dH_c <= H_t else H_t (one-sided, adds the difference)
};

struct HueMapParams {
    double threshold = 0.2; ///< H_t, in [0,1]
    Image target_region;    ///< scene crop the patch will sit beside
    HueShiftSign sign = HueShiftSign::toward_scene;
};

/// Per-channel means of an image region. Throws DomainError for an empty region.
std::array<double, 3> channel_means(const Image& region);
std::array<double, 3> channel_means(const Patch& patch);

/// The per-channel shift hue_map applies before the final clamp.
std::array<double, 3> hue_shifts(const Patch& patch, const HueMapParams& params);

/// Uniform per-channel shift of the patch toward the scene color; texture is
/// untouched except where the final clamp to [0,1] engages.
Patch hue_map(const Patch& patch, const HueMapParams& params);

/// Overflow-free interval [-min(patch), 1 - max(patch)] for color_transfer.
std::pair<double, double> color_transfer_interval(const Patch& patch);

/// Adds `delta` to every element. Throws DomainError when delta would push
/// any value outside [0,1]; never clamps.
Patch color_transfer(const Patch& patch, double delta);

/// 3x3 binomial blur (1/16)[1 2 1; 2 4 2; 1 2 1] with edge replication.
/// Requires height, width >= 3.
Patch gaussian_blur3(const Patch& patch);

/// v -> clamp01(v * (1 + u)), u ~ U(-q, q) drawn per element from
/// (seed, element index), so the result does not depend on evaluation order.
Patch color_drift(const Patch& patch, double q, std::uint64_t seed);

/// Bilinear resampling. Default half-pixel centers (same-size resize is the
/// identity); `align_corners` maps corner samples onto corner samples.
Patch resize_bilinear(const Patch& patch, int new_height, int new_width, bool align_corners = false);

} // namespace brpatch
