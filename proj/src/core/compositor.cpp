#include "brpatch/compositor.hpp"

#include "brpatch/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace brpatch {

namespace {

constexpr double kFitTolerance = 1e-9;

double to_radians(double deg)
{
    return deg * std::numbers::pi / 180.0;
}

std::string describe(Dims d)
{
    return std::to_string(d.height) + "x" + std::to_string(d.width);
}

/// Visits every output pixel of the footprint bounding box together with the
/// four bilinear taps it draws from the patch. `fn(y, x, taps, n)` receives
/// only taps that land on real texels (index into one channel plane, weight).
struct Tap {
    std::size_t index;
    double weight;
};

template <typename Fn>
void for_each_footprint_pixel(Dims image, Dims patch, const TransformSample& t, Fn&& fn)
{
    const double rad = to_radians(t.angle_deg);
    const double cs = std::cos(rad);
    const double sn = std::sin(rad);
    const auto [hx, hy] = footprint_half_extents(patch, t.angle_deg, t.scale);

    const int x0 = std::max(0, static_cast<int>(std::floor(t.cx - hx)) - 1);
    const int x1 = std::min(image.width - 1, static_cast<int>(std::ceil(t.cx + hx)) + 1);
    const int y0 = std::max(0, static_cast<int>(std::floor(t.cy - hy)) - 1);
    const int y1 = std::min(image.height - 1, static_cast<int>(std::ceil(t.cy + hy)) + 1);

    const double half_w = 0.5 * patch.width;
    const double half_h = 0.5 * patch.height;
    Tap taps[4];
    for (int y = y0; y <= y1; ++y) {
        const double dy = (y + 0.5) - t.cy;
        for (int x = x0; x <= x1; ++x) {
            const double dx = (x + 0.5) - t.cx;
            // Inverse map into texel coordinates where texel j has its center at u = j.
            const double u = (cs * dx + sn * dy) / t.scale + half_w - 0.5;
            const double v = (-sn * dx + cs * dy) / t.scale + half_h - 0.5;
            const double fu0 = std::floor(u);
            const double fv0 = std::floor(v);
            if (fu0 < -1.0 || fv0 < -1.0 || fu0 > patch.width - 1 || fv0 > patch.height - 1) {
                continue;
            }
            const int j0 = static_cast<int>(fu0);
            const int i0 = static_cast<int>(fv0);
            const double au = u - fu0;
            const double av = v - fv0;
            int n = 0;
            for (int di = 0; di < 2; ++di) {
                const int i = i0 + di;
                if (i < 0 || i >= patch.height) {
                    continue;
                }
                const double wv = di == 0 ? 1.0 - av : av;
                for (int dj = 0; dj < 2; ++dj) {
                    const int j = j0 + dj;
                    if (j < 0 || j >= patch.width) {
                        continue;
                    }
                    const double wu = dj == 0 ? 1.0 - au : au;
                    taps[n++] = {static_cast<std::size_t>(i) * patch.width + j, wv * wu};
                }
            }
            if (n > 0) {
                fn(y, x, taps, n);
            }
        }
    }
}

void require_fit(const TransformSample& t, Dims image, Dims patch)
{
    if (!(t.scale > 0.0)) {
        throw DomainError("transform scale must be positive");
    }
    if (!transform_fits(t, image, patch)) {
        throw InfeasibleError("transformed patch " + describe(patch) + " at (" + std::to_string(t.cx) + ", " +
                              std::to_string(t.cy) + "), angle " + std::to_string(t.angle_deg) + ", scale " +
                              std::to_string(t.scale) + " leaves the " + describe(image) + " image");
    }
}

} // namespace

void TransformConfig::validate() const
{
    if (!(angle_min_deg <= angle_max_deg)) {
        throw DomainError("transform angle range must be ordered");
    }
    if (!(scale_min > 0.0) || !(scale_min <= scale_max)) {
        throw DomainError("transform scale range must be positive and ordered");
    }
}

std::pair<double, double> footprint_half_extents(Dims patch, double angle_deg, double scale)
{
    const double rad = to_radians(angle_deg);
    const double cs = std::abs(std::cos(rad));
    const double sn = std::abs(std::sin(rad));
    const double w = patch.width * scale;
    const double h = patch.height * scale;
    return {0.5 * (w * cs + h * sn), 0.5 * (w * sn + h * cs)};
}

bool transform_fits(const TransformSample& t, Dims image, Dims patch)
{
    const auto [hx, hy] = footprint_half_extents(patch, t.angle_deg, t.scale);
    return t.cx - hx >= -kFitTolerance && t.cx + hx <= image.width + kFitTolerance && t.cy - hy >= -kFitTolerance &&
           t.cy + hy <= image.height + kFitTolerance;
}

TransformSample sample_transform(Rng& rng, const TransformConfig& cfg, Dims image, Dims patch)
{
    cfg.validate();
    if (patch.height < 1 || patch.width < 1 || image.height < 1 || image.width < 1) {
        throw DomainError("sample_transform: dimensions must be positive");
    }
    const bool rotates = cfg.angle_min_deg != cfg.angle_max_deg;
    const double diag = 0.5 * std::hypot(patch.width, patch.height);

    auto half_extents = [&](double angle, double scale) -> std::pair<double, double> {
        if (rotates) {
            return {diag * scale, diag * scale};
        }
        return footprint_half_extents(patch, angle, scale);
    };

    const auto [mx, my] = half_extents(cfg.angle_min_deg, cfg.scale_max);
    if (2.0 * mx > image.width + kFitTolerance || 2.0 * my > image.height + kFitTolerance) {
        throw InfeasibleError("patch " + describe(patch) + " at scale " + std::to_string(cfg.scale_max) +
                              " does not fit inside a " + describe(image) + " image");
    }

    // Always four draws, in a fixed order.
    const double ua = rng.uniform();
    const double us = rng.uniform();
    const double ux = rng.uniform();
    const double uy = rng.uniform();

    TransformSample t;
    t.angle_deg = rotates ? cfg.angle_min_deg + (cfg.angle_max_deg - cfg.angle_min_deg) * ua : cfg.angle_min_deg;
    t.scale = cfg.scale_min == cfg.scale_max ? cfg.scale_min : cfg.scale_min + (cfg.scale_max - cfg.scale_min) * us;

    if (cfg.placement == Placement::fixed) {
        t.cx = cfg.fixed_cx;
        t.cy = cfg.fixed_cy;
        if (!transform_fits(t, image, patch)) {
            throw InfeasibleError("fixed placement leaves the image bounds");
        }
        return t;
    }

    const auto [hx, hy] = half_extents(t.angle_deg, t.scale);
    t.cx = hx + (image.width - 2.0 * hx) * ux;
    t.cy = hy + (image.height - 2.0 * hy) * uy;
    return t;
}

Composite compose(const Image& image, PatchView patch, const TransformSample& t)
{
    const Dims pd{patch.height, patch.width};
    const Dims id{image.height, image.width};
    if (patch.pixels.size() != static_cast<std::size_t>(kChannels) * patch.height * patch.width) {
        throw DomainError("compose: patch view has the wrong number of elements");
    }
    require_fit(t, id, pd);

    Composite out{image, std::vector<double>(image.plane_size(), 0.0)};
    const std::size_t plane = static_cast<std::size_t>(patch.height) * patch.width;
    for_each_footprint_pixel(id, pd, t, [&](int y, int x, const Tap* taps, int n) {
        double mask = 0.0;
        for (int k = 0; k < n; ++k) {
            mask += taps[k].weight;
        }
        if (mask == 0.0) {
            return;
        }
        out.mask[static_cast<std::size_t>(y) * image.width + x] = mask;
        for (int c = 0; c < kChannels; ++c) {
            const double* src = patch.pixels.data() + c * plane;
            double warped = 0.0;
            for (int k = 0; k < n; ++k) {
                warped += taps[k].weight * src[taps[k].index];
            }
            double& dst = out.image.at(c, y, x);
            dst = std::clamp(warped + (1.0 - mask) * dst, 0.0, 1.0);
        }
    });
    return out;
}

Composite compose(const Image& image, const Patch& patch, const TransformSample& t)
{
    const auto values = patch.to_doubles();
    return compose(image, PatchView{patch.height(), patch.width(), values}, t);
}

void compose_backward_accumulate(const Image& grad_out, Dims patch, const TransformSample& t,
                                 std::span<double> grad_patch)
{
    const std::size_t plane = static_cast<std::size_t>(patch.height) * patch.width;
    if (grad_patch.size() != kChannels * plane) {
        throw DomainError("compose_backward: gradient buffer has the wrong size");
    }
    require_fit(t, Dims{grad_out.height, grad_out.width}, patch);
    for_each_footprint_pixel(Dims{grad_out.height, grad_out.width}, patch, t,
                             [&](int y, int x, const Tap* taps, int n) {
                                 for (int c = 0; c < kChannels; ++c) {
                                     const double g = grad_out.at(c, y, x);
                                     double* dst = grad_patch.data() + c * plane;
                                     for (int k = 0; k < n; ++k) {
                                         dst[taps[k].index] += taps[k].weight * g;
                                     }
                                 }
                             });
}

std::vector<double> compose_backward(const Image& grad_out, Dims patch, const TransformSample& t)
{
    std::vector<double> grad(static_cast<std::size_t>(kChannels) * patch.height * patch.width, 0.0);
    compose_backward_accumulate(grad_out, patch, t, grad);
    return grad;
}

} // namespace brpatch
