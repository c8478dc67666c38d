#include "brpatch/perturb.hpp"

#include "brpatch/errors.hpp"
#include "brpatch/rng.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace brpatch {

std::array<double, 3> channel_means(const Image& region)
{
    if (region.height < 1 || region.width < 1 || region.data.empty()) {
        throw DomainError("hue mapping needs a nonempty target region");
    }
    std::array<double, 3> means{};
    const std::size_t plane = region.plane_size();
    for (int c = 0; c < kChannels; ++c) {
        double acc = 0.0;
        for (std::size_t i = 0; i < plane; ++i) {
            acc += region.data[c * plane + i];
        }
        means[c] = acc / static_cast<double>(plane);
    }
    return means;
}

std::array<double, 3> channel_means(const Patch& patch)
{
    std::array<double, 3> means{};
    const std::size_t plane = patch.plane_size();
    const auto px = patch.pixels();
    for (int c = 0; c < kChannels; ++c) {
        double acc = 0.0;
        for (std::size_t i = 0; i < plane; ++i) {
            acc += px[c * plane + i];
        }
        means[c] = acc / static_cast<double>(plane);
    }
    return means;
}

std::array<double, 3> hue_shifts(const Patch& patch, const HueMapParams& params)
{
    if (!(params.threshold >= 0.0 && params.threshold <= 1.0)) {
        throw DomainError("hue threshold H_t must lie in [0,1]");
    }
    const auto scene = channel_means(params.target_region);
    const auto own = channel_means(patch);
    std::array<double, 3> shift{};
    for (int c = 0; c < kChannels; ++c) {
        const double diff = own[c] - scene[c];
        if (params.sign == HueShiftSign::toward_scene) {
            shift[c] = std::clamp(-diff, -params.threshold, params.threshold);
        } else {
            shift[c] = diff <= params.threshold ? diff : params.threshold;
        }
    }
    return shift;
}

Patch hue_map(const Patch& patch, const HueMapParams& params)
{
    const auto shift = hue_shifts(patch, params);
    const std::size_t plane = patch.plane_size();
    std::vector<double> out(patch.size());
    const auto px = patch.pixels();
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = px[i] + shift[i / plane];
    }
    return Patch::clamped(patch.height(), patch.width(), out, patch.meta());
}

std::pair<double, double> color_transfer_interval(const Patch& patch)
{
    const auto [lo, hi] = std::minmax_element(patch.pixels().begin(), patch.pixels().end());
    return {-static_cast<double>(*lo), 1.0 - static_cast<double>(*hi)};
}

Patch color_transfer(const Patch& patch, double delta)
{
    const auto [lo, hi] = color_transfer_interval(patch);
    if (!(delta >= lo && delta <= hi)) {
        throw DomainError("color transfer delta " + std::to_string(delta) + " overflows: allowed interval is [" +
                          std::to_string(lo) + ", " + std::to_string(hi) + "]");
    }
    std::vector<double> out(patch.size());
    const auto px = patch.pixels();
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = px[i] + delta;
    }
    // Inside the interval the only possible excursion is rounding at the ends.
    return Patch::clamped(patch.height(), patch.width(), out, patch.meta());
}

Patch gaussian_blur3(const Patch& patch)
{
    const int h = patch.height();
    const int w = patch.width();
    if (h < 3 || w < 3) {
        throw DomainError("gaussian_blur3 needs a patch of at least 3x3, got " + std::to_string(h) + "x" +
                          std::to_string(w));
    }
    // Separable pass: [1 2 1]/4 horizontally, then vertically.
    std::vector<double> tmp(patch.size());
    std::vector<double> out(patch.size());
    for (int c = 0; c < kChannels; ++c) {
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                const double l = patch.at(c, y, std::max(x - 1, 0));
                const double m = patch.at(c, y, x);
                const double r = patch.at(c, y, std::min(x + 1, w - 1));
                tmp[(static_cast<std::size_t>(c) * h + y) * w + x] = (l + 2.0 * m + r) * 0.25;
            }
        }
        for (int y = 0; y < h; ++y) {
            const std::size_t up = (static_cast<std::size_t>(c) * h + std::max(y - 1, 0)) * w;
            const std::size_t mid = (static_cast<std::size_t>(c) * h + y) * w;
            const std::size_t dn = (static_cast<std::size_t>(c) * h + std::min(y + 1, h - 1)) * w;
            for (int x = 0; x < w; ++x) {
                out[mid + x] = (tmp[up + x] + 2.0 * tmp[mid + x] + tmp[dn + x]) * 0.25;
            }
        }
    }
    return Patch::clamped(h, w, out, patch.meta());
}

Patch color_drift(const Patch& patch, double q, std::uint64_t seed)
{
    if (!(q >= 0.0 && q <= 1.0)) {
        throw DomainError("color drift level q must lie in [0,1]");
    }
    std::vector<double> out(patch.size());
    const auto px = patch.pixels();
    for (std::size_t i = 0; i < out.size(); ++i) {
        Rng rng(derive_seed(seed, i));
        const double u = rng.uniform(-q, q);
        out[i] = px[i] * (1.0 + u);
    }
    return Patch::clamped(patch.height(), patch.width(), out, patch.meta());
}

Patch resize_bilinear(const Patch& patch, int new_height, int new_width, bool align_corners)
{
    if (new_height < 1 || new_width < 1) {
        throw DomainError("resize target dimensions must be positive");
    }
    const int h = patch.height();
    const int w = patch.width();

    struct Axis {
        int i0;
        int i1;
        double frac;
    };
    auto axis = [align_corners](int in, int out) {
        std::vector<Axis> taps(static_cast<std::size_t>(out));
        for (int d = 0; d < out; ++d) {
            double src = 0.0;
            if (align_corners) {
                src = out > 1 ? static_cast<double>(d) * (in - 1) / (out - 1) : 0.0;
            } else {
                src = (d + 0.5) * static_cast<double>(in) / out - 0.5;
            }
            src = std::clamp(src, 0.0, static_cast<double>(in - 1));
            const int i0 = static_cast<int>(std::floor(src));
            const int i1 = std::min(i0 + 1, in - 1);
            taps[d] = {i0, i1, src - i0};
        }
        return taps;
    };
    const auto ys = axis(h, new_height);
    const auto xs = axis(w, new_width);

    std::vector<double> out(static_cast<std::size_t>(kChannels) * new_height * new_width);
    for (int c = 0; c < kChannels; ++c) {
        for (int y = 0; y < new_height; ++y) {
            const Axis& ay = ys[y];
            for (int x = 0; x < new_width; ++x) {
                const Axis& ax = xs[x];
                const double top = patch.at(c, ay.i0, ax.i0) * (1.0 - ax.frac) + patch.at(c, ay.i0, ax.i1) * ax.frac;
                const double bot = patch.at(c, ay.i1, ax.i0) * (1.0 - ax.frac) + patch.at(c, ay.i1, ax.i1) * ax.frac;
                out[(static_cast<std::size_t>(c) * new_height + y) * new_width + x] =
                    top * (1.0 - ay.frac) + bot * ay.frac;
            }
        }
    }
    return Patch::clamped(new_height, new_width, out, patch.meta());
}

} // namespace brpatch
