#pragma once

// Scalar-loop reference implementations. Each one follows the stated
// definition directly and shares no code with the library beyond the Patch
// container and the seeded generator.

#include "brpatch/compositor.hpp"
#include "brpatch/patch.hpp"
#include "brpatch/rng.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

namespace oracle {

using brpatch::Image;
using brpatch::Patch;

inline double px(const Patch& p, int c, int y, int x)
{
    return static_cast<double>(p.pixels()[(static_cast<std::size_t>(c) * p.height() + y) * p.width() + x]);
}

inline double mse(const std::vector<double>& a, const std::vector<double>& b)
{
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        s += (a[i] - b[i]) * (a[i] - b[i]);
    }
    return s / static_cast<double>(a.size());
}

inline double brightness_loss(const Patch& p, double eps)
{
    double s = 0.0;
    int n = 0;
    for (int c = 0; c < 3; ++c) {
        for (int y = 0; y < p.height(); ++y) {
            for (int x = 0; x < p.width(); ++x) {
                const double d = px(p, c, y, x) - 1.0;
                s += d * d;
                ++n;
            }
        }
    }
    const double arg = 1.0 - s / n;
    return std::log(arg > eps ? arg : eps);
}

inline double clamp01(double v)
{
    return v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
}

/// out[c][y][x] as doubles, 3 x h x w.
using Grid = std::vector<std::vector<std::vector<double>>>;

inline Grid grid(int h, int w)
{
    return Grid(3, std::vector<std::vector<double>>(static_cast<std::size_t>(h), std::vector<double>(w, 0.0)));
}

inline Grid hue_map(const Patch& p, const Image& region, double ht, bool literal = false)
{
    Grid out = grid(p.height(), p.width());
    for (int c = 0; c < 3; ++c) {
        double mp = 0.0;
        for (int y = 0; y < p.height(); ++y) {
            for (int x = 0; x < p.width(); ++x) {
                mp += px(p, c, y, x);
            }
        }
        mp /= p.height() * p.width();
        double mr = 0.0;
        for (int y = 0; y < region.height; ++y) {
            for (int x = 0; x < region.width; ++x) {
                mr += region.at(c, y, x);
            }
        }
        mr /= region.height * region.width;
        const double dh = mp - mr;
        double s = 0.0;
        if (literal) {
            s = dh <= ht ? dh : ht;
        } else {
            s = -dh;
            if (s > ht) {
                s = ht;
            }
            if (s < -ht) {
                s = -ht;
            }
        }
        for (int y = 0; y < p.height(); ++y) {
            for (int x = 0; x < p.width(); ++x) {
                out[c][y][x] = clamp01(px(p, c, y, x) + s);
            }
        }
    }
    return out;
}

inline Grid color_transfer(const Patch& p, double delta)
{
    Grid out = grid(p.height(), p.width());
    for (int c = 0; c < 3; ++c) {
        for (int y = 0; y < p.height(); ++y) {
            for (int x = 0; x < p.width(); ++x) {
                out[c][y][x] = px(p, c, y, x) + delta;
            }
        }
    }
    return out;
}

// Full 2-D 3x3 binomial kernel, edge replication.
inline Grid blur3(const Patch& p)
{
    static const double k[3][3] = {{1, 2, 1}, {2, 4, 2}, {1, 2, 1}};
    const int h = p.height();
    const int w = p.width();
    Grid out = grid(h, w);
    for (int c = 0; c < 3; ++c) {
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                double s = 0.0;
                for (int dy = -1; dy <= 1; ++dy) {
                    for (int dx = -1; dx <= 1; ++dx) {
                        const int yy = std::clamp(y + dy, 0, h - 1);
                        const int xx = std::clamp(x + dx, 0, w - 1);
                        s += k[dy + 1][dx + 1] * px(p, c, yy, xx);
                    }
                }
                out[c][y][x] = s / 16.0;
            }
        }
    }
    return out;
}

// Element i (channel-major flat index) is scaled by 1 + u_i with
// u_i ~ U(-q, q) drawn from Rng(derive_seed(seed, i)).
inline Grid color_drift(const Patch& p, double q, std::uint64_t seed)
{
    Grid out = grid(p.height(), p.width());
    std::uint64_t i = 0;
    for (int c = 0; c < 3; ++c) {
        for (int y = 0; y < p.height(); ++y) {
            for (int x = 0; x < p.width(); ++x, ++i) {
                brpatch::Rng rng(brpatch::derive_seed(seed, i));
                const double u = -q + 2.0 * q * rng.uniform();
                out[c][y][x] = clamp01(px(p, c, y, x) * (1.0 + u));
            }
        }
    }
    return out;
}

// Half-pixel centers (or corner alignment) with border clamping; four taps
// weighted by the tent function.
inline Grid resize(const Patch& p, int nh, int nw, bool align_corners = false)
{
    const int h = p.height();
    const int w = p.width();
    auto src = [&](int d, int in, int out) {
        double s = align_corners ? (out > 1 ? d * double(in - 1) / (out - 1) : 0.0) : (d + 0.5) * in / out - 0.5;
        return std::min(std::max(s, 0.0), double(in - 1));
    };
    Grid out = grid(nh, nw);
    for (int c = 0; c < 3; ++c) {
        for (int y = 0; y < nh; ++y) {
            const double sy = src(y, h, nh);
            for (int x = 0; x < nw; ++x) {
                const double sx = src(x, w, nw);
                double acc = 0.0;
                for (int yy = 0; yy < h; ++yy) {
                    for (int xx = 0; xx < w; ++xx) {
                        const double wy = std::max(0.0, 1.0 - std::abs(sy - yy));
                        const double wx = std::max(0.0, 1.0 - std::abs(sx - xx));
                        acc += wy * wx * px(p, c, yy, xx);
                    }
                }
                out[c][y][x] = acc;
            }
        }
    }
    return out;
}

inline double max_abs_diff(const Grid& g, const Patch& p)
{
    double worst = 0.0;
    for (int c = 0; c < 3; ++c) {
        for (int y = 0; y < p.height(); ++y) {
            for (int x = 0; x < p.width(); ++x) {
                worst = std::max(worst, std::abs(g[c][y][x] - px(p, c, y, x)));
            }
        }
    }
    return worst;
}

struct Raster {
    Image image;
    std::vector<double> mask;
};

// Brute-force compositor: for every output pixel center, map back into patch
// texel coordinates and weight every texel by the bilinear tent. Texels are
// centered at integer coordinates (k + 0.5 in continuous patch space).
inline Raster composite(const Image& base, const std::vector<double>& patch, int ph, int pw,
                        const brpatch::TransformSample& t)
{
    const double a = t.angle_deg * 3.14159265358979323846 / 180.0;
    const double ca = std::cos(a);
    const double sa = std::sin(a);
    Raster r{base, std::vector<double>(static_cast<std::size_t>(base.height) * base.width, 0.0)};
    for (int y = 0; y < base.height; ++y) {
        for (int x = 0; x < base.width; ++x) {
            const double dx = x + 0.5 - t.cx;
            const double dy = y + 0.5 - t.cy;
            // inverse rotation and scale
            const double lx = (ca * dx + sa * dy) / t.scale;
            const double ly = (-sa * dx + ca * dy) / t.scale;
            const double u = lx + pw / 2.0 - 0.5;
            const double v = ly + ph / 2.0 - 0.5;
            double m = 0.0;
            std::array<double, 3> acc{0, 0, 0};
            for (int ky = 0; ky < ph; ++ky) {
                for (int kx = 0; kx < pw; ++kx) {
                    const double wgt = std::max(0.0, 1.0 - std::abs(u - kx)) * std::max(0.0, 1.0 - std::abs(v - ky));
                    if (wgt == 0.0) {
                        continue;
                    }
                    m += wgt;
                    for (int c = 0; c < 3; ++c) {
                        acc[c] += wgt * patch[(static_cast<std::size_t>(c) * ph + ky) * pw + kx];
                    }
                }
            }
            r.mask[static_cast<std::size_t>(y) * base.width + x] = m;
            if (m > 0.0) {
                for (int c = 0; c < 3; ++c) {
                    r.image.at(c, y, x) = acc[c] + (1.0 - m) * base.at(c, y, x);
                }
            }
        }
    }
    return r;
}

} // namespace oracle
