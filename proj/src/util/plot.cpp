#include "brpatch/plot.hpp"

#include "brpatch/patch_io.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

namespace brpatch {

namespace {

constexpr int kW = 480;
constexpr int kH = 320;
constexpr int kMargin = 30;

using Rgb = std::array<double, 3>;

struct Canvas {
    Image img{kH, kW, 1.0};

    void set(int x, int y, const Rgb& c)
    {
        if (x < 0 || y < 0 || x >= kW || y >= kH) {
            return;
        }
        for (int ch = 0; ch < 3; ++ch) {
            img.at(ch, y, x) = c[static_cast<std::size_t>(ch)];
        }
    }

    void rect(int x0, int y0, int x1, int y1, const Rgb& c)
    {
        for (int y = std::min(y0, y1); y <= std::max(y0, y1); ++y) {
            for (int x = std::min(x0, x1); x <= std::max(x0, x1); ++x) {
                set(x, y, c);
            }
        }
    }

    // Bresenham
    void line(int x0, int y0, int x1, int y1, const Rgb& c)
    {
        const int dx = std::abs(x1 - x0);
        const int dy = -std::abs(y1 - y0);
        const int sx = x0 < x1 ? 1 : -1;
        const int sy = y0 < y1 ? 1 : -1;
        int err = dx + dy;
        for (;;) {
            set(x0, y0, c);
            if (x0 == x1 && y0 == y1) {
                break;
            }
            const int e2 = 2 * err;
            if (e2 >= dy) {
                err += dy;
                x0 += sx;
            }
            if (e2 <= dx) {
                err += dx;
                y0 += sy;
            }
        }
    }
};

int px(double u) { return kMargin + static_cast<int>(std::lround(u * (kW - 2 * kMargin))); }
int py(double v) { return kH - kMargin - static_cast<int>(std::lround(v * (kH - 2 * kMargin))); }

void axes(Canvas& c)
{
    const Rgb grid{0.88, 0.88, 0.88};
    for (int k = 1; k <= 4; ++k) {
        c.line(px(k / 4.0), py(0), px(k / 4.0), py(1), grid);
        c.line(px(0), py(k / 4.0), px(1), py(k / 4.0), grid);
    }
    const Rgb black{0, 0, 0};
    c.line(px(0), py(0), px(1), py(0), black);
    c.line(px(0), py(0), px(0), py(1), black);
    for (int k = 0; k <= 4; ++k) {
        c.line(px(k / 4.0), py(0), px(k / 4.0), py(0) + 4, black);
        c.line(px(0) - 4, py(k / 4.0), px(0), py(k / 4.0), black);
    }
}

} // namespace

void plot_asr_vs_range(std::span<const std::pair<double, double>> points, const std::filesystem::path& path)
{
    Canvas c;
    axes(c);
    std::vector<std::pair<double, double>> pts(points.begin(), points.end());
    std::stable_sort(pts.begin(), pts.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    const Rgb blue{0.12, 0.35, 0.75};
    for (std::size_t i = 1; i < pts.size(); ++i) {
        c.line(px(pts[i - 1].first), py(pts[i - 1].second), px(pts[i].first), py(pts[i].second), blue);
    }
    for (const auto& [x, y] : pts) {
        c.rect(px(x) - 3, py(y) - 3, px(x) + 3, py(y) + 3, blue);
    }
    export_png(c.img, path);
}

void plot_histogram(const BrightnessStats& stats, const std::filesystem::path& path)
{
    Canvas c;
    axes(c);
    const auto peak = stats.histogram.empty() ? 0 : *std::max_element(stats.histogram.begin(), stats.histogram.end());
    const double bins = static_cast<double>(stats.histogram.size());
    const Rgb bar{0.85, 0.45, 0.1};
    for (std::size_t b = 0; b < stats.histogram.size() && peak > 0; ++b) {
        const double h = static_cast<double>(stats.histogram[b]) / static_cast<double>(peak);
        if (h > 0.0) {
            c.rect(px(b / bins) + 1, py(0) - 1, px((b + 1) / bins) - 1, py(h), bar);
        }
    }
    export_png(c.img, path);
}

} // namespace brpatch
