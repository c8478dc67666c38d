#pragma once

#include "brpatch/patch.hpp"

#include <filesystem>
#include <span>
#include <utility>

namespace brpatch {

/// Line-and-marker chart of (brightness range, ASR) points on unit axes,
/// connected in ascending range order. Axis-only rendering; no text.
void plot_asr_vs_range(std::span<const std::pair<double, double>> points, const std::filesystem::path& path);

/// Bar chart of a brightness histogram, bars scaled to the tallest bin.
void plot_histogram(const BrightnessStats& stats, const std::filesystem::path& path);

} // namespace brpatch
