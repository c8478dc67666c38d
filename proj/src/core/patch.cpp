#include "brpatch/patch.hpp"

#include "brpatch/errors.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace brpatch {

namespace {

void check_dims(int height, int width)
{
    if (height < 1 || width < 1) {
        throw DomainError("patch dimensions must be positive, got " + std::to_string(height) + "x" +
                          std::to_string(width));
    }
}

} // namespace

Patch::Patch(int height, int width, std::vector<float> pixels, PatchMeta meta)
    : height_(height), width_(width), pixels_(std::move(pixels)), meta_(std::move(meta))
{
    check_dims(height, width);
    const std::size_t expected = static_cast<std::size_t>(kChannels) * height * width;
    if (pixels_.size() != expected) {
        throw DomainError("patch payload has " + std::to_string(pixels_.size()) + " values, expected " +
                          std::to_string(expected));
    }
    for (float v : pixels_) {
        if (!(v >= 0.0f && v <= 1.0f)) {
            throw DomainError("patch value outside [0,1]: " + std::to_string(v));
        }
    }
    if (meta_.lambda < 0.0 || !std::isfinite(meta_.lambda)) {
        throw DomainError("patch meta lambda must be >= 0");
    }
    if (!(meta_.brightness_range >= 0.0 && meta_.brightness_range <= 1.0)) {
        throw DomainError("patch meta brightness_range must lie in [0,1]");
    }
}

Patch Patch::clamped(int height, int width, std::span<const double> values, PatchMeta meta)
{
    std::vector<float> px(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
        const double v = values[i];
        if (std::isnan(v)) {
            throw DomainError("NaN pixel value");
        }
        px[i] = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
    return Patch(height, width, std::move(px), std::move(meta));
}

Patch Patch::filled(int height, int width, float value, PatchMeta meta)
{
    check_dims(height, width);
    return Patch(height, width, std::vector<float>(static_cast<std::size_t>(kChannels) * height * width, value),
                 std::move(meta));
}

std::vector<double> Patch::to_doubles() const
{
    return {pixels_.begin(), pixels_.end()};
}

Patch Patch::with_meta(PatchMeta meta) const
{
    Patch copy = *this;
    if (meta.lambda < 0.0 || !(meta.brightness_range >= 0.0 && meta.brightness_range <= 1.0)) {
        throw DomainError("invalid patch metadata");
    }
    copy.meta_ = std::move(meta);
    return copy;
}

bool Patch::same_pixels(const Patch& other) const noexcept
{
    return height_ == other.height_ && width_ == other.width_ && pixels_ == other.pixels_;
}

Image::Image(int h, int w, double fill)
    : height(h), width(w), data(static_cast<std::size_t>(kChannels) * h * w, fill)
{
}

Image Image::crop(int y0, int x0, int h, int w) const
{
    if (h < 1 || w < 1 || y0 < 0 || x0 < 0 || y0 + h > height || x0 + w > width) {
        throw DomainError("crop region outside image");
    }
    Image out(h, w);
    for (int c = 0; c < kChannels; ++c) {
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                out.at(c, y, x) = at(c, y0 + y, x0 + x);
            }
        }
    }
    return out;
}

ImageBatch::ImageBatch(int height, int width, std::vector<float> pixels, std::optional<std::vector<int>> labels)
    : height_(height), width_(width), pixels_(std::move(pixels)), labels_(std::move(labels))
{
    if (height < 1 || width < 1) {
        throw DomainError("image dimensions must be positive");
    }
    const std::size_t per = image_size();
    if (pixels_.size() % per != 0) {
        throw DomainError("image batch payload is not a whole number of images");
    }
    count_ = pixels_.size() / per;
    for (float v : pixels_) {
        if (!(v >= 0.0f && v <= 1.0f)) {
            throw DomainError("image value outside [0,1]");
        }
    }
    if (labels_ && labels_->size() != count_) {
        throw DomainError("label count does not match image count");
    }
    if (labels_) {
        for (int l : *labels_) {
            if (l < 0) {
                throw DomainError("negative class label");
            }
        }
    }
}

Image ImageBatch::image(std::size_t i) const
{
    Image img(height_, width_);
    const auto src = raw(i);
    std::copy(src.begin(), src.end(), img.data.begin());
    return img;
}

std::span<const float> ImageBatch::raw(std::size_t i) const
{
    if (i >= count_) {
        throw DomainError("image index out of range");
    }
    return std::span<const float>(pixels_).subspan(i * image_size(), image_size());
}

int ImageBatch::label(std::size_t i) const
{
    if (!labels_) {
        throw DomainError("image batch has no labels");
    }
    return labels_->at(i);
}

ImageBatch ImageBatch::subset(std::span<const std::size_t> indices) const
{
    std::vector<float> px;
    px.reserve(indices.size() * image_size());
    std::optional<std::vector<int>> lab;
    if (labels_) {
        lab.emplace();
        lab->reserve(indices.size());
    }
    for (std::size_t i : indices) {
        const auto src = raw(i);
        px.insert(px.end(), src.begin(), src.end());
        if (lab) {
            lab->push_back((*labels_)[i]);
        }
    }
    return ImageBatch(height_, width_, std::move(px), std::move(lab));
}

ImageBatch ImageBatch::slice(std::size_t begin, std::size_t end) const
{
    end = std::min(end, count_);
    begin = std::min(begin, end);
    std::vector<std::size_t> idx(end - begin);
    for (std::size_t i = 0; i < idx.size(); ++i) {
        idx[i] = begin + i;
    }
    return subset(idx);
}

ImageBatch ImageBatch::head(std::size_t n) const
{
    return slice(0, n);
}

void ImageBatch::validate_labels(int num_classes) const
{
    if (!labels_) {
        return;
    }
    for (int l : *labels_) {
        if (l < 0 || l >= num_classes) {
            throw DomainError("label " + std::to_string(l) + " is not a valid class index");
        }
    }
}

double pixel_brightness(double r, double g, double b)
{
    for (double v : {r, g, b}) {
        if (!(v >= 0.0 && v <= 1.0)) {
            throw DomainError("color component outside [0,1]: " + std::to_string(v));
        }
    }
    return std::max({r, g, b});
}

double pixel_brightness(const std::array<double, 3>& rgb)
{
    return pixel_brightness(rgb[0], rgb[1], rgb[2]);
}

BrightnessStats brightness_stats(const Patch& patch, int bins)
{
    if (bins < 1) {
        throw DomainError("histogram needs at least one bin");
    }
    BrightnessStats stats;
    stats.histogram.assign(static_cast<std::size_t>(bins), 0);
    stats.bin_edges.resize(static_cast<std::size_t>(bins) + 1);
    for (int i = 0; i <= bins; ++i) {
        stats.bin_edges[i] = static_cast<double>(i) / bins;
    }
    double lo = 1.0;
    double hi = 0.0;
    for (int y = 0; y < patch.height(); ++y) {
        for (int x = 0; x < patch.width(); ++x) {
            const double b = pixel_brightness(patch.at(0, y, x), patch.at(1, y, x), patch.at(2, y, x));
            lo = std::min(lo, b);
            hi = std::max(hi, b);
            // Uniform bins over [0,1); the value 1.0 lands in the last bin.
            auto bin = static_cast<int>(b * bins);
            bin = std::min(bin, bins - 1);
            ++stats.histogram[static_cast<std::size_t>(bin)];
        }
    }
    stats.min_b = lo;
    stats.max_b = hi;
    stats.range = hi - lo;
    return stats;
}

double brightness_range(const Patch& patch)
{
    return brightness_stats(patch, 1).range;
}

double mse(std::span<const double> a, std::span<const double> b)
{
    if (a.size() != b.size() || a.empty()) {
        throw DomainError("mse: shape mismatch (" + std::to_string(a.size()) + " vs " + std::to_string(b.size()) + ")");
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        acc += d * d;
    }
    return acc / static_cast<double>(a.size());
}

double mse(const Patch& a, const Patch& b)
{
    if (a.height() != b.height() || a.width() != b.width()) {
        throw DomainError("mse: shape mismatch");
    }
    return mse(a.to_doubles(), b.to_doubles());
}

} // namespace brpatch
