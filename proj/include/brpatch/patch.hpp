#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace brpatch {

inline constexpr int kChannels = 3;
inline constexpr int kDefaultHistogramBins = 64;

struct PatchMeta {
    int target_class = 0;
    double lambda = 0.0;
    double brightness_range = 0.0; // measured, never enforced
    std::uint64_t seed = 0;
    std::string source_model_id;
    int epochs_trained = 0;
    std::string created = "1970-01-01T00:00:00Z";

    bool operator==(const PatchMeta&) const = default;
};

/// An attack patch: 3 x height x width float pixels in [0,1], channel-major.
///
/// Patches are immutable values. Operations that change pixels build a new
/// Patch through `Patch::clamped`, which saturates every element into [0,1].
class Patch {
public:
    /// Validating constructor: throws DomainError on bad dims, wrong payload
    /// length, NaN or out-of-range values.
    Patch(int height, int width, std::vector<float> pixels, PatchMeta meta = {});

    /// Builds a patch from arbitrary doubles, clamping each element to [0,1].
    static Patch clamped(int height, int width, std::span<const double> values, PatchMeta meta = {});

    static Patch filled(int height, int width, float value, PatchMeta meta = {});

    int channels() const noexcept { return kChannels; }
    int height() const noexcept { return height_; }
    int width() const noexcept { return width_; }
    std::size_t size() const noexcept { return pixels_.size(); }
    std::size_t plane_size() const noexcept { return static_cast<std::size_t>(height_) * width_; }

    float at(int c, int y, int x) const noexcept
    {
        return pixels_[(static_cast<std::size_t>(c) * height_ + y) * width_ + x];
    }

    std::span<const float> pixels() const noexcept { return pixels_; }
    std::vector<double> to_doubles() const;

    const PatchMeta& meta() const noexcept { return meta_; }
    Patch with_meta(PatchMeta meta) const;

    bool same_pixels(const Patch& other) const noexcept;

private:
    int height_;
    int width_;
    std::vector<float> pixels_;
    PatchMeta meta_;
};

/// A single 3-channel image held in double precision for compositing and
/// inference. Layout matches Patch (channel-major, row-major).
struct Image {
    int height = 0;
    int width = 0;
    std::vector<double> data;

    Image() = default;
    Image(int h, int w, double fill = 0.0);

    double& at(int c, int y, int x) noexcept { return data[(static_cast<std::size_t>(c) * height + y) * width + x]; }
    double at(int c, int y, int x) const noexcept
    {
        return data[(static_cast<std::size_t>(c) * height + y) * width + x];
    }
    std::size_t plane_size() const noexcept { return static_cast<std::size_t>(height) * width; }

    /// Copies the crop [y0, y0+h) x [x0, x0+w). Throws DomainError if outside.
    Image crop(int y0, int x0, int h, int w) const;
};

/// N x 3 x H x W images in [0,1] with optional true labels.
class ImageBatch {
public:
    ImageBatch() = default;
    ImageBatch(int height, int width, std::vector<float> pixels, std::optional<std::vector<int>> labels = std::nullopt);

    std::size_t size() const noexcept { return count_; }
    bool empty() const noexcept { return count_ == 0; }
    int height() const noexcept { return height_; }
    int width() const noexcept { return width_; }
    std::size_t image_size() const noexcept { return static_cast<std::size_t>(kChannels) * height_ * width_; }

    Image image(std::size_t i) const;
    std::span<const float> raw(std::size_t i) const;
    std::span<const float> pixels() const noexcept { return pixels_; }

    bool has_labels() const noexcept { return labels_.has_value(); }
    int label(std::size_t i) const;
    const std::optional<std::vector<int>>& labels() const noexcept { return labels_; }

    ImageBatch subset(std::span<const std::size_t> indices) const;
    ImageBatch head(std::size_t n) const;
    ImageBatch slice(std::size_t begin, std::size_t end) const;

    /// Checks label indices against a class count; throws DomainError.
    void validate_labels(int num_classes) const;

private:
    int height_ = 0;
    int width_ = 0;
    std::size_t count_ = 0;
    std::vector<float> pixels_;
    std::optional<std::vector<int>> labels_;
};

struct BrightnessStats {
    double min_b = 0.0;
    double max_b = 0.0;
    double range = 0.0;
    std::vector<std::size_t> histogram;
    std::vector<double> bin_edges; // bins + 1 edges over [0,1]
};

/// HSB brightness of one RGB pixel: max(R, G, B). Throws DomainError when a
/// component lies outside [0,1].
double pixel_brightness(double r, double g, double b);
double pixel_brightness(const std::array<double, 3>& rgb);

BrightnessStats brightness_stats(const Patch& patch, int bins = kDefaultHistogramBins);

/// max - min of per-pixel brightness.
double brightness_range(const Patch& patch);

/// Mean over all elements of squared differences.
double mse(std::span<const double> a, std::span<const double> b);
double mse(const Patch& a, const Patch& b);

} // namespace brpatch
