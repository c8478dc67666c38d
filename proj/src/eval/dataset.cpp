#include "brpatch/dataset.hpp"

#include "brpatch/errors.hpp"
#include "brpatch/parallel.hpp"
#include "brpatch/patch_io.hpp"
#include "brpatch/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>

namespace brpatch {

namespace {

constexpr std::string_view kDataMagic = "BRDATA01";

double signed_sqrt(double v)
{
    return std::copysign(std::sqrt(std::abs(v)), v);
}

double texture_value(int label, double u, double v, double w, double phase)
{
    using std::cos;
    using std::sin;
    constexpr double inv_sqrt2 = 0.70710678118654752440;
    switch (label) {
    case 0: return sin(w * v + phase);
    case 1: return sin(w * u + phase);
    case 2: return sin(w * (u + v) * inv_sqrt2 + phase);
    case 3: return sin(w * (u - v) * inv_sqrt2 + phase);
    case 4: return sin(w * u + phase) * sin(w * v + phase);
    case 5: return std::max(cos(w * u + phase) * cos(w * v + phase), 0.0) * 2.0 - 1.0;
    case 6: return sin(w * std::hypot(u, v) + phase);
    case 7: return std::max(std::pow(cos(w * u + phase), 8), std::pow(cos(w * v + phase), 8)) * 2.0 - 1.0;
    case 8: return sin(w * v + 2.0 * sin(w * 0.5 * u) + phase);
    default: return sin(6.0 * std::atan2(v, u) + phase);
    }
}

} // namespace

void TextureDatasetConfig::validate() const
{
    if (n_train < 1 || n_test < 1 || image_size < 8) {
        throw DomainError("texture dataset needs positive split sizes and image_size >= 8");
    }
    if (!(0.0 <= contrast_min && contrast_min <= contrast_max && contrast_max <= 1.0)) {
        throw DomainError("texture contrast range must be ordered inside [0,1]");
    }
    if (!(0.0 < radius_min && radius_min <= radius_max && 2.0 * radius_max < image_size)) {
        throw DomainError("texture object radius range must be ordered and fit the image");
    }
    if (!(1.0 < period_min && period_min <= period_max)) {
        throw DomainError("texture period range must be ordered and above one pixel");
    }
    if (noise < 0.0) {
        throw DomainError("texture noise must be nonnegative");
    }
}

Image generate_texture_image(const TextureDatasetConfig& cfg, std::uint64_t split_seed, int index, int label)
{
    Rng rng(derive_seed(split_seed, static_cast<std::uint64_t>(index)));
    const int s = cfg.image_size;
    const double half = 0.5 * s;

    std::array<double, 3> c0{};
    std::array<double, 3> c1{};
    for (auto& c : c0) {
        c = rng.uniform(0.2, 0.8);
    }
    for (auto& c : c1) {
        c = rng.uniform(0.2, 0.8);
    }
    const double grad_angle = rng.uniform(0.0, 2.0 * std::numbers::pi);

    const double period = rng.uniform(cfg.period_min, cfg.period_max);
    const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double w = 2.0 * std::numbers::pi / period;
    const double margin = cfg.radius_max;
    const double cx = rng.uniform(margin, s - margin);
    const double cy = rng.uniform(margin, s - margin);

    std::array<double, 3> fa{};
    std::array<double, 3> fb{};
    for (auto& c : fa) {
        c = rng.uniform();
    }
    for (auto& c : fb) {
        c = rng.uniform();
    }
    const double contrast = rng.uniform(cfg.contrast_min, cfg.contrast_max);
    std::array<double, 3> mid{};
    std::array<double, 3> dir{};
    double norm = 0.0;
    for (int c = 0; c < 3; ++c) {
        mid[c] = 0.5 * (fa[c] + fb[c]);
        dir[c] = fa[c] - fb[c];
        norm += dir[c] * dir[c];
    }
    norm = std::sqrt(norm) + 1e-9;
    for (auto& d : dir) {
        d = d / norm * contrast * 0.5;
    }
    const double radius = rng.uniform(cfg.radius_min, cfg.radius_max);
    const bool disc = rng.below(2) == 0;

    Image img(s, s);
    for (int y = 0; y < s; ++y) {
        for (int x = 0; x < s; ++x) {
            const double t =
                std::clamp(((x - half) * std::cos(grad_angle) + (y - half) * std::sin(grad_angle)) / s + 0.5, 0.0, 1.0);
            const double u = x - cx;
            const double v = y - cy;
            const bool inside = disc ? std::hypot(u, v) <= radius
                                     : (std::abs(u) <= 0.9 * radius && std::abs(v) <= 0.9 * radius);
            const double f = inside ? signed_sqrt(texture_value(label, u, v, w, phase)) : 0.0;
            for (int c = 0; c < 3; ++c) {
                img.at(c, y, x) = inside ? mid[c] + dir[c] * f : c0[c] * (1.0 - t) + c1[c] * t;
            }
        }
    }
    if (cfg.noise > 0.0) {
        for (double& px : img.data) {
            px += cfg.noise * rng.normal();
        }
    }
    for (double& px : img.data) {
        px = std::clamp(px, 0.0, 1.0);
    }
    return img;
}

namespace {

ImageBatch generate_split(const TextureDatasetConfig& cfg, std::uint64_t split_seed, int count)
{
    const std::size_t per = static_cast<std::size_t>(kChannels) * cfg.image_size * cfg.image_size;
    std::vector<float> pixels(per * count);
    std::vector<int> labels(static_cast<std::size_t>(count));
    parallel_for(static_cast<std::size_t>(count), [&](std::size_t i) {
        const int label = static_cast<int>(i % kTextureClasses);
        const Image img = generate_texture_image(cfg, split_seed, static_cast<int>(i), label);
        std::transform(img.data.begin(), img.data.end(), pixels.begin() + static_cast<std::ptrdiff_t>(i * per),
                       [](double v) { return static_cast<float>(v); });
        labels[i] = label;
    });
    return ImageBatch(cfg.image_size, cfg.image_size, std::move(pixels), std::move(labels));
}

} // namespace

Dataset generate_texture_dataset(const TextureDatasetConfig& cfg)
{
    cfg.validate();
    Dataset data;
    data.train = generate_split(cfg, derive_seed(cfg.seed, 1), cfg.n_train);
    data.test = generate_split(cfg, derive_seed(cfg.seed, 2), cfg.n_test);
    data.num_classes = kTextureClasses;
    return data;
}

void save_image_batch(const ImageBatch& batch, int num_classes, const std::filesystem::path& path)
{
    if (!batch.has_labels()) {
        throw DomainError("dataset files require labels");
    }
    const std::string header = nlohmann::json{{"count", batch.size()},
                                              {"height", batch.height()},
                                              {"width", batch.width()},
                                              {"num_classes", num_classes}}
                                   .dump();
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError(IoErrorKind::open_failed, "cannot open for writing: " + path.string());
    }
    out.write(kDataMagic.data(), static_cast<std::streamsize>(kDataMagic.size()));
    const auto len = static_cast<std::uint32_t>(header.size());
    out.write(reinterpret_cast<const char*>(&len), sizeof len);
    out.write(header.data(), static_cast<std::streamsize>(header.size()));
    std::vector<std::uint8_t> bytes(batch.pixels().size());
    std::transform(batch.pixels().begin(), batch.pixels().end(), bytes.begin(),
                   [](float v) { return quantize_u8(v); });
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    std::vector<std::int32_t> labels(batch.labels()->begin(), batch.labels()->end());
    out.write(reinterpret_cast<const char*>(labels.data()), static_cast<std::streamsize>(labels.size() * 4));
    if (!out) {
        throw IoError(IoErrorKind::write_failed, "write failed: " + path.string());
    }
}

ImageBatch load_image_batch(const std::filesystem::path& path, int* num_classes)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError(IoErrorKind::open_failed, "dataset missing: cannot open " + path.string());
    }
    std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    const std::size_t head = kDataMagic.size() + 4;
    if (bytes.size() < head || std::memcmp(bytes.data(), kDataMagic.data(), kDataMagic.size()) != 0) {
        throw IoError(IoErrorKind::corrupt_header, "corrupt header: not a BRDATA01 file: " + path.string());
    }
    std::uint32_t len = 0;
    std::memcpy(&len, bytes.data() + kDataMagic.size(), 4);
    if (bytes.size() - head < len) {
        throw IoError(IoErrorKind::corrupt_header, "corrupt header: metadata length exceeds file size");
    }
    std::size_t count = 0;
    int height = 0;
    int width = 0;
    int classes = 0;
    try {
        const auto meta = nlohmann::json::parse(bytes.begin() + static_cast<std::ptrdiff_t>(head),
                                                bytes.begin() + static_cast<std::ptrdiff_t>(head + len));
        count = meta.at("count").get<std::size_t>();
        height = meta.at("height").get<int>();
        width = meta.at("width").get<int>();
        classes = meta.at("num_classes").get<int>();
    } catch (const nlohmann::json::exception& e) {
        throw IoError(IoErrorKind::metadata_parse, std::string("metadata parse failure: ") + e.what());
    }
    const std::size_t n_px = count * kChannels * static_cast<std::size_t>(height) * width;
    if (bytes.size() - head - len != n_px + count * 4) {
        throw IoError(IoErrorKind::payload_length_mismatch, "payload length mismatch in " + path.string());
    }
    const auto* src = reinterpret_cast<const std::uint8_t*>(bytes.data() + head + len);
    std::vector<float> pixels(n_px);
    for (std::size_t i = 0; i < n_px; ++i) {
        pixels[i] = static_cast<float>(src[i] / 255.0);
    }
    std::vector<std::int32_t> raw(count);
    std::memcpy(raw.data(), bytes.data() + head + len + n_px, count * 4);
    ImageBatch batch(height, width, std::move(pixels), std::vector<int>(raw.begin(), raw.end()));
    batch.validate_labels(classes);
    if (num_classes) {
        *num_classes = classes;
    }
    return batch;
}

void save_dataset(const Dataset& data, const std::filesystem::path& dir)
{
    std::filesystem::create_directories(dir);
    save_image_batch(data.train, data.num_classes, dir / "train.brd");
    save_image_batch(data.test, data.num_classes, dir / "test.brd");
}

Dataset load_dataset(const std::filesystem::path& dir)
{
    if (!std::filesystem::is_directory(dir) || !std::filesystem::exists(dir / "train.brd") ||
        !std::filesystem::exists(dir / "test.brd")) {
        throw IoError(IoErrorKind::open_failed, "dataset missing: expected train.brd and test.brd in " + dir.string());
    }
    Dataset data;
    int train_classes = 0;
    int test_classes = 0;
    data.train = load_image_batch(dir / "train.brd", &train_classes);
    data.test = load_image_batch(dir / "test.brd", &test_classes);
    if (train_classes != test_classes) {
        throw IoError(IoErrorKind::metadata_parse, "train and test splits disagree on the class count");
    }
    data.num_classes = train_classes;
    return data;
}

} // namespace brpatch
