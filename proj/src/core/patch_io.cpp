#include "brpatch/patch_io.hpp"

#include "brpatch/errors.hpp"

#include <json.hpp>
#include <png.h>

#include <array>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

namespace brpatch {

namespace {

static_assert(std::endian::native == std::endian::little, "container I/O assumes a little-endian host");

using nlohmann::json;

json meta_to_json(const Patch& p)
{
    const PatchMeta& m = p.meta();
    return json{
        {"channels", p.channels()},
        {"height", p.height()},
        {"width", p.width()},
        {"target_class", m.target_class},
        {"lambda", m.lambda},
        {"brightness_range", m.brightness_range},
        {"seed", m.seed},
        {"source_model_id", m.source_model_id},
        {"epochs_trained", m.epochs_trained},
        {"created", m.created},
    };
}

std::string path_str(const std::filesystem::path& path)
{
    return path.string();
}

} // namespace

void save_patch(const Patch& patch, const std::filesystem::path& path)
{
    const std::string meta = meta_to_json(patch).dump();
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError(IoErrorKind::open_failed, "cannot open for writing: " + path_str(path));
    }
    out.write(kPatchMagic.data(), static_cast<std::streamsize>(kPatchMagic.size()));
    const auto len = static_cast<std::uint32_t>(meta.size());
    out.write(reinterpret_cast<const char*>(&len), sizeof len);
    out.write(meta.data(), static_cast<std::streamsize>(meta.size()));
    const auto px = patch.pixels();
    out.write(reinterpret_cast<const char*>(px.data()), static_cast<std::streamsize>(px.size_bytes()));
    if (!out) {
        throw IoError(IoErrorKind::write_failed, "write failed: " + path_str(path));
    }
}

Patch load_patch(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError(IoErrorKind::open_failed, "cannot open: " + path_str(path));
    }
    std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    const std::size_t header = kPatchMagic.size() + sizeof(std::uint32_t);
    if (bytes.size() < header || std::memcmp(bytes.data(), kPatchMagic.data(), kPatchMagic.size()) != 0) {
        throw IoError(IoErrorKind::corrupt_header, "corrupt header: not a BRPATCH1 file: " + path_str(path));
    }
    std::uint32_t meta_len = 0;
    std::memcpy(&meta_len, bytes.data() + kPatchMagic.size(), sizeof meta_len);
    if (bytes.size() - header < meta_len) {
        throw IoError(IoErrorKind::corrupt_header, "corrupt header: metadata length exceeds file size");
    }

    json meta;
    PatchMeta m;
    int channels = 0;
    int height = 0;
    int width = 0;
    try {
        meta = json::parse(bytes.begin() + static_cast<std::ptrdiff_t>(header),
                           bytes.begin() + static_cast<std::ptrdiff_t>(header + meta_len));
        channels = meta.at("channels").get<int>();
        height = meta.at("height").get<int>();
        width = meta.at("width").get<int>();
        m.target_class = meta.at("target_class").get<int>();
        m.lambda = meta.at("lambda").get<double>();
        m.brightness_range = meta.at("brightness_range").get<double>();
        m.seed = meta.at("seed").get<std::uint64_t>();
        m.source_model_id = meta.at("source_model_id").get<std::string>();
        m.epochs_trained = meta.at("epochs_trained").get<int>();
        m.created = meta.at("created").get<std::string>();
    } catch (const json::exception& e) {
        throw IoError(IoErrorKind::metadata_parse, std::string("metadata parse failure: ") + e.what());
    }
    if (channels != kChannels || height < 1 || width < 1) {
        throw IoError(IoErrorKind::metadata_parse, "metadata declares unsupported shape");
    }

    const std::size_t count = static_cast<std::size_t>(channels) * height * width;
    const std::size_t payload = bytes.size() - header - meta_len;
    if (payload != count * sizeof(float)) {
        throw IoError(IoErrorKind::payload_length_mismatch,
                      "payload length mismatch: expected " + std::to_string(count * sizeof(float)) + " bytes, found " +
                          std::to_string(payload));
    }
    std::vector<float> px(count);
    std::memcpy(px.data(), bytes.data() + header + meta_len, count * sizeof(float));
    try {
        return Patch(height, width, std::move(px), std::move(m));
    } catch (const DomainError& e) {
        throw IoError(IoErrorKind::metadata_parse, std::string("invalid patch contents: ") + e.what());
    }
}

std::uint8_t quantize_u8(double v) noexcept
{
    const double c = std::clamp(v, 0.0, 1.0);
    return static_cast<std::uint8_t>(std::lround(c * 255.0));
}

namespace {

struct PngWriteHandle {
    png_structp png = nullptr;
    png_infop info = nullptr;
    ~PngWriteHandle() { png_destroy_write_struct(&png, &info); }
};

struct PngReadHandle {
    png_structp png = nullptr;
    png_infop info = nullptr;
    ~PngReadHandle() { png_destroy_read_struct(&png, &info, nullptr); }
};

struct FileCloser {
    void operator()(std::FILE* f) const noexcept { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

void write_rgb_png(int height, int width, const std::vector<std::uint8_t>& rgb, const std::filesystem::path& path)
{
    FilePtr fp(std::fopen(path.c_str(), "wb"));
    if (!fp) {
        throw IoError(IoErrorKind::open_failed, "cannot open for writing: " + path_str(path));
    }
    PngWriteHandle h;
    h.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!h.png) {
        throw IoError(IoErrorKind::write_failed, "png_create_write_struct failed");
    }
    h.info = png_create_info_struct(h.png);
    if (!h.info || setjmp(png_jmpbuf(h.png))) {
        throw IoError(IoErrorKind::write_failed, "PNG encoding failed: " + path_str(path));
    }
    png_init_io(h.png, fp.get());
    png_set_IHDR(h.png, h.info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8,
                 PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(h.png, h.info);
    for (int y = 0; y < height; ++y) {
        png_write_row(h.png, rgb.data() + static_cast<std::size_t>(y) * width * 3);
    }
    png_write_end(h.png, nullptr);
}

template <typename Get>
std::vector<std::uint8_t> interleave(int height, int width, Get get)
{
    std::vector<std::uint8_t> rgb(static_cast<std::size_t>(height) * width * 3);
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            for (int c = 0; c < 3; ++c) {
                rgb[(static_cast<std::size_t>(y) * width + x) * 3 + c] = quantize_u8(get(c, y, x));
            }
        }
    }
    return rgb;
}

} // namespace

void export_png(const Patch& patch, const std::filesystem::path& path)
{
    write_rgb_png(patch.height(), patch.width(),
                  interleave(patch.height(), patch.width(), [&](int c, int y, int x) { return patch.at(c, y, x); }),
                  path);
}

void export_png(const Image& image, const std::filesystem::path& path)
{
    write_rgb_png(image.height, image.width,
                  interleave(image.height, image.width, [&](int c, int y, int x) { return image.at(c, y, x); }),
                  path);
}

Patch import_png(const std::filesystem::path& path)
{
    FilePtr fp(std::fopen(path.c_str(), "rb"));
    if (!fp) {
        throw IoError(IoErrorKind::open_failed, "cannot open: " + path_str(path));
    }
    std::array<unsigned char, 8> sig{};
    if (std::fread(sig.data(), 1, sig.size(), fp.get()) != sig.size() || png_sig_cmp(sig.data(), 0, sig.size()) != 0) {
        throw IoError(IoErrorKind::corrupt_header, "not a PNG file: " + path_str(path));
    }
    PngReadHandle h;
    h.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!h.png) {
        throw IoError(IoErrorKind::unsupported_format, "png_create_read_struct failed");
    }
    h.info = png_create_info_struct(h.png);
    if (!h.info || setjmp(png_jmpbuf(h.png))) {
        throw IoError(IoErrorKind::corrupt_header, "PNG decoding failed: " + path_str(path));
    }
    png_init_io(h.png, fp.get());
    png_set_sig_bytes(h.png, static_cast<int>(sig.size()));
    png_read_info(h.png, h.info);

    const auto width = static_cast<int>(png_get_image_width(h.png, h.info));
    const auto height = static_cast<int>(png_get_image_height(h.png, h.info));
    const int depth = png_get_bit_depth(h.png, h.info);
    const int color = png_get_color_type(h.png, h.info);
    if (depth != 8 || color != PNG_COLOR_TYPE_RGB) {
        throw IoError(IoErrorKind::unsupported_format,
                      "expected 8-bit RGB PNG (bit depth " + std::to_string(depth) + ", color type " +
                          std::to_string(color) + ")");
    }
    std::vector<std::uint8_t> rgb(static_cast<std::size_t>(height) * width * 3);
    std::vector<png_bytep> rows(static_cast<std::size_t>(height));
    for (int y = 0; y < height; ++y) {
        rows[y] = rgb.data() + static_cast<std::size_t>(y) * width * 3;
    }
    png_read_image(h.png, rows.data());
    png_read_end(h.png, nullptr);

    std::vector<float> px(rgb.size());
    for (int c = 0; c < 3; ++c) {
        for (int y = 0; y < height; ++y) {
            for (int x = 0; x < width; ++x) {
                px[(static_cast<std::size_t>(c) * height + y) * width + x] =
                    static_cast<float>(rgb[(static_cast<std::size_t>(y) * width + x) * 3 + c] / 255.0);
            }
        }
    }
    return Patch(height, width, std::move(px));
}

Patch load_patch_any(const std::filesystem::path& path)
{
    return path.extension() == ".png" ? import_png(path) : load_patch(path);
}

void save_patch_any(const Patch& patch, const std::filesystem::path& path)
{
    if (path.extension() == ".png") {
        export_png(patch, path);
    } else {
        save_patch(patch, path);
    }
}

} // namespace brpatch
