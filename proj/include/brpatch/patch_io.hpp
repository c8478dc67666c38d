#pragma once

#include "brpatch/patch.hpp"

#include <filesystem>
#include <string_view>

namespace brpatch {

/// `.brp` container: "BRPATCH1", u32 LE metadata length, UTF-8 JSON metadata,
/// then channels*height*width LE float32 in channel-major, row-major order.
inline constexpr std::string_view kPatchMagic = "BRPATCH1";

void save_patch(const Patch& patch, const std::filesystem::path& path);
Patch load_patch(const std::filesystem::path& path);

/// 8-bit RGB PNG, no alpha. Each value is quantized as round(v * 255) with
/// halves rounded away from zero.
void export_png(const Patch& patch, const std::filesystem::path& path);
Patch import_png(const std::filesystem::path& path);

/// Same quantization for arbitrary images (used for composed-image previews).
void export_png(const Image& image, const std::filesystem::path& path);

std::uint8_t quantize_u8(double v) noexcept;

/// Loads `.png` through import_png and anything else through load_patch.
Patch load_patch_any(const std::filesystem::path& path);
void save_patch_any(const Patch& patch, const std::filesystem::path& path);

} // namespace brpatch
