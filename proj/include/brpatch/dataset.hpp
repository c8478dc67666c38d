#pragma once

#include "brpatch/patch.hpp"

#include <cstdint>
#include <filesystem>
#include <string>

namespace brpatch {

inline constexpr int kTextureClasses = 10;

/// Procedural 10-class texture dataset. Each image holds one textured object
/// (disc or square) on a smooth two-color gradient. The class is the texture
/// family; colors, contrast, period, phase, position and size are random, so
/// class evidence is carried by local texture rather than color.
///
/// Classes: 0 horizontal stripes, 1 vertical stripes, 2 diagonal, 3
/// anti-diagonal, 4 checkerboard, 5 dots, 6 rings, 7 grid lines, 8 waves,
/// 9 spokes.
struct TextureDatasetConfig {
    std::uint64_t seed = 1;
    int n_train = 5000;
    int n_test = 1500;
    int image_size = 32;
    double contrast_min = 0.35;
    double contrast_max = 0.8;
    double radius_min = 7.0; // pixels
    double radius_max = 11.0;
    double period_min = 3.5; // pixels
    double period_max = 6.0;
    double noise = 0.02;

    void validate() const;
    bool operator==(const TextureDatasetConfig&) const = default;
};

struct Dataset {
    ImageBatch train;
    ImageBatch test;
    int num_classes = kTextureClasses;
};

/// Image `index` of a split is a pure function of (split seed, index).
Image generate_texture_image(const TextureDatasetConfig& cfg, std::uint64_t split_seed, int index, int label);

Dataset generate_texture_dataset(const TextureDatasetConfig& cfg);

/// Single-split file: "BRDATA01", u32 LE JSON length, JSON header
/// {count, height, width, num_classes}, then count*3*H*W uint8 pixels
/// (channel-major per image) and count int32 LE labels.
void save_image_batch(const ImageBatch& batch, int num_classes, const std::filesystem::path& path);
ImageBatch load_image_batch(const std::filesystem::path& path, int* num_classes = nullptr);

/// Directory holding train.brd and test.brd. Throws IoError("dataset missing")
/// when the directory or either split is absent.
void save_dataset(const Dataset& data, const std::filesystem::path& dir);
Dataset load_dataset(const std::filesystem::path& dir);

} // namespace brpatch
