#pragma once

#include "brpatch/backend.hpp"
#include "brpatch/dataset.hpp"
#include "brpatch/evaluate.hpp"
#include "brpatch/perturb.hpp"
#include "brpatch/trainer.hpp"

#include <json.hpp>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace brpatch {

/// `backends` section. make-backends reads `dataset` (or generates `texture`
/// when no dataset is given) and the seeds; train/sweep/eval read the model
/// files.
struct BackendsSection {
    std::optional<std::filesystem::path> dataset;
    TextureDatasetConfig texture;
    std::optional<std::filesystem::path> source_model;
    std::optional<std::filesystem::path> target_model;
    std::uint64_t seed_source = 11;
    std::uint64_t seed_target = 22;
    ReferenceBackendConfig reference;
};

/// Training images come from the head of the train split, validation images
/// from the head of the test split.
struct TrainSection {
    TrainConfig config;
    std::size_t n_train_images = 400;
    std::size_t n_val_images = 500;
};

/// Evaluation images are test split [offset, offset + n_images), clipped.
struct EvalSection {
    TransformConfig transform;
    std::uint64_t seed = 99;
    std::size_t n_images = 1000;
    std::size_t offset = 500;
};

struct SweepSection {
    std::vector<double> lambdas = kDefaultLambdaGrid;
};

struct PerturbSection {
    std::vector<PerturbationSpec> suite = default_suite();
};

struct HueMapSection {
    double threshold = 0.2;
    std::optional<std::filesystem::path> region; // PNG crop of the scene
    HueShiftSign sign = HueShiftSign::toward_scene;
};

struct ExperimentConfig {
    BackendsSection backends;
    TrainSection train;
    EvalSection eval;
    SweepSection sweep;
    PerturbSection perturb;
    HueMapSection huemap;
};

/// Parses and validates a config document. Unknown keys, wrong types and
/// invalid values raise ConfigError; relative paths resolve against
/// `base_dir` and must exist (IoError otherwise).
ExperimentConfig parse_config(const nlohmann::json& doc, const std::filesystem::path& base_dir);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Fully resolved document (every default spelled out, absolute paths).
/// parse_config(to_json(c)) == c, so a snapshot reruns the same experiment.
nlohmann::json to_json(const ExperimentConfig& cfg);

nlohmann::json to_json(const PerturbationSpec& spec);
PerturbationSpec perturbation_from_json(const nlohmann::json& j);

/// Named suites: "default" (all nine rows), "feature" (original, transfer,
/// blur), "drift" (original + three drift levels), "size" (original + three
/// upscales). Anything else raises ConfigError.
std::vector<PerturbationSpec> parse_suite_name(const std::string& name);

} // namespace brpatch
