#pragma once

#include "brpatch/backend.hpp"
#include "brpatch/compositor.hpp"
#include "brpatch/patch.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace brpatch {

struct ImageOutcome {
    std::size_t image_index = 0;
    TransformSample transform;
    int predicted = -1;
    double target_prob = 0.0;
};

struct ImageFailure {
    std::size_t image_index = 0;
    std::string message;
};

struct EvalReport {
    std::string patch_id;
    std::string model_id;
    int target_class = 0;
    std::size_t n_images = 0;   // evaluated images (denominator)
    std::size_t n_success = 0;
    std::size_t n_excluded = 0; // true label already equals the target
    double asr = 0.0;
    std::vector<ImageOutcome> per_image;
    std::vector<ImageFailure> failures;
    nlohmann::json config_snapshot;
    std::uint64_t master_seed = 0;
};

/// Gray-box/white-box attack success rate of one patch.
///
/// For image i a transform is drawn from Rng(derive_seed(seed, i)), the patch
/// is composited and the backend's top-1 class compared with the target.
/// Images whose true label equals the target are excluded from numerator and
/// denominator. Backend exceptions are recorded per image; more than 1% of
/// failures aborts with BackendError.
EvalReport evaluate_asr(const Patch& patch, const ImageBatch& images, int target_class,
                        const ClassifierBackend& backend, const TransformConfig& tcfg, std::uint64_t seed,
                        std::string patch_id = {});

nlohmann::json to_json(const EvalReport& report);
nlohmann::json to_json(const TransformConfig& cfg);
void write_eval_json(const EvalReport& report, const std::filesystem::path& path);
void write_eval_csv(const EvalReport& report, const std::filesystem::path& path);

enum class PerturbationKind { original, color_transfer, gaussian_blur3, color_drift, resize, hue_map };

struct PerturbationSpec {
    PerturbationKind kind = PerturbationKind::original;
    /// delta for color_transfer (nullopt picks +-0.05 inside the allowed
    /// interval), q for color_drift, linear scale factor for resize.
    std::optional<double> value;
};

/// original, color transfer, blur, drift at 10/15/20%, bilinear 1.2x/1.4x/1.6x.
std::vector<PerturbationSpec> default_suite();

const char* to_string(PerturbationKind kind) noexcept;

struct RobustnessRow {
    std::string label;
    std::string table; // "feature", "drift" or "size"
    PerturbationKind kind = PerturbationKind::original;
    double parameter = 0.0;
    int patch_height = 0;
    int patch_width = 0;
    EvalReport report;
};

struct RobustnessTable {
    std::vector<RobustnessRow> rows;
    std::uint64_t master_seed = 0;
    int target_class = 0;
};

/// Applies each perturbation to the patch and evaluates it with the same
/// image set and master seed, so rows are paired. Color drift uses one noise
/// seed derived from the master seed for every q.
RobustnessTable robustness_table(const Patch& patch, const std::vector<PerturbationSpec>& suite,
                                 const ImageBatch& images, int target_class, const ClassifierBackend& backend,
                                 const TransformConfig& tcfg, std::uint64_t seed);

/// Perturbed patch for one suite entry; also returns the parameter actually used.
std::pair<Patch, double> apply_perturbation(const Patch& patch, const PerturbationSpec& spec, std::uint64_t seed);

nlohmann::json to_json(const RobustnessTable& table);
void write_robustness_csv(const RobustnessTable& table, const std::filesystem::path& path);

struct BrightnessRow {
    std::string name;
    BrightnessStats stats;
};

/// One BrightnessStats row per patch, in input order. Throws DomainError on an
/// empty list.
std::vector<BrightnessRow> brightness_report(const std::vector<Patch>& patches, const std::vector<std::string>& names,
                                             int bins = kDefaultHistogramBins);

void write_brightness_csv(const std::vector<BrightnessRow>& rows, const std::filesystem::path& summary_path,
                          const std::filesystem::path& histogram_path);

} // namespace brpatch
