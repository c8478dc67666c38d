#pragma once

#include "brpatch/backend.hpp"
#include "brpatch/compositor.hpp"
#include "brpatch/patch.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace brpatch {

/// L_adv: mean over the batch of log softmax-probability of `target_class`.
double adv_loss(const ClassifierBackend& backend, std::span<const Image> composed, int target_class);

/// L_b = log(max(1 - mse(patch, reference), eps_guard)).
double brightness_loss(std::span<const double> patch, std::span<const double> reference, double eps_guard);
double brightness_loss(const Patch& patch, const Patch& reference, double eps_guard);

/// dL_b/dpatch. Zero wherever the guard is engaged.
std::vector<double> brightness_loss_grad(std::span<const double> patch, std::span<const double> reference,
                                         double eps_guard);

/// L = L_adv + lambda * L_b.
double total_loss(double l_adv, double l_b, double lambda);

enum class PatchInit { gray, uniform_random };

struct TrainConfig {
    int patch_size = 10;
    int target_class = 0;
    double lambda = 0.0;
    int epochs = 40;
    double step_size = 0.01;
    int batch_size = 32;
    std::uint64_t seed = 0;
    TransformConfig transform;
    PatchInit init = PatchInit::gray;
    double eps_guard = 1e-6;
    std::string created = "1970-01-01T00:00:00Z"; // copied into PatchMeta

    void validate() const;
};

struct EpochRecord {
    int epoch = 0; // 1-based
    double l_adv = 0.0;
    double l_b = 0.0;
    double l = 0.0;
    double val_asr = 0.0;
    double brightness_range = 0.0;
};

struct TrainHistory {
    std::vector<EpochRecord> epochs;
    int best_epoch = 0; // 1-based epoch of the returned checkpoint
};

struct TrainResult {
    Patch patch;
    TrainHistory history;
};

/// Gradient of L with respect to the patch for one batch of (image,
/// transform) pairs, plus the loss terms. Exposed for gradient checking.
struct LossEval {
    double l_adv = 0.0;
    double l_b = 0.0;
    double l = 0.0;
    std::vector<double> grad;
};

LossEval evaluate_objective(const ClassifierBackend& source, PatchView patch, std::span<const Image> images,
                            std::span<const TransformSample> transforms, int target_class, double lambda,
                            double eps_guard, bool with_grad = true);

/// Projected adaptive-moment gradient ascent on L over the patch pixels.
///
/// Each epoch visits every training image whose label differs from the
/// target once, in a seeded shuffled order, drawing one transform per
/// (image, step). After every step the patch is clamped to [0,1]. After every
/// epoch validation ASR is measured on the source backend with a fixed set of
/// transforms; the checkpoint with the highest validation ASR is returned
/// (ties go to the earliest epoch).
TrainResult train_patch(const TrainConfig& cfg, const ImageBatch& train_images, const ImageBatch& val_images,
                        const ClassifierBackend& source);

void write_history_csv(const TrainHistory& history, const std::filesystem::path& path);

struct SweepRow {
    double lambda = 0.0;
    double brightness_range = 0.0;
    double asr_gray_box = 0.0;  // target backend
    double asr_white_box = 0.0; // source backend, diagnostic
    int best_epoch = 0;
    Patch patch;
};

struct SweepReport {
    std::vector<SweepRow> rows; // sorted by brightness_range ascending
};

inline const std::vector<double> kDefaultLambdaGrid{0.0, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0};

struct SweepData {
    const ImageBatch& train;
    const ImageBatch& val;
    const ImageBatch& eval;
};

/// Trains one patch per lambda from the same base configuration and scores
/// each on the target backend (gray-box) and the source backend. Throws
/// DomainError for an empty lambda list.
SweepReport sweep_lambda(const TrainConfig& base, std::span<const double> lambdas, const SweepData& data,
                         const ClassifierBackend& source, const ClassifierBackend& target,
                         const TransformConfig& eval_transform, std::uint64_t eval_seed);

void write_sweep_csv(const SweepReport& report, const std::filesystem::path& path);

} // namespace brpatch
