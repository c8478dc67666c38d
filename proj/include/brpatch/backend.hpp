#pragma once

#include "brpatch/cnn.hpp"
#include "brpatch/dataset.hpp"
#include "brpatch/patch.hpp"

#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace brpatch {

enum class Capability { white_box, black_box };

const char* to_string(Capability c) noexcept;

struct LogProbGrad {
    double log_prob = 0.0;
    Image grad; // d log p(class | x) / dx, same shape as the input
};

/// Classifier plug-in contract. Every backend returns probability vectors;
/// only white-box backends expose input gradients.
class ClassifierBackend {
public:
    virtual ~ClassifierBackend() = default;

    virtual std::string model_id() const = 0;
    virtual int num_classes() const = 0;
    virtual Capability capability() const = 0;

    /// False when predict/log_probs must not be called concurrently.
    virtual bool concurrent_inference() const { return true; }

    /// Probabilities for one image: nonnegative, summing to 1.
    virtual std::vector<double> predict(const Image& image) const = 0;

    /// log of predict(), computed stably where the backend can.
    virtual std::vector<double> log_probs(const Image& image) const;

    /// White-box only. The default implementation throws CapabilityError.
    virtual LogProbGrad log_prob_grad(const Image& image, int cls) const;

    std::vector<std::vector<double>> predict(std::span<const Image> batch) const;
    std::vector<Image> grad_log_prob(std::span<const Image> batch, int cls) const;

    void require_white_box(const char* operation) const;
};

/// SmallCnn behind the backend contract.
class CnnBackend final : public ClassifierBackend {
public:
    CnnBackend(SmallCnn model, std::string model_id, Capability capability, double clean_accuracy = 0.0);

    std::string model_id() const override { return model_id_; }
    int num_classes() const override { return model_.arch().num_classes; }
    Capability capability() const override { return capability_; }

    std::vector<double> predict(const Image& image) const override;
    std::vector<double> log_probs(const Image& image) const override;
    LogProbGrad log_prob_grad(const Image& image, int cls) const override;

    const SmallCnn& model() const noexcept { return model_; }
    double clean_accuracy() const noexcept { return clean_accuracy_; }

    /// Same weights, different exposure (e.g. a black-box view of a source model).
    CnnBackend with_capability(Capability capability) const;

private:
    SmallCnn model_;
    std::string model_id_;
    Capability capability_;
    double clean_accuracy_;
};

/// `.brm` model file: "BRMODEL1", u32 LE JSON length, JSON header
/// {model_id, capability, clean_accuracy, arch}, then float64 LE parameters.
void save_backend(const CnnBackend& backend, const std::filesystem::path& path);
CnnBackend load_backend(const std::filesystem::path& path);

struct ReferenceBackendConfig {
    CnnArch arch;
    FitConfig fit;
    double min_accuracy = 0.80;
};

struct ReferenceBackends {
    CnnBackend source; // white-box
    CnnBackend target; // black-box
};

/// Trains two classifiers of identical architecture on the same data from
/// different seeds. Throws BackendError("backend underfit ...") when either
/// falls below the accuracy floor on the test split.
ReferenceBackends reference_backends(std::uint64_t seed_a, std::uint64_t seed_b, const Dataset& data,
                                     const ReferenceBackendConfig& cfg = {});

/// Convenience overload generating the procedural texture dataset first.
ReferenceBackends reference_backends(std::uint64_t seed_a, std::uint64_t seed_b, const TextureDatasetConfig& data_cfg,
                                     const ReferenceBackendConfig& cfg = {});

} // namespace brpatch
