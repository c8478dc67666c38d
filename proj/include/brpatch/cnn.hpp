#pragma once

#include "brpatch/patch.hpp"
#include "brpatch/rng.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace brpatch {

enum class GlobalPool { max, avg };

/// Architecture of the desk-scale classifier:
///   (x - 0.5) -> [conv3x3 -> ReLU -> maxpool2] x 2 -> conv3x3 -> ReLU
///   -> global pool -> linear.
struct CnnArch {
    int image_size = 32;
    int num_classes = 10;
    std::vector<int> channels{8, 16, 32};
    GlobalPool pool = GlobalPool::max;

    void validate() const;
    bool operator==(const CnnArch&) const = default;
};

/// Small convolutional classifier with hand-written forward and backward
/// passes. All parameters live in one flat vector; layers view slices of it.
class SmallCnn {
public:
    struct Layer {
        int in_channels;
        int out_channels;
        int size;          // spatial side at the layer input
        bool pool_after;   // 2x2 max pooling after the ReLU
        std::size_t weight_offset;
        std::size_t bias_offset;
    };

    /// Intermediate activations of one forward pass (one image).
    struct Trace {
        std::vector<std::vector<double>> cols;       // im2col matrix per conv layer
        std::vector<std::vector<double>> relu;       // post-ReLU activation per conv layer
        std::vector<std::vector<std::uint32_t>> argmax; // pooling winners per conv layer
        std::vector<double> pooled;                  // global pool output
        std::vector<std::uint32_t> global_argmax;
        std::vector<double> logits;
    };

    SmallCnn() = default;
    explicit SmallCnn(CnnArch arch);

    /// He-normal conv weights, zero conv biases, uniform(+-1/sqrt(fan_in)) head.
    static SmallCnn initialized(CnnArch arch, std::uint64_t seed);

    const CnnArch& arch() const noexcept { return arch_; }
    std::size_t parameter_count() const noexcept { return params_.size(); }
    std::span<const double> parameters() const noexcept { return params_; }
    std::span<double> parameters() noexcept { return params_; }
    std::size_t input_size() const noexcept;

    std::vector<double> logits(std::span<const double> input) const;
    std::vector<double> forward(std::span<const double> input, Trace& trace) const;

    /// Backpropagates d(objective)/d(logits). Either output may be empty to
    /// skip it; `param_grad` is accumulated into, `input_grad` is overwritten.
    void backward(const Trace& trace, std::span<const double> logit_grad, std::span<double> param_grad,
                  std::span<double> input_grad) const;

private:
    void build_layers();

    CnnArch arch_;
    std::vector<Layer> layers_;
    std::size_t fc_weight_offset_ = 0;
    std::size_t fc_bias_offset_ = 0;
    std::vector<double> params_;
};

std::vector<double> softmax(std::span<const double> logits);
std::vector<double> log_softmax(std::span<const double> logits);

struct FitConfig {
    int epochs = 20;
    int batch_size = 32;
    double learning_rate = 3e-3;
    double input_noise = 0.05; // Gaussian augmentation std, clamped back into [0,1]
    std::uint64_t seed = 0;
};

struct FitReport {
    std::vector<double> epoch_loss;
    std::vector<double> epoch_test_accuracy;
};

/// Cross-entropy training with Adam. Deterministic for a given seed and
/// independent of the worker thread count.
FitReport fit(SmallCnn& model, const ImageBatch& train, const ImageBatch& test, const FitConfig& cfg);

double accuracy(const SmallCnn& model, const ImageBatch& images);

} // namespace brpatch
