#pragma once

#include "brpatch/backend.hpp"
#include "brpatch/errors.hpp"
#include "brpatch/patch.hpp"
#include "brpatch/rng.hpp"

#include <unistd.h>

#include <atomic>
#include <filesystem>
#include <string>
#include <vector>

namespace fixtures {

using namespace brpatch;

inline Patch random_patch(int h, int w, Rng& rng, double lo = 0.0, double hi = 1.0)
{
    std::vector<double> v(static_cast<std::size_t>(3) * h * w);
    for (double& x : v) {
        x = rng.uniform(lo, hi);
    }
    return Patch::clamped(h, w, v);
}

inline Image random_image(int h, int w, Rng& rng)
{
    Image img(h, w);
    for (double& x : img.data) {
        x = rng.uniform();
    }
    return img;
}

inline ImageBatch random_batch(std::size_t n, int h, int w, Rng& rng, int num_classes = 10)
{
    std::vector<float> px(n * 3 * h * w);
    for (float& x : px) {
        x = static_cast<float>(rng.uniform());
    }
    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i) {
        labels[i] = static_cast<int>(i % num_classes);
    }
    return ImageBatch(h, w, std::move(px), std::move(labels));
}

/// Returns a fixed probability vector for every input.
class ConstantBackend final : public ClassifierBackend {
public:
    ConstantBackend(std::vector<double> probs, Capability cap = Capability::black_box)
        : probs_(std::move(probs)), cap_(cap)
    {
    }
    std::string model_id() const override { return "constant"; }
    int num_classes() const override { return static_cast<int>(probs_.size()); }
    Capability capability() const override { return cap_; }
    std::vector<double> predict(const Image&) const override { return probs_; }

private:
    std::vector<double> probs_;
    Capability cap_;
};

/// Throws on every `fail_every`-th call, otherwise predicts class 0.
class FlakyBackend final : public ClassifierBackend {
public:
    explicit FlakyBackend(std::size_t fail_every) : fail_every_(fail_every) {}
    std::string model_id() const override { return "flaky"; }
    int num_classes() const override { return 3; }
    Capability capability() const override { return Capability::black_box; }
    bool concurrent_inference() const override { return false; }
    std::vector<double> predict(const Image&) const override
    {
        if (++calls_ % fail_every_ == 0) {
            throw BackendError("simulated outage");
        }
        return {0.8, 0.1, 0.1};
    }

private:
    std::size_t fail_every_;
    mutable std::size_t calls_ = 0;
};

/// Scratch directory removed on destruction.
struct TempDir {
    std::filesystem::path path;
    explicit TempDir(const std::string& tag)
    {
        static std::atomic<int> counter{0};
        path = std::filesystem::temp_directory_path() /
               ("brpatch_test_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::remove_all(path);
        std::filesystem::create_directories(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
};

} // namespace fixtures
