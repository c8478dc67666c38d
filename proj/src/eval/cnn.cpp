#include "brpatch/cnn.hpp"

#include "brpatch/errors.hpp"
#include "brpatch/parallel.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace brpatch {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;
using ConstMapVec = Eigen::Map<const Eigen::VectorXd>;
using MapVec = Eigen::Map<Eigen::VectorXd>;

// Rows are (ci, ky, kx); columns are output positions (y, x). Zero padding.
void im2col(const double* in, int channels, int size, double* cols)
{
    const int n = size * size;
    for (int ci = 0; ci < channels; ++ci) {
        const double* plane = in + static_cast<std::size_t>(ci) * n;
        for (int ky = 0; ky < 3; ++ky) {
            for (int kx = 0; kx < 3; ++kx) {
                double* row = cols + static_cast<std::size_t>((ci * 3 + ky) * 3 + kx) * n;
                for (int y = 0; y < size; ++y) {
                    const int sy = y + ky - 1;
                    for (int x = 0; x < size; ++x) {
                        const int sx = x + kx - 1;
                        row[y * size + x] =
                            (sy >= 0 && sy < size && sx >= 0 && sx < size) ? plane[sy * size + sx] : 0.0;
                    }
                }
            }
        }
    }
}

void col2im(const double* cols, int channels, int size, double* out)
{
    const int n = size * size;
    std::fill(out, out + static_cast<std::size_t>(channels) * n, 0.0);
    for (int ci = 0; ci < channels; ++ci) {
        double* plane = out + static_cast<std::size_t>(ci) * n;
        for (int ky = 0; ky < 3; ++ky) {
            for (int kx = 0; kx < 3; ++kx) {
                const double* row = cols + static_cast<std::size_t>((ci * 3 + ky) * 3 + kx) * n;
                for (int y = 0; y < size; ++y) {
                    const int sy = y + ky - 1;
                    if (sy < 0 || sy >= size) {
                        continue;
                    }
                    for (int x = 0; x < size; ++x) {
                        const int sx = x + kx - 1;
                        if (sx >= 0 && sx < size) {
                            plane[sy * size + sx] += row[y * size + x];
                        }
                    }
                }
            }
        }
    }
}

} // namespace

void CnnArch::validate() const
{
    if (channels.empty() || num_classes < 2 || image_size < 1) {
        throw DomainError("invalid CNN architecture");
    }
    int size = image_size;
    for (std::size_t l = 0; l + 1 < channels.size(); ++l) {
        if (size % 2 != 0) {
            throw DomainError("image size must stay even through every pooling stage");
        }
        size /= 2;
    }
    for (int c : channels) {
        if (c < 1) {
            throw DomainError("CNN channel counts must be positive");
        }
    }
}

SmallCnn::SmallCnn(CnnArch arch) : arch_(std::move(arch))
{
    arch_.validate();
    build_layers();
}

void SmallCnn::build_layers()
{
    layers_.clear();
    std::size_t offset = 0;
    int in = kChannels;
    int size = arch_.image_size;
    for (std::size_t l = 0; l < arch_.channels.size(); ++l) {
        Layer layer{};
        layer.in_channels = in;
        layer.out_channels = arch_.channels[l];
        layer.size = size;
        layer.pool_after = l + 1 < arch_.channels.size();
        layer.weight_offset = offset;
        offset += static_cast<std::size_t>(layer.out_channels) * in * 9;
        layer.bias_offset = offset;
        offset += static_cast<std::size_t>(layer.out_channels);
        layers_.push_back(layer);
        in = layer.out_channels;
        if (layer.pool_after) {
            size /= 2;
        }
    }
    fc_weight_offset_ = offset;
    offset += static_cast<std::size_t>(arch_.num_classes) * in;
    fc_bias_offset_ = offset;
    offset += static_cast<std::size_t>(arch_.num_classes);
    params_.assign(offset, 0.0);
}

SmallCnn SmallCnn::initialized(CnnArch arch, std::uint64_t seed)
{
    SmallCnn net(std::move(arch));
    Rng rng(seed);
    for (const Layer& layer : net.layers_) {
        const int fan_in = layer.in_channels * 9;
        const double std = std::sqrt(2.0 / fan_in);
        const std::size_t count = static_cast<std::size_t>(layer.out_channels) * fan_in;
        for (std::size_t i = 0; i < count; ++i) {
            net.params_[layer.weight_offset + i] = std * rng.normal();
        }
    }
    const int fan_in = net.arch_.channels.back();
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (std::size_t i = net.fc_weight_offset_; i < net.params_.size(); ++i) {
        net.params_[i] = rng.uniform(-bound, bound);
    }
    return net;
}

std::size_t SmallCnn::input_size() const noexcept
{
    return static_cast<std::size_t>(kChannels) * arch_.image_size * arch_.image_size;
}

std::vector<double> SmallCnn::logits(std::span<const double> input) const
{
    Trace trace;
    return forward(input, trace);
}

std::vector<double> SmallCnn::forward(std::span<const double> input, Trace& trace) const
{
    if (input.size() != input_size()) {
        throw DomainError("classifier input has " + std::to_string(input.size()) + " values, expected " +
                          std::to_string(input_size()));
    }
    const std::size_t n_layers = layers_.size();
    trace.cols.resize(n_layers);
    trace.relu.resize(n_layers);
    trace.argmax.resize(n_layers);

    std::vector<double> act(input.begin(), input.end());
    for (double& v : act) {
        v -= 0.5;
    }

    for (std::size_t l = 0; l < n_layers; ++l) {
        const Layer& layer = layers_[l];
        const int n = layer.size * layer.size;
        const int k = layer.in_channels * 9;
        auto& cols = trace.cols[l];
        cols.resize(static_cast<std::size_t>(k) * n);
        im2col(act.data(), layer.in_channels, layer.size, cols.data());

        auto& out = trace.relu[l];
        out.resize(static_cast<std::size_t>(layer.out_channels) * n);
        MapMat z(out.data(), layer.out_channels, n);
        ConstMapMat w(params_.data() + layer.weight_offset, layer.out_channels, k);
        ConstMapMat c(cols.data(), k, n);
        z.noalias() = w * c;
        for (int co = 0; co < layer.out_channels; ++co) {
            const double b = params_[layer.bias_offset + co];
            double* row = out.data() + static_cast<std::size_t>(co) * n;
            for (int i = 0; i < n; ++i) {
                row[i] = std::max(0.0, row[i] + b);
            }
        }

        if (layer.pool_after) {
            const int s = layer.size;
            const int h = s / 2;
            auto& winners = trace.argmax[l];
            winners.resize(static_cast<std::size_t>(layer.out_channels) * h * h);
            act.assign(winners.size(), 0.0);
            for (int co = 0; co < layer.out_channels; ++co) {
                const double* plane = out.data() + static_cast<std::size_t>(co) * n;
                for (int y = 0; y < h; ++y) {
                    for (int x = 0; x < h; ++x) {
                        std::uint32_t best = static_cast<std::uint32_t>((2 * y) * s + 2 * x);
                        for (int dy = 0; dy < 2; ++dy) {
                            for (int dx = 0; dx < 2; ++dx) {
                                const auto idx = static_cast<std::uint32_t>((2 * y + dy) * s + 2 * x + dx);
                                if (plane[idx] > plane[best]) {
                                    best = idx;
                                }
                            }
                        }
                        const std::size_t o = (static_cast<std::size_t>(co) * h + y) * h + x;
                        winners[o] = best;
                        act[o] = plane[best];
                    }
                }
            }
        } else {
            act = out;
        }
    }

    const Layer& last = layers_.back();
    const int c_last = last.out_channels;
    const int n_last = last.size * last.size;
    trace.pooled.assign(static_cast<std::size_t>(c_last), 0.0);
    trace.global_argmax.assign(static_cast<std::size_t>(c_last), 0);
    for (int c = 0; c < c_last; ++c) {
        const double* plane = act.data() + static_cast<std::size_t>(c) * n_last;
        if (arch_.pool == GlobalPool::max) {
            std::uint32_t best = 0;
            for (int i = 1; i < n_last; ++i) {
                if (plane[i] > plane[best]) {
                    best = static_cast<std::uint32_t>(i);
                }
            }
            trace.global_argmax[c] = best;
            trace.pooled[c] = plane[best];
        } else {
            trace.pooled[c] = std::accumulate(plane, plane + n_last, 0.0) / n_last;
        }
    }

    trace.logits.resize(static_cast<std::size_t>(arch_.num_classes));
    ConstMapMat fc(params_.data() + fc_weight_offset_, arch_.num_classes, c_last);
    MapVec logit_vec(trace.logits.data(), arch_.num_classes);
    logit_vec.noalias() = fc * ConstMapVec(trace.pooled.data(), c_last);
    logit_vec += ConstMapVec(params_.data() + fc_bias_offset_, arch_.num_classes);
    return trace.logits;
}

void SmallCnn::backward(const Trace& trace, std::span<const double> logit_grad, std::span<double> param_grad,
                        std::span<double> input_grad) const
{
    const bool want_params = !param_grad.empty();
    const bool want_input = !input_grad.empty();
    if (want_params && param_grad.size() != params_.size()) {
        throw DomainError("parameter gradient buffer has the wrong size");
    }
    if (want_input && input_grad.size() != input_size()) {
        throw DomainError("input gradient buffer has the wrong size");
    }
    const int nc = arch_.num_classes;
    const Layer& last = layers_.back();
    const int c_last = last.out_channels;
    const int n_last = last.size * last.size;

    ConstMapVec dlogits(logit_grad.data(), nc);
    ConstMapMat fc(params_.data() + fc_weight_offset_, nc, c_last);
    if (want_params) {
        MapMat dfc(param_grad.data() + fc_weight_offset_, nc, c_last);
        dfc.noalias() += dlogits * ConstMapVec(trace.pooled.data(), c_last).transpose();
        MapVec(param_grad.data() + fc_bias_offset_, nc) += dlogits;
    }
    Eigen::VectorXd dpooled = fc.transpose() * dlogits;

    // Gradient with respect to the post-ReLU output of the current layer.
    std::vector<double> dact(static_cast<std::size_t>(c_last) * n_last, 0.0);
    for (int c = 0; c < c_last; ++c) {
        double* plane = dact.data() + static_cast<std::size_t>(c) * n_last;
        if (arch_.pool == GlobalPool::max) {
            plane[trace.global_argmax[c]] = dpooled[c];
        } else {
            const double g = dpooled[c] / n_last;
            std::fill(plane, plane + n_last, g);
        }
    }

    std::vector<double> dcols;
    std::vector<double> dinput;
    for (std::size_t li = layers_.size(); li-- > 0;) {
        const Layer& layer = layers_[li];
        const int n = layer.size * layer.size;
        const int k = layer.in_channels * 9;
        const auto& relu = trace.relu[li];
        for (std::size_t i = 0; i < dact.size(); ++i) {
            if (relu[i] <= 0.0) {
                dact[i] = 0.0;
            }
        }
        ConstMapMat dz(dact.data(), layer.out_channels, n);
        if (want_params) {
            MapMat dw(param_grad.data() + layer.weight_offset, layer.out_channels, k);
            dw.noalias() += dz * ConstMapMat(trace.cols[li].data(), k, n).transpose();
            MapVec(param_grad.data() + layer.bias_offset, layer.out_channels) += dz.rowwise().sum();
        }
        if (li == 0 && !want_input) {
            break;
        }
        dcols.resize(static_cast<std::size_t>(k) * n);
        MapMat dc(dcols.data(), k, n);
        dc.noalias() = ConstMapMat(params_.data() + layer.weight_offset, layer.out_channels, k).transpose() * dz;
        dinput.resize(static_cast<std::size_t>(layer.in_channels) * n);
        col2im(dcols.data(), layer.in_channels, layer.size, dinput.data());

        if (li == 0) {
            std::copy(dinput.begin(), dinput.end(), input_grad.begin());
            break;
        }
        // Route through the 2x2 max pool that produced this layer's input.
        const Layer& prev = layers_[li - 1];
        const int prev_n = prev.size * prev.size;
        const auto& winners = trace.argmax[li - 1];
        dact.assign(static_cast<std::size_t>(prev.out_channels) * prev_n, 0.0);
        for (int c = 0; c < prev.out_channels; ++c) {
            for (int i = 0; i < n; ++i) {
                const std::size_t o = static_cast<std::size_t>(c) * n + i;
                dact[static_cast<std::size_t>(c) * prev_n + winners[o]] += dinput[o];
            }
        }
    }
}

std::vector<double> softmax(std::span<const double> logits)
{
    std::vector<double> out = log_softmax(logits);
    for (double& v : out) {
        v = std::exp(v);
    }
    return out;
}

std::vector<double> log_softmax(std::span<const double> logits)
{
    const double mx = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (double v : logits) {
        sum += std::exp(v - mx);
    }
    const double lse = mx + std::log(sum);
    std::vector<double> out(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out[i] = logits[i] - lse;
    }
    return out;
}

double accuracy(const SmallCnn& model, const ImageBatch& images)
{
    if (images.empty() || !images.has_labels()) {
        throw DomainError("accuracy needs a nonempty labeled batch");
    }
    std::vector<char> correct(images.size(), 0);
    parallel_for(images.size(), [&](std::size_t i) {
        const auto img = images.image(i);
        const auto z = model.logits(img.data);
        const auto pred = std::max_element(z.begin(), z.end()) - z.begin();
        correct[i] = pred == images.label(i) ? 1 : 0;
    });
    return static_cast<double>(std::count(correct.begin(), correct.end(), 1)) / images.size();
}

FitReport fit(SmallCnn& model, const ImageBatch& train, const ImageBatch& test, const FitConfig& cfg)
{
    if (train.empty() || !train.has_labels()) {
        throw DomainError("fit needs a nonempty labeled training set");
    }
    if (cfg.epochs < 1 || cfg.batch_size < 1 || !(cfg.learning_rate > 0.0)) {
        throw DomainError("invalid fit configuration");
    }
    train.validate_labels(model.arch().num_classes);

    const std::size_t np = model.parameter_count();
    std::vector<double> m(np, 0.0);
    std::vector<double> v(np, 0.0);
    constexpr double b1 = 0.9;
    constexpr double b2 = 0.999;
    constexpr double eps = 1e-8;
    long step = 0;

    FitReport report;
    std::vector<std::size_t> order(train.size());
    const auto bs = static_cast<std::size_t>(cfg.batch_size);
    std::vector<std::vector<double>> sample_grads(bs, std::vector<double>(np));
    std::vector<double> sample_loss(bs);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        Rng shuffle_rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(epoch)));
        shuffle(order.begin(), order.end(), shuffle_rng);
        double loss_sum = 0.0;

        for (std::size_t start = 0; start < order.size(); start += bs) {
            const std::size_t count = std::min(bs, order.size() - start);
            parallel_for(count, [&](std::size_t j) {
                const std::size_t idx = order[start + j];
                Image img = train.image(idx);
                if (cfg.input_noise > 0.0) {
                    Rng noise(derive_seed(derive_seed(cfg.seed ^ 0x5eedULL, static_cast<std::uint64_t>(epoch)), idx));
                    for (double& px : img.data) {
                        px = std::clamp(px + cfg.input_noise * noise.normal(), 0.0, 1.0);
                    }
                }
                SmallCnn::Trace trace;
                const auto z = model.forward(img.data, trace);
                auto grad = softmax(z);
                const int y = train.label(idx);
                sample_loss[j] = -std::log(std::max(grad[y], 1e-300));
                grad[y] -= 1.0;
                std::fill(sample_grads[j].begin(), sample_grads[j].end(), 0.0);
                model.backward(trace, grad, sample_grads[j], {});
            });

            ++step;
            const double bc1 = 1.0 - std::pow(b1, static_cast<double>(step));
            const double bc2 = 1.0 - std::pow(b2, static_cast<double>(step));
            auto params = model.parameters();
            for (std::size_t p = 0; p < np; ++p) {
                double g = 0.0;
                for (std::size_t j = 0; j < count; ++j) {
                    g += sample_grads[j][p];
                }
                g /= static_cast<double>(count);
                m[p] = b1 * m[p] + (1.0 - b1) * g;
                v[p] = b2 * v[p] + (1.0 - b2) * g * g;
                params[p] -= cfg.learning_rate * (m[p] / bc1) / (std::sqrt(v[p] / bc2) + eps);
            }
            for (std::size_t j = 0; j < count; ++j) {
                loss_sum += sample_loss[j];
            }
        }
        report.epoch_loss.push_back(loss_sum / static_cast<double>(order.size()));
        report.epoch_test_accuracy.push_back(test.empty() ? 0.0 : accuracy(model, test));
    }
    return report;
}

} // namespace brpatch
