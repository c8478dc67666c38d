#include "brpatch/trainer.hpp"

#include "brpatch/errors.hpp"
#include "brpatch/evaluate.hpp"
#include "brpatch/parallel.hpp"
#include "brpatch/rng.hpp"
#include "brpatch/text.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace brpatch {

namespace {

// Child streams of the training seed.
constexpr std::uint64_t kInitStream = 0;
constexpr std::uint64_t kOrderStream = 1;
constexpr std::uint64_t kTransformStream = 2;
constexpr std::uint64_t kValStream = 3;

constexpr double kBeta1 = 0.9;
constexpr double kBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;

void check_shapes(std::span<const double> a, std::span<const double> b)
{
    if (a.size() != b.size() || a.empty()) {
        throw DomainError("brightness_loss: shape mismatch (" + std::to_string(a.size()) + " vs " +
                          std::to_string(b.size()) + ")");
    }
}

void check_guard(double eps_guard)
{
    if (!(eps_guard > 0.0 && eps_guard < 1.0)) {
        throw DomainError("eps_guard must lie in (0, 1)");
    }
}

std::ofstream open_out(const std::filesystem::path& path)
{
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw IoError(IoErrorKind::open_failed, "cannot open for writing: " + path.string());
    }
    return out;
}

} // namespace

double adv_loss(const ClassifierBackend& backend, std::span<const Image> composed, int target_class)
{
    if (composed.empty()) {
        throw DomainError("adv_loss needs a nonempty batch");
    }
    if (target_class < 0 || target_class >= backend.num_classes()) {
        throw DomainError("target class " + std::to_string(target_class) + " out of range");
    }
    std::vector<double> lp(composed.size());
    parallel_for(
        composed.size(),
        [&](std::size_t i) { lp[i] = backend.log_probs(composed[i])[static_cast<std::size_t>(target_class)]; },
        backend.concurrent_inference());
    return std::accumulate(lp.begin(), lp.end(), 0.0) / static_cast<double>(lp.size());
}

double brightness_loss(std::span<const double> patch, std::span<const double> reference, double eps_guard)
{
    check_shapes(patch, reference);
    check_guard(eps_guard);
    return std::log(std::max(1.0 - mse(patch, reference), eps_guard));
}

double brightness_loss(const Patch& patch, const Patch& reference, double eps_guard)
{
    if (patch.height() != reference.height() || patch.width() != reference.width()) {
        throw DomainError("brightness_loss: patch and reference shapes differ");
    }
    const auto a = patch.to_doubles();
    const auto b = reference.to_doubles();
    return brightness_loss(a, b, eps_guard);
}

std::vector<double> brightness_loss_grad(std::span<const double> patch, std::span<const double> reference,
                                         double eps_guard)
{
    check_shapes(patch, reference);
    check_guard(eps_guard);
    std::vector<double> g(patch.size(), 0.0);
    const double denom = 1.0 - mse(patch, reference);
    if (denom <= eps_guard) {
        return g;
    }
    const double n = static_cast<double>(patch.size());
    for (std::size_t k = 0; k < g.size(); ++k) {
        g[k] = -2.0 * (patch[k] - reference[k]) / (n * denom);
    }
    return g;
}

double total_loss(double l_adv, double l_b, double lambda)
{
    return l_adv + lambda * l_b;
}

void TrainConfig::validate() const
{
    if (patch_size < 1) {
        throw ConfigError("patch_size must be positive");
    }
    if (target_class < 0) {
        throw ConfigError("target_class must be nonnegative");
    }
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
        throw ConfigError("lambda must be a finite value >= 0");
    }
    if (epochs < 1) {
        throw ConfigError("epochs must be >= 1");
    }
    if (!(step_size >= 0.0) || !std::isfinite(step_size)) {
        throw ConfigError("step_size must be a finite value >= 0");
    }
    if (batch_size < 1) {
        throw ConfigError("batch_size must be positive");
    }
    if (!(eps_guard > 0.0 && eps_guard < 1.0)) {
        throw ConfigError("eps_guard must lie in (0, 1)");
    }
    try {
        transform.validate();
    } catch (const DomainError& e) {
        throw ConfigError(std::string("transform: ") + e.what());
    }
}

LossEval evaluate_objective(const ClassifierBackend& source, PatchView patch, std::span<const Image> images,
                            std::span<const TransformSample> transforms, int target_class, double lambda,
                            double eps_guard, bool with_grad)
{
    if (images.empty() || images.size() != transforms.size()) {
        throw DomainError("evaluate_objective: need one transform per image");
    }
    if (with_grad) {
        source.require_white_box("patch training");
    }
    const std::size_t n = images.size();
    const std::size_t np = patch.pixels.size();
    const Dims pdims{patch.height, patch.width};

    std::vector<double> lp(n);
    std::vector<std::vector<double>> grads(with_grad ? n : 0);
    parallel_for(
        n,
        [&](std::size_t i) {
            const Composite comp = compose(images[i], patch, transforms[i]);
            if (!with_grad) {
                lp[i] = source.log_probs(comp.image)[static_cast<std::size_t>(target_class)];
                return;
            }
            const LogProbGrad g = source.log_prob_grad(comp.image, target_class);
            lp[i] = g.log_prob;
            grads[i] = compose_backward(g.grad, pdims, transforms[i]);
        },
        source.concurrent_inference());

    LossEval out;
    out.l_adv = std::accumulate(lp.begin(), lp.end(), 0.0) / static_cast<double>(n);
    const std::vector<double> white(np, 1.0);
    out.l_b = brightness_loss(patch.pixels, white, eps_guard);
    out.l = total_loss(out.l_adv, out.l_b, lambda);
    if (!with_grad) {
        return out;
    }
    // Fixed-order reduction keeps the result independent of the thread count.
    out.grad.assign(np, 0.0);
    for (const auto& g : grads) {
        for (std::size_t k = 0; k < np; ++k) {
            out.grad[k] += g[k];
        }
    }
    for (double& v : out.grad) {
        v /= static_cast<double>(n);
    }
    if (lambda != 0.0) {
        const auto gb = brightness_loss_grad(patch.pixels, white, eps_guard);
        for (std::size_t k = 0; k < np; ++k) {
            out.grad[k] += lambda * gb[k];
        }
    }
    return out;
}

TrainResult train_patch(const TrainConfig& cfg, const ImageBatch& train_images, const ImageBatch& val_images,
                        const ClassifierBackend& source)
{
    cfg.validate();
    source.require_white_box("train_patch");
    if (cfg.target_class >= source.num_classes()) {
        throw ConfigError("target_class " + std::to_string(cfg.target_class) + " is not below num_classes " +
                          std::to_string(source.num_classes()));
    }
    if (val_images.empty()) {
        throw DomainError("train_patch needs a nonempty validation set");
    }
    if (!train_images.has_labels()) {
        throw DomainError("train_patch needs labelled training images");
    }
    const Dims image_dims{train_images.height(), train_images.width()};
    const Dims patch_dims{cfg.patch_size, cfg.patch_size};
    {
        // Fail before any work when the geometry cannot fit.
        Rng probe(0);
        (void)sample_transform(probe, cfg.transform, image_dims, patch_dims);
    }

    // Images that already carry the target label carry no attack signal.
    std::vector<std::size_t> pool;
    for (std::size_t i = 0; i < train_images.size(); ++i) {
        if (train_images.label(i) != cfg.target_class) {
            pool.push_back(i);
        }
    }
    if (pool.empty()) {
        throw DomainError("no training images outside the target class");
    }

    const std::size_t np = static_cast<std::size_t>(kChannels) * cfg.patch_size * cfg.patch_size;
    std::vector<double> p(np, 0.5);
    if (cfg.init == PatchInit::uniform_random) {
        Rng rng(derive_seed(cfg.seed, kInitStream));
        for (double& v : p) {
            v = rng.uniform();
        }
    }
    std::vector<double> m(np, 0.0);
    std::vector<double> v(np, 0.0);
    double b1t = 1.0;
    double b2t = 1.0;

    PatchMeta meta;
    meta.target_class = cfg.target_class;
    meta.lambda = cfg.lambda;
    meta.seed = cfg.seed;
    meta.source_model_id = source.model_id();
    meta.created = cfg.created;

    const std::uint64_t order_seed = derive_seed(cfg.seed, kOrderStream);
    const std::uint64_t transform_seed = derive_seed(cfg.seed, kTransformStream);
    const std::uint64_t val_seed = derive_seed(cfg.seed, kValStream);
    const auto bs = static_cast<std::size_t>(cfg.batch_size);

    TrainHistory history;
    std::optional<Patch> best;
    double best_asr = -1.0;
    std::uint64_t step = 0;

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::vector<std::size_t> order = pool;
        Rng order_rng(derive_seed(order_seed, static_cast<std::uint64_t>(epoch)));
        shuffle(order.begin(), order.end(), order_rng);

        double sum_adv = 0.0;
        double sum_b = 0.0;
        double sum_l = 0.0;
        std::size_t batches = 0;
        for (std::size_t begin = 0; begin < order.size(); begin += bs, ++step) {
            const std::size_t end = std::min(order.size(), begin + bs);
            std::vector<Image> images;
            std::vector<TransformSample> transforms;
            images.reserve(end - begin);
            transforms.reserve(end - begin);
            Rng trng(derive_seed(transform_seed, step));
            for (std::size_t k = begin; k < end; ++k) {
                images.push_back(train_images.image(order[k]));
                transforms.push_back(sample_transform(trng, cfg.transform, image_dims, patch_dims));
            }
            const LossEval ev = evaluate_objective(source, {cfg.patch_size, cfg.patch_size, p}, images, transforms,
                                                   cfg.target_class, cfg.lambda, cfg.eps_guard);
            if (!std::isfinite(ev.l)) {
                std::ostringstream msg;
                msg << "non-finite loss at epoch " << epoch << " (batch starting at " << begin
                    << "): l_adv=" << ev.l_adv << " l_b=" << ev.l_b;
                throw TrainingError(msg.str());
            }
            sum_adv += ev.l_adv;
            sum_b += ev.l_b;
            sum_l += ev.l;
            ++batches;

            // Adam on -L, i.e. ascent on L, then project onto [0,1].
            b1t *= kBeta1;
            b2t *= kBeta2;
            for (std::size_t k = 0; k < np; ++k) {
                const double g = -ev.grad[k];
                m[k] = kBeta1 * m[k] + (1.0 - kBeta1) * g;
                v[k] = kBeta2 * v[k] + (1.0 - kBeta2) * g * g;
                const double mh = m[k] / (1.0 - b1t);
                const double vh = v[k] / (1.0 - b2t);
                p[k] = std::clamp(p[k] - cfg.step_size * mh / (std::sqrt(vh) + kAdamEps), 0.0, 1.0);
            }
        }

        const Patch current = Patch::clamped(cfg.patch_size, cfg.patch_size, p, meta);
        const EvalReport val =
            evaluate_asr(current, val_images, cfg.target_class, source, cfg.transform, val_seed, "validation");
        EpochRecord rec;
        rec.epoch = epoch;
        rec.l_adv = sum_adv / static_cast<double>(batches);
        rec.l_b = sum_b / static_cast<double>(batches);
        rec.l = sum_l / static_cast<double>(batches);
        rec.val_asr = val.asr;
        rec.brightness_range = brightness_range(current);
        history.epochs.push_back(rec);
        if (val.asr > best_asr) {
            best_asr = val.asr;
            best = current;
            history.best_epoch = epoch;
        }
    }

    PatchMeta final_meta = best->meta();
    final_meta.brightness_range = brightness_range(*best);
    final_meta.epochs_trained = history.best_epoch;
    return {best->with_meta(final_meta), std::move(history)};
}

void write_history_csv(const TrainHistory& history, const std::filesystem::path& path)
{
    auto out = open_out(path);
    out << "epoch,l_adv,l_b,l,val_asr,brightness_range\n";
    for (const auto& r : history.epochs) {
        out << r.epoch << ',' << fmt_double(r.l_adv) << ',' << fmt_double(r.l_b) << ',' << fmt_double(r.l) << ','
            << fmt_double(r.val_asr) << ',' << fmt_double(r.brightness_range) << '\n';
    }
}

SweepReport sweep_lambda(const TrainConfig& base, std::span<const double> lambdas, const SweepData& data,
                         const ClassifierBackend& source, const ClassifierBackend& target,
                         const TransformConfig& eval_transform, std::uint64_t eval_seed)
{
    if (lambdas.empty()) {
        throw DomainError("sweep_lambda needs at least one lambda");
    }
    SweepReport report;
    for (double lambda : lambdas) {
        TrainConfig cfg = base;
        cfg.lambda = lambda;
        TrainResult res = train_patch(cfg, data.train, data.val, source);
        SweepRow row{lambda,
                     res.patch.meta().brightness_range,
                     evaluate_asr(res.patch, data.eval, cfg.target_class, target, eval_transform, eval_seed).asr,
                     evaluate_asr(res.patch, data.eval, cfg.target_class, source, eval_transform, eval_seed).asr,
                     res.history.best_epoch,
                     std::move(res.patch)};
        report.rows.push_back(std::move(row));
    }
    std::stable_sort(report.rows.begin(), report.rows.end(),
                     [](const SweepRow& a, const SweepRow& b) { return a.brightness_range < b.brightness_range; });
    return report;
}

void write_sweep_csv(const SweepReport& report, const std::filesystem::path& path)
{
    auto out = open_out(path);
    out << "lambda,brightness_range,asr_gray_box,asr_white_box,best_epoch\n";
    for (const auto& r : report.rows) {
        out << fmt_double(r.lambda) << ',' << fmt_double(r.brightness_range) << ',' << fmt_double(r.asr_gray_box)
            << ',' << fmt_double(r.asr_white_box) << ',' << r.best_epoch << '\n';
    }
}

} // namespace brpatch
