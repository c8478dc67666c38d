#include "fixtures.hpp"
#include "oracle.hpp"

#include "brpatch/trainer.hpp"

#include <doctest.h>

#include <cmath>

using namespace brpatch;

namespace {

CnnBackend tiny_backend(std::uint64_t seed, Capability cap = Capability::white_box)
{
    CnnArch arch;
    arch.image_size = 16;
    arch.num_classes = 4;
    arch.channels = {4, 4, 6};
    arch.pool = GlobalPool::avg;
    return CnnBackend(SmallCnn::initialized(arch, seed), "tiny-" + std::to_string(seed), cap);
}

TrainConfig tiny_config()
{
    TrainConfig cfg;
    cfg.patch_size = 6;
    cfg.target_class = 1;
    cfg.epochs = 3;
    cfg.batch_size = 8;
    cfg.seed = 5;
    cfg.step_size = 0.05;
    return cfg;
}

// Log-probabilities come back as NaN, as from a numerically broken model.
class NanBackend final : public ClassifierBackend {
public:
    std::string model_id() const override { return "nan"; }
    int num_classes() const override { return 2; }
    Capability capability() const override { return Capability::white_box; }
    std::vector<double> predict(const Image&) const override { return {0.5, 0.5}; }
    LogProbGrad log_prob_grad(const Image& image, int) const override
    {
        return {std::nan(""), Image(image.height, image.width, 0.0)};
    }
};

} // namespace

TEST_CASE("adv_loss examples")
{
    Rng rng(1);
    std::vector<Image> imgs{fixtures::random_image(8, 8, rng), fixtures::random_image(8, 8, rng)};
    const fixtures::ConstantBackend uniform(std::vector<double>(10, 0.1));
    CHECK(adv_loss(uniform, imgs, 3) == doctest::Approx(std::log(0.1)).epsilon(1e-12));

    const double z = std::exp(2.0) + std::exp(1.0) + 1.0;
    const fixtures::ConstantBackend peaked({std::exp(2.0) / z, std::exp(1.0) / z, 1.0 / z});
    CHECK(adv_loss(peaked, imgs, 0) == doctest::Approx(-0.40761).epsilon(1e-4));
    CHECK_THROWS_AS(adv_loss(peaked, imgs, 3), DomainError);
    CHECK_THROWS_AS(adv_loss(peaked, std::span<const Image>{}, 0), DomainError);
}

TEST_CASE("brightness_loss examples")
{
    const Patch white = Patch::filled(4, 4, 1.0f);
    CHECK(brightness_loss(white, white, 1e-6) == 0.0);
    CHECK(brightness_loss(Patch::filled(4, 4, 0.0f), white, 1e-6) == doctest::Approx(std::log(1e-6)));
    // mse 0.01 from a uniform 0.9 patch
    CHECK(brightness_loss(Patch::filled(4, 4, 0.9f), white, 1e-6) == doctest::Approx(std::log(0.99)).epsilon(1e-6));
    CHECK_THROWS_AS(brightness_loss(white, Patch::filled(3, 4, 1.0f), 1e-6), DomainError);
    CHECK_THROWS_AS(brightness_loss(white, white, 0.0), DomainError);
}

TEST_CASE("brightness_loss matches the oracle and is bounded above by 0")
{
    Rng rng(2);
    const Patch white = Patch::filled(7, 7, 1.0f);
    for (int t = 0; t < 200; ++t) {
        const Patch p = fixtures::random_patch(7, 7, rng);
        const double lb = brightness_loss(p, white, 1e-6);
        CHECK(lb == doctest::Approx(oracle::brightness_loss(p, 1e-6)).epsilon(1e-12));
        CHECK(lb <= 0.0);
    }
}

TEST_CASE("brightness_loss_grad matches finite differences and vanishes under the guard")
{
    Rng rng(3);
    const std::vector<double> white(3 * 5 * 5, 1.0);
    for (int t = 0; t < 10; ++t) {
        std::vector<double> p = fixtures::random_patch(5, 5, rng).to_doubles();
        const auto g = brightness_loss_grad(p, white, 1e-6);
        const double h = 1e-6;
        for (std::size_t k = 0; k < p.size(); ++k) {
            auto up = p;
            auto dn = p;
            up[k] += h;
            dn[k] -= h;
            const double fd = (brightness_loss(up, white, 1e-6) - brightness_loss(dn, white, 1e-6)) / (2 * h);
            CHECK(g[k] == doctest::Approx(fd).epsilon(1e-5).scale(1e-3));
        }
    }
    const std::vector<double> black(white.size(), 0.0);
    for (double v : brightness_loss_grad(black, white, 1e-6)) {
        CHECK(v == 0.0);
    }
}

TEST_CASE("total_loss combines the terms")
{
    CHECK(total_loss(-2.0, -0.5, 0.0) == -2.0);
    CHECK(total_loss(-2.0, -0.5, 4.0) == -4.0);
    Rng rng(4);
    for (int t = 0; t < 50; ++t) {
        const double a = -rng.uniform(0, 10);
        const double b = -rng.uniform(0, 10);
        const double l = rng.uniform(0, 100);
        CHECK(total_loss(a, b, l) == a + l * b);
    }
}

TEST_CASE("evaluate_objective gradient agrees with central differences")
{
    const CnnBackend net = tiny_backend(9);
    Rng rng(5);
    std::vector<Image> images;
    std::vector<TransformSample> transforms;
    TransformConfig tcfg;
    for (int i = 0; i < 4; ++i) {
        images.push_back(fixtures::random_image(16, 16, rng));
        transforms.push_back(sample_transform(rng, tcfg, {16, 16}, {6, 6}));
    }
    const std::vector<double> p = fixtures::random_patch(6, 6, rng, 0.1, 0.9).to_doubles();
    for (double lambda : {0.0, 0.7}) {
        const LossEval ev = evaluate_objective(net, {6, 6, p}, images, transforms, 2, lambda, 1e-6);
        const double h = 1e-5;
        double num = 0.0;
        double den = 0.0;
        for (std::size_t k = 0; k < p.size(); ++k) {
            auto up = p;
            auto dn = p;
            up[k] += h;
            dn[k] -= h;
            const double lu = evaluate_objective(net, {6, 6, up}, images, transforms, 2, lambda, 1e-6, false).l;
            const double ld = evaluate_objective(net, {6, 6, dn}, images, transforms, 2, lambda, 1e-6, false).l;
            const double fd = (lu - ld) / (2 * h);
            num += (ev.grad[k] - fd) * (ev.grad[k] - fd);
            den += fd * fd;
        }
        CHECK(std::sqrt(num / den) <= 1e-4);
    }
}

TEST_CASE("evaluate_objective: lambda 0 ignores brightness, lambda > 0 adds it")
{
    const CnnBackend net = tiny_backend(10);
    Rng rng(6);
    std::vector<Image> images{fixtures::random_image(16, 16, rng)};
    std::vector<TransformSample> transforms{{8, 8, 0, 1}};
    const std::vector<double> p = fixtures::random_patch(6, 6, rng).to_doubles();
    const auto a = evaluate_objective(net, {6, 6, p}, images, transforms, 0, 0.0, 1e-6);
    const auto b = evaluate_objective(net, {6, 6, p}, images, transforms, 0, 3.0, 1e-6);
    CHECK(a.l == a.l_adv);
    CHECK(b.l == doctest::Approx(b.l_adv + 3.0 * b.l_b).epsilon(1e-12));
    const std::vector<double> white(p.size(), 1.0);
    const auto gb = brightness_loss_grad(p, white, 1e-6);
    for (std::size_t k = 0; k < p.size(); ++k) {
        CHECK(b.grad[k] - a.grad[k] == doctest::Approx(3.0 * gb[k]).epsilon(1e-9).scale(1e-9));
    }
}

TEST_CASE("evaluate_objective needs a white-box backend for gradients")
{
    const CnnBackend net = tiny_backend(11, Capability::black_box);
    Rng rng(7);
    std::vector<Image> images{fixtures::random_image(16, 16, rng)};
    std::vector<TransformSample> transforms{{8, 8, 0, 1}};
    const std::vector<double> p(3 * 36, 0.5);
    CHECK_THROWS_AS(evaluate_objective(net, {6, 6, p}, images, transforms, 0, 0.0, 1e-6), CapabilityError);
    CHECK_NOTHROW(evaluate_objective(net, {6, 6, p}, images, transforms, 0, 0.0, 1e-6, false));
}

TEST_CASE("TrainConfig validation rejects bad values")
{
    auto bad = [](auto mutate) {
        TrainConfig c = tiny_config();
        mutate(c);
        return c;
    };
    CHECK_THROWS_AS(bad([](TrainConfig& c) { c.patch_size = 0; }).validate(), ConfigError);
    CHECK_THROWS_AS(bad([](TrainConfig& c) { c.lambda = -1; }).validate(), ConfigError);
    CHECK_THROWS_AS(bad([](TrainConfig& c) { c.lambda = std::nan(""); }).validate(), ConfigError);
    CHECK_THROWS_AS(bad([](TrainConfig& c) { c.epochs = 0; }).validate(), ConfigError);
    CHECK_THROWS_AS(bad([](TrainConfig& c) { c.batch_size = 0; }).validate(), ConfigError);
    CHECK_THROWS_AS(bad([](TrainConfig& c) { c.eps_guard = 0; }).validate(), ConfigError);
    CHECK_THROWS_AS(bad([](TrainConfig& c) { c.transform.scale_min = -1; }).validate(), ConfigError);
    CHECK_NOTHROW(tiny_config().validate());
}

TEST_CASE("train_patch: zero step size keeps the gray initial patch")
{
    const CnnBackend net = tiny_backend(12);
    Rng rng(8);
    const ImageBatch train = fixtures::random_batch(12, 16, 16, rng, 4);
    const ImageBatch val = fixtures::random_batch(6, 16, 16, rng, 4);
    TrainConfig cfg = tiny_config();
    cfg.step_size = 0.0;
    const auto res = train_patch(cfg, train, val, net);
    for (float v : res.patch.pixels()) {
        CHECK(v == 0.5f);
    }
    CHECK(res.patch.meta().epochs_trained == res.history.best_epoch);
}

TEST_CASE("train_patch is deterministic, clamped and records one row per epoch")
{
    const CnnBackend net = tiny_backend(13);
    Rng rng(9);
    const ImageBatch train = fixtures::random_batch(20, 16, 16, rng, 4);
    const ImageBatch val = fixtures::random_batch(8, 16, 16, rng, 4);
    TrainConfig cfg = tiny_config();
    cfg.lambda = 0.5;
    cfg.init = PatchInit::uniform_random;

    const auto a = train_patch(cfg, train, val, net);
    ::setenv("BRPATCH_THREADS", "3", 1);
    const auto b = train_patch(cfg, train, val, net);
    ::unsetenv("BRPATCH_THREADS");
    CHECK(a.patch.same_pixels(b.patch));
    CHECK(a.patch.meta() == b.patch.meta());
    REQUIRE(a.history.epochs.size() == 3);
    for (std::size_t e = 0; e < 3; ++e) {
        CHECK(a.history.epochs[e].l == b.history.epochs[e].l);
        CHECK(a.history.epochs[e].epoch == static_cast<int>(e) + 1);
    }
    CHECK(a.history.best_epoch >= 1);
    CHECK(a.history.best_epoch <= 3);
    // earliest epoch wins ties
    double best = -1;
    int first = 0;
    for (const auto& r : a.history.epochs) {
        if (r.val_asr > best) {
            best = r.val_asr;
            first = r.epoch;
        }
    }
    CHECK(a.history.best_epoch == first);

    const auto& m = a.patch.meta();
    CHECK(m.target_class == 1);
    CHECK(m.lambda == 0.5);
    CHECK(m.seed == 5);
    CHECK(m.source_model_id == "tiny-13");
    CHECK(m.brightness_range == brightness_range(a.patch));

    cfg.seed = 6;
    CHECK(!train_patch(cfg, train, val, net).patch.same_pixels(a.patch));
}

TEST_CASE("train_patch: ascent raises the adversarial objective")
{
    const CnnBackend net = tiny_backend(14);
    Rng rng(10);
    const ImageBatch train = fixtures::random_batch(32, 16, 16, rng, 4);
    const ImageBatch val = fixtures::random_batch(8, 16, 16, rng, 4);
    TrainConfig cfg = tiny_config();
    cfg.epochs = 6;
    const auto res = train_patch(cfg, train, val, net);
    CHECK(res.history.epochs.back().l_adv > res.history.epochs.front().l_adv);
}

TEST_CASE("train_patch error paths")
{
    const CnnBackend net = tiny_backend(15);
    Rng rng(11);
    const ImageBatch train = fixtures::random_batch(8, 16, 16, rng, 4);
    const ImageBatch val = fixtures::random_batch(4, 16, 16, rng, 4);

    TrainConfig big = tiny_config();
    big.patch_size = 15;
    CHECK_THROWS_AS(train_patch(big, train, val, net), InfeasibleError);

    TrainConfig cls = tiny_config();
    cls.target_class = 4;
    CHECK_THROWS_AS(train_patch(cls, train, val, net), ConfigError);

    CHECK_THROWS_AS(train_patch(tiny_config(), train, val, tiny_backend(15, Capability::black_box)), CapabilityError);

    const NanBackend nan_net;
    TrainConfig one = tiny_config();
    one.target_class = 0;
    try {
        (void)train_patch(one, train, val, nan_net);
        FAIL("expected TrainingError");
    } catch (const TrainingError& e) {
        CHECK(std::string(e.what()).find("epoch 1") != std::string::npos);
    }
}
