#include "fixtures.hpp"

#include "brpatch/evaluate.hpp"
#include "brpatch/perturb.hpp"

#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

using namespace brpatch;
using fixtures::TempDir;

namespace {

// Predicts class 1 when the top-left pixel is bright, else class 0.
class CornerBackend final : public ClassifierBackend {
public:
    std::string model_id() const override { return "corner"; }
    int num_classes() const override { return 2; }
    Capability capability() const override { return Capability::black_box; }
    std::vector<double> predict(const Image& img) const override
    {
        return img.at(0, 0, 0) > 0.5 ? std::vector<double>{0.1, 0.9} : std::vector<double>{0.9, 0.1};
    }
};

TransformConfig centered(double c)
{
    TransformConfig t;
    t.angle_min_deg = t.angle_max_deg = 0;
    t.placement = Placement::fixed;
    t.fixed_cx = t.fixed_cy = c;
    return t;
}

CnnBackend tiny_net(std::uint64_t seed)
{
    CnnArch arch;
    arch.image_size = 16;
    arch.num_classes = 4;
    arch.channels = {4, 4, 4};
    return CnnBackend(SmallCnn::initialized(arch, seed), "net", Capability::black_box);
}

std::string slurp(const std::filesystem::path& p)
{
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace

TEST_CASE("evaluate_asr: backend always predicting the target gives 1, never gives 0")
{
    Rng rng(1);
    const ImageBatch imgs = fixtures::random_batch(20, 16, 16, rng, 3);
    const Patch p = fixtures::random_patch(4, 4, rng);
    const fixtures::ConstantBackend to_two({0.1, 0.2, 0.7});
    const auto r = evaluate_asr(p, imgs, 2, to_two, {}, 3);
    CHECK(r.asr == 1.0);
    CHECK(r.n_excluded == 6);
    CHECK(r.n_images == 14);
    CHECK(evaluate_asr(p, imgs, 0, to_two, {}, 3).asr == 0.0);
}

TEST_CASE("evaluate_asr: ten images, two excluded, six successes")
{
    std::vector<float> px(10 * 3 * 16 * 16, 0.2f);
    std::vector<int> labels{1, 0, 0, 0, 0, 1, 0, 0, 0, 0};
    // brighten the corner of six non-target images
    for (std::size_t i : {1u, 2u, 3u, 4u, 6u, 7u}) {
        px[i * 3 * 256] = 0.9f;
    }
    const ImageBatch imgs(16, 16, px, labels);
    const auto r = evaluate_asr(Patch::filled(4, 4, 0.0f), imgs, 1, CornerBackend{}, centered(8), 1);
    CHECK(r.n_excluded == 2);
    CHECK(r.n_images == 8);
    CHECK(r.n_success == 6);
    CHECK(r.asr == 0.75);
}

TEST_CASE("evaluate_asr: failure budget")
{
    Rng rng(2);
    const Patch p = fixtures::random_patch(4, 4, rng);
    // one failure in 200 attempts is within 1%
    const auto ok = evaluate_asr(p, fixtures::random_batch(200, 16, 16, rng, 1), 1, fixtures::FlakyBackend(200), {}, 1);
    CHECK(ok.failures.size() == 1);
    CHECK(ok.n_images == 199);
    // one failure in 50 attempts is not
    CHECK_THROWS_AS(evaluate_asr(p, fixtures::random_batch(50, 16, 16, rng, 1), 1, fixtures::FlakyBackend(50), {}, 1),
                    BackendError);
}

TEST_CASE("evaluate_asr: invalid inputs")
{
    Rng rng(3);
    const Patch p = fixtures::random_patch(4, 4, rng);
    const fixtures::ConstantBackend b({0.5, 0.5});
    CHECK_THROWS_AS(evaluate_asr(p, ImageBatch{}, 0, b, {}, 1), DomainError);
    CHECK_THROWS_AS(evaluate_asr(p, fixtures::random_batch(3, 16, 16, rng), 2, b, {}, 1), DomainError);
    CHECK_THROWS_AS(evaluate_asr(fixtures::random_patch(20, 20, rng), fixtures::random_batch(3, 16, 16, rng), 0, b, {}, 1),
                    InfeasibleError);
}

TEST_CASE("evaluate_asr: transforms depend only on seed and image index")
{
    Rng rng(4);
    const ImageBatch imgs = fixtures::random_batch(30, 16, 16, rng, 4);
    const fixtures::ConstantBackend b({0.25, 0.25, 0.25, 0.25});
    const auto a = evaluate_asr(fixtures::random_patch(4, 4, rng), imgs, 3, b, {}, 42);
    const auto c = evaluate_asr(fixtures::random_patch(4, 4, rng), imgs, 3, b, {}, 42);
    REQUIRE(a.per_image.size() == c.per_image.size());
    for (std::size_t i = 0; i < a.per_image.size(); ++i) {
        CHECK(a.per_image[i].transform == c.per_image[i].transform);
        Rng r(derive_seed(42, a.per_image[i].image_index));
        CHECK(a.per_image[i].transform == sample_transform(r, {}, {16, 16}, {4, 4}));
    }
}

TEST_CASE("evaluate_asr does not depend on the worker count")
{
    Rng rng(5);
    const ImageBatch imgs = fixtures::random_batch(40, 16, 16, rng, 4);
    const Patch p = fixtures::random_patch(5, 5, rng);
    const CnnBackend net = tiny_net(3);
    ::setenv("BRPATCH_THREADS", "1", 1);
    const auto a = to_json(evaluate_asr(p, imgs, 1, net, {}, 8));
    ::setenv("BRPATCH_THREADS", "5", 1);
    const auto b = to_json(evaluate_asr(p, imgs, 1, net, {}, 8));
    ::unsetenv("BRPATCH_THREADS");
    CHECK(a.dump() == b.dump());
}

TEST_CASE("eval report files")
{
    TempDir dir("evalio");
    Rng rng(6);
    const ImageBatch imgs = fixtures::random_batch(6, 16, 16, rng, 3);
    const auto r = evaluate_asr(fixtures::random_patch(4, 4, rng), imgs, 2, fixtures::ConstantBackend({0.2, 0.2, 0.6}),
                                {}, 9, "p1");
    write_eval_json(r, dir.path / "e.json");
    write_eval_csv(r, dir.path / "e.csv");
    const auto j = nlohmann::json::parse(slurp(dir.path / "e.json"));
    CHECK(j["asr"] == 1.0);
    CHECK(j["n_excluded"] == 2);
    CHECK(j["patch_id"] == "p1");
    CHECK(j["per_image"].size() == 4);
    std::istringstream csv(slurp(dir.path / "e.csv"));
    std::string line;
    int lines = 0;
    while (std::getline(csv, line)) {
        ++lines;
    }
    // header plus one summary row
    CHECK(lines == 2);
}

TEST_CASE("default suite layout")
{
    const auto s = default_suite();
    REQUIRE(s.size() == 9);
    CHECK(s[0].kind == PerturbationKind::original);
    CHECK(s[1].kind == PerturbationKind::color_transfer);
    CHECK(!s[1].value.has_value());
    CHECK(s[2].kind == PerturbationKind::gaussian_blur3);
    for (int i = 0; i < 3; ++i) {
        CHECK(s[3 + i].kind == PerturbationKind::color_drift);
        CHECK(s[6 + i].kind == PerturbationKind::resize);
    }
    CHECK(*s[3].value == 0.10);
    CHECK(*s[5].value == 0.20);
    CHECK(*s[6].value == 1.2);
    CHECK(*s[8].value == 1.6);
}

TEST_CASE("apply_perturbation")
{
    Rng rng(7);
    const Patch mid = fixtures::random_patch(10, 10, rng, 0.2, 0.8);
    SUBCASE("automatic transfer delta prefers +0.05")
    {
        const auto [q, d] = apply_perturbation(mid, {PerturbationKind::color_transfer, std::nullopt}, 1);
        CHECK(d == 0.05);
        CHECK(q.same_pixels(color_transfer(mid, 0.05)));
    }
    SUBCASE("falls back to -0.05 when the patch touches 1")
    {
        std::vector<double> v(300, 0.5);
        v[0] = 1.0;
        const auto [q, d] = apply_perturbation(Patch::clamped(10, 10, v), {PerturbationKind::color_transfer, {}}, 1);
        CHECK(d == -0.05);
    }
    SUBCASE("resize rounds the scaled side")
    {
        const auto [q, f] = apply_perturbation(mid, {PerturbationKind::resize, 1.4}, 1);
        CHECK(q.height() == 14);
        CHECK(q.width() == 14);
        CHECK(f == 1.4);
    }
    SUBCASE("drift uses one derived seed")
    {
        const auto [a, qa] = apply_perturbation(mid, {PerturbationKind::color_drift, 0.15}, 3);
        const auto [b, qb] = apply_perturbation(mid, {PerturbationKind::color_drift, 0.15}, 3);
        CHECK(a.same_pixels(b));
        CHECK(!a.same_pixels(mid));
    }
    SUBCASE("explicit infeasible delta is rejected")
    {
        CHECK_THROWS_AS(apply_perturbation(mid, {PerturbationKind::color_transfer, 0.5}, 1), DomainError);
    }
}

TEST_CASE("robustness_table: original row equals evaluate_asr")
{
    Rng rng(8);
    const ImageBatch imgs = fixtures::random_batch(25, 16, 16, rng, 4);
    const Patch p = fixtures::random_patch(4, 4, rng, 0.1, 0.9);
    const CnnBackend net = tiny_net(4);
    const auto solo = evaluate_asr(p, imgs, 2, net, {}, 11);
    const auto t = robustness_table(p, {{PerturbationKind::original, {}}}, imgs, 2, net, {}, 11);
    REQUIRE(t.rows.size() == 1);
    CHECK(to_json(t.rows[0].report)["per_image"].dump() == to_json(solo)["per_image"].dump());
    CHECK(t.rows[0].report.asr == solo.asr);

    const auto full = robustness_table(p, default_suite(), imgs, 2, net, {}, 11);
    REQUIRE(full.rows.size() == 9);
    CHECK(full.rows[0].table == "feature");
    CHECK(full.rows[4].table == "drift");
    CHECK(full.rows[8].table == "size");
    CHECK(full.rows[8].patch_height == 6);
    for (const auto& row : full.rows) {
        CHECK(row.report.per_image.size() == solo.per_image.size());
    }

    TempDir dir("robust");
    write_robustness_csv(full, dir.path / "r.csv");
    std::istringstream csv(slurp(dir.path / "r.csv"));
    std::string line;
    std::getline(csv, line);
    CHECK(line == "label,table,kind,parameter,patch_height,patch_width,n_images,n_success,asr");
    int rows = 0;
    while (std::getline(csv, line)) {
        ++rows;
    }
    CHECK(rows == 9);
}

TEST_CASE("robustness_table rejects hue mapping in a suite")
{
    Rng rng(9);
    CHECK_THROWS_AS(robustness_table(fixtures::random_patch(4, 4, rng), {{PerturbationKind::hue_map, {}}},
                                     fixtures::random_batch(4, 16, 16, rng), 0, tiny_net(1), {}, 1),
                    DomainError);
}

TEST_CASE("brightness_report keeps input order")
{
    const std::vector<Patch> ps{Patch::filled(2, 2, 0.3f), Patch::filled(2, 2, 1.0f)};
    const auto rows = brightness_report(ps, {"dim", "bright"}, 4);
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].name == "dim");
    CHECK(rows[1].stats.max_b == 1.0);
    CHECK(rows[0].stats.histogram == std::vector<std::size_t>{0, 4, 0, 0});
    CHECK_THROWS_AS(brightness_report({}, {}, 4), DomainError);

    TempDir dir("bright");
    write_brightness_csv(rows, dir.path / "s.csv", dir.path / "h.csv");
    CHECK(slurp(dir.path / "s.csv").rfind("name,min_b,max_b,range\n", 0) == 0);
    CHECK(slurp(dir.path / "h.csv").rfind("name,bin,lo,hi,count\n", 0) == 0);
}
