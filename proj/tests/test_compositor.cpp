#include "fixtures.hpp"
#include "oracle.hpp"

#include "brpatch/compositor.hpp"

#include <doctest.h>

#include <cmath>
#include <cstring>

using namespace brpatch;

TEST_CASE("sample_transform: degenerate ranges with fixed placement")
{
    TransformConfig cfg;
    cfg.angle_min_deg = cfg.angle_max_deg = 0.0;
    cfg.placement = Placement::fixed;
    cfg.fixed_cx = cfg.fixed_cy = 112.0;
    Rng rng(1);
    for (int i = 0; i < 20; ++i) {
        CHECK(sample_transform(rng, cfg, {224, 224}, {70, 70}) == TransformSample{112, 112, 0, 1});
    }
}

TEST_CASE("sample_transform: 70x70 in 224x224 without rotation stays in [35, 189]")
{
    TransformConfig cfg;
    cfg.angle_min_deg = cfg.angle_max_deg = 0.0;
    Rng rng(2);
    double lo = 1e9;
    double hi = -1e9;
    for (int i = 0; i < 5000; ++i) {
        const auto t = sample_transform(rng, cfg, {224, 224}, {70, 70});
        CHECK(t.cx >= 35.0);
        CHECK(t.cx <= 189.0);
        CHECK(t.cy >= 35.0);
        CHECK(t.cy <= 189.0);
        lo = std::min(lo, t.cx);
        hi = std::max(hi, t.cx);
    }
    // the whole interval is used
    CHECK(lo < 36.0);
    CHECK(hi > 188.0);
}

TEST_CASE("sample_transform: infeasible geometry")
{
    TransformConfig cfg;
    cfg.scale_min = 1.5;
    cfg.scale_max = 1.5;
    Rng rng(3);
    CHECK_THROWS_AS(sample_transform(rng, cfg, {224, 224}, {200, 200}), InfeasibleError);
    TransformConfig fixed;
    fixed.placement = Placement::fixed;
    fixed.fixed_cx = 2;
    fixed.fixed_cy = 2;
    CHECK_THROWS_AS(sample_transform(rng, fixed, {32, 32}, {10, 10}), InfeasibleError);
}

TEST_CASE("sample_transform: rotated footprints always fit and draws are seeded")
{
    TransformConfig cfg;
    cfg.scale_min = 0.8;
    cfg.scale_max = 1.3;
    Rng a(44);
    Rng b(44);
    for (int i = 0; i < 2000; ++i) {
        const auto t = sample_transform(a, cfg, {32, 32}, {10, 10});
        CHECK(transform_fits(t, {32, 32}, {10, 10}));
        CHECK(t.angle_deg >= -22.5);
        CHECK(t.angle_deg <= 22.5);
        CHECK(t.scale >= 0.8);
        CHECK(t.scale <= 1.3);
        CHECK(t == sample_transform(b, cfg, {32, 32}, {10, 10}));
    }
}

TEST_CASE("sample_transform consumes four uniforms regardless of configuration")
{
    TransformConfig wide;
    TransformConfig fixed;
    fixed.placement = Placement::fixed;
    fixed.fixed_cx = fixed.fixed_cy = 16;
    fixed.angle_min_deg = fixed.angle_max_deg = 0;
    Rng a(8);
    Rng b(8);
    (void)sample_transform(a, wide, {32, 32}, {10, 10});
    (void)sample_transform(b, fixed, {32, 32}, {10, 10});
    CHECK(a() == b());
}

TEST_CASE("TransformConfig validation")
{
    TransformConfig c;
    c.angle_min_deg = 10;
    c.angle_max_deg = -10;
    CHECK_THROWS_AS(c.validate(), DomainError);
    TransformConfig s;
    s.scale_min = 0;
    CHECK_THROWS_AS(s.validate(), DomainError);
}

TEST_CASE("compose: identity warp is an exact copy-paste")
{
    Rng rng(10);
    const Image img = fixtures::random_image(32, 32, rng);
    const Patch p = fixtures::random_patch(10, 10, rng);
    const TransformSample t{15, 17, 0, 1};
    const auto out = compose(img, p, t);
    for (int c = 0; c < 3; ++c) {
        for (int y = 0; y < 32; ++y) {
            for (int x = 0; x < 32; ++x) {
                const bool inside = x >= 10 && x < 20 && y >= 12 && y < 22;
                const double expect = inside ? static_cast<double>(p.at(c, y - 12, x - 10)) : img.at(c, y, x);
                CHECK(out.image.at(c, y, x) == expect);
                CHECK(out.mask[static_cast<std::size_t>(y) * 32 + x] == (inside ? 1.0 : 0.0));
            }
        }
    }
}

TEST_CASE("compose: white patch on black image has exactly h*w white pixels")
{
    const Image black(32, 32, 0.0);
    const auto out = compose(black, Patch::filled(10, 10, 1.0f), {16, 16, 0, 1});
    int white = 0;
    for (int y = 0; y < 32; ++y) {
        for (int x = 0; x < 32; ++x) {
            white += out.image.at(0, y, x) == 1.0 && out.image.at(1, y, x) == 1.0 && out.image.at(2, y, x) == 1.0;
        }
    }
    CHECK(white == 100);
}

TEST_CASE("compose matches the brute-force rasterizer")
{
    Rng rng(12);
    TransformConfig cfg;
    cfg.angle_min_deg = -180;
    cfg.angle_max_deg = 180;
    cfg.scale_min = 0.5;
    cfg.scale_max = 2.0;
    for (int trial = 0; trial < 100; ++trial) {
        const Image img = fixtures::random_image(32, 32, rng);
        const Patch p = fixtures::random_patch(6 + static_cast<int>(rng.below(5)), 6 + static_cast<int>(rng.below(5)), rng);
        const auto t = sample_transform(rng, cfg, {32, 32}, {p.height(), p.width()});
        const auto got = compose(img, p, t);
        const auto ref = oracle::composite(img, p.to_doubles(), p.height(), p.width(), t);
        double worst = 0.0;
        for (std::size_t i = 0; i < got.image.data.size(); ++i) {
            worst = std::max(worst, std::abs(got.image.data[i] - ref.image.data[i]));
        }
        for (std::size_t i = 0; i < got.mask.size(); ++i) {
            worst = std::max(worst, std::abs(got.mask[i] - ref.mask[i]));
        }
        CHECK(worst <= 1e-12);
    }
}

TEST_CASE("compose: scale 2 mask sum is about 400 and matches the rasterizer")
{
    const Image img(40, 40, 0.3);
    const Patch p = Patch::filled(10, 10, 0.7f);
    const TransformSample t{20, 20, 0, 2};
    const auto got = compose(img, p, t);
    const auto ref = oracle::composite(img, p.to_doubles(), 10, 10, t);
    double sum = 0.0;
    double ref_sum = 0.0;
    for (std::size_t i = 0; i < got.mask.size(); ++i) {
        sum += got.mask[i];
        ref_sum += ref.mask[i];
    }
    CHECK(sum == doctest::Approx(ref_sum).epsilon(1e-12));
    // border antialiasing only trims a thin ring
    CHECK(sum > 360.0);
    CHECK(sum <= 400.0);
}

TEST_CASE("compose: pixels outside the mask are bit-identical for random transforms")
{
    Rng rng(13);
    TransformConfig cfg;
    cfg.scale_min = 0.7;
    cfg.scale_max = 1.4;
    for (int trial = 0; trial < 100; ++trial) {
        const Image img = fixtures::random_image(32, 32, rng);
        const Patch p = fixtures::random_patch(10, 10, rng);
        const auto t = sample_transform(rng, cfg, {32, 32}, {10, 10});
        const auto out = compose(img, p, t);
        bool ok = true;
        for (int c = 0; c < 3; ++c) {
            for (std::size_t i = 0; i < out.mask.size(); ++i) {
                if (out.mask[i] == 0.0) {
                    ok = ok && std::memcmp(&out.image.data[c * out.mask.size() + i], &img.data[c * out.mask.size() + i],
                                           sizeof(double)) == 0;
                }
            }
        }
        CHECK(ok);
        for (double v : out.image.data) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
        }
    }
}

TEST_CASE("compose_backward: gradient of sum(composed) is the total resampling weight")
{
    Rng rng(14);
    const Image img = fixtures::random_image(32, 32, rng);
    const std::vector<double> base = fixtures::random_patch(8, 8, rng).to_doubles();
    const TransformSample t{16.3, 15.1, 17.0, 1.3};
    const Image ones(32, 32, 1.0);
    const auto grad = compose_backward(ones, {8, 8}, t);

    auto total = [&](const std::vector<double>& v) {
        const auto out = compose(img, PatchView{8, 8, v}, t);
        double s = 0.0;
        for (double x : out.image.data) {
            s += x;
        }
        return s;
    };
    const double h = 1e-4;
    for (std::size_t k = 0; k < base.size(); ++k) {
        auto up = base;
        auto dn = base;
        up[k] += h;
        dn[k] -= h;
        const double fd = (total(up) - total(dn)) / (2 * h);
        CHECK(grad[k] == doctest::Approx(fd).epsilon(1e-3));
    }
}

TEST_CASE("compose_backward is the adjoint of compose")
{
    Rng rng(15);
    const TransformSample t{15.5, 16.5, -9.0, 0.9};
    const Image zero(32, 32, 0.0);
    for (int trial = 0; trial < 10; ++trial) {
        const std::vector<double> p = fixtures::random_patch(10, 10, rng).to_doubles();
        const Image g = fixtures::random_image(32, 32, rng);
        // <g, A p> with the base image zeroed out equals <A^T g, p>
        const auto out = compose(zero, PatchView{10, 10, p}, t);
        double lhs = 0.0;
        for (std::size_t i = 0; i < g.data.size(); ++i) {
            lhs += g.data[i] * out.image.data[i];
        }
        const auto gp = compose_backward(g, {10, 10}, t);
        double rhs = 0.0;
        for (std::size_t k = 0; k < p.size(); ++k) {
            rhs += gp[k] * p[k];
        }
        CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
    }
}
