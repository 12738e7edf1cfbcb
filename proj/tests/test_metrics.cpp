#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "oracles.hpp"
#include "test_support.hpp"

using namespace gdd;
using gdd::test::random_tensor;
using namespace gdd::test::oracle;

namespace {

struct Pair {
    Tensor<double> x, ref;
};

Pair random_pair(std::uint64_t seed, Shape s = {4, 4, 4}) {
    Rng rng(seed);
    auto ref = random_tensor(rng, s, 0.2, 1.0);
    auto x = random_tensor(rng, s, 0.2, 1.0);
    return {std::move(x), std::move(ref)};
}

}  // namespace

TEST(MetricOracles, RmsePsnrMatchLoops) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        auto [x, ref] = random_pair(seed);
        EXPECT_NEAR(rmse(x, ref), oracle_rmse(x, ref), 1e-12);
        EXPECT_NEAR(psnr(x, ref), 20.0 * std::log10(1.0 / oracle_rmse(x, ref)), 1e-9);
        EXPECT_NEAR(psnr(x, ref, 255.0), 20.0 * std::log10(255.0 / oracle_rmse(x, ref)), 1e-9);
    }
}

TEST(MetricOracles, SpectralAngleMatchesLoop) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        auto [x, ref] = random_pair(seed);
        EXPECT_NEAR(spectral_angle(x, ref), oracle_sa(x, ref), 1e-9);
    }
}

TEST(MetricOracles, ErgasMatchesLoop) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        auto [x, ref] = random_pair(seed);
        EXPECT_NEAR(ergas(x, ref, 4.0), oracle_ergas(x, ref, 4.0), 1e-9);
    }
}

TEST(MetricOracles, SccMatchesLoop) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        auto [x, ref] = random_pair(seed);
        EXPECT_NEAR(scc(x, ref), oracle_scc(x, ref), 1e-9);
    }
}

TEST(SpectralAngle, KnownCases) {
    Tensor<double> a(Shape{2, 1, 1}), b(Shape{2, 1, 1});
    a[0] = 1.0;
    b[1] = 1.0;
    EXPECT_NEAR(spectral_angle(a, b), 90.0, 1e-12);
    EXPECT_NEAR(spectral_angle(a, 2.0 * a), 0.0, 1e-12);
    Tensor<double> z(Shape{2, 1, 1});
    EXPECT_THROW(spectral_angle(z, z), NumericalError);
    Tensor<double> one(Shape{1, 2, 2}, 1.0);
    EXPECT_THROW(spectral_angle(one, one), ValidationError);
}

TEST(Ergas, ClosedForm) {
    // Per-band error equal to the band mean: rmse/mean = 1, so 100/4 = 25.
    Tensor<double> ref(Shape{3, 4, 4}, 0.5);
    Tensor<double> x(Shape{3, 4, 4}, 1.0);
    EXPECT_NEAR(ergas(x, ref, 4.0), 25.0, 1e-12);
    EXPECT_NEAR(ergas(ref, ref, 4.0), 0.0, 0.0);
    Tensor<double> zero(Shape{3, 4, 4});
    EXPECT_THROW(ergas(x, zero, 4.0), NumericalError);
    EXPECT_THROW(ergas(x, ref, 0.5), ValidationError);
}

TEST(Ssim, ConstantsGiveLuminanceTerm) {
    for (double a : {0.1, 0.4, 0.9}) {
        for (double b : {0.2, 0.7}) {
            Tensor<double> x(Shape{2, 12, 12}, a), ref(Shape{2, 12, 12}, b);
            const double c1 = 1e-4;
            EXPECT_NEAR(ssim(x, ref), (2 * a * b + c1) / (a * a + b * b + c1), 1e-12);
        }
    }
}

TEST(Ssim, IdentityAndNoiseOrdering) {
    auto scene = synth_scene(3, 3, 32);
    EXPECT_NEAR(ssim(scene, scene), 1.0, 1e-12);
    Rng rng(9);
    auto noise = random_tensor(rng, scene.shape(), -1.0, 1.0);
    double prev = 1.0;
    for (double amp : {0.01, 0.05, 0.2}) {
        const double s = ssim(scene + amp * noise, scene);
        EXPECT_LT(s, prev);
        prev = s;
    }
    Tensor<double> tiny(Shape{1, 7, 9});
    EXPECT_THROW(ssim(tiny, tiny), ShapeError);
}

TEST(Q2n, SingleBandMatchesScalarIndex) {
    // One block covering the whole 16x16 image, then four 8x8 blocks.
    Rng rng(4);
    auto ref = random_tensor(rng, Shape{1, 16, 16}, 0.2, 1.0);
    auto x = ref + 0.3 * random_tensor(rng, ref.shape(), -1.0, 1.0);
    const auto xs = gdd::test::values(x);
    const auto rs = gdd::test::values(ref);
    EXPECT_NEAR(q2n(x, ref, 16), oracle_uiqi(xs, rs), 1e-9);

    double acc = 0.0;
    for (std::size_t by = 0; by < 2; ++by)
        for (std::size_t bx = 0; bx < 2; ++bx) {
            std::vector<double> a, b;
            for (std::size_t y = 0; y < 8; ++y)
                for (std::size_t i = 0; i < 8; ++i) {
                    a.push_back(x(0, by * 8 + y, bx * 8 + i));
                    b.push_back(ref(0, by * 8 + y, bx * 8 + i));
                }
            acc += oracle_uiqi(a, b);
        }
    EXPECT_NEAR(q2n(x, ref, 8), acc / 4.0, 1e-9);
    EXPECT_NEAR(uiqi<double>(xs, rs, 16, 16, 8), acc / 4.0, 1e-9);
}

TEST(Q2n, IdentityAndBias) {
    for (std::size_t bands : {1, 3, 4, 8}) {
        auto ref = synth_scene(bands, bands, 32);
        EXPECT_NEAR(q2n(ref, ref), 1.0, 1e-9) << bands;
        Tensor<double> shifted = ref + Tensor<double>(ref.shape(), 0.2);
        const double q = q2n(shifted, ref);
        EXPECT_LT(q, 1.0);
        EXPECT_GT(q, 0.0);
    }
}

TEST(Qnr, PublishedCombination) {
    EXPECT_NEAR(qnr(0.0188, 0.0374), 0.9446, 1e-3);
    EXPECT_DOUBLE_EQ(qnr(0.0, 0.0), 1.0);
}

TEST(NoReference, ZeroOrderHoldKeepsInterBandIndex) {
    // Replicating each pixel 4x4 leaves means, variances and covariances
    // unchanged, so D_lambda vanishes when each side is one block.
    auto ms = synth_scene(11, 4, 16);
    Tensor<double> up(Shape{4, 64, 64});
    for (std::size_t c = 0; c < 4; ++c)
        for (std::size_t y = 0; y < 64; ++y)
            for (std::size_t i = 0; i < 64; ++i) up(c, y, i) = ms(c, y / 4, i / 4);
    EXPECT_NEAR(d_lambda(up, ms, 64), 0.0, 1e-9);
    EXPECT_GT(d_lambda(up, ms, 16), 0.0);
    EXPECT_THROW(d_lambda(up, synth_scene(11, 3, 16)), ShapeError);
}

TEST(NoReference, ReportCombinesComponents) {
    auto hr = synth_scene(5, 4, 32);
    auto pan = SpectralResponse::band_mean(4).apply(hr);
    auto w = wald_protocol(hr, pan, 4, DownsampleKind::bicubic);
    MetricReport r;
    add_no_reference(r, hr, w.input, pan, 4);
    EXPECT_NEAR(*r.get("qnr"), (1 - *r.get("d_lambda")) * (1 - *r.get("d_s")), 1e-15);
    EXPECT_GE(*r.get("d_lambda"), 0.0);
    EXPECT_GE(*r.get("d_s"), 0.0);
}

TEST(Scc, SignFlip) {
    auto ref = synth_scene(2, 3, 16);
    EXPECT_NEAR(scc(ref, ref), 1.0, 1e-12);
    EXPECT_NEAR(scc(-1.0 * ref, ref), -1.0, 1e-12);
}

TEST(MetricInvariants, BandPermutationDoesNotChangeGlobalMetrics) {
    auto [x, ref] = random_pair(17, Shape{4, 8, 8});
    const std::size_t order[] = {2, 0, 3, 1};
    Tensor<double> xp(x.shape()), rp(ref.shape());
    for (std::size_t c = 0; c < 4; ++c) {
        std::copy(x.channel(order[c]).begin(), x.channel(order[c]).end(), xp.channel(c).begin());
        std::copy(ref.channel(order[c]).begin(), ref.channel(order[c]).end(), rp.channel(c).begin());
    }
    EXPECT_NEAR(rmse(xp, rp), rmse(x, ref), 1e-14);
    EXPECT_NEAR(ergas(xp, rp, 2.0), ergas(x, ref, 2.0), 1e-12);
    EXPECT_NEAR(spectral_angle(xp, rp), spectral_angle(x, ref), 1e-12);
    EXPECT_NEAR(ssim(xp, rp), ssim(x, ref), 1e-12);
    EXPECT_NEAR(scc(xp, rp), scc(x, ref), 1e-12);
}

TEST(MetricInvariants, PsnrRangeShift) {
    auto [x, ref] = random_pair(2);
    EXPECT_NEAR(psnr(x, ref, 255.0) - psnr(x, ref, 1.0), 20.0 * std::log10(255.0), 1e-9);
    EXPECT_TRUE(std::isinf(psnr(ref, ref)));
    EXPECT_THROW(psnr(x, ref, 0.0), ValidationError);
}

TEST(MetricReport, FullReferenceCsv) {
    auto ref = synth_scene(1, 4, 16);
    auto x = ref + Tensor<double>(ref.shape(), 0.01);
    auto r = full_reference_report(x, ref, 4);
    for (auto name : {"rmse", "psnr", "sa_degrees", "ergas", "ssim", "q2n", "scc"}) EXPECT_TRUE(r.get(name)) << name;
    EXPECT_FALSE(r.get("qnr"));
    const auto csv = metric_report_csv(r);
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "rmse,psnr,sa_degrees,ergas,ssim,q2n,scc,d_lambda,d_s,qnr");
    EXPECT_NEAR(*r.get("rmse"), 0.01, 1e-12);
}

TEST(MetricErrors, ShapeMismatchNamesShapes) {
    Tensor<double> a(Shape{3, 4, 4}), b(Shape{3, 4, 5});
    try {
        rmse(a, b);
        FAIL();
    } catch (const ShapeError& e) {
        EXPECT_NE(std::string(e.what()).find("3x4x5"), std::string::npos) << e.what();
    }
}
