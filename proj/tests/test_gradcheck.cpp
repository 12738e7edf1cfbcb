#include <gtest/gtest.h>

#include <set>

#include "test_support.hpp"

using namespace gdd;

TEST(GradCheck, SuiteCoversOpsAndPasses) {
    const auto results = run_gradcheck_suite();
    std::set<std::string> names;
    for (const auto& r : results) {
        names.insert(r.name);
        EXPECT_TRUE(r.passed()) << r.name << " error " << r.max_error << " tol " << r.tolerance;
        EXPECT_GT(r.entries, 0u) << r.name;
    }
    for (const char* must : {"conv2d", "channel_norm", "bilinear_upsample2x", "leaky_relu", "sigmoid", "uru", "fru",
                             "hs_sr_loss", "pansharpen_loss", "denoise_loss", "gdd_end_to_end"}) {
        bool found = false;
        for (const auto& n : names) found = found || n.rfind(must, 0) == 0;
        EXPECT_TRUE(found) << must;
    }
    for (const auto& r : results) {
        if (r.name == "gdd_end_to_end") {
            EXPECT_EQ(r.tolerance, 1e-4);
        } else {
            EXPECT_EQ(r.tolerance, 1e-5) << r.name;
        }
    }
}

TEST(GradCheck, ExactOnQuadratic) {
    Rng rng(2);
    std::vector<Parameter<double>> ps{gdd::test::random_param(rng, Shape{2, 3, 3})};
    const double err = gradient_check<double>(ps, [&] { return square_sum(ps[0].node()); });
    EXPECT_LT(err, 1e-9);
}

TEST(GradCheck, FlagsMissingGradient) {
    // The loss reads the parameter through a constant, so backward sees zero.
    Rng rng(3);
    std::vector<Parameter<double>> ps{gdd::test::random_param(rng, Shape{1, 2, 2})};
    const double err = gradient_check<double>(ps, [&] { return square_sum(constant(ps[0].value())); });
    EXPECT_NEAR(err, 1.0, 1e-6);
}

TEST(GradCheck, SamplingLimitsEntries) {
    Rng rng(4);
    std::vector<Parameter<double>> ps{gdd::test::random_param(rng, Shape{3, 4, 4}),
                                      gdd::test::random_param(rng, Shape{1, 1, 5})};
    std::size_t checked = 0;
    gradient_check<double>(ps, [&] { return add(square_sum(ps[0].node()), sum(ps[1].node())); }, 7, 1, &checked);
    EXPECT_EQ(checked, 7u);
    gradient_check<double>(ps, [&] { return add(square_sum(ps[0].node()), sum(ps[1].node())); }, 0, 1, &checked);
    EXPECT_EQ(checked, 53u);
    // Gradients are cleared afterwards.
    EXPECT_EQ(gdd::test::max_abs(ps[0].grad()), 0.0);
}
