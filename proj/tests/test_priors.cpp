#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "dsn/priors.hpp"

using dsn::PriorParams;

TEST(Priors, ZeroRatesGiveZeroSamples) {
    dsn::Philox4x32 rng(3, 0);
    const auto xs = dsn::sample_sources(PriorParams::zero(), 1000, rng);
    for (const auto& x : xs) {
        ASSERT_EQ(x[0], 0.0);
        ASSERT_EQ(x[1], 0.0);
    }
}

TEST(Priors, CommonOnlyGivesEqualPairs) {
    PriorParams p{0.5, {0.5, 0.5}, 1.0, {0.0, 0.0}};
    dsn::Philox4x32 rng(3, 0);
    for (const auto& x : dsn::sample_sources(p, 1000, rng)) {
        ASSERT_EQ(x[0], x[1]);
        ASSERT_NE(x[0], 0.0);
    }
}

TEST(Priors, SecondMomentMatchesAnalytic) {
    const auto p = PriorParams::standard();
    EXPECT_DOUBLE_EQ(p.second_moment(0), 0.2);
    dsn::Philox4x32 rng(11, 0);
    double sum = 0.0;
    const int n = 1'000'000;
    for (int i = 0; i < n; ++i) {
        const auto x = dsn::sample_source(p, rng);
        sum += x[0] * x[0];
    }
    EXPECT_NEAR(sum / n, 0.2, 0.2 * 0.01);
}

TEST(Priors, MixtureWeightsAndCovariances) {
    const auto comps = dsn::mixture_components(PriorParams::standard());
    ASSERT_EQ(comps.size(), 8u);
    double total = 0.0;
    for (const auto& c : comps) {
        total += c.weight;
        if (!c.support[0] && !c.support[1] && !c.support[2]) {
            EXPECT_NEAR(c.weight, 0.567, 1e-15);
        }
        if (c.support[0] && !c.support[1] && !c.support[2]) {
            EXPECT_TRUE(c.covariance.isApprox(Eigen::Matrix2d::Constant(0.5)));
        }
    }
    EXPECT_NEAR(total, 1.0, 1e-15);
}

TEST(Priors, MixtureWeightsSumToOneForRandomParams) {
    std::mt19937 gen(5);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 200; ++trial) {
        PriorParams p{u(gen), {u(gen), u(gen)}, u(gen), {u(gen), u(gen)}};
        double total = 0.0;
        for (const auto& c : dsn::mixture_components(p)) total += c.weight;
        EXPECT_NEAR(total, 1.0, 1e-14);
    }
}

TEST(Priors, MarginalNonzeroRate) {
    auto p = PriorParams::standard();
    EXPECT_NEAR(dsn::marginal_nonzero_rate(p, 0), 0.37, 1e-15);
    p.rate_common = 0.0;
    EXPECT_DOUBLE_EQ(dsn::marginal_nonzero_rate(p, 1), 0.1);
    p.rate_common = 1.0;
    EXPECT_DOUBLE_EQ(dsn::marginal_nonzero_rate(p, 1), 1.0);
    EXPECT_THROW(dsn::marginal_nonzero_rate(p, 2), std::out_of_range);
}

TEST(Priors, EmpiricalCovarianceWithinThreeStandardErrors) {
    const auto p = PriorParams::standard();
    const Eigen::Matrix2d expected = dsn::mixture_covariance(p);
    dsn::Philox4x32 rng(99, 0);
    const int n = 1'000'000;
    Eigen::Matrix2d sum = Eigen::Matrix2d::Zero();
    Eigen::Matrix2d sumsq = Eigen::Matrix2d::Zero();
    int joint = 0;
    for (int i = 0; i < n; ++i) {
        const auto x = dsn::sample_source(p, rng);
        const Eigen::Matrix2d outer = x * x.transpose();
        sum += outer;
        sumsq += outer.cwiseProduct(outer);
        joint += (x[0] != 0.0 && x[1] != 0.0);
    }
    const Eigen::Matrix2d mean = sum / n;
    for (int a = 0; a < 2; ++a) {
        for (int b = 0; b < 2; ++b) {
            const double var = sumsq(a, b) / n - mean(a, b) * mean(a, b);
            const double se = std::sqrt(var / n);
            EXPECT_NEAR(mean(a, b), expected(a, b), 3 * se) << a << "," << b;
        }
    }
    // Common support forces joint activity.
    const double rate = static_cast<double>(joint) / n;
    EXPECT_GE(rate, p.rate_common - 3 * std::sqrt(0.3 * 0.7 / n));
}

TEST(Priors, SamplingIsReproducible) {
    const auto p = PriorParams::standard();
    dsn::Philox4x32 a(8, 1), b(8, 1);
    const auto xa = dsn::sample_sources(p, 500, a);
    const auto xb = dsn::sample_sources(p, 500, b);
    for (std::size_t i = 0; i < xa.size(); ++i) {
        ASSERT_EQ(xa[i], xb[i]);
    }
}

TEST(Priors, RejectsInvalidParams) {
    PriorParams p;
    p.rate_common = 1.5;
    EXPECT_THROW(dsn::mixture_components(p), std::invalid_argument);
    p = PriorParams{};
    p.var_private[1] = -1.0;
    EXPECT_THROW(p.validate(), std::invalid_argument);
    dsn::Philox4x32 rng;
    EXPECT_THROW(dsn::sample_sources(PriorParams{}, 0, rng), std::invalid_argument);
}
