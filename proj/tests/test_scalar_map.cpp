#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "dsn/scalar_map.hpp"

using dsn::RegionLabel;
using dsn::ThresholdGeometry;
using dsn::Vec2;

namespace {

Vec2 closed(double y1, double y2, double t1, double t2, double psi) {
    return dsn::two_dim_soft_threshold(Vec2(y1, y2), ThresholdGeometry::make(t1, t2, psi));
}

Vec2 oracle(double y1, double y2, double t1, double t2, double psi) {
    return dsn::scalar_prox_oracle(Vec2(y1, y2), t1, t2, dsn::pairwise_l1_utility(psi));
}

}  // namespace

TEST(Geometry, CornerPoints) {
    const auto g = ThresholdGeometry::make(1.0, 2.0, 0.5);
    EXPECT_TRUE(g.A().isApprox(Vec2(0.5, 3.0)));
    EXPECT_TRUE(g.B().isApprox(Vec2(1.5, 1.0)));
    EXPECT_TRUE(g.C().isApprox(Vec2(1.5, -3.0)));
    EXPECT_TRUE(g.D().isApprox(-g.A()));
    EXPECT_TRUE(g.E().isApprox(-g.B()));
    EXPECT_TRUE(g.F().isApprox(-g.C()));
    EXPECT_THROW(ThresholdGeometry::make(0.0, 1.0, 0.5), std::invalid_argument);
    EXPECT_THROW(ThresholdGeometry::make(1.0, 1.0, -0.1), std::invalid_argument);
}

TEST(Label, Examples) {
    const auto g = ThresholdGeometry::make(1.0, 1.0, 0.5);
    auto l = dsn::label(Vec2(3.0, 2.8), g);
    EXPECT_EQ(l.first, RegionLabel::H1);
    EXPECT_EQ(l.second, RegionLabel::H1);
    l = dsn::label(Vec2(0.2, -0.3), g);
    EXPECT_EQ(l.first, RegionLabel::O);
    EXPECT_EQ(l.second, RegionLabel::O);
    l = dsn::label(Vec2(3.0, 0.0), g);
    EXPECT_EQ(l.first, RegionLabel::S1);
    EXPECT_EQ(l.second, RegionLabel::O);
    // Oracle agrees with the labelled outputs.
    EXPECT_NEAR(oracle(3.0, 2.8, 1, 1, 0.5)[0], oracle(3.0, 2.8, 1, 1, 0.5)[1], 1e-8);
    EXPECT_NEAR(oracle(3.0, 0.0, 1, 1, 0.5)[0], 1.5, 1e-8);
    EXPECT_NEAR(oracle(3.0, 0.0, 1, 1, 0.5)[1], 0.0, 1e-8);
}

TEST(Label, EveryPartitionIsReached) {
    // One interior point per partition for tau = (1, 1), psi = 0.5.
    const auto g = ThresholdGeometry::make(1.0, 1.0, 0.5);
    using L = RegionLabel;
    struct Case { Vec2 y; L l1, l2; };
    const Case cases[] = {
        {{0.0, 0.0}, L::O, L::O},     {{3.0, 2.8}, L::H1, L::H1},  {{4.0, 1.0}, L::S1, L::D1},
        {{3.0, 0.0}, L::S1, L::O},    {{3.0, -3.0}, L::S1, L::S2}, {{0.0, -3.0}, L::O, L::S2},
        {{-1.0, -4.0}, L::D2, L::S2}, {{-3.0, -2.8}, L::H2, L::H2}, {{-4.0, -1.0}, L::S2, L::D2},
        {{-3.0, 0.0}, L::S2, L::O},   {{-3.0, 3.0}, L::S2, L::S1}, {{0.0, 3.0}, L::O, L::S1},
        {{1.0, 4.0}, L::D1, L::S1},
    };
    for (const auto& c : cases) {
        const auto l = dsn::label(c.y, g);
        EXPECT_EQ(l.first, c.l1) << c.y.transpose();
        EXPECT_EQ(l.second, c.l2) << c.y.transpose();
        EXPECT_LE((closed(c.y[0], c.y[1], 1, 1, 0.5) - oracle(c.y[0], c.y[1], 1, 1, 0.5))
                      .lpNorm<Eigen::Infinity>(), 1e-8);
    }
}

TEST(TwoDimSoftThreshold, Examples) {
    Vec2 v = closed(2.0, -0.5, 1, 1, 0.0);
    EXPECT_EQ(v[0], 1.0);
    EXPECT_EQ(v[1], 0.0);
    v = closed(3.0, 2.8, 1, 1, 0.5);
    EXPECT_NEAR(v[0], 1.9, 1e-15);
    EXPECT_NEAR(v[1], 1.9, 1e-15);
    EXPECT_LE((v - oracle(3.0, 2.8, 1, 1, 0.5)).norm(), 1e-8);
    v = closed(0.2, -0.3, 1, 1, 0.5);
    EXPECT_EQ(v, Vec2::Zero());
}

TEST(Oracle, TrivialUtilities) {
    auto zero = [](const Vec2&) { return 0.0; };
    const Vec2 v = dsn::scalar_prox_oracle(Vec2(1.3, -0.7), 0.5, 2.0, zero);
    EXPECT_NEAR(v[0], 1.3, 1e-8);
    EXPECT_NEAR(v[1], -0.7, 1e-8);
    const Vec2 w = oracle(2.0, -0.5, 1, 1, 0.0);
    EXPECT_NEAR(w[0], 1.0, 1e-8);
    EXPECT_NEAR(w[1], 0.0, 1e-8);
}

TEST(Oracle, ReportsNonConvergence) {
    dsn::OracleOptions starved;
    starved.grid_points = 3;
    starved.line_iterations = 0;
    starved.newton_iterations = 0;
    // A smooth utility whose minimizer sits off every kink line and off the grid.
    auto smooth = [](const Vec2& v) { return 0.3 * (v[0] - 0.123) * (v[0] - 0.123) + 0.0 * v[1]; };
    EXPECT_THROW(dsn::scalar_prox_oracle(Vec2(2.71, -1.37), 1.0, 1.0, smooth, starved),
                 dsn::ConvergenceError);
}

TEST(TwoDimSoftThreshold, OracleEquivalenceOnGrid) {
    for (const auto& [t1, t2, psi] : {std::tuple{1.0, 1.0, 0.5}, std::tuple{0.7, 1.3, 0.3}}) {
        double worst = 0.0;
        for (int i = 0; i < 200; ++i) {
            for (int k = 0; k < 200; ++k) {
                const double y1 = -4.0 + 8.0 * i / 199.0;
                const double y2 = -4.0 + 8.0 * k / 199.0;
                const Vec2 diff = closed(y1, y2, t1, t2, psi) - oracle(y1, y2, t1, t2, psi);
                worst = std::max(worst, diff.lpNorm<Eigen::Infinity>());
            }
        }
        EXPECT_LE(worst, 1e-6) << "tau=(" << t1 << "," << t2 << ") psi=" << psi;
    }
}

TEST(TwoDimSoftThreshold, OracleEquivalenceRandom) {
    std::mt19937_64 gen(2024);
    std::uniform_real_distribution<double> uy(-5.0, 5.0), ut(0.05, 2.0), up(0.0, 1.0);
    for (int i = 0; i < 2000; ++i) {
        const double y1 = uy(gen), y2 = uy(gen), t1 = ut(gen), t2 = ut(gen), psi = up(gen);
        const Vec2 diff = closed(y1, y2, t1, t2, psi) - oracle(y1, y2, t1, t2, psi);
        ASSERT_LE(diff.lpNorm<Eigen::Infinity>(), 1e-6)
            << "y=(" << y1 << "," << y2 << ") tau=(" << t1 << "," << t2 << ") psi=" << psi;
    }
}

TEST(TwoDimSoftThreshold, Symmetries) {
    std::mt19937_64 gen(7);
    std::uniform_real_distribution<double> uy(-5.0, 5.0), ut(0.05, 2.0), up(0.0, 1.0);
    for (int i = 0; i < 20000; ++i) {
        const double y1 = uy(gen), y2 = uy(gen), t1 = ut(gen), t2 = ut(gen), psi = up(gen);
        const Vec2 v = closed(y1, y2, t1, t2, psi);
        // Odd symmetry, bit for bit.
        ASSERT_EQ(closed(-y1, -y2, t1, t2, psi), Vec2(-v));
        // Swap symmetry at equal tuning.
        const Vec2 s = closed(y1, y2, t1, t1, psi);
        const Vec2 sw = closed(y2, y1, t1, t1, psi);
        ASSERT_NEAR(s[0], sw[1], 1e-15);
        ASSERT_NEAR(s[1], sw[0], 1e-15);
        // Pooled outputs coincide.
        const auto l = dsn::label(Vec2(y1, y2), ThresholdGeometry::make(t1, t2, psi));
        if (l.first == RegionLabel::H1 || l.first == RegionLabel::H2) {
            ASSERT_EQ(l.first, l.second);
            ASSERT_EQ(v[0], v[1]);
        }
    }
}

TEST(TwoDimSoftThreshold, PsiZeroIsSeparable) {
    std::mt19937_64 gen(8);
    std::uniform_real_distribution<double> uy(-5.0, 5.0), ut(0.05, 2.0);
    for (int i = 0; i < 20000; ++i) {
        const double y1 = uy(gen), y2 = uy(gen), t1 = ut(gen), t2 = ut(gen);
        const Vec2 v = closed(y1, y2, t1, t2, 0.0);
        ASSERT_EQ(v[0], dsn::soft_threshold(y1, t1));
        ASSERT_EQ(v[1], dsn::soft_threshold(y2, t2));
    }
}

TEST(TwoDimSoftThreshold, NonexpansiveInWeightedMetric) {
    std::mt19937_64 gen(9);
    std::uniform_real_distribution<double> uy(-5.0, 5.0), ut(0.05, 2.0), up(0.0, 1.0);
    for (int i = 0; i < 20000; ++i) {
        const double t1 = ut(gen), t2 = ut(gen), psi = up(gen);
        const Vec2 a(uy(gen), uy(gen)), b(uy(gen), uy(gen));
        const auto g = ThresholdGeometry::make(t1, t2, psi);
        const Vec2 da = dsn::two_dim_soft_threshold(a, g) - dsn::two_dim_soft_threshold(b, g);
        const Vec2 dy = a - b;
        auto wnorm = [&](const Vec2& v) { return std::sqrt(v[0] * v[0] / t1 + v[1] * v[1] / t2); };
        ASSERT_LE(wnorm(da), wnorm(dy) * (1 + 1e-12) + 1e-14);
    }
}

TEST(TwoDimSoftThreshold, ContinuousAcrossBoundaries) {
    const double t1 = 0.8, t2 = 1.3, psi = 0.6;
    const auto g = ThresholdGeometry::make(t1, t2, psi);
    const double a1 = (1 - psi) * t1, b1 = (1 + psi) * t1, a2 = (1 - psi) * t2, b2 = (1 + psi) * t2;
    auto check = [&](const Vec2& p, const Vec2& normal) {
        const Vec2 n = normal.normalized() * 1e-9;
        const Vec2 d = dsn::two_dim_soft_threshold(p + n, g) - dsn::two_dim_soft_threshold(p - n, g);
        EXPECT_LE(d.lpNorm<Eigen::Infinity>(), 1e-7) << p.transpose();
    };
    for (int i = -40; i <= 40; ++i) {
        const double s = 0.1 * i;
        for (double c : {a1, b1, -a1, -b1}) check(Vec2(c, s), Vec2(1, 0));
        for (double c : {a2, b2, -a2, -b2}) check(Vec2(s, c), Vec2(0, 1));
        // Unit-slope lines through A, B, D, E.
        for (const Vec2& corner : {g.A(), g.B(), g.D(), g.E()}) {
            check(corner + Vec2(s, s), Vec2(1, -1));
        }
        // Segments AB and DE.
        check(g.A() + (0.5 + 0.0125 * i) * (g.B() - g.A()), Vec2(t2, t1));
        check(g.D() + (0.5 + 0.0125 * i) * (g.E() - g.D()), Vec2(t2, t1));
    }
}

TEST(TwoDimSoftThreshold, LargePsiRoutesToOracle) {
    const auto g = ThresholdGeometry::make(1.0, 0.7, 1.2);
    EXPECT_FALSE(g.closed_form());
    EXPECT_THROW(dsn::label(Vec2(1, 1), g), std::invalid_argument);
    const Vec2 y(2.5, -0.4);
    EXPECT_LE((dsn::two_dim_soft_threshold(y, g) - oracle(2.5, -0.4, 1.0, 0.7, 1.2)).norm(), 1e-12);
}

TEST(BlockSoftThreshold, Examples) {
    Eigen::VectorXd y(2);
    y << 0.3, -0.4;
    EXPECT_EQ(dsn::block_soft_threshold(y, 1.0), Eigen::VectorXd::Zero(2));
    y << 3.0, 4.0;
    const Eigen::VectorXd v = dsn::block_soft_threshold(y, 1.0);
    EXPECT_NEAR(v[0], 2.4, 1e-15);
    EXPECT_NEAR(v[1], 3.2, 1e-15);
    // 1-D minimization of 0.5 ||y - s u||^2 + tau |s| along the ray u = y / ||y||.
    const Eigen::VectorXd u = y.normalized();
    double lo = 0.0, hi = 5.0;
    for (int it = 0; it < 200; ++it) {
        const double m1 = lo + (hi - lo) / 3, m2 = hi - (hi - lo) / 3;
        auto f = [&](double s) { return 0.5 * (y - s * u).squaredNorm() + std::abs(s); };
        (f(m1) < f(m2) ? hi : lo) = (f(m1) < f(m2) ? m2 : m1);
    }
    EXPECT_NEAR((0.5 * (lo + hi) * u - v).norm(), 0.0, 1e-7);
    EXPECT_EQ(dsn::block_soft_threshold(y, 0.0), y);
    EXPECT_EQ(dsn::block_soft_threshold(Eigen::VectorXd::Zero(3), 0.5), Eigen::VectorXd::Zero(3));
}

TEST(WeightedBlockSoftThreshold, MatchesOracle) {
    std::mt19937_64 gen(10);
    std::uniform_real_distribution<double> uy(-4.0, 4.0), ut(0.05, 2.0);
    for (int i = 0; i < 2000; ++i) {
        const Vec2 y(uy(gen), uy(gen));
        const double t1 = ut(gen), t2 = ut(gen);
        const Vec2 a = dsn::weighted_block_soft_threshold(y, t1, t2);
        const Vec2 b = dsn::scalar_prox_oracle(y, t1, t2, dsn::l21_utility());
        ASSERT_LE((a - b).lpNorm<Eigen::Infinity>(), 1e-6) << y.transpose() << " " << t1 << " " << t2;
    }
    // Equal weights reduce to the plain block threshold.
    const Vec2 y(3.0, 4.0);
    EXPECT_TRUE(dsn::weighted_block_soft_threshold(y, 1.0, 1.0).isApprox(Vec2(2.4, 3.2)));
}
