#include <gtest/gtest.h>

#include "carl/surrogates.hpp"
#include "support/oracles.hpp"

using namespace carl;

TEST(SurrogateAudit, BoundsAndTangencyOnDefaultScenario) {
    Scenario s;
    auto a = oracle::audit_surrogates(s, 200, 20, 17);
    EXPECT_LE(a.r1_tangency, 1e-9);
    EXPECT_LE(a.r2_tangency, 1e-9);
    EXPECT_EQ(a.r1_above, 0u);
    EXPECT_EQ(a.y_up_below, 0u);
    EXPECT_EQ(a.r2_above, 0u);
    EXPECT_EQ(a.r2_aux_above, 0u);
    EXPECT_EQ(a.x_lin_above, 0u);
    EXPECT_EQ(a.u_lin_above, 0u);
    EXPECT_EQ(a.y_tilde_above, 0u);
    EXPECT_EQ(a.separation_fail, 0u);
    EXPECT_GT(a.separation_checked, 100u);
}

TEST(R1, ZeroPowersCollapseToNoise) {
    Scenario s;
    std::vector<double> p(3, 0.0);
    auto r1 = build_r1_llb({120, 80}, p, s);
    for (Vec2 q : {Vec2{0, 0}, Vec2{300, 300}, Vec2{599, 1}}) {
        EXPECT_NEAR(r1.eval(q), std::log2(s.noise_power), 1e-12);
        EXPECT_NEAR(r1_true(q, p, s), std::log2(s.noise_power), 1e-12);
    }
}

TEST(R1, GradientMatchesFiniteDifferences) {
    Scenario s;
    std::vector<double> p{0.3, 1.2, 0.7};
    auto r1 = build_r1_llb({250, 310}, p, s);
    Vec2 q{280, 260};
    Eigen::Vector2d g;
    Eigen::Matrix2d h;
    r1.eval(q, &g, &h);
    const double e = 1e-3;
    EXPECT_NEAR(g(0), (r1.eval({q.x + e, q.y}) - r1.eval({q.x - e, q.y})) / (2 * e), 1e-8);
    EXPECT_NEAR(g(1), (r1.eval({q.x, q.y + e}) - r1.eval({q.x, q.y - e})) / (2 * e), 1e-8);
    // Concavity of the composed minorant.
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(h);
    EXPECT_LE(es.eigenvalues().maxCoeff(), 1e-14);
    for (const auto& t : r1.terms) {
        EXPECT_LE(t.o, 0.0);
        EXPECT_LE(t.g, 0.0);
    }
}

TEST(R2, TightAuxiliaryEqualsTrue) {
    Scenario s;
    std::vector<double> p{0.5, 0.25, 1.5};
    Vec2 q{410, 170};
    std::vector<double> x(3), y(3);
    for (std::size_t i = 0; i < 3; ++i) {
        x[i] = norm_sq(q - s.node_positions[i]) + s.altitude * s.altitude;
        y[i] = oracle::true_y(q, s.node_positions[i], s);
    }
    EXPECT_NEAR(r2_lb_aux(x, y, p, 1, s), r2_true(q, p, 1, s), 1e-12);
}

TEST(R2, ShrinkingAuxiliaryLowersSurrogate) {
    Scenario s;
    std::vector<double> p{0.5, 0.25, 1.5};
    Vec2 q{410, 170};
    std::vector<double> x(3), y(3);
    for (std::size_t i = 0; i < 3; ++i) {
        x[i] = norm_sq(q - s.node_positions[i]) + s.altitude * s.altitude;
        y[i] = oracle::true_y(q, s.node_positions[i], s);
    }
    double prev = r2_lb_aux(x, y, p, 0, s);
    for (int step = 0; step < 20; ++step) {
        for (auto& v : x) v = std::max(s.altitude * s.altitude, v * 0.9);
        double now = r2_lb_aux(x, y, p, 0, s);
        EXPECT_LE(now, prev);
        prev = now;
    }
    for (auto& v : y) v = std::max(1.0, v * 0.5);
    EXPECT_LE(r2_lb_aux(x, y, p, 0, s), prev);
}

TEST(R2, NoInterferersIsConstant) {
    Scenario s;
    s.node_positions = {{300, 300}};
    std::vector<double> p{2.0};
    auto r2 = build_r2_lb({10, 10}, p, 0, s);
    double v = 0.0;
    ASSERT_TRUE(r2.eval({500, 20}, v));
    EXPECT_NEAR(v, -std::log2(s.noise_power), 1e-12);
}

TEST(R2, ReferenceOnInterfererUsesOverheadGain) {
    Scenario s;
    std::vector<double> p{0.5, 0.25, 1.5};
    Vec2 on = s.node_positions[2];
    auto r2 = build_r2_lb(on, p, 0, s);
    bool any = false;
    for (const auto& t : r2.terms) any = any || t.overhead;
    ASSERT_TRUE(any);
    double v = 0.0;
    ASSERT_TRUE(r2.eval(on, v));
    EXPECT_NEAR(v, r2_true(on, p, 0, s), 1e-9);
    for (Vec2 q : {Vec2{0, 0}, Vec2{on.x + 1, on.y}, Vec2{600, 600}}) {
        if (r2.eval(q, v)) {
            EXPECT_LE(v, r2_true(q, p, 0, s) + 1e-12);
        }
    }
}

TEST(R2, GradientMatchesFiniteDifferences) {
    Scenario s;
    std::vector<double> p{0.5, 0.25, 1.5};
    auto r2 = build_r2_lb({320, 330}, p, 1, s);
    Vec2 q{300, 350};
    double v = 0.0, a = 0.0, b = 0.0;
    Eigen::Vector2d g;
    Eigen::Matrix2d h;
    ASSERT_TRUE(r2.eval(q, v, &g, &h));
    const double e = 1e-3;
    r2.eval({q.x + e, q.y}, a);
    r2.eval({q.x - e, q.y}, b);
    EXPECT_NEAR(g(0), (a - b) / (2 * e), 1e-8);
    r2.eval({q.x, q.y + e}, a);
    r2.eval({q.x, q.y - e}, b);
    EXPECT_NEAR(g(1), (a - b) / (2 * e), 1e-8);
}

TEST(LogGainHessian, PositiveSemidefiniteOnGrid) {
    Scenario s;
    auto w = oracle::hessian_witness(s, 50);
    EXPECT_GE(w.min_eig_closed, -1e-9);
    EXPECT_GE(w.min_eig_scaled, -1e-9);
    EXPECT_GE(w.min_eig_numeric, -1e-4);
    EXPECT_LT(w.max_mismatch, 1e-4);
}
