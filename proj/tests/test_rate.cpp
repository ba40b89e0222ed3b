#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "carl/channel.hpp"
#include "carl/rate.hpp"

using namespace carl;

TEST(Sinr, ReferenceCases) {
    std::vector<double> p{1.0}, g{1e-8};
    EXPECT_NEAR(sinr(p, g, 0, 1e-11), 1000.0, 1e-9);
    std::vector<double> p2{1.0, 1.0}, g2{1e-6, 1e-6};
    EXPECT_NEAR(sinr(p2, g2, 0, 1e-20), 1.0, 1e-12);
    EXPECT_THROW(sinr(p2, g, 0, 1e-11), DimensionError);
}

TEST(Sinr, ThreeNodeDirectFormula) {
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> u(0.1, 2.0);
    for (int t = 0; t < 100; ++t) {
        std::vector<double> p{u(rng), u(rng), u(rng)}, g{u(rng) * 1e-9, u(rng) * 1e-9, u(rng) * 1e-9};
        for (std::size_t k = 0; k < 3; ++k) {
            double num = p[k] * g[k];
            double den = 1e-11;
            if (k != 0) den += p[0] * g[0];
            if (k != 1) den += p[1] * g[1];
            if (k != 2) den += p[2] * g[2];
            EXPECT_NEAR(sinr(p, g, k, 1e-11), num / den, 1e-12 * num / den);
        }
    }
}

namespace {

struct Slot {
    Scenario s;
    Grid3<std::uint8_t> a;
    Grid2<double> p;
    Grid3<double> g;
};

Slot make_slot(std::uint64_t seed) {
    Slot x;
    x.s.num_slots = 1;
    x.s.node_positions = default_node_layout(3);
    x.a = Grid3<std::uint8_t>(2, 3, 1, 0);
    x.p = Grid2<double>(3, 1, 0.0);
    x.g = Grid3<double>(2, 3, 1);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.1, 1.0);
    for (auto& v : x.g.data()) v = u(rng) * 1e-9;
    for (auto& v : x.p.data()) v = u(rng);
    return x;
}

}  // namespace

TEST(SlotRate, ZeroAndUnitSinr) {
    Slot x = make_slot(1);
    for (double v : slot_rate(x.a, x.p, x.g, 0, x.s)) EXPECT_EQ(v, 0.0);
    x.a(0, 1, 0) = 1;
    x.p(0, 0) = 0.0;
    x.p(2, 0) = 0.0;
    x.p(1, 0) = x.s.noise_power / x.g(0, 1, 0);  // SINR exactly 1
    auto r = slot_rate(x.a, x.p, x.g, 0, x.s);
    EXPECT_NEAR(r[1], 5e6, 1e-6);
    EXPECT_EQ(r[0], 0.0);
}

TEST(SlotRate, BruteForcePairs) {
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
        Slot x = make_slot(seed);
        x.a(0, seed % 3, 0) = 1;
        x.a(1, (seed + 1) % 3, 0) = 1;
        auto r = slot_rate(x.a, x.p, x.g, 0, x.s);
        for (std::size_t m = 0; m < 2; ++m)
            for (std::size_t k = 0; k < 3; ++k) {
                if (!x.a(m, k, 0)) continue;
                double interf = 1e-11;
                for (std::size_t i = 0; i < 3; ++i)
                    if (i != k) interf += x.p(i, 0) * x.g(m, i, 0);
                double want = 5e6 * std::log2(1.0 + x.p(k, 0) * x.g(m, k, 0) / interf);
                EXPECT_NEAR(r[k], want, 1e-9 * want);
            }
    }
}

TEST(SlotRate, RejectsBrokenAssociation) {
    Slot x = make_slot(2);
    x.a(0, 0, 0) = 1;
    x.a(0, 1, 0) = 1;
    EXPECT_THROW(slot_rate(x.a, x.p, x.g, 0, x.s), PreconditionError);
    x.a(0, 1, 0) = 0;
    x.a(1, 0, 0) = 1;
    EXPECT_THROW(slot_rate(x.a, x.p, x.g, 0, x.s), PreconditionError);
}

TEST(SlotRate, PowerMonotonicity) {
    Slot x = make_slot(4);
    x.a(0, 0, 0) = 1;
    x.a(1, 2, 0) = 1;
    double own = slot_rate(x.a, x.p, x.g, 0, x.s)[0];
    x.p(0, 0) *= 1.5;
    double more = slot_rate(x.a, x.p, x.g, 0, x.s)[0];
    EXPECT_GE(more, own);
    x.p(1, 0) *= 2.0;
    EXPECT_LE(slot_rate(x.a, x.p, x.g, 0, x.s)[0], more);
}

TEST(EvaluatePlan, ZeroPowerAndPermutation) {
    Scenario s;
    s.num_slots = 4;
    s.horizon_seconds = 240;
    Plan plan = Plan::stationary(s);
    auto g = average_gains(plan.waypoints, s);
    auto r = evaluate_plan(plan, g, s);
    EXPECT_EQ(r.worst, 0.0);
    for (double v : r.totals) EXPECT_EQ(v, 0.0);

    for (std::size_t n = 0; n < 4; ++n) {
        plan.association(0, n % 3, n) = 1;
        plan.association(1, (n + 1) % 3, n) = 1;
        plan.power(n % 3, n) = 0.5;
        plan.power((n + 1) % 3, n) = 0.2;
    }
    r = evaluate_plan(plan, g, s);
    for (double v : r.totals) EXPECT_GE(v, r.worst);

    // Relabel nodes 0 -> 2 -> 1 -> 0 and carry every per-node array along.
    const std::size_t perm[3] = {2, 0, 1};
    Scenario t = s;
    Plan q = plan;
    Grid3<double> h(2, 3, 4);
    for (std::size_t k = 0; k < 3; ++k) {
        t.node_positions[perm[k]] = s.node_positions[k];
        for (std::size_t n = 0; n < 4; ++n) {
            q.power(perm[k], n) = plan.power(k, n);
            for (std::size_t m = 0; m < 2; ++m) {
                q.association(m, perm[k], n) = plan.association(m, k, n);
                h(m, perm[k], n) = g(m, k, n);
            }
        }
    }
    auto rp = evaluate_plan(q, h, t);
    EXPECT_EQ(rp.worst, r.worst);
    for (std::size_t k = 0; k < 3; ++k) EXPECT_EQ(rp.totals[perm[k]], r.totals[k]);
}

TEST(EvaluatePlan, GainShapeChecked) {
    Scenario s;
    Plan plan = Plan::stationary(s);
    EXPECT_THROW(evaluate_plan(plan, Grid3<double>(1, 1, 1), s), DimensionError);
}
