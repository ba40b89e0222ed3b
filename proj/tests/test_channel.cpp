#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "carl/channel.hpp"

using namespace carl;

TEST(Distance, Geometry) {
    EXPECT_DOUBLE_EQ(distance({10, 20}, {10, 20}, 150), 150.0);
    EXPECT_NEAR(distance({150, 0}, {0, 0}, 150), 212.13203435596427, 1e-9);
    EXPECT_THROW(distance({300, 400}, {0, 0}, 0.0), PreconditionError);
}

TEST(PathLoss, FrozenValueAtOneFiftyMeters) {
    Scenario s;
    // 20 log10(4 pi 2.4e9 150 / 3e8) + 1, evaluated once in long double and frozen.
    EXPECT_NEAR(path_loss_db(150.0, s, true), 84.567822201394, 1e-9);
    EXPECT_NEAR(path_loss_db(150.0, s, true), 84.57, 5e-3);
    long double oracle = 20.0L * std::log10(4.0L * 3.14159265358979323846L * 2.4e9L * 150.0L / 3e8L) + 1.0L;
    EXPECT_NEAR(path_loss_db(150.0, s, true), static_cast<double>(oracle), 1e-12);
}

TEST(PathLoss, RegimeAndDistanceLaws) {
    Scenario s;
    EXPECT_NEAR(path_loss_db(150.0, s, false) - path_loss_db(150.0, s, true), 19.0, 1e-12);
    EXPECT_NEAR(path_loss_db(300.0, s, true) - path_loss_db(150.0, s, true), 20.0 * std::log10(2.0), 1e-12);
    double base = path_loss_db(150.0, s, true);
    s.channel.shadowing_db = 3.0;
    EXPECT_NEAR(path_loss_db(150.0, s, true) - base, 3.0, 1e-12);
    EXPECT_THROW(path_loss_db(0.0, s, true), PreconditionError);
}

TEST(LosProbability, ReferenceValues) {
    ChannelParams p;
    EXPECT_NEAR(los_probability(0.0, 150.0, p), 1.0 / (1.0 + 9.61 * std::exp(-0.1592 * 80.39)), 1e-15);
    EXPECT_NEAR(los_probability(0.0, 150.0, p), 0.99997, 1e-5);
    EXPECT_NEAR(los_probability(150.0, 150.0, p), 0.9668, 1e-4);
    EXPECT_EQ(elevation_deg(0.0, 150.0), 90.0);
}

TEST(LosProbability, MonotoneInOffset) {
    ChannelParams p;
    double prev = 2.0;
    for (double r = 0.0; r <= 900.0; r += 1.0) {
        double v = los_probability(r, 150.0, p);
        EXPECT_GT(v, 0.0);
        EXPECT_LE(v, 1.0);
        EXPECT_LE(v, prev);
        prev = v;
    }
}

TEST(AverageGain, ClosedFormMatchesMixture) {
    Scenario s;
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(0.0, 600.0);
    for (int i = 0; i < 1000; ++i) {
        Vec2 q{u(rng), u(rng)}, g{u(rng), u(rng)};
        double a = average_gain(q, g, s), b = average_gain_mixture(q, g, s);
        EXPECT_NEAR(a, b, 1e-12 * b);
    }
}

TEST(AverageGain, OverheadIsAlmostLos) {
    Scenario s;
    double los = from_db(-path_loss_db(s.altitude, s, true));
    EXPECT_NEAR(average_gain({300, 300}, {300, 300}, s), los, 1e-4 * los);
    EXPECT_GT(GainConstants::from(s).c2, 0.0);
}

TEST(AverageGain, StrictlyDecreasingInOffset) {
    Scenario s;
    double prev = average_gain({0, 0}, {0, 0}, s);
    for (double r = 0.5; r <= 850.0; r += 0.5) {
        double v = average_gain({r, 0}, {0, 0}, s);
        EXPECT_LT(v, prev) << r;
        prev = v;
    }
}

TEST(Realization, MonteCarloMeanMatchesAverage) {
    Scenario s;
    s.node_positions = {{100, 300}};
    s.uav_initials = {{250, 300}};
    s.num_slots = 1;
    std::mt19937_64 rng(11);
    Grid2<Vec2> w(1, 2, Vec2{250, 300});
    double sum = 0.0;
    const int draws = 100000;
    for (int i = 0; i < draws; ++i) sum += sample_realization(w, s, rng).gains(0, 0, 0);
    double avg = average_gain({250, 300}, {100, 300}, s);
    EXPECT_NEAR(sum / draws, avg, 0.02 * avg);
}

TEST(Realization, UnitFadingPowerAndDeterminism) {
    std::mt19937_64 rng(3);
    auto d = FadingDraws::sample(2, 5, 100000, rng);
    double mean = 0.0;
    for (double v : d.fading_power.data()) mean += v;
    mean /= static_cast<double>(d.fading_power.data().size());
    EXPECT_NEAR(mean, 1.0, 0.005);

    Scenario s;
    s.num_slots = 5;
    Grid2<Vec2> w(2, 6, Vec2{100, 100});
    std::mt19937_64 a(42), b(42);
    auto ra = sample_realization(w, s, a), rb = sample_realization(w, s, b);
    EXPECT_EQ(ra.gains, rb.gains);
    EXPECT_EQ(ra.los_flags, rb.los_flags);
}

TEST(DbConversions, RoundTrip) {
    for (double v : {1e-15, 3.3e-9, 0.5, 1.0, 42.0, 7e6}) EXPECT_NEAR(from_db(to_db(v)), v, 1e-12 * v);
    EXPECT_NEAR(dbm_to_watts(-80.0), 1e-11, 1e-24);
}
