#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "carl/energy.hpp"

using namespace carl;
namespace fs = std::filesystem;

namespace {

Scenario small(int slots, double slot_s = 60.0) {
    Scenario s;
    s.num_slots = slots;
    s.horizon_seconds = slots * slot_s;
    return s;
}

fs::path temp_file(const std::string& name, const std::string& body) {
    auto p = fs::temp_directory_path() / ("carl_energy_" + name);
    std::ofstream(p) << body;
    return p;
}

}  // namespace

TEST(Irradiance, ConstantTraceGivesSixtyJoules) {
    Scenario s = small(3);
    std::string body = "timestamp,irradiance_wm2\n";
    for (int t = 0; t < 180; t += 10) body += std::to_string(t) + ",500\n";
    auto prof = load_irradiance_csv(temp_file("const.csv", body).string(), s);
    for (std::size_t k = 0; k < s.num_nodes(); ++k)
        for (std::size_t n = 0; n < 3; ++n) EXPECT_NEAR(prof.energy(k, n), 60.0, 1e-12);
}

TEST(Irradiance, EmptyGapAndNegativeAreErrors) {
    Scenario s = small(3);
    EXPECT_THROW(load_irradiance_csv(temp_file("empty.csv", "").string(), s), ConfigError);
    EXPECT_THROW(load_irradiance_csv(temp_file("gap.csv", "timestamp,irradiance_wm2\n0,1\n150,1\n").string(), s),
                 ConfigError);
    EXPECT_THROW(load_irradiance_csv(temp_file("neg.csv", "0,1\n60,-2\n120,1\n").string(), s), ConfigError);
    try {
        load_irradiance_csv(temp_file("gap2.csv", "0,1\n150,1\n").string(), s);
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("[60, 120)"), std::string::npos);
    }
}

TEST(Irradiance, TwoRateTraceMatchesHandResampling) {
    Scenario s = small(4, 30.0);
    // Samples every 7 s; 100 W/m^2 before t = 50, 300 after.
    std::string body = "timestamp,irradiance_wm2\n";
    std::vector<double> sum(4, 0.0), cnt(4, 0.0);
    for (int t = 0; t < 120; t += 7) {
        double v = t < 50 ? 100.0 : 300.0;
        body += std::to_string(t) + "," + std::to_string(v) + "\n";
        sum[t / 30] += v;
        cnt[t / 30] += 1.0;
    }
    auto prof = load_irradiance_csv(temp_file("two.csv", body).string(), s);
    for (std::size_t n = 0; n < 4; ++n)
        EXPECT_NEAR(prof.energy(0, n), sum[n] / cnt[n] * 0.01 * 0.2 * 30.0, 1e-12);
}

TEST(Irradiance, IsoTimestampsAccepted) {
    EXPECT_EQ(parse_timestamp("2020-06-01T00:01:00Z") - parse_timestamp("2020-06-01T00:00:00"), 60.0);
    EXPECT_EQ(parse_timestamp("42"), 42.0);
    EXPECT_THROW(parse_timestamp("noon"), ConfigError);
}

TEST(Irradiance, ExportRoundTrips) {
    Scenario s = small(5);
    auto prof = synth_profile("bell", 600, s);
    auto path = fs::temp_directory_path() / "carl_energy_export.csv";
    write_irradiance_csv(path.string(), prof, s);
    auto back = load_irradiance_csv(path.string(), s);
    for (std::size_t n = 0; n < 5; ++n) EXPECT_NEAR(back.energy(0, n), prof.energy(0, n), 1e-9);
}

TEST(Synth, Shapes) {
    Scenario s = small(4);
    auto zero = synth_profile("constant", 0.0, s);
    for (double v : zero.energy.data()) EXPECT_EQ(v, 0.0);
    auto ramp = synth_profile("ramp", 500.0, s);
    for (std::size_t n = 1; n < 4; ++n) EXPECT_GT(ramp.energy(0, n), ramp.energy(0, n - 1));
    Scenario b = small(9);
    auto bell = synth_profile("bell", 600.0, b);
    EXPECT_NEAR(bell.energy(0, 4), irradiance_to_joules(600.0, b), 1e-12);
    for (std::size_t n = 0; n < 9; ++n) EXPECT_LE(bell.energy(0, n), bell.energy(0, 4));
    EXPECT_THROW(synth_profile("sunset", 1.0, s), ConfigError);
}

TEST(Feasibility, ZeroPowerAndBoundary) {
    Scenario s = small(4);
    auto prof = synth_profile("constant", 500.0, s);
    Grid2<double> p(s.num_nodes(), 4, 0.0);
    EXPECT_TRUE(check_energy_feasible(p, prof, s).empty());
    p(0, 0) = prof.energy(0, 0) / s.slot_seconds();
    EXPECT_TRUE(check_energy_feasible(p, prof, s).empty());
    auto L = evolve_battery(p, prof, s);
    EXPECT_NEAR(L.after_spend(0, 0), 0.0, 1e-12);
    p(0, 0) *= 1.01;
    auto v = check_energy_feasible(p, prof, s);
    ASSERT_EQ(v.size(), 1u);
    EXPECT_EQ(v[0].constraint, "causality");
    EXPECT_NEAR(v[0].magnitude, 0.6, 1e-9);
    EXPECT_THROW(evolve_battery(p, prof, s), PreconditionError);
}

TEST(Feasibility, CapacityOverflowReported) {
    Scenario s = small(4);
    s.battery_capacity = 100.0;
    auto prof = synth_profile("constant", 500.0, s);  // 60 J per slot
    Grid2<double> p(s.num_nodes(), 4, 0.0);
    auto v = check_energy_feasible(p, prof, s);
    ASSERT_FALSE(v.empty());
    EXPECT_EQ(v[0].constraint, "capacity");
    EXPECT_NEAR(v[0].magnitude, 20.0, 1e-9);  // 60 + 60 - 100 entering slot 1
}

TEST(Feasibility, ShapeMismatch) {
    Scenario s = small(4);
    auto prof = synth_profile("constant", 1.0, s);
    EXPECT_THROW(check_energy_feasible(Grid2<double>(1, 4), prof, s), DimensionError);
}

TEST(Ledger, HarvestThenSpend) {
    Scenario s = small(6);
    auto prof = synth_profile("constant", 500.0, s);
    Grid2<double> p(s.num_nodes(), 6, 0.0);
    for (std::size_t n = 1; n < 6; n += 2) p(0, n) = 2.0 * prof.energy(0, n) / s.slot_seconds();
    auto L = evolve_battery(p, prof, s);
    for (std::size_t n = 0; n < 6; n += 2) EXPECT_NEAR(L.battery(0, n), 60.0, 1e-12);
    EXPECT_NEAR(L.battery(0, 6), 0.0, 1e-12);
    EXPECT_NEAR(L.battery(1, 6), 360.0, 1e-12);
}

TEST(Ledger, RandomSchedulesMatchPrefixOracle) {
    Scenario s = small(20);
    auto prof = synth_profile("bell", 300.0, s);
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> frac(0.0, 1.0);
    for (int trial = 0; trial < 50; ++trial) {
        Grid2<double> p(s.num_nodes(), 20, 0.0);
        for (std::size_t k = 0; k < s.num_nodes(); ++k) {
            double bank = 0.0;
            for (std::size_t n = 0; n < 20; ++n) {
                bank += prof.energy(k, n);
                double use = frac(rng) * bank;
                p(k, n) = use / s.slot_seconds();
                bank -= use;
            }
        }
        ASSERT_TRUE(check_energy_feasible(p, prof, s).empty());
        auto L = evolve_battery(p, prof, s);
        for (std::size_t k = 0; k < s.num_nodes(); ++k) {
            double h = 0.0, sp = 0.0;
            for (std::size_t n = 0; n < 20; ++n) {
                h += prof.energy(k, n);
                EXPECT_NEAR(L.battery(k, n), h - sp, 1e-12 * std::max(1.0, h));
                EXPECT_GE(L.after_spend(k, n), -1e-9);
                EXPECT_LE(L.battery(k, n), s.battery_capacity);
                sp += p(k, n) * s.slot_seconds();
            }
            EXPECT_NEAR(L.battery(k, 20), h - sp, 1e-12 * std::max(1.0, h));
        }
    }
}
