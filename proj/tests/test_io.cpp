#include <gtest/gtest.h>

#include <filesystem>
#include <random>

#include "carl/baselines.hpp"
#include "carl/io.hpp"

using namespace carl;
namespace fs = std::filesystem;

namespace {

class TempDir : public ::testing::Test {
protected:
    void SetUp() override {
        const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
        dir_ = fs::temp_directory_path() / (std::string("carl_io_") + info->name());
        fs::remove_all(dir_);
        fs::create_directories(dir_);
    }
    void TearDown() override { fs::remove_all(dir_); }
    fs::path dir_;
};

Scenario desk() {
    Scenario s;
    s.num_slots = 12;
    s.horizon_seconds = 720;
    return s;
}

}  // namespace

TEST(Format, ShortestRoundTrip) {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(-1e9, 1e9);
    for (int i = 0; i < 1000; ++i) {
        double v = u(rng) * std::pow(10.0, static_cast<int>(u(rng)) % 20);
        EXPECT_EQ(std::stod(fmt_double(v)), v);
    }
    EXPECT_EQ(fmt_double(0.5), "0.5");
}

using PlanFiles = TempDir;

TEST_F(PlanFiles, RoundTripIsExact) {
    Scenario s = desk();
    auto prof = synth_profile("bell", 600, s);
    Plan p = out_and_back_plan(s, prof);
    p.power(1, 3) = 0.1 + 0.2;  // not exactly representable in short decimal form
    save_plan(dir_, p);
    Plan q = load_plan(dir_, s);
    EXPECT_EQ(q.waypoints, p.waypoints);
    EXPECT_EQ(q.association, p.association);
    EXPECT_EQ(q.power, p.power);
    EXPECT_EQ(waypoints_csv(q), waypoints_csv(p));
    EXPECT_EQ(read_text(dir_ / "power.csv").substr(0, 17), "node,slot,power_w");
}

TEST_F(PlanFiles, LoadErrorsNameTheFile) {
    Scenario s = desk();
    Plan p = Plan::stationary(s);
    save_plan(dir_, p);

    auto expect_error = [&](const std::string& file, const std::string& body, const std::string& needle) {
        auto keep = read_text(dir_ / file);
        write_text(dir_ / file, body);
        try {
            load_plan(dir_, s);
            ADD_FAILURE() << "expected an error for " << file;
        } catch (const ConfigError& e) {
            EXPECT_NE(std::string(e.what()).find(file), std::string::npos) << e.what();
            EXPECT_NE(std::string(e.what()).find(needle), std::string::npos) << e.what();
        }
        write_text(dir_ / file, keep);
    };
    expect_error("waypoints.csv", "uav,slot,x\n", "header");
    expect_error("waypoints.csv", "uav,slot,x,y\n0,0,1,1\n", "missing");
    expect_error("waypoints.csv", read_text(dir_ / "waypoints.csv") + "2,0,1,1\n", "out of range");
    expect_error("association.csv", "slot,uav,node\n0,0,abc\n", "non-numeric");
    expect_error("association.csv", "slot,uav,node\n12,0,0\n", "out of range");
    expect_error("power.csv", "node,slot,power_w\n0,0\n", "3 fields");
    expect_error("power.csv", "node,slot,power_w\n0,0.5,1\n", "out of range");
    EXPECT_NO_THROW(load_plan(dir_, s));

    fs::remove(dir_ / "power.csv");
    EXPECT_THROW(load_plan(dir_, s), ConfigError);
}

TEST(Reports, RateAndCurveTables) {
    Scenario s = desk();
    auto prof = synth_profile("bell", 600, s);
    Plan p = out_and_back_plan(s, prof);
    auto r = evaluate_plan(p, average_gains(p.waypoints, s), s);
    auto csv = rate_csv(r);
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "node,slot,rate_bps");
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), static_cast<long>(1 + s.num_nodes() * s.slots()));
    auto j = rate_summary_json(r);
    EXPECT_EQ(j.at("worst_bps").get<double>(), r.worst);

    TrainingCurves c{{1.5, -1000.0}, {1, 0}};
    EXPECT_EQ(curves_csv(c), "episode,return,success\n0,1.5,1\n1,-1000,0\n");
}

using QTableFiles = TempDir;

TEST_F(QTableFiles, SnapshotRoundTrip) {
    QTable q;
    q.set(99, 2, 0.125);
    q.set(5, 0, -3.0);
    RlParams p;
    p.corridor_width = 120.0;
    save_qtable(dir_ / "q.json", q, p);
    RlParams back;
    auto r = load_qtable(dir_ / "q.json", &back);
    EXPECT_TRUE(r == q);
    EXPECT_EQ(back.corridor_width, 120.0);
    write_text(dir_ / "bad.json", "{\"states\": [");
    EXPECT_THROW(load_qtable(dir_ / "bad.json"), ConfigError);
}

using Profiles = TempDir;

TEST_F(Profiles, EveryReferenceForm) {
    Scenario s = desk();
    auto bell = synth_profile("bell", 600, s);
    EXPECT_EQ(resolve_profile("bell:600", s).energy, bell.energy);
    EXPECT_EQ(resolve_profile(nlohmann::json{{"kind", "bell"}, {"peak", 600}}, s).energy, bell.energy);

    write_irradiance_csv((dir_ / "trace.csv").string(), bell, s);
    auto from_file = resolve_profile("trace.csv", s, dir_);
    auto from_object = resolve_profile(nlohmann::json{{"csv", "trace.csv"}}, s, dir_);
    for (std::size_t i = 0; i < bell.energy.data().size(); ++i) {
        EXPECT_NEAR(from_file.energy.data()[i], bell.energy.data()[i], 1e-9);
        EXPECT_EQ(from_object.energy.data()[i], from_file.energy.data()[i]);
    }

    EXPECT_THROW(resolve_profile("bell:bright", s), ConfigError);
    EXPECT_THROW(resolve_profile("sawtooth:100", s), ConfigError);
    EXPECT_THROW(resolve_profile(nlohmann::json{{"kind", "bell"}}, s), ConfigError);
    EXPECT_THROW(resolve_profile(nlohmann::json{{"kind", "bell"}, {"peak", 1}, {"scale", 2}}, s), ConfigError);
    EXPECT_THROW(resolve_profile(nlohmann::json(3), s), ConfigError);
    EXPECT_THROW(resolve_profile("missing.csv", s, dir_), ConfigError);
}

TEST(Files, ReadErrors) {
    EXPECT_THROW(read_text("/nonexistent/carl/file"), ConfigError);
    EXPECT_THROW(read_json("/nonexistent/carl/file.json"), ConfigError);
}
