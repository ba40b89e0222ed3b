#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "carl/core.hpp"

namespace carl {

/// Air-to-ground propagation constants.
struct ChannelParams {
    double a_coef = 9.61;
    double b_coef = 0.1592;
    double eta_los_db = 1.0;
    double eta_nlos_db = 20.0;
    double shadowing_db = 0.0;
    std::uint64_t seed = 1;

    void validate() const {
        if (!(a_coef > 0.0)) throw ConfigError("a_coef", "must be positive");
        if (!(b_coef > 0.0)) throw ConfigError("b_coef", "must be positive");
        if (!(eta_los_db >= 0.0)) throw ConfigError("eta_los_db", "must be nonnegative");
        if (!(eta_nlos_db > eta_los_db)) throw ConfigError("eta_nlos_db", "must exceed eta_los_db");
        if (!std::isfinite(shadowing_db)) throw ConfigError("shadowing_db", "must be finite");
    }
};

/// Node placements used when a configuration gives only the node count.
inline std::vector<Vec2> default_node_layout(std::size_t k) {
    switch (k) {
        case 1: return {{300, 300}};
        case 2: return {{300, 150}, {300, 450}};
        case 3: return {{200, 200}, {400, 400}, {300, 550}};
        default: break;
    }
    const std::vector<Vec2> six{{200, 200}, {200, 400}, {400, 200}, {400, 400}, {200, 300}, {300, 300}};
    if (k < 1 || k > six.size()) throw ConfigError("num_nodes", "no default layout for this node count");
    return {six.begin(), six.begin() + static_cast<std::ptrdiff_t>(k)};
}

/// A fully specified problem instance. Plain value type; copy freely.
struct Scenario {
    std::vector<Vec2> node_positions = default_node_layout(3);
    std::vector<Vec2> uav_initials{{0, 300}, {600, 300}};
    double altitude = 150.0;
    double horizon_seconds = 6000.0;
    int num_slots = 100;
    double v_max = 1.0;
    double d_min = 100.0;
    double bandwidth = 5e6;
    double carrier_hz = 2.4e9;
    double light_speed = 3e8;
    double noise_power = 1e-11;
    double battery_capacity = 1500.0;
    double area_side = 600.0;
    double panel_area = 0.01;
    double panel_efficiency = 0.2;
    ChannelParams channel{};

    std::size_t num_nodes() const { return node_positions.size(); }
    std::size_t num_uavs() const { return uav_initials.size(); }
    std::size_t slots() const { return static_cast<std::size_t>(num_slots); }
    double slot_seconds() const { return horizon_seconds / num_slots; }
    /// Largest distance a UAV covers in one slot.
    double step_limit() const { return v_max * slot_seconds(); }

    void validate() const {
        if (node_positions.empty()) throw ConfigError("node_positions", "need at least one node");
        if (uav_initials.empty()) throw ConfigError("uav_initials", "need at least one UAV");
        if (num_slots < 1) throw ConfigError("num_slots", "must be at least 1");
        auto positive = [](double v, const char* name) {
            if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError(name, "must be positive and finite");
        };
        positive(altitude, "altitude");
        positive(horizon_seconds, "horizon_seconds");
        positive(v_max, "v_max");
        positive(d_min, "d_min");
        positive(bandwidth, "bandwidth");
        positive(carrier_hz, "carrier_hz");
        positive(light_speed, "light_speed");
        positive(noise_power, "noise_power");
        positive(battery_capacity, "battery_capacity");
        positive(area_side, "area_side");
        positive(panel_area, "panel_area");
        positive(panel_efficiency, "panel_efficiency");
        if (panel_efficiency > 1.0) throw ConfigError("panel_efficiency", "must not exceed 1");
        for (std::size_t i = 0; i < uav_initials.size(); ++i)
            for (std::size_t j = i + 1; j < uav_initials.size(); ++j)
                if (uav_initials[i] == uav_initials[j])
                    throw ConfigError("uav_initials", "initial positions must be pairwise distinct");
        if (!(d_min < area_side * std::sqrt(2.0)))
            throw ConfigError("d_min", "must be smaller than the workspace diagonal");
        channel.validate();
    }
};

/// Joint solution: waypoints M x (N+1), association M x K x N, power K x N.
struct Plan {
    Grid2<Vec2> waypoints;
    Grid3<std::uint8_t> association;
    Grid2<double> power;

    static Plan stationary(const Scenario& s) {
        Plan p;
        p.waypoints = Grid2<Vec2>(s.num_uavs(), s.slots() + 1);
        for (std::size_t m = 0; m < s.num_uavs(); ++m)
            for (std::size_t n = 0; n <= s.slots(); ++n) p.waypoints(m, n) = s.uav_initials[m];
        p.association = Grid3<std::uint8_t>(s.num_uavs(), s.num_nodes(), s.slots(), 0);
        p.power = Grid2<double>(s.num_nodes(), s.slots(), 0.0);
        return p;
    }
};

struct Violation {
    std::string constraint;
    std::vector<std::size_t> index;
    double magnitude = 0.0;
};

inline void check_plan_shape(const Scenario& s, const Plan& p) {
    const auto m = s.num_uavs(), k = s.num_nodes(), n = s.slots();
    if (p.waypoints.rows() != m || p.waypoints.cols() != n + 1)
        throw DimensionError("waypoints must be M x (N+1)");
    if (p.association.dim0() != m || p.association.dim1() != k || p.association.dim2() != n)
        throw DimensionError("association must be M x K x N");
    if (p.power.rows() != k || p.power.cols() != n) throw DimensionError("power must be K x N");
}

/// Audits the geometric, association and power-sign invariants of a plan.
/// Energy causality and capacity are audited by the overload in energy.hpp.
inline std::vector<Violation> validate_plan(const Scenario& s, const Plan& p, double tol) {
    check_plan_shape(s, p);
    std::vector<Violation> out;
    const auto M = s.num_uavs(), K = s.num_nodes(), N = s.slots();

    for (std::size_t m = 0; m < M; ++m) {
        for (std::size_t end : {std::size_t{0}, N}) {
            double gap = norm(p.waypoints(m, end) - s.uav_initials[m]);
            if (gap > tol) out.push_back({"endpoint", {m, end}, gap});
        }
        for (std::size_t n = 0; n < N; ++n) {
            double excess = norm(p.waypoints(m, n + 1) - p.waypoints(m, n)) - s.step_limit();
            if (excess > tol) out.push_back({"speed", {m, n}, excess});
        }
    }
    for (std::size_t n = 1; n < N; ++n)
        for (std::size_t m = 0; m < M; ++m)
            for (std::size_t j = m + 1; j < M; ++j) {
                double short_by = s.d_min - norm(p.waypoints(m, n) - p.waypoints(j, n));
                if (short_by > tol) out.push_back({"separation", {m, j, n}, short_by});
            }

    for (std::size_t n = 0; n < N; ++n) {
        for (std::size_t m = 0; m < M; ++m) {
            int row = 0;
            for (std::size_t k = 0; k < K; ++k) {
                auto a = p.association(m, k, n);
                if (a > 1) out.push_back({"association_binary", {m, k, n}, static_cast<double>(a)});
                row += a;
                if (a) {
                    double moved = norm(p.waypoints(m, n + 1) - p.waypoints(m, n));
                    if (moved > tol) out.push_back({"hover_while_serving", {m, k, n}, moved});
                }
            }
            if (row > 1) out.push_back({"uav_serves_one", {m, n}, static_cast<double>(row - 1)});
        }
        for (std::size_t k = 0; k < K; ++k) {
            int col = 0;
            for (std::size_t m = 0; m < M; ++m) col += p.association(m, k, n);
            if (col > 1) out.push_back({"node_served_once", {k, n}, static_cast<double>(col - 1)});
            double pw = p.power(k, n);
            if (!std::isfinite(pw) || pw < 0.0) out.push_back({"power_nonnegative", {k, n}, -pw});
            else if (col == 0 && pw > 0.0) out.push_back({"power_when_unassociated", {k, n}, pw});
        }
    }
    return out;
}

namespace detail {

inline Vec2 read_point(const nlohmann::json& j, const std::string& field) {
    if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number())
        throw ConfigError(field, "expected [x, y]");
    return {j[0].get<double>(), j[1].get<double>()};
}

inline std::vector<Vec2> read_points(const nlohmann::json& j, const std::string& field) {
    if (!j.is_array()) throw ConfigError(field, "expected an array of [x, y] pairs");
    std::vector<Vec2> out;
    for (const auto& e : j) out.push_back(read_point(e, field));
    return out;
}

}  // namespace detail

/// Builds a scenario from a JSON object. Unknown keys are rejected so typos surface.
inline Scenario scenario_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw ConfigError("scenario", "expected a JSON object");
    Scenario s;
    static const std::vector<std::string> known{
        "node_positions", "num_nodes", "uav_initials", "altitude", "horizon_seconds", "num_slots",
        "v_max", "d_min", "bandwidth", "carrier_hz", "light_speed", "noise_power_dbm",
        "battery_capacity", "area_side", "panel_area", "panel_efficiency", "a_coef", "b_coef",
        "eta_los_db", "eta_nlos_db", "shadowing_db", "channel_seed"};
    for (const auto& [key, _] : j.items())
        if (std::find(known.begin(), known.end(), key) == known.end()) throw ConfigError(key, "unknown key");

    auto num = [&](const char* key, double& dst) {
        if (!j.contains(key)) return;
        if (!j[key].is_number()) throw ConfigError(key, "expected a number");
        dst = j[key].get<double>();
    };
    if (j.contains("node_positions")) s.node_positions = detail::read_points(j["node_positions"], "node_positions");
    else if (j.contains("num_nodes")) {
        if (!j["num_nodes"].is_number_integer()) throw ConfigError("num_nodes", "expected an integer");
        s.node_positions = default_node_layout(j["num_nodes"].get<std::size_t>());
    }
    if (j.contains("uav_initials")) s.uav_initials = detail::read_points(j["uav_initials"], "uav_initials");
    if (j.contains("num_slots")) {
        if (!j["num_slots"].is_number_integer()) throw ConfigError("num_slots", "expected an integer");
        s.num_slots = j["num_slots"].get<int>();
    }
    num("altitude", s.altitude);
    num("horizon_seconds", s.horizon_seconds);
    num("v_max", s.v_max);
    num("d_min", s.d_min);
    num("bandwidth", s.bandwidth);
    num("carrier_hz", s.carrier_hz);
    num("light_speed", s.light_speed);
    num("battery_capacity", s.battery_capacity);
    num("area_side", s.area_side);
    num("panel_area", s.panel_area);
    num("panel_efficiency", s.panel_efficiency);
    if (j.contains("noise_power_dbm")) {
        double dbm = 0.0;
        num("noise_power_dbm", dbm);
        s.noise_power = dbm_to_watts(dbm);
    }
    num("a_coef", s.channel.a_coef);
    num("b_coef", s.channel.b_coef);
    num("eta_los_db", s.channel.eta_los_db);
    num("eta_nlos_db", s.channel.eta_nlos_db);
    num("shadowing_db", s.channel.shadowing_db);
    if (j.contains("channel_seed")) {
        if (!j["channel_seed"].is_number_unsigned()) throw ConfigError("channel_seed", "expected a nonnegative integer");
        s.channel.seed = j["channel_seed"].get<std::uint64_t>();
    }
    s.validate();
    return s;
}

inline nlohmann::json scenario_to_json(const Scenario& s) {
    auto pts = [](const std::vector<Vec2>& v) {
        nlohmann::json a = nlohmann::json::array();
        for (const auto& p : v) a.push_back({p.x, p.y});
        return a;
    };
    return {
        {"node_positions", pts(s.node_positions)},
        {"uav_initials", pts(s.uav_initials)},
        {"altitude", s.altitude},
        {"horizon_seconds", s.horizon_seconds},
        {"num_slots", s.num_slots},
        {"v_max", s.v_max},
        {"d_min", s.d_min},
        {"bandwidth", s.bandwidth},
        {"carrier_hz", s.carrier_hz},
        {"light_speed", s.light_speed},
        {"noise_power_dbm", watts_to_dbm(s.noise_power)},
        {"battery_capacity", s.battery_capacity},
        {"area_side", s.area_side},
        {"panel_area", s.panel_area},
        {"panel_efficiency", s.panel_efficiency},
        {"a_coef", s.channel.a_coef},
        {"b_coef", s.channel.b_coef},
        {"eta_los_db", s.channel.eta_los_db},
        {"eta_nlos_db", s.channel.eta_nlos_db},
        {"shadowing_db", s.channel.shadowing_db},
        {"channel_seed", s.channel.seed},
    };
}

/// Parses inline JSON text. An empty or whitespace-only string yields the defaults.
inline Scenario parse_scenario(const std::string& text) {
    if (text.find_first_not_of(" \t\r\n") == std::string::npos) {
        Scenario s;
        s.validate();
        return s;
    }
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("scenario", std::string("parse error: ") + e.what());
    }
    return scenario_from_json(j);
}

inline Scenario load_scenario(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("scenario", "cannot open " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_scenario(buf.str());
}

}  // namespace carl
