#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "carl/core.hpp"
#include "carl/energy.hpp"
#include "carl/rate.hpp"
#include "carl/rl.hpp"
#include "carl/sca.hpp"
#include "carl/scenario.hpp"

namespace carl {

/// Shortest text that parses back to the same double.
inline std::string fmt_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("output", "cannot write " + path.string());
    out << text;
}

inline std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("input", "cannot open " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

inline nlohmann::json read_json(const std::filesystem::path& path) {
    try {
        return nlohmann::json::parse(read_text(path));
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(path.string(), std::string("parse error: ") + e.what());
    }
}

namespace detail {

/// Splits a CSV body into rows of numeric fields after checking the header.
inline std::vector<std::vector<double>> read_numeric_csv(const std::filesystem::path& path, const std::string& header) {
    std::istringstream in(read_text(path));
    std::string line;
    if (!std::getline(in, line)) throw ConfigError(path.string(), "empty file");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != header) throw ConfigError(path.string(), "expected header '" + header + "'");
    std::vector<std::vector<double>> rows;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<double> row;
        std::stringstream ls(line);
        std::string cell;
        while (std::getline(ls, cell, ',')) {
            try {
                std::size_t used = 0;
                row.push_back(std::stod(cell, &used));
                if (used != cell.size()) throw std::invalid_argument(cell);
            } catch (const std::exception&) {
                throw ConfigError(path.string(), "non-numeric field '" + cell + "'");
            }
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

inline std::size_t as_index(double v, std::size_t bound, const std::filesystem::path& path) {
    if (!(v >= 0.0) || v != std::floor(v) || v >= static_cast<double>(bound))
        throw ConfigError(path.string(), "index " + fmt_double(v) + " out of range");
    return static_cast<std::size_t>(v);
}

}  // namespace detail

// Plan files: waypoints.csv, association.csv, power.csv in one directory.

inline std::string waypoints_csv(const Plan& p) {
    std::string out = "uav,slot,x,y\n";
    for (std::size_t m = 0; m < p.waypoints.rows(); ++m)
        for (std::size_t n = 0; n < p.waypoints.cols(); ++n)
            out += std::to_string(m) + "," + std::to_string(n) + "," + fmt_double(p.waypoints(m, n).x) + "," +
                   fmt_double(p.waypoints(m, n).y) + "\n";
    return out;
}

/// One row per served pair.
inline std::string association_csv(const Plan& p) {
    std::string out = "slot,uav,node\n";
    const auto& a = p.association;
    for (std::size_t n = 0; n < a.dim2(); ++n)
        for (std::size_t m = 0; m < a.dim0(); ++m)
            for (std::size_t k = 0; k < a.dim1(); ++k)
                if (a(m, k, n)) out += std::to_string(n) + "," + std::to_string(m) + "," + std::to_string(k) + "\n";
    return out;
}

inline std::string power_csv(const Plan& p) {
    std::string out = "node,slot,power_w\n";
    for (std::size_t k = 0; k < p.power.rows(); ++k)
        for (std::size_t n = 0; n < p.power.cols(); ++n)
            out += std::to_string(k) + "," + std::to_string(n) + "," + fmt_double(p.power(k, n)) + "\n";
    return out;
}

inline void save_plan(const std::filesystem::path& dir, const Plan& p) {
    write_text(dir / "waypoints.csv", waypoints_csv(p));
    write_text(dir / "association.csv", association_csv(p));
    write_text(dir / "power.csv", power_csv(p));
}

/// Reads a plan written by save_plan. Every waypoint and power entry must be present.
inline Plan load_plan(const std::filesystem::path& dir, const Scenario& s) {
    const auto M = s.num_uavs(), K = s.num_nodes(), N = s.slots();
    Plan p = Plan::stationary(s);
    std::vector<std::uint8_t> seen_w(M * (N + 1), 0), seen_p(K * N, 0);
    auto wp = dir / "waypoints.csv";
    for (const auto& r : detail::read_numeric_csv(wp, "uav,slot,x,y")) {
        if (r.size() != 4) throw ConfigError(wp.string(), "expected 4 fields per row");
        auto m = detail::as_index(r[0], M, wp), n = detail::as_index(r[1], N + 1, wp);
        p.waypoints(m, n) = {r[2], r[3]};
        seen_w[m * (N + 1) + n] = 1;
    }
    auto ap = dir / "association.csv";
    for (const auto& r : detail::read_numeric_csv(ap, "slot,uav,node")) {
        if (r.size() != 3) throw ConfigError(ap.string(), "expected 3 fields per row");
        p.association(detail::as_index(r[1], M, ap), detail::as_index(r[2], K, ap), detail::as_index(r[0], N, ap)) = 1;
    }
    auto pp = dir / "power.csv";
    for (const auto& r : detail::read_numeric_csv(pp, "node,slot,power_w")) {
        if (r.size() != 3) throw ConfigError(pp.string(), "expected 3 fields per row");
        auto k = detail::as_index(r[0], K, pp), n = detail::as_index(r[1], N, pp);
        p.power(k, n) = r[2];
        seen_p[k * N + n] = 1;
    }
    for (auto v : seen_w)
        if (!v) throw ConfigError(wp.string(), "missing waypoints for this scenario");
    for (auto v : seen_p)
        if (!v) throw ConfigError(pp.string(), "missing power entries for this scenario");
    return p;
}

inline std::string rate_csv(const RateReport& r) {
    std::string out = "node,slot,rate_bps\n";
    for (std::size_t k = 0; k < r.per_slot.rows(); ++k)
        for (std::size_t n = 0; n < r.per_slot.cols(); ++n)
            out += std::to_string(k) + "," + std::to_string(n) + "," + fmt_double(r.per_slot(k, n)) + "\n";
    return out;
}

inline nlohmann::json rate_summary_json(const RateReport& r) {
    return {{"totals_bps", r.totals}, {"worst_bps", r.worst}};
}

inline nlohmann::json outcome_to_json(const SolveOutcome& o, double seconds = -1.0) {
    nlohmann::json inner = nlohmann::json::array();
    for (const auto& t : o.inner_traces)
        inner.push_back({{"kind", t.kind}, {"round", t.round}, {"values", t.values}, {"rejected_step", t.rejected_step}});
    nlohmann::json j{{"status", status_name(o.status)},
                     {"rounds", o.rounds},
                     {"rejected_rounds", o.rejected_rounds},
                     {"objective_trace", o.objective_trace},
                     {"inner_traces", std::move(inner)},
                     {"note", o.note}};
    if (seconds >= 0.0) j["seconds"] = seconds;
    return j;
}

inline std::string curves_csv(const TrainingCurves& c) {
    std::string out = "episode,return,success\n";
    for (std::size_t e = 0; e < c.returns.size(); ++e)
        out += std::to_string(e) + "," + fmt_double(c.returns[e]) + "," + std::to_string(int(c.success[e])) + "\n";
    return out;
}

inline void save_qtable(const std::filesystem::path& path, const QTable& q, const RlParams& p) {
    write_text(path, q.to_json(p).dump());
}

inline QTable load_qtable(const std::filesystem::path& path, RlParams* params = nullptr) {
    return QTable::from_json(read_json(path), params);
}

/// Profile reference: `{"kind": "bell", "peak": 600}` or `{"csv": "file.csv"}`. A bare string is
/// either `kind:peak` or a CSV path. Relative CSV paths resolve against `base`.
inline HarvestProfile resolve_profile(const nlohmann::json& ref, const Scenario& s,
                                      const std::filesystem::path& base = {}) {
    if (ref.is_string()) {
        auto text = ref.get<std::string>();
        auto colon = text.find(':');
        if (colon != std::string::npos && text.find('/') == std::string::npos && !text.ends_with(".csv")) {
            double peak = 0.0;
            try {
                peak = std::stod(text.substr(colon + 1));
            } catch (const std::exception&) {
                throw ConfigError("profile", "expected kind:peak, got '" + text + "'");
            }
            return synth_profile(text.substr(0, colon), peak, s);
        }
        return load_irradiance_csv((base / text).string(), s, std::filesystem::path(text).stem().string());
    }
    if (!ref.is_object()) throw ConfigError("profile", "expected a string or an object");
    for (const auto& [key, _] : ref.items())
        if (key != "kind" && key != "peak" && key != "csv") throw ConfigError("profile." + key, "unknown key");
    if (ref.contains("csv")) {
        auto file = ref.at("csv").get<std::string>();
        return load_irradiance_csv((base / file).string(), s, std::filesystem::path(file).stem().string());
    }
    if (!ref.contains("kind") || !ref.contains("peak")) throw ConfigError("profile", "needs kind and peak, or csv");
    return synth_profile(ref.at("kind").get<std::string>(), ref.at("peak").get<double>(), s);
}

}  // namespace carl
