#pragma once

#include <ctime>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "carl/core.hpp"
#include "carl/scenario.hpp"

namespace carl {

/// Harvested energy per node and slot, in joules.
struct HarvestProfile {
    Grid2<double> energy;
    std::string label = "synthetic";
};

struct IrradianceSample {
    double t = 0.0;      ///< seconds
    double value = 0.0;  ///< W/m^2
};

/// Accepts integer/decimal seconds or "YYYY-MM-DDTHH:MM:SS" with an optional trailing Z.
inline double parse_timestamp(const std::string& text) {
    std::size_t used = 0;
    try {
        double v = std::stod(text, &used);
        if (used == text.size()) return v;
    } catch (const std::exception&) {
    }
    std::tm tm{};
    std::istringstream in(text);
    in >> std::get_time(&tm, "%Y-%m-%dT%H:%M:%S");
    if (in.fail()) throw ConfigError("timestamp", "unrecognized timestamp '" + text + "'");
    std::string rest;
    in >> rest;
    if (!rest.empty() && rest != "Z") throw ConfigError("timestamp", "unrecognized timestamp '" + text + "'");
    return static_cast<double>(timegm(&tm));
}

inline std::vector<IrradianceSample> read_irradiance_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("irradiance", "cannot open " + path);
    std::string line;
    std::vector<IrradianceSample> rows;
    bool header = true;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        if (header) {
            header = false;
            if (line.rfind("timestamp", 0) == 0) continue;
        }
        auto comma = line.find(',');
        if (comma == std::string::npos)
            throw ConfigError("irradiance", "line " + std::to_string(lineno) + ": expected two columns");
        IrradianceSample s;
        s.t = parse_timestamp(line.substr(0, comma));
        try {
            s.value = std::stod(line.substr(comma + 1));
        } catch (const std::exception&) {
            throw ConfigError("irradiance", "line " + std::to_string(lineno) + ": bad irradiance value");
        }
        if (!std::isfinite(s.value) || s.value < 0.0)
            throw ConfigError("irradiance", "line " + std::to_string(lineno) + ": negative or non-finite irradiance");
        rows.push_back(s);
    }
    if (rows.empty()) throw ConfigError("irradiance", path + " holds no samples");
    return rows;
}

/// Averages samples into slots of `slot_seconds` starting at the first timestamp.
/// Every slot of the horizon must contain at least one sample.
inline std::vector<double> resample_slot_means(const std::vector<IrradianceSample>& rows, std::size_t num_slots,
                                               double slot_seconds) {
    if (rows.empty()) throw ConfigError("irradiance", "no samples");
    double t0 = rows.front().t;
    for (const auto& r : rows)
        if (r.t < t0) t0 = r.t;
    std::vector<double> sum(num_slots, 0.0);
    std::vector<std::size_t> count(num_slots, 0);
    for (const auto& r : rows) {
        auto idx = static_cast<std::size_t>(std::floor((r.t - t0) / slot_seconds));
        if (idx < num_slots) {
            sum[idx] += r.value;
            ++count[idx];
        }
    }
    std::string missing;
    for (std::size_t n = 0; n < num_slots; ++n) {
        if (count[n] == 0) {
            std::ostringstream os;
            os << (missing.empty() ? "" : ", ") << "[" << t0 + n * slot_seconds << ", " << t0 + (n + 1) * slot_seconds
               << ")";
            missing += os.str();
        } else {
            sum[n] /= static_cast<double>(count[n]);
        }
    }
    if (!missing.empty()) throw ConfigError("irradiance", "no samples in intervals " + missing);
    return sum;
}

inline double irradiance_to_joules(double wm2, const Scenario& s) {
    return wm2 * s.panel_area * s.panel_efficiency * s.slot_seconds();
}

/// Builds a profile that applies one irradiance trace to every node.
inline HarvestProfile profile_from_irradiance(const std::vector<double>& slot_irradiance, const Scenario& s,
                                              std::string label) {
    if (slot_irradiance.size() != s.slots()) throw DimensionError("irradiance trace must have N entries");
    HarvestProfile p{Grid2<double>(s.num_nodes(), s.slots()), std::move(label)};
    for (std::size_t k = 0; k < s.num_nodes(); ++k)
        for (std::size_t n = 0; n < s.slots(); ++n) p.energy(k, n) = irradiance_to_joules(slot_irradiance[n], s);
    return p;
}

inline HarvestProfile load_irradiance_csv(const std::string& path, const Scenario& s, std::string label = "csv") {
    auto rows = read_irradiance_csv(path);
    return profile_from_irradiance(resample_slot_means(rows, s.slots(), s.slot_seconds()), s, std::move(label));
}

/// Writes node `node` of a profile back as `timestamp,irradiance_wm2` with slot-start times in seconds.
inline void write_irradiance_csv(const std::string& path, const HarvestProfile& p, const Scenario& s,
                                 std::size_t node = 0) {
    std::ofstream out(path);
    if (!out) throw ConfigError("irradiance", "cannot write " + path);
    out << "timestamp,irradiance_wm2\n" << std::setprecision(17);
    double per_wm2 = irradiance_to_joules(1.0, s);
    for (std::size_t n = 0; n < p.energy.cols(); ++n)
        out << static_cast<long long>(std::llround(n * s.slot_seconds())) << ',' << p.energy(node, n) / per_wm2
            << '\n';
}

enum class ProfileKind { constant, ramp, bell };

inline ProfileKind parse_profile_kind(const std::string& name) {
    if (name == "constant") return ProfileKind::constant;
    if (name == "ramp") return ProfileKind::ramp;
    if (name == "bell") return ProfileKind::bell;
    throw ConfigError("profile", "unknown synthetic profile kind '" + name + "'");
}

/// Closed-form irradiance shapes. The bell reaches `peak` at slot floor(N/2).
inline HarvestProfile synth_profile(ProfileKind kind, double peak, const Scenario& s) {
    if (!(peak >= 0.0) || !std::isfinite(peak)) throw ConfigError("peak", "must be nonnegative and finite");
    const auto N = s.slots();
    std::vector<double> irr(N);
    const double mid = std::floor(N / 2.0);
    const double width = std::max(N / 6.0, 0.5);
    for (std::size_t n = 0; n < N; ++n) {
        switch (kind) {
            case ProfileKind::constant: irr[n] = peak; break;
            case ProfileKind::ramp: irr[n] = peak * static_cast<double>(n + 1) / static_cast<double>(N); break;
            case ProfileKind::bell: {
                double z = (static_cast<double>(n) - mid) / width;
                irr[n] = peak * std::exp(-0.5 * z * z);
                break;
            }
        }
    }
    const char* names[] = {"constant", "ramp", "bell"};
    return profile_from_irradiance(irr, s, names[static_cast<int>(kind)]);
}

inline HarvestProfile synth_profile(const std::string& kind, double peak, const Scenario& s) {
    return synth_profile(parse_profile_kind(kind), peak, s);
}

struct BatteryLedger {
    /// Level at the start of slot n, after that slot's harvest and before spending. Column N is the final level.
    Grid2<double> battery;
    /// Energy spent in slot n.
    Grid2<double> spend;

    double after_spend(std::size_t k, std::size_t n) const { return battery(k, n) - spend(k, n); }
};

namespace detail {

inline void check_energy_shapes(const Grid2<double>& power, const HarvestProfile& profile, const Scenario& s) {
    if (power.rows() != s.num_nodes() || power.cols() != s.slots()) throw DimensionError("power must be K x N");
    if (profile.energy.rows() != s.num_nodes() || profile.energy.cols() != s.slots())
        throw DimensionError("profile must be K x N");
}

/// Ledger without any feasibility checks.
inline BatteryLedger raw_ledger(const Grid2<double>& power, const HarvestProfile& profile, const Scenario& s) {
    const auto K = s.num_nodes(), N = s.slots();
    const double dt = s.slot_seconds();
    BatteryLedger L{Grid2<double>(K, N + 1), Grid2<double>(K, N)};
    for (std::size_t k = 0; k < K; ++k) {
        double harvested = 0.0, spent = 0.0;
        for (std::size_t n = 0; n <= N; ++n) {
            if (n < N) harvested += profile.energy(k, n);
            L.battery(k, n) = harvested - spent;
            if (n < N) {
                L.spend(k, n) = dt * power(k, n);
                spent += L.spend(k, n);
            }
        }
    }
    return L;
}

}  // namespace detail

/// Causality: cumulative spend never exceeds cumulative harvest.
/// Capacity: the stored level including the next slot's harvest never exceeds B_max.
inline std::vector<Violation> check_energy_feasible(const Grid2<double>& power, const HarvestProfile& profile,
                                                    const Scenario& s, double tol = 1e-9) {
    detail::check_energy_shapes(power, profile, s);
    std::vector<Violation> out;
    const auto K = s.num_nodes(), N = s.slots();
    const double dt = s.slot_seconds();
    for (std::size_t k = 0; k < K; ++k) {
        if (profile.energy(k, 0) - s.battery_capacity > tol)
            out.push_back({"capacity", {k, 0}, profile.energy(k, 0) - s.battery_capacity});
        double harvest_prefix = 0.0, spend_prefix = 0.0;
        for (std::size_t n = 0; n < N; ++n) {
            harvest_prefix += profile.energy(k, n);
            spend_prefix += dt * power(k, n);
            double deficit = spend_prefix - harvest_prefix;
            if (deficit > tol) out.push_back({"causality", {k, n}, deficit});
            double next = n + 1 < N ? profile.energy(k, n + 1) : 0.0;
            double overflow = harvest_prefix + next - spend_prefix - s.battery_capacity;
            if (overflow > tol) out.push_back({"capacity", {k, n + 1}, overflow});
        }
    }
    return out;
}

inline BatteryLedger evolve_battery(const Grid2<double>& power, const HarvestProfile& profile, const Scenario& s,
                                    double tol = 1e-9) {
    auto v = check_energy_feasible(power, profile, s, tol);
    if (!v.empty()) {
        std::ostringstream os;
        os << "infeasible schedule: " << v.front().constraint << " at node " << v.front().index[0] << " slot "
           << v.front().index[1] << " by " << v.front().magnitude << " J";
        throw PreconditionError(os.str());
    }
    return detail::raw_ledger(power, profile, s);
}

/// Full plan audit including energy causality and capacity.
inline std::vector<Violation> validate_plan(const Scenario& s, const Plan& p, const HarvestProfile& profile,
                                            double tol, double energy_tol = 1e-9) {
    auto out = validate_plan(s, p, tol);
    auto e = check_energy_feasible(p.power, profile, s, energy_tol);
    out.insert(out.end(), e.begin(), e.end());
    return out;
}

}  // namespace carl
