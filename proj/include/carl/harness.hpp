#pragma once

#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "carl/baselines.hpp"
#include "carl/core.hpp"
#include "carl/energy.hpp"
#include "carl/io.hpp"
#include "carl/rate.hpp"
#include "carl/rl.hpp"
#include "carl/sca.hpp"
#include "carl/scenario.hpp"

namespace carl {

enum class Method { offline, UC, CC, SLC, OA, AFT, APC, CARL, conventional };

inline Method parse_method(const std::string& name) {
    static const std::map<std::string, Method> table{
        {"offline", Method::offline}, {"UC", Method::UC},     {"CC", Method::CC},
        {"SLC", Method::SLC},         {"OA", Method::OA},     {"AFT", Method::AFT},
        {"APC", Method::APC},         {"CARL", Method::CARL}, {"conventional", Method::conventional}};
    auto it = table.find(name);
    if (it == table.end()) throw ConfigError("methods", "unknown method '" + name + "'");
    return it->second;
}

inline const char* method_name(Method m) {
    switch (m) {
        case Method::offline: return "offline";
        case Method::UC: return "UC";
        case Method::CC: return "CC";
        case Method::SLC: return "SLC";
        case Method::OA: return "OA";
        case Method::AFT: return "AFT";
        case Method::APC: return "APC";
        case Method::CARL: return "CARL";
        case Method::conventional: return "conventional";
    }
    return "?";
}

inline bool is_heuristic(Method m) { return m == Method::UC || m == Method::CC || m == Method::SLC; }

/// Factors applied by --quick: slots and horizon shrink together so the slot length is unchanged.
struct QuickScale {
    static constexpr int slots_divisor = 2;
    static constexpr std::size_t episodes_divisor = 10;
    static constexpr std::size_t rollouts_divisor = 10;
};

struct ExperimentSpec {
    std::string name = "experiment";
    nlohmann::json scenario = nlohmann::json::object();  ///< inline object or path to a scenario file
    nlohmann::json profile = "bell:600";
    std::vector<Method> methods;
    std::vector<std::uint64_t> seeds{1};
    std::filesystem::path output = "results";
    std::size_t random_nodes = 0;  ///< when positive, each seed draws this many nodes uniformly in the layout box
    double layout_low = 50.0, layout_high = 550.0;
    OfflineOptions offline;
    RlParams rl;
    std::size_t episodes = 200000;
    std::size_t rollouts = 1000;
    std::string offline_plan;  ///< optional directory of a saved plan used as the corridor instead of solving
    bool save_qtables = false;
    int workers = 1;
    bool quick = false;
    std::filesystem::path base;  ///< relative paths resolve here
};

inline ExperimentSpec spec_from_json(const nlohmann::json& j, const std::filesystem::path& base = {}) {
    if (!j.is_object()) throw ConfigError("experiment", "expected a JSON object");
    ExperimentSpec e;
    e.base = base;
    for (const auto& [key, v] : j.items()) {
        if (key == "name") e.name = v.get<std::string>();
        else if (key == "scenario") e.scenario = v;
        else if (key == "profile") e.profile = v;
        else if (key == "methods") {
            e.methods.clear();
            for (const auto& m : v) e.methods.push_back(parse_method(m.get<std::string>()));
        } else if (key == "seeds") e.seeds = v.get<std::vector<std::uint64_t>>();
        else if (key == "output") e.output = v.get<std::string>();
        else if (key == "random_nodes") e.random_nodes = v.get<std::size_t>();
        else if (key == "layout_box") {
            auto box = v.get<std::vector<double>>();
            if (box.size() != 2 || !(box[0] < box[1])) throw ConfigError("layout_box", "expected [low, high]");
            e.layout_low = box[0];
            e.layout_high = box[1];
        } else if (key == "offline") {
            for (const auto& [ok, ov] : v.items()) {
                if (ok == "eps_outer") e.offline.eps_outer = ov.get<double>();
                else if (ok == "inner_tol") e.offline.inner_tol = ov.get<double>();
                else if (ok == "inner_max") e.offline.inner_max = ov.get<int>();
                else if (ok == "outer_max") e.offline.outer_max = ov.get<int>();
                else throw ConfigError("offline." + ok, "unknown key");
            }
        } else if (key == "rl") e.rl = rl_params_from_json(v);
        else if (key == "episodes") e.episodes = v.get<std::size_t>();
        else if (key == "rollouts") e.rollouts = v.get<std::size_t>();
        else if (key == "offline_plan") e.offline_plan = v.get<std::string>();
        else if (key == "save_qtables") e.save_qtables = v.get<bool>();
        else if (key == "workers") e.workers = v.get<int>();
        else if (key == "quick") e.quick = v.get<bool>();
        else throw ConfigError(key, "unknown key");
    }
    if (e.methods.empty()) throw ConfigError("methods", "at least one method is required");
    if (e.seeds.empty()) throw ConfigError("seeds", "at least one seed is required");
    std::set<std::uint64_t> uniq(e.seeds.begin(), e.seeds.end());
    if (uniq.size() != e.seeds.size()) throw ConfigError("seeds", "duplicate seed");
    if (e.workers < 1) throw ConfigError("workers", "must be at least 1");
    if (e.rollouts == 0) throw ConfigError("rollouts", "must be positive");
    return e;
}

inline ExperimentSpec load_spec(const std::filesystem::path& path) {
    auto e = spec_from_json(read_json(path), path.parent_path());
    if (e.output.is_relative()) e.output = path.parent_path() / e.output;
    return e;
}

/// Scenario for one seed, after --quick scaling and any random layout.
inline Scenario seed_scenario(const ExperimentSpec& e, std::uint64_t seed) {
    Scenario s = e.scenario.is_string() ? load_scenario((e.base / e.scenario.get<std::string>()).string())
                                        : scenario_from_json(e.scenario);
    if (e.quick) {
        int n = std::max(2, s.num_slots / QuickScale::slots_divisor);
        s.horizon_seconds *= static_cast<double>(n) / s.num_slots;
        s.num_slots = n;
    }
    if (e.random_nodes > 0) {
        std::mt19937_64 rng(derive_seed(seed, 0x1a));
        std::uniform_real_distribution<double> u(e.layout_low, e.layout_high);
        s.node_positions.clear();
        for (std::size_t k = 0; k < e.random_nodes; ++k) {
            double x = u(rng);
            s.node_positions.push_back({x, u(rng)});
        }
    }
    s.validate();
    return s;
}

inline std::size_t effective_episodes(const ExperimentSpec& e) {
    return e.quick ? std::max<std::size_t>(1, e.episodes / QuickScale::episodes_divisor) : e.episodes;
}

inline std::size_t effective_rollouts(const ExperimentSpec& e) {
    return e.quick ? std::max<std::size_t>(1, e.rollouts / QuickScale::rollouts_divisor) : e.rollouts;
}

// Independent streams per seed.
inline std::uint64_t train_seed(std::uint64_t seed, Method m) { return derive_seed(seed, 0x100 + static_cast<int>(m)); }
inline std::uint64_t eval_seed(std::uint64_t seed) { return derive_seed(seed, 0xe0); }

struct MethodResult {
    Method method = Method::offline;
    bool ok = false;
    std::string error;
    double plan_worst = std::numeric_limits<double>::quiet_NaN();  ///< average-channel objective, bits/s
    double eval_mean_worst = std::numeric_limits<double>::quiet_NaN();
    double eval_ci95 = std::numeric_limits<double>::quiet_NaN();
    double success_probability = std::numeric_limits<double>::quiet_NaN();
    int rounds = -1;
    std::string status;
};

struct SeedResult {
    std::uint64_t seed = 0;
    std::string error;  ///< set when the seed failed before any method ran
    std::vector<MethodResult> methods;
    bool ok() const {
        if (!error.empty()) return false;
        for (const auto& m : methods)
            if (!m.ok) return false;
        return true;
    }
};

struct ExperimentResult {
    std::vector<SeedResult> seeds;
    bool ok() const {
        for (const auto& s : seeds)
            if (!s.ok()) return false;
        return true;
    }
};

namespace detail {

inline OfflineOptions variant_options(Method m, OfflineOptions o) {
    o.optimize_association = true;
    o.optimize_trajectory = m == Method::offline || m == Method::AFT;
    o.optimize_power = m == Method::offline || m == Method::APC;
    return o;
}

inline double elapsed(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

class SeedRun {
public:
    SeedRun(const ExperimentSpec& e, std::uint64_t seed)
        : e_(e), seed_(seed), dir_(e.output / ("seed_" + std::to_string(seed))) {}

    SeedResult run() {
        SeedResult res;
        res.seed = seed_;
        nlohmann::json timing = nlohmann::json::object();
        try {
            s_ = seed_scenario(e_, seed_);
            profile_ = resolve_profile(e_.profile, s_, e_.base);
            write_text(dir_ / "scenario.json", scenario_to_json(s_).dump(2) + "\n");
        } catch (const std::exception& ex) {
            res.error = ex.what();
            write_text(dir_ / "error.txt", res.error + "\n");
            return res;
        }
        for (Method m : e_.methods) {
            MethodResult r;
            r.method = m;
            auto t0 = std::chrono::steady_clock::now();
            try {
                run_method(r);
                r.ok = true;
            } catch (const std::exception& ex) {
                r.error = ex.what();
                r.status = "error";
                write_text(dir_ / method_name(m) / "error.txt", r.error + "\n");
            }
            timing[method_name(m)] = elapsed(t0);
            res.methods.push_back(std::move(r));
        }
        write_text(dir_ / "timing.json", timing.dump(2) + "\n");
        return res;
    }

private:
    std::filesystem::path method_dir(Method m) const { return dir_ / method_name(m); }

    void record_plan(MethodResult& r, const Plan& plan) {
        auto bad = validate_plan(s_, plan, profile_, 1e-6, 1e-9);
        if (!bad.empty()) throw SolverError("plan violates " + bad.front().constraint);
        auto report = evaluate_plan(plan, average_gains(plan.waypoints, s_), s_);
        save_plan(method_dir(r.method), plan);
        write_text(method_dir(r.method) / "rates.csv", rate_csv(report));
        r.plan_worst = report.worst;
        auto st = execute_plan(plan, s_, profile_, e_.rl, effective_rollouts(e_), eval_seed(seed_));
        r.eval_mean_worst = st.mean_worst;
        r.eval_ci95 = st.ci95;
        r.success_probability = st.success_probability;
    }

    const SolveOutcome& solve_offline() {
        if (!offline_outcome_) offline_outcome_ = run_algorithm1(s_, profile_, initial_plan(s_, profile_), e_.offline);
        return *offline_outcome_;
    }

    /// Corridor source for CARL: a saved plan when the spec names one, otherwise the solved plan.
    const Plan& corridor_plan() {
        if (e_.offline_plan.empty()) return solve_offline().plan;
        if (!saved_) saved_ = load_plan(e_.base / e_.offline_plan, s_);
        return *saved_;
    }

    void record_policy(MethodResult& r, const TrainResult& t, Mission& env) {
        write_text(method_dir(r.method) / "curves.csv", curves_csv(t.curves));
        if (e_.save_qtables) save_qtable(method_dir(r.method) / "qtable.json", t.table, e_.rl);
        auto st = rollout_policy(t.table, env, effective_rollouts(e_), eval_seed(seed_));
        r.eval_mean_worst = st.mean_worst;
        r.eval_ci95 = st.ci95;
        r.success_probability = st.success_probability;
        nlohmann::json j{{"states", t.table.states()},
                         {"entries", t.table.entries()},
                         {"penalized_rollouts", st.penalized},
                         {"corridor_violations", st.corridor_violations},
                         {"rollouts", st.rollouts}};
        write_text(method_dir(r.method) / "policy.json", j.dump(2) + "\n");
    }

    void run_method(MethodResult& r) {
        const Method m = r.method;
        if (is_heuristic(m)) {
            HeuristicKind kind = m == Method::UC ? HeuristicKind::UC : m == Method::CC ? HeuristicKind::CC : HeuristicKind::SLC;
            record_plan(r, heuristic_plan(kind, s_, profile_));
            r.status = "fixed";
            return;
        }
        if (m == Method::offline || m == Method::OA || m == Method::AFT || m == Method::APC) {
            SolveOutcome out = m == Method::offline
                                   ? solve_offline()
                                   : run_algorithm1(s_, profile_, initial_plan(s_, profile_), variant_options(m, e_.offline));
            write_text(method_dir(m) / "trace.json", outcome_to_json(out).dump(2) + "\n");
            record_plan(r, out.plan);
            r.rounds = out.rounds;
            r.status = status_name(out.status);
            return;
        }
        TrainOptions o{effective_episodes(e_), train_seed(seed_, m)};
        if (m == Method::CARL) {
            const Plan& plan = corridor_plan();
            Mission env(s_, profile_, e_.rl, &plan);
            auto t = train(env, o);
            record_policy(r, t, env);
        } else {
            Mission env(s_, profile_, e_.rl, nullptr);
            auto t = train(env, o);
            record_policy(r, t, env);
        }
        r.status = "trained";
    }

    const ExperimentSpec& e_;
    std::uint64_t seed_;
    std::filesystem::path dir_;
    Scenario s_;
    HarvestProfile profile_;
    std::optional<Plan> saved_;
    std::optional<SolveOutcome> offline_outcome_;
};

inline nlohmann::json number_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(); }

inline std::string csv_number(double v) { return std::isfinite(v) ? fmt_double(v) : ""; }

}  // namespace detail

/// Summary rows in seed order, then method order. Contains no timings, so reruns match byte for byte.
inline nlohmann::json summary_json(const ExperimentSpec& e, const ExperimentResult& r) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& sr : r.seeds) {
        if (!sr.error.empty()) {
            rows.push_back({{"seed", sr.seed}, {"method", nullptr}, {"ok", false}, {"error", sr.error}});
            continue;
        }
        for (const auto& m : sr.methods)
            rows.push_back({{"seed", sr.seed},
                            {"method", method_name(m.method)},
                            {"ok", m.ok},
                            {"status", m.status},
                            {"error", m.error},
                            {"plan_worst_bps", detail::number_or_null(m.plan_worst)},
                            {"eval_mean_worst_bps", detail::number_or_null(m.eval_mean_worst)},
                            {"eval_ci95_bps", detail::number_or_null(m.eval_ci95)},
                            {"success_probability", detail::number_or_null(m.success_probability)},
                            {"rounds", m.rounds}});
    }
    return {{"name", e.name},
            {"seeds", e.seeds},
            {"quick", e.quick},
            {"episodes", effective_episodes(e)},
            {"rollouts", effective_rollouts(e)},
            {"rows", std::move(rows)}};
}

inline std::string summary_csv(const ExperimentResult& r) {
    std::string out = "method,seed,status,plan_worst_bps,eval_mean_worst_bps,eval_ci95_bps,success_probability,rounds\n";
    for (const auto& sr : r.seeds) {
        if (!sr.error.empty()) {
            out += "," + std::to_string(sr.seed) + ",error,,,,,\n";
            continue;
        }
        for (const auto& m : sr.methods)
            out += std::string(method_name(m.method)) + "," + std::to_string(sr.seed) + "," + m.status + "," +
                   detail::csv_number(m.plan_worst) + "," + detail::csv_number(m.eval_mean_worst) + "," +
                   detail::csv_number(m.eval_ci95) + "," + detail::csv_number(m.success_probability) + "," +
                   std::to_string(m.rounds) + "\n";
    }
    return out;
}

/// Runs every seed (concurrently when workers > 1) and writes per-seed directories plus summaries.
/// A failing seed or method is recorded and the remaining work continues.
inline ExperimentResult run_experiment(const ExperimentSpec& e) {
    std::filesystem::create_directories(e.output);
    ExperimentResult res;
    res.seeds.resize(e.seeds.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < e.seeds.size(); i = next++) res.seeds[i] = detail::SeedRun(e, e.seeds[i]).run();
    };
    const auto n = std::min<std::size_t>(static_cast<std::size_t>(e.workers), e.seeds.size());
    if (n <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < n; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    write_text(e.output / "summary.json", summary_json(e, res).dump(2) + "\n");
    write_text(e.output / "summary.csv", summary_csv(res));
    return res;
}

/// Aggregates summaries of several bundles. Every bundle must cover the same seeds.
/// For each bundle and method: seed count, means, and how often the method's plan objective
/// reached the best fixed flight plan of the same bundle and seed.
inline std::string compare_methods(const std::vector<nlohmann::json>& bundles, const std::vector<std::string>& labels) {
    if (bundles.empty()) throw PreconditionError("nothing to compare");
    if (labels.size() != bundles.size()) throw DimensionError("one label per bundle");
    auto seed_set = [](const nlohmann::json& b) {
        auto v = b.at("seeds").get<std::vector<std::uint64_t>>();
        return std::set<std::uint64_t>(v.begin(), v.end());
    };
    const auto seeds = seed_set(bundles.front());
    for (std::size_t i = 1; i < bundles.size(); ++i)
        if (seed_set(bundles[i]) != seeds)
            throw ConfigError("compare", "bundle '" + labels[i] + "' covers different seeds than '" + labels[0] + "'");

    std::string out =
        "bundle,method,seeds,mean_plan_worst_bps,mean_eval_worst_bps,mean_success_probability,mean_rounds,"
        "beats_best_fixed_plan\n";
    for (std::size_t b = 0; b < bundles.size(); ++b) {
        std::vector<std::string> order;
        std::map<std::string, std::vector<const nlohmann::json*>> by_method;
        std::map<std::uint64_t, double> best_fixed;
        for (const auto& row : bundles[b].at("rows")) {
            if (!row.value("ok", false) || row.at("method").is_null()) continue;
            auto name = row.at("method").get<std::string>();
            if (!by_method.count(name)) order.push_back(name);
            by_method[name].push_back(&row);
            if ((name == "UC" || name == "CC" || name == "SLC") && row.at("plan_worst_bps").is_number()) {
                auto seed = row.at("seed").get<std::uint64_t>();
                double v = row.at("plan_worst_bps").get<double>();
                best_fixed[seed] = best_fixed.count(seed) ? std::max(best_fixed[seed], v) : v;
            }
        }
        for (const auto& name : order) {
            const auto& rows = by_method[name];
            auto mean = [&](const char* field) {
                double sum = 0.0;
                std::size_t count = 0;
                for (const auto* r : rows)
                    if (r->at(field).is_number()) {
                        sum += r->at(field).get<double>();
                        ++count;
                    }
                return count ? sum / static_cast<double>(count) : std::numeric_limits<double>::quiet_NaN();
            };
            std::size_t wins = 0, comparable = 0;
            for (const auto* r : rows) {
                auto seed = r->at("seed").get<std::uint64_t>();
                if (!best_fixed.count(seed) || !r->at("plan_worst_bps").is_number()) continue;
                ++comparable;
                wins += r->at("plan_worst_bps").get<double>() >= best_fixed[seed];
            }
            double rounds = 0.0;
            std::size_t rc = 0;
            for (const auto* r : rows)
                if (r->at("rounds").get<int>() >= 0) {
                    rounds += r->at("rounds").get<int>();
                    ++rc;
                }
            out += labels[b] + "," + name + "," + std::to_string(rows.size()) + "," +
                   detail::csv_number(mean("plan_worst_bps")) + "," + detail::csv_number(mean("eval_mean_worst_bps")) +
                   "," + detail::csv_number(mean("success_probability")) + "," +
                   detail::csv_number(rc ? rounds / static_cast<double>(rc) : std::numeric_limits<double>::quiet_NaN()) +
                   "," + (comparable ? std::to_string(wins) + "/" + std::to_string(comparable) : std::string()) + "\n";
        }
    }
    return out;
}

}  // namespace carl
