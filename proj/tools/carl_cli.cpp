// Command-line front end: one verb per experiment kind, all writing the same bundle layout.

#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "carl/harness.hpp"

namespace fs = std::filesystem;
using namespace carl;

namespace {

struct Common {
    std::string scenario;
    std::string profile = "bell:600";
    std::vector<std::uint64_t> seeds{1};
    std::string out = "results";
    bool quick = false;
    std::string rl;
    std::size_t rollouts = 1000;
    int workers = 1;
};

void add_common(CLI::App* cmd, Common& c) {
    cmd->add_option("--scenario", c.scenario, "Scenario JSON file (defaults when omitted)");
    cmd->add_option("--profile", c.profile, "kind:peak (constant, ramp, bell) or an irradiance CSV")->capture_default_str();
    cmd->add_option("--seed", c.seeds, "Seed; repeat for several")->capture_default_str();
    cmd->add_option("--out", c.out, "Output directory")->capture_default_str();
    cmd->add_flag("--quick", c.quick, "Halve slots, divide episodes and rollouts by ten");
    cmd->add_option("--rl", c.rl, "JSON file with learning parameters");
    cmd->add_option("--rollouts", c.rollouts, "Evaluation rollouts per seed")->capture_default_str();
    cmd->add_option("--workers", c.workers, "Seeds run concurrently")->capture_default_str();
}

ExperimentSpec base_spec(const Common& c, std::vector<Method> methods) {
    ExperimentSpec e;
    e.name = method_name(methods.front());
    if (!c.scenario.empty()) e.scenario = fs::absolute(c.scenario).string();
    e.profile = c.profile;
    e.methods = std::move(methods);
    e.seeds = c.seeds;
    e.output = c.out;
    e.quick = c.quick;
    e.rollouts = c.rollouts;
    e.workers = c.workers;
    if (!c.rl.empty()) e.rl = rl_params_from_json(read_json(c.rl));
    return e;
}

int report(const ExperimentSpec& e, const ExperimentResult& r) {
    std::cout << summary_csv(r);
    for (const auto& s : r.seeds) {
        if (!s.error.empty()) std::cerr << "seed " << s.seed << ": " << s.error << "\n";
        for (const auto& m : s.methods)
            if (!m.ok) std::cerr << "seed " << s.seed << " " << method_name(m.method) << ": " << m.error << "\n";
    }
    std::cerr << "results in " << e.output.string() << "\n";
    return r.ok() ? 0 : 1;
}

/// Evaluates a saved plan or Q-table without training.
int evaluate(const Common& c, const std::string& plan_dir, const std::string& qtable) {
    if (plan_dir.empty() && qtable.empty()) throw ConfigError("evaluate", "give --plan, --qtable, or both");
    ExperimentSpec e = base_spec(c, {Method::offline});
    RlParams params = e.rl;
    std::optional<QTable> table;
    if (!qtable.empty()) table = load_qtable(qtable, c.rl.empty() ? &params : nullptr);
    nlohmann::json rows = nlohmann::json::array();
    bool ok = true;
    for (auto seed : e.seeds) {
        nlohmann::json row{{"seed", seed}};
        try {
            Scenario s = seed_scenario(e, seed);
            HarvestProfile profile = resolve_profile(e.profile, s);
            std::optional<Plan> plan;
            if (!plan_dir.empty()) plan = load_plan(plan_dir, s);
            RolloutStats st;
            if (table) {
                Mission env(s, profile, params, plan ? &*plan : nullptr);
                st = rollout_policy(*table, env, effective_rollouts(e), eval_seed(seed));
                row["corridor_violations"] = st.corridor_violations;
                row["penalized"] = st.penalized;
            } else {
                st = execute_plan(*plan, s, profile, params, effective_rollouts(e), eval_seed(seed));
                row["plan_worst_bps"] = average_objective(*plan, s);
            }
            row["eval_mean_worst_bps"] = st.mean_worst;
            row["eval_ci95_bps"] = st.ci95;
            row["success_probability"] = st.success_probability;
            row["rollouts"] = st.rollouts;
        } catch (const std::exception& ex) {
            row["error"] = ex.what();
            ok = false;
        }
        rows.push_back(std::move(row));
    }
    auto text = nlohmann::json{{"rows", rows}}.dump(2) + "\n";
    write_text(fs::path(c.out) / "evaluation.json", text);
    std::cout << text;
    return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multi-UAV data collection planner: offline optimizer, corridor-guided Q-learning, baselines"};
    app.require_subcommand(1);

    Common solve_c, base_c, carl_c, rl_c, eval_c;
    auto* solve = app.add_subcommand("solve-offline", "Alternating optimization of association, trajectory and power");
    add_common(solve, solve_c);

    std::string kind = "UC";
    auto* baseline = app.add_subcommand("baseline", "Fixed flight plans (UC, CC, SLC) or partial optimizers (OA, AFT, APC)");
    add_common(baseline, base_c);
    baseline->add_option("--kind", kind, "UC, CC, SLC, OA, AFT or APC")->capture_default_str();

    std::size_t carl_episodes = 200000, rl_episodes = 200000;
    std::string carl_plan;
    bool carl_no_table = false, rl_no_table = false;
    auto* train_carl_cmd = app.add_subcommand("train-carl", "Q-learning inside the corridor around the offline plan");
    add_common(train_carl_cmd, carl_c);
    train_carl_cmd->add_option("--episodes", carl_episodes, "Training episodes")->capture_default_str();
    train_carl_cmd->add_option("--plan", carl_plan, "Saved offline plan directory (solved when omitted)");
    train_carl_cmd->add_flag("--no-qtable", carl_no_table, "Skip writing the Q-table snapshot");

    auto* train_rl_cmd = app.add_subcommand("train-rl", "Q-learning over the whole lattice with a return incentive");
    add_common(train_rl_cmd, rl_c);
    train_rl_cmd->add_option("--episodes", rl_episodes, "Training episodes")->capture_default_str();
    train_rl_cmd->add_flag("--no-qtable", rl_no_table, "Skip writing the Q-table snapshot");

    std::string eval_plan, eval_table;
    auto* eval = app.add_subcommand("evaluate", "Monte-Carlo evaluation of a saved plan or Q-table");
    add_common(eval, eval_c);
    eval->add_option("--plan", eval_plan, "Plan directory (also the corridor for a CARL table)");
    eval->add_option("--qtable", eval_table, "Q-table snapshot");

    std::vector<std::string> bundles, labels;
    std::string compare_out;
    auto* compare = app.add_subcommand("compare", "Align summaries of several result bundles");
    compare->add_option("bundles", bundles, "Result directories or summary.json files")->required();
    compare->add_option("--label", labels, "Label per bundle (defaults to the directory name)");
    compare->add_option("--out", compare_out, "Write the comparison CSV here as well");

    std::string spec_path;
    bool run_quick = false;
    auto* run = app.add_subcommand("run", "Run an experiment spec file");
    run->add_option("spec", spec_path, "Experiment JSON")->required()->check(CLI::ExistingFile);
    run->add_flag("--quick", run_quick, "Scaled-down run");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*solve) {
            auto e = base_spec(solve_c, {Method::offline});
            return report(e, run_experiment(e));
        }
        if (*baseline) {
            auto e = base_spec(base_c, {parse_method(kind)});
            if (e.methods.front() == Method::offline || e.methods.front() == Method::CARL ||
                e.methods.front() == Method::conventional)
                throw ConfigError("--kind", "expected UC, CC, SLC, OA, AFT or APC");
            return report(e, run_experiment(e));
        }
        if (*train_carl_cmd) {
            auto e = base_spec(carl_c, {Method::CARL});
            e.episodes = carl_episodes;
            e.save_qtables = !carl_no_table;
            if (!carl_plan.empty()) e.offline_plan = fs::absolute(carl_plan).string();
            return report(e, run_experiment(e));
        }
        if (*train_rl_cmd) {
            auto e = base_spec(rl_c, {Method::conventional});
            e.episodes = rl_episodes;
            e.save_qtables = !rl_no_table;
            return report(e, run_experiment(e));
        }
        if (*eval) return evaluate(eval_c, eval_plan, eval_table);
        if (*compare) {
            std::vector<nlohmann::json> loaded;
            for (std::size_t i = 0; i < bundles.size(); ++i) {
                fs::path p = bundles[i];
                if (fs::is_directory(p)) p /= "summary.json";
                loaded.push_back(read_json(p));
                if (labels.size() <= i) labels.push_back(fs::path(bundles[i]).filename().string());
            }
            auto text = compare_methods(loaded, labels);
            if (!compare_out.empty()) write_text(compare_out, text);
            std::cout << text;
            return 0;
        }
        if (*run) {
            auto e = load_spec(spec_path);
            e.quick = e.quick || run_quick;
            return report(e, run_experiment(e));
        }
    } catch (const std::exception& ex) {
        std::cerr << "error: " << ex.what() << "\n";
        return 2;
    }
    return 0;
}
