// Command-line harness: validate CMDP files, solve the LP ground truth,
// run seeded LB-SGD / IPO experiments and aggregate their outputs.

#include "safecmdp/experiment.hpp"

#include "CLI11.hpp"

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>

namespace fs = std::filesystem;
using namespace safecmdp;

namespace {

constexpr const char* kOutputDirEnv = "SAFECMDP_OUTPUT_DIR";

std::string default_output_dir() {
    if (const char* v = std::getenv(kOutputDirEnv); v && *v) return v;
    return "runs";
}

// "gridworld" means the default layout; otherwise a JSON file holding either a
// CMDP document (has "transition") or a gridworld spec.
TabularCmdp load_env(const std::string& arg, bool normalize) {
    if (arg == "gridworld") {
        GridworldSpec g;
        g.normalize = normalize;
        return build_gridworld(g);
    }
    const Json j = read_json_file(arg);
    if (j.contains("transition")) return cmdp_from_json(j);
    GridworldSpec g = gridworld_from_json(j.contains("gridworld") ? j.at("gridworld") : j);
    g.normalize = g.normalize || normalize;
    return build_gridworld(g);
}

int cmd_validate(const std::string& path) {
    const TabularCmdp m = load_cmdp(path);
    std::cout << "valid: " << m.num_states << " states, " << m.num_actions << " actions, "
              << m.num_constraints() << " constraints, discount " << format_double(m.discount)
              << "\n";
    return 0;
}

int cmd_ground_truth(const std::string& env, bool normalize, std::string out) {
    const TabularCmdp m = load_env(env, normalize);
    const OccupancyLpSolution sol = lp_occupancy_solve(m);
    std::cout << "status: " << to_string(sol.status) << "\n";
    if (sol.status == LpStatus::Optimal) {
        std::cout << "V0* = " << format_double(sol.objective) << "\n";
        for (std::size_t i = 0; i < sol.constraint_values.size(); ++i)
            std::cout << "V" << i + 1 << " = " << format_double(sol.constraint_values[i])
                      << " (threshold " << format_double(m.thresholds[i]) << ")\n";
    } else {
        std::cout << "no policy meets the thresholds";
        for (std::size_t i = 0; i < m.thresholds.size(); ++i)
            std::cout << (i ? ", " : ": ") << "b" << i + 1 << " = " << format_double(m.thresholds[i]);
        std::cout << "\n";
    }
    if (out.empty()) out = (fs::path(default_output_dir()) / "ground_truth.json").string();
    if (const auto parent = fs::path(out).parent_path(); !parent.empty()) fs::create_directories(parent);
    write_text_file(out, to_json(sol).dump(2) + "\n");
    std::cout << "wrote " << out << "\n";
    return sol.status == LpStatus::Optimal ? 0 : 2;
}

int cmd_run(const std::string& path, const std::string& output_dir, std::uint64_t seed_offset,
            unsigned jobs, bool normalize) {
    ExperimentConfig cfg =
        experiment_config_from_json(read_json_file(path), fs::path(path).parent_path());
    if (!output_dir.empty())
        cfg.output_dir = output_dir;
    else if (cfg.output_dir.empty())
        cfg.output_dir = default_output_dir();
    if (jobs > 0) cfg.jobs = jobs;
    if (normalize && cfg.env.gridworld) cfg.env.gridworld->normalize = true;

    const ExperimentResult r = run_experiment(cfg, seed_offset);
    std::cout << "LP optimum V0* = " << format_double(r.lp.objective) << "\n";
    for (const auto& s : r.seeds) {
        const auto& last = s.trace.back();
        std::cout << "seed " << s.seed << ": " << s.history.records.size() << " iterates, "
                  << to_string(s.history.reason) << ", violating iterates " << s.violations
                  << ", final V0 " << format_double(last[0]) << "\n";
    }
    std::cout << "violation-free seeds: " << r.safety.at("seeds_violation_free").get<std::size_t>()
              << "/" << r.seeds.size() << "\n"
              << "outputs in " << cfg.output_dir << "\n";
    return 0;
}

int cmd_aggregate(const std::string& dir) {
    const Json agg = aggregate_directory(dir);
    const auto out = fs::path(dir) / "aggregate.json";
    write_text_file(out.string(), agg.dump(2) + "\n");
    std::cout << "aggregated " << agg.at("seeds").get<std::size_t>() << " seeds into " << out.string()
              << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Tabular constrained-MDP toolkit: LB-SGD, IPO and LP ground truth"};
    app.require_subcommand(1);

    std::string cmdp_path;
    auto* validate_cmd = app.add_subcommand("validate", "Check a CMDP JSON document");
    validate_cmd->add_option("cmdp", cmdp_path, "CMDP JSON file")->required();

    std::string env, gt_out;
    bool gt_normalize = false;
    auto* gt_cmd = app.add_subcommand("ground-truth", "Solve the occupancy-measure LP");
    gt_cmd->add_option("env", env, "\"gridworld\", a gridworld spec JSON or a CMDP JSON")->required();
    gt_cmd->add_option("-o,--out", gt_out, "Output JSON (default <output dir>/ground_truth.json)");
    gt_cmd->add_flag("--normalize", gt_normalize, "Divide gridworld utilities and thresholds by |penalty|");

    std::string config_path, output_dir;
    std::uint64_t seed_offset = 0;
    unsigned jobs = 0;
    bool run_normalize = false;
    auto* run_cmd = app.add_subcommand("run", "Run a seeded experiment");
    run_cmd->add_option("config", config_path, "Experiment config JSON")->required();
    run_cmd->add_option("-o,--output-dir", output_dir,
                        std::string("Output directory (default: config, then $") + kOutputDirEnv +
                            ", then ./runs)");
    run_cmd->add_option("--seed-offset", seed_offset, "Added to every seed");
    run_cmd->add_option("-j,--jobs", jobs, "Seeds run concurrently");
    run_cmd->add_flag("--normalize", run_normalize, "Divide gridworld utilities and thresholds by |penalty|");

    std::string agg_dir;
    auto* agg_cmd = app.add_subcommand("aggregate", "Recompute aggregate.json from seed_*.jsonl");
    agg_cmd->add_option("dir", agg_dir, "Run directory")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*validate_cmd) return cmd_validate(cmdp_path);
        if (*gt_cmd) return cmd_ground_truth(env, gt_normalize, gt_out);
        if (*run_cmd) return cmd_run(config_path, output_dir, seed_offset, jobs, run_normalize);
        if (*agg_cmd) return cmd_aggregate(agg_dir);
    } catch (const InfeasibleStartError& e) {
        std::cerr << "error: infeasible start: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
