#pragma once

#include "safecmdp/baselines.hpp"
#include "safecmdp/cmdp.hpp"
#include "safecmdp/gridworld.hpp"
#include "safecmdp/lbsgd.hpp"
#include "safecmdp/serialization.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

namespace safecmdp {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class Algorithm { LbSgd, Ipo };

struct EnvConfig {
    std::optional<GridworldSpec> gridworld;  // used when cmdp_file is empty
    std::string cmdp_file;
};

struct ExperimentConfig {
    Algorithm algorithm = Algorithm::LbSgd;
    EnvConfig env{GridworldSpec{}, {}};
    LbSgdConfig lbsgd;
    IpoConfig ipo;
    std::vector<std::uint64_t> seeds;
    bool oracle_logging = true;
    std::string output_dir;
    unsigned jobs = 1;
    std::optional<Eigen::VectorXd> initial_theta;  // zeros (uniform policy) when absent

    void validate() const {
        if (seeds.empty()) throw ConfigError("seeds must be a nonempty list");
        std::set<std::uint64_t> seen(seeds.begin(), seeds.end());
        if (seen.size() != seeds.size()) throw ConfigError("seeds must be distinct");
        if (jobs == 0) throw ConfigError("jobs must be at least 1");
        if (!env.gridworld && env.cmdp_file.empty())
            throw ConfigError("env needs a gridworld spec or a cmdp_file");
    }
};

namespace detail {
template <class T>
void read_opt(const Json& j, const char* key, T& into) {
    if (!j.contains(key)) return;
    try {
        into = j.at(key).get<T>();
    } catch (const Json::exception& e) {
        throw ConfigError(std::string("config field '") + key + "': " + e.what());
    }
}

inline RecoveryConfig recovery_from_json(const Json& j) {
    RecoveryConfig r;
    read_opt(j, "enabled", r.enabled);
    read_opt(j, "n_multiplier", r.n_multiplier);
    read_opt(j, "step_cap_shrink", r.step_cap_shrink);
    read_opt(j, "max_recoveries", r.max_recoveries);
    return r;
}
}  // namespace detail

/**
 * Parses a run configuration. Relative cmdp_file paths resolve against
 * `base_dir`. Keys:
 *   algorithm: "lbsgd" | "ipo"
 *   env: {"gridworld": {...}} | {"cmdp_file": "path"}
 *   params: eta, delta, n, horizon, max_iters, m_g, m_h, fixed_step,
 *           smoothness_override, threads, recovery: {...}
 *   seeds, oracle_logging, output_dir, jobs, initial_theta
 */
inline ExperimentConfig experiment_config_from_json(const Json& j,
                                                    const std::filesystem::path& base_dir = {}) {
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    ExperimentConfig c;
    std::string algo = "lbsgd";
    detail::read_opt(j, "algorithm", algo);
    if (algo == "lbsgd")
        c.algorithm = Algorithm::LbSgd;
    else if (algo == "ipo")
        c.algorithm = Algorithm::Ipo;
    else
        throw ConfigError("algorithm must be \"lbsgd\" or \"ipo\", got \"" + algo + "\"");

    if (j.contains("env")) {
        const Json& e = j.at("env");
        if (!e.is_object()) throw ConfigError("env must be an object");
        if (e.contains("cmdp_file")) {
            std::filesystem::path p = e.at("cmdp_file").get<std::string>();
            if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
            c.env = EnvConfig{std::nullopt, p.string()};
        } else {
            c.env = EnvConfig{gridworld_from_json(e.value("gridworld", Json::object())), {}};
        }
    }

    if (j.contains("params")) {
        const Json& p = j.at("params");
        if (!p.is_object()) throw ConfigError("params must be an object");
        for (auto* cfg_eta : {&c.lbsgd.eta, &c.ipo.eta}) detail::read_opt(p, "eta", *cfg_eta);
        for (auto* v : {&c.lbsgd.delta, &c.ipo.delta}) detail::read_opt(p, "delta", *v);
        for (auto* v : {&c.lbsgd.n, &c.ipo.n}) detail::read_opt(p, "n", *v);
        for (auto* v : {&c.lbsgd.horizon, &c.ipo.horizon}) detail::read_opt(p, "horizon", *v);
        for (auto* v : {&c.lbsgd.max_iters, &c.ipo.max_iters}) detail::read_opt(p, "max_iters", *v);
        for (auto* v : {&c.lbsgd.m_g, &c.ipo.m_g}) detail::read_opt(p, "m_g", *v);
        for (auto* v : {&c.lbsgd.m_h, &c.ipo.m_h}) detail::read_opt(p, "m_h", *v);
        for (auto* v : {&c.lbsgd.threads, &c.ipo.threads}) detail::read_opt(p, "threads", *v);
        detail::read_opt(p, "fixed_step", c.ipo.fixed_step);
        detail::read_opt(p, "smoothness_override", c.lbsgd.smoothness_override);
        if (p.contains("recovery")) c.lbsgd.recovery = c.ipo.recovery = detail::recovery_from_json(p.at("recovery"));
    }
    detail::read_opt(j, "seeds", c.seeds);
    detail::read_opt(j, "oracle_logging", c.oracle_logging);
    detail::read_opt(j, "output_dir", c.output_dir);
    detail::read_opt(j, "jobs", c.jobs);
    if (j.contains("initial_theta")) {
        std::vector<double> th;
        detail::read_opt(j, "initial_theta", th);
        c.initial_theta = Eigen::Map<const Eigen::VectorXd>(th.data(), static_cast<Eigen::Index>(th.size()));
    }
    c.validate();
    return c;
}

inline TabularCmdp build_environment(const EnvConfig& env) {
    if (!env.cmdp_file.empty()) return load_cmdp(env.cmdp_file);
    return build_gridworld(env.gridworld.value_or(GridworldSpec{}));
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

/// Nearest-rank quantile: the ceil(p N)-th smallest value (1-based, at least the first).
inline double nearest_rank(std::vector<double> values, double p) {
    if (values.empty()) throw std::invalid_argument("nearest_rank: no values");
    std::sort(values.begin(), values.end());
    const auto n = values.size();
    auto rank = static_cast<std::size_t>(std::ceil(p * static_cast<double>(n)));
    rank = std::clamp<std::size_t>(rank, 1, n);
    return values[rank - 1];
}

/// Exact values along one run: [iterate][signal].
using ValueTrace = std::vector<std::vector<double>>;

inline ValueTrace exact_trace(const TabularCmdp& model, const RunHistory& h) {
    ValueTrace out;
    out.reserve(h.records.size());
    for (const auto& r : h.records) {
        if (r.oracle) {
            out.push_back(r.oracle->exact_values);
        } else {
            const SoftmaxPolicy pi(model.num_states, model.num_actions, r.theta);
            out.push_back(exact_signal_values(model, pi));
        }
    }
    return out;
}

/**
 * Per-iterate median and 10%/90% quantiles across seeds of every exact value.
 * Runs that stopped early hold their last value for the remaining iterates;
 * `active_seeds` counts the runs still recording at each iterate.
 */
inline Json aggregate_traces(const std::vector<ValueTrace>& traces) {
    std::size_t length = 0, signals = 0;
    for (const auto& tr : traces) {
        length = std::max(length, tr.size());
        if (!tr.empty()) signals = tr.front().size();
    }
    Json iterates = Json::array();
    for (std::size_t t = 0; t < length; ++t) {
        Json row;
        row["t"] = t;
        std::size_t active = 0;
        for (const auto& tr : traces) active += t < tr.size();
        row["active_seeds"] = active;
        for (std::size_t i = 0; i < signals; ++i) {
            std::vector<double> vals;
            for (const auto& tr : traces)
                if (!tr.empty()) vals.push_back(tr[std::min(t, tr.size() - 1)][i]);
            const std::string key = "V" + std::to_string(i);
            row[key] = {{"median", nearest_rank(vals, 0.5)},
                        {"q10", nearest_rank(vals, 0.1)},
                        {"q90", nearest_rank(vals, 0.9)}};
        }
        iterates.push_back(std::move(row));
    }
    Json j;
    j["seeds"] = traces.size();
    j["quantile_method"] = "nearest-rank";
    j["iterates"] = std::move(iterates);
    return j;
}

/// Iterates where some exact value falls below its threshold.
inline std::size_t count_violations(const TabularCmdp& model, const ValueTrace& trace) {
    std::size_t v = 0;
    for (const auto& vals : trace) {
        bool bad = false;
        for (std::size_t i = 0; i < model.num_constraints(); ++i)
            bad = bad || vals[i + 1] < model.thresholds[i];
        v += bad;
    }
    return v;
}

// ---------------------------------------------------------------------------
// Orchestration
// ---------------------------------------------------------------------------

struct SeedOutcome {
    std::uint64_t seed = 0;
    RunHistory history;
    ValueTrace trace;
    std::size_t violations = 0;
};

struct ExperimentResult {
    std::vector<SeedOutcome> seeds;
    OccupancyLpSolution lp;
    Json aggregate;
    Json safety;
};

inline RunHistory run_single(const TabularCmdp& model, const ExperimentConfig& config,
                             std::uint64_t seed) {
    Eigen::VectorXd theta0 = config.initial_theta.value_or(
        Eigen::VectorXd::Zero(static_cast<Eigen::Index>(model.num_states * model.num_actions)));
    const SoftmaxPolicy initial(model.num_states, model.num_actions, std::move(theta0));
    Rng rng(seed);
    if (config.algorithm == Algorithm::LbSgd)
        return lbsgd_run(model, initial, config.lbsgd, rng, config.oracle_logging);
    return ipo_run(model, initial, config.ipo, rng, config.oracle_logging);
}

inline Json safety_report(const TabularCmdp& model, const ExperimentConfig& config,
                          const std::vector<SeedOutcome>& outcomes, const OccupancyLpSolution& lp) {
    Json per_seed = Json::array();
    std::size_t clean = 0;
    for (const auto& o : outcomes) {
        const auto& final_values = o.trace.back();
        Json s;
        s["seed"] = o.seed;
        s["violating_iterates"] = o.violations;
        s["iterates"] = o.trace.size();
        s["final_exact_values"] = final_values;
        s["final_gap"] = lp.objective - final_values[0];
        s["run"] = summary_json(o.history);
        per_seed.push_back(std::move(s));
        clean += o.violations == 0;
    }
    Json j;
    j["algorithm"] = config.algorithm == Algorithm::LbSgd ? "lbsgd" : "ipo";
    j["thresholds"] = model.thresholds;
    j["lp_objective"] = lp.objective;
    j["lp_constraint_values"] = lp.constraint_values;
    j["seeds_violation_free"] = clean;
    j["seeds"] = std::move(per_seed);
    return j;
}

/**
 * Runs every seed (`jobs` at a time), writes seed_<k>.jsonl, seed_<k>.csv,
 * aggregate.json and safety_report.json when output_dir is set, and returns
 * everything in memory. Seed k runs with Rng(k + seed_offset) and names its
 * files after k + seed_offset.
 */
inline ExperimentResult run_experiment(const ExperimentConfig& config, std::uint64_t seed_offset = 0) {
    config.validate();
    const TabularCmdp model = build_environment(config.env);
    ExperimentResult result;
    result.lp = lp_occupancy_solve(model);
    if (result.lp.status != LpStatus::Optimal)
        throw ConfigError("ground-truth LP is infeasible for the configured thresholds");

    const std::size_t ns = config.seeds.size();
    result.seeds.resize(ns);
    std::vector<std::exception_ptr> errors(ns);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t k; (k = next.fetch_add(1)) < ns;) {
            try {
                SeedOutcome& o = result.seeds[k];
                o.seed = config.seeds[k] + seed_offset;
                o.history = run_single(model, config, o.seed);
                o.trace = exact_trace(model, o.history);
                o.violations = count_violations(model, o.trace);
            } catch (...) {
                errors[k] = std::current_exception();
            }
        }
    };
    {
        std::vector<std::jthread> pool;
        const unsigned workers = std::min<unsigned>(config.jobs, static_cast<unsigned>(ns));
        for (unsigned w = 1; w < workers; ++w) pool.emplace_back(worker);
        worker();
    }
    for (const auto& e : errors)
        if (e) std::rethrow_exception(e);

    std::vector<ValueTrace> traces;
    for (const auto& o : result.seeds) traces.push_back(o.trace);
    result.aggregate = aggregate_traces(traces);
    result.safety = safety_report(model, config, result.seeds, result.lp);

    if (!config.output_dir.empty()) {
        namespace fs = std::filesystem;
        const fs::path dir = config.output_dir;
        fs::create_directories(dir);
        for (const auto& o : result.seeds) {
            const std::string stem = "seed_" + std::to_string(o.seed);
            write_text_file((dir / (stem + ".jsonl")).string(), history_jsonl(o.history));
            std::ostringstream csv;
            RunHistory with_values = o.history;
            for (std::size_t t = 0; t < with_values.records.size(); ++t)
                if (!with_values.records[t].oracle)
                    with_values.records[t].oracle = OracleRecord{o.trace[t], true};
            write_history_csv(csv, with_values, model.num_signals());
            write_text_file((dir / (stem + ".csv")).string(), csv.str());
        }
        write_text_file((dir / "aggregate.json").string(), result.aggregate.dump(2) + "\n");
        write_text_file((dir / "safety_report.json").string(), result.safety.dump(2) + "\n");
    }
    return result;
}

/// Rebuilds aggregate.json from the seed_*.jsonl files of a run directory.
inline Json aggregate_directory(const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir)) throw std::runtime_error(dir.string() + " is not a directory");
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir)) {
        const auto name = e.path().filename().string();
        if (e.is_regular_file() && name.starts_with("seed_") && e.path().extension() == ".jsonl")
            files.push_back(e.path());
    }
    if (files.empty()) throw std::runtime_error("no seed_*.jsonl files in " + dir.string());
    std::sort(files.begin(), files.end());
    std::vector<ValueTrace> traces;
    for (const auto& f : files) {
        std::ifstream in(f);
        ValueTrace tr;
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (line.empty()) continue;
            const Json rec = Json::parse(line, nullptr, false);
            if (rec.is_discarded() || !rec.contains("exact_values"))
                throw std::runtime_error(f.string() + ":" + std::to_string(lineno) +
                                         ": record lacks exact_values (run with oracle_logging)");
            tr.push_back(rec.at("exact_values").get<std::vector<double>>());
        }
        traces.push_back(std::move(tr));
    }
    return aggregate_traces(traces);
}

}  // namespace safecmdp
