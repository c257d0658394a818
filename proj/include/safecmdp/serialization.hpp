#pragma once

#include "safecmdp/baselines.hpp"
#include "safecmdp/cmdp.hpp"
#include "safecmdp/gridworld.hpp"
#include "safecmdp/lbsgd.hpp"

#include "json.hpp"

#include <charconv>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

namespace safecmdp {

using Json = nlohmann::ordered_json;

/// Shortest decimal that round-trips to the same double; "nan"/"inf" spelled out.
inline std::string format_double(double x) {
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, res.ptr);
}

inline Json vector_json(const Eigen::VectorXd& v) {
    Json out = Json::array();
    for (Eigen::Index k = 0; k < v.size(); ++k) out.push_back(v[k]);
    return out;
}

// ---------------------------------------------------------------------------
// CMDP documents
// ---------------------------------------------------------------------------

inline Json to_json(const TabularCmdp& m) {
    const std::size_t S = m.num_states, A = m.num_actions;
    Json transition = Json::array();
    for (std::size_t s = 0; s < S; ++s) {
        Json per_action = Json::array();
        for (std::size_t a = 0; a < A; ++a) {
            Json row = Json::array();
            for (std::size_t sp = 0; sp < S; ++sp) row.push_back(m.prob(s, a, sp));
            per_action.push_back(std::move(row));
        }
        transition.push_back(std::move(per_action));
    }
    Json rewards = Json::array();
    for (std::size_t i = 0; i < m.num_signals(); ++i) {
        Json table = Json::array();
        for (std::size_t s = 0; s < S; ++s) {
            Json row = Json::array();
            for (std::size_t a = 0; a < A; ++a) row.push_back(m.reward(i, s, a));
            table.push_back(std::move(row));
        }
        rewards.push_back(std::move(table));
    }
    Json j;
    j["num_states"] = S;
    j["num_actions"] = A;
    j["discount"] = m.discount;
    j["initial_dist"] = m.initial_dist;
    j["transition"] = std::move(transition);
    j["rewards"] = std::move(rewards);
    j["reward_bounds"] = m.reward_bounds;
    j["thresholds"] = m.thresholds;
    return j;
}

namespace detail {
inline const Json& field(const Json& j, const char* key) {
    if (!j.is_object() || !j.contains(key))
        throw ModelError(std::string("CMDP document is missing field '") + key + "'");
    return j.at(key);
}

inline std::vector<double> number_array(const Json& j, const std::string& what) {
    if (!j.is_array()) throw ModelError(what + " must be an array");
    std::vector<double> out;
    out.reserve(j.size());
    for (const auto& x : j) {
        if (!x.is_number()) throw ModelError(what + " must contain numbers only");
        out.push_back(x.get<double>());
    }
    return out;
}

inline std::size_t count_field(const Json& j, const char* key) {
    const Json& v = field(j, key);
    if (!v.is_number_unsigned()) throw ModelError(std::string(key) + " must be a nonnegative integer");
    return v.get<std::size_t>();
}
}  // namespace detail

/// Parses and validates a CMDP document. Throws ModelError on any shape or content problem.
inline TabularCmdp cmdp_from_json(const Json& j) {
    TabularCmdp m;
    m.num_states = detail::count_field(j, "num_states");
    m.num_actions = detail::count_field(j, "num_actions");
    const Json& disc = detail::field(j, "discount");
    if (!disc.is_number()) throw ModelError("discount must be a number");
    m.discount = disc.get<double>();
    m.initial_dist = detail::number_array(detail::field(j, "initial_dist"), "initial_dist");
    m.reward_bounds = detail::number_array(detail::field(j, "reward_bounds"), "reward_bounds");
    m.thresholds = detail::number_array(detail::field(j, "thresholds"), "thresholds");

    const std::size_t S = m.num_states, A = m.num_actions;
    const Json& tr = detail::field(j, "transition");
    if (!tr.is_array() || tr.size() != S) throw ModelError("transition must have num_states entries");
    m.transition.reserve(S * A * S);
    for (std::size_t s = 0; s < S; ++s) {
        if (!tr[s].is_array() || tr[s].size() != A)
            throw ModelError("transition[" + std::to_string(s) + "] must have num_actions rows");
        for (std::size_t a = 0; a < A; ++a) {
            auto row = detail::number_array(
                tr[s][a], "transition[" + std::to_string(s) + "][" + std::to_string(a) + "]");
            if (row.size() != S)
                throw ModelError("transition row (s=" + std::to_string(s) + ",a=" + std::to_string(a) +
                                 ") must have num_states entries");
            m.transition.insert(m.transition.end(), row.begin(), row.end());
        }
    }
    const Json& rw = detail::field(j, "rewards");
    if (!rw.is_array()) throw ModelError("rewards must be an array of tables");
    for (std::size_t i = 0; i < rw.size(); ++i) {
        if (!rw[i].is_array() || rw[i].size() != S)
            throw ModelError("rewards[" + std::to_string(i) + "] must have num_states rows");
        std::vector<double> flat;
        flat.reserve(S * A);
        for (std::size_t s = 0; s < S; ++s) {
            auto row = detail::number_array(rw[i][s], "rewards[" + std::to_string(i) + "]");
            if (row.size() != A)
                throw ModelError("rewards[" + std::to_string(i) + "][" + std::to_string(s) +
                                 "] must have num_actions entries");
            flat.insert(flat.end(), row.begin(), row.end());
        }
        m.rewards.push_back(std::move(flat));
    }
    validate(m);
    return m;
}

inline Json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    try {
        return Json::parse(in);
    } catch (const Json::parse_error& e) {
        throw std::runtime_error(path + ": " + e.what());
    }
}

inline void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << text;
    if (!out) throw std::runtime_error("write failed for " + path);
}

inline TabularCmdp load_cmdp(const std::string& path) { return cmdp_from_json(read_json_file(path)); }

// ---------------------------------------------------------------------------
// Gridworld spec
// ---------------------------------------------------------------------------

inline Json to_json(const GridworldSpec& g) {
    auto cells = [](const std::vector<Cell>& cs) {
        Json out = Json::array();
        for (Cell c : cs) out.push_back({c.row, c.col});
        return out;
    };
    Json j;
    j["width"] = g.width;
    j["height"] = g.height;
    j["goal"] = {g.goal.row, g.goal.col};
    j["start"] = {g.start.row, g.start.col};
    j["red_cells_signal1"] = cells(g.red_cells_signal1);
    j["red_cells_signal2"] = cells(g.red_cells_signal2);
    j["slip_prob"] = g.slip_prob;
    j["slip_model"] = g.slip_model == SlipModel::OtherDirections ? "other" : "all";
    j["penalty"] = g.penalty;
    j["goal_reward"] = g.goal_reward;
    j["discount"] = g.discount;
    j["thresholds"] = {g.thresholds[0], g.thresholds[1]};
    j["normalize"] = g.normalize;
    return j;
}

/// Missing keys keep their defaults.
inline GridworldSpec gridworld_from_json(const Json& j) {
    if (!j.is_object()) throw ModelError("gridworld spec must be an object");
    GridworldSpec g;
    auto cell = [](const Json& c, const char* what) {
        if (!c.is_array() || c.size() != 2 || !c[0].is_number_integer() || !c[1].is_number_integer())
            throw ModelError(std::string(what) + " must be a [row, col] pair");
        return Cell{c[0].get<int>(), c[1].get<int>()};
    };
    auto cells = [&](const Json& cs, const char* what) {
        if (!cs.is_array()) throw ModelError(std::string(what) + " must be an array of cells");
        std::vector<Cell> out;
        for (const auto& c : cs) out.push_back(cell(c, what));
        return out;
    };
    try {
        if (j.contains("width")) g.width = j.at("width").get<int>();
        if (j.contains("height")) g.height = j.at("height").get<int>();
        if (j.contains("goal")) g.goal = cell(j.at("goal"), "goal");
        if (j.contains("start")) g.start = cell(j.at("start"), "start");
        if (j.contains("red_cells_signal1"))
            g.red_cells_signal1 = cells(j.at("red_cells_signal1"), "red_cells_signal1");
        if (j.contains("red_cells_signal2"))
            g.red_cells_signal2 = cells(j.at("red_cells_signal2"), "red_cells_signal2");
        if (j.contains("slip_prob")) g.slip_prob = j.at("slip_prob").get<double>();
        if (j.contains("slip_model")) {
            const auto s = j.at("slip_model").get<std::string>();
            if (s == "other")
                g.slip_model = SlipModel::OtherDirections;
            else if (s == "all")
                g.slip_model = SlipModel::AllDirections;
            else
                throw ModelError("slip_model must be \"other\" or \"all\"");
        }
        if (j.contains("penalty")) g.penalty = j.at("penalty").get<double>();
        if (j.contains("goal_reward")) g.goal_reward = j.at("goal_reward").get<double>();
        if (j.contains("discount")) g.discount = j.at("discount").get<double>();
        if (j.contains("thresholds")) {
            const auto t = j.at("thresholds").get<std::vector<double>>();
            if (t.size() != 2) throw ModelError("gridworld thresholds must have two entries");
            g.thresholds = {t[0], t[1]};
        }
        if (j.contains("normalize")) g.normalize = j.at("normalize").get<bool>();
    } catch (const Json::exception& e) {
        throw ModelError(std::string("gridworld spec: ") + e.what());
    }
    validate(g);
    return g;
}

// ---------------------------------------------------------------------------
// LP solutions
// ---------------------------------------------------------------------------

inline Json to_json(const OccupancyLpSolution& sol) {
    Json occ = Json::array();
    for (Eigen::Index s = 0; s < sol.occupancy.rows(); ++s) {
        Json row = Json::array();
        for (Eigen::Index a = 0; a < sol.occupancy.cols(); ++a) row.push_back(sol.occupancy(s, a));
        occ.push_back(std::move(row));
    }
    Json j;
    j["status"] = std::string(to_string(sol.status));
    j["objective"] = sol.objective;
    j["constraint_values"] = sol.constraint_values;
    j["occupancy"] = std::move(occ);
    return j;
}

// ---------------------------------------------------------------------------
// Run histories
// ---------------------------------------------------------------------------

inline Json to_json(const IterateRecord& r) {
    const StepDiagnostics& d = r.diagnostics;
    Json j;
    j["t"] = r.t;
    j["theta"] = vector_json(r.theta);
    j["gamma_t"] = d.stepsize;
    j["grad_norm"] = d.grad_norm;
    j["alpha_lower"] = d.alpha_lower;
    j["beta_upper"] = d.beta_upper;
    j["m_hat"] = d.local_smoothness;
    j["estimated_values"] = d.estimated_values;
    j["batch_size"] = d.batch_size;
    if (r.oracle) {
        j["exact_values"] = r.oracle->exact_values;
        j["feasible"] = r.oracle->feasible;
    }
    j["event"] = std::string(to_string(d.event));
    if (!d.note.empty()) j["note"] = d.note;
    return j;
}

/// One JSON object per line, one line per recorded iterate.
inline void write_history_jsonl(std::ostream& out, const RunHistory& h) {
    for (const auto& r : h.records) out << to_json(r).dump() << '\n';
}

inline std::string history_jsonl(const RunHistory& h) {
    std::ostringstream os;
    write_history_jsonl(os, h);
    return os.str();
}

/// Header plus one row per record: t, V0_exact..V{m}_exact, gamma_t, grad_norm.
inline void write_history_csv(std::ostream& out, const RunHistory& h, std::size_t num_signals) {
    out << 't';
    for (std::size_t i = 0; i < num_signals; ++i) out << ",V" << i << "_exact";
    out << ",gamma_t,grad_norm\n";
    for (const auto& r : h.records) {
        out << r.t;
        for (std::size_t i = 0; i < num_signals; ++i)
            out << ',' << (r.oracle ? format_double(r.oracle->exact_values[i]) : "");
        out << ',' << format_double(r.diagnostics.stepsize) << ','
            << format_double(r.diagnostics.grad_norm) << '\n';
    }
}

inline Json summary_json(const RunHistory& h) {
    Json j;
    j["termination"] = std::string(to_string(h.reason));
    j["iterates"] = h.records.size();
    j["recoveries"] = h.recoveries;
    j["implied_failure_probability"] = h.implied_failure_probability;
    j["gradient_tail_regime"] = h.gradient_tail_regime;
    j["theta_out"] = vector_json(h.theta_out);
    return j;
}

}  // namespace safecmdp
