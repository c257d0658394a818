#pragma once

#include "safecmdp/cmdp.hpp"
#include "safecmdp/lbsgd.hpp"
#include "safecmdp/simplex.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <vector>

namespace safecmdp {

// ---------------------------------------------------------------------------
// IPO: log-barrier policy gradient with a constant stepsize
// ---------------------------------------------------------------------------

struct IpoConfig {
    double eta = 0.01;
    double fixed_step = 1.0;
    double delta = 0.1;  // only enters the reported confidence bounds
    std::size_t n = 3000;
    std::size_t horizon = 40;
    std::size_t max_iters = 500;
    double m_g = 1.0;
    double m_h = 1.0;
    RecoveryConfig recovery;
    unsigned threads = 1;
};

inline AscentSettings ascent_settings(const TabularCmdp& model, const IpoConfig& c) {
    AscentSettings s;
    s.eta = c.eta;
    s.delta = c.delta;
    s.n = c.n;
    s.horizon = c.horizon;
    s.max_iters = c.max_iters;
    s.recovery = c.recovery;
    s.smoothness = signal_smoothness(model, c.m_g, c.m_h);
    s.threads = c.threads;
    return s;
}

inline StepResult ipo_step(const TabularCmdp& model, const SoftmaxPolicy& policy,
                           const IpoConfig& config, Rng& rng) {
    check_compatible(model, policy);
    if (!(config.fixed_step > 0.0)) throw std::invalid_argument("fixed_step must be positive");
    const AscentSettings s = ascent_settings(model, config);
    s.validate(model);
    return barrier_step(model, with_bounds(policy, config.m_g, config.m_h), s,
                        FixedStep{config.fixed_step}, config.n,
                        std::numeric_limits<double>::infinity(), rng);
}

inline RunHistory ipo_run(const TabularCmdp& model, const SoftmaxPolicy& initial,
                          const IpoConfig& config, Rng& rng, bool oracle_logging) {
    if (!(config.fixed_step > 0.0)) throw std::invalid_argument("fixed_step must be positive");
    return barrier_ascent_run(model, with_bounds(initial, config.m_g, config.m_h),
                              ascent_settings(model, config), FixedStep{config.fixed_step}, rng,
                              oracle_logging);
}

// ---------------------------------------------------------------------------
// Occupancy-measure LP
// ---------------------------------------------------------------------------

struct OccupancyLpSolution {
    Eigen::MatrixXd occupancy;             // d(s,a), S x A; empty unless optimal
    double objective = std::numeric_limits<double>::quiet_NaN();  // V_0(rho)
    std::vector<double> constraint_values; // V_i(rho), i = 1..m
    LpStatus status = LpStatus::Infeasible;
};

/**
 * Solves  max sum d r_0  over normalized occupancies d >= 0 with
 *   sum_a d(s',a) - gamma sum_{s,a} P(s'|s,a) d(s,a) = (1-gamma) rho(s')
 *   sum d r_i >= (1-gamma) b_i.
 * Values are reported on the V scale, i.e. divided by 1-gamma.
 */
inline OccupancyLpSolution lp_occupancy_solve(const TabularCmdp& model,
                                              const SimplexOptions& options = {}) {
    validate(model);
    const std::size_t S = model.num_states, A = model.num_actions, nm = model.num_constraints();
    const double g = model.discount;
    const auto nsa = static_cast<Eigen::Index>(S * A);
    const auto rows = static_cast<Eigen::Index>(S + nm);

    LinearProgram lp;
    lp.a = Eigen::MatrixXd::Zero(rows, nsa + static_cast<Eigen::Index>(nm));
    lp.b = Eigen::VectorXd::Zero(rows);
    lp.c = Eigen::VectorXd::Zero(lp.a.cols());
    for (std::size_t s = 0; s < S; ++s)
        for (std::size_t a = 0; a < A; ++a) {
            const auto col = static_cast<Eigen::Index>(model.pair_index(s, a));
            lp.a(static_cast<Eigen::Index>(s), col) += 1.0;
            for (std::size_t sp = 0; sp < S; ++sp)
                lp.a(static_cast<Eigen::Index>(sp), col) -= g * model.prob(s, a, sp);
            lp.c[col] = model.rewards[0][model.pair_index(s, a)];
            for (std::size_t i = 0; i < nm; ++i)
                lp.a(static_cast<Eigen::Index>(S + i), col) = model.rewards[i + 1][model.pair_index(s, a)];
        }
    for (std::size_t s = 0; s < S; ++s)
        lp.b[static_cast<Eigen::Index>(s)] = (1.0 - g) * model.initial_dist[s];
    for (std::size_t i = 0; i < nm; ++i) {
        const auto r = static_cast<Eigen::Index>(S + i);
        lp.a(r, nsa + static_cast<Eigen::Index>(i)) = -1.0;  // surplus
        lp.b[r] = (1.0 - g) * model.thresholds[i];
    }

    const LpResult res = simplex_solve(lp, options);
    OccupancyLpSolution out;
    out.status = res.status;
    if (res.status == LpStatus::Unbounded)
        throw std::logic_error("lp_occupancy_solve: occupancy LP reported unbounded");
    if (res.status != LpStatus::Optimal) return out;

    out.occupancy.resize(static_cast<Eigen::Index>(S), static_cast<Eigen::Index>(A));
    for (std::size_t s = 0; s < S; ++s)
        for (std::size_t a = 0; a < A; ++a)
            out.occupancy(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(a)) =
                res.x[static_cast<Eigen::Index>(model.pair_index(s, a))];
    auto value = [&](std::size_t i) {
        double v = 0.0;
        for (std::size_t k = 0; k < S * A; ++k) v += res.x[static_cast<Eigen::Index>(k)] * model.rewards[i][k];
        return v / (1.0 - g);
    };
    out.objective = value(0);
    for (std::size_t i = 0; i < nm; ++i) out.constraint_values.push_back(value(i + 1));
    return out;
}

/// pi(a|s) = d(s,a) / sum_b d(s,b); uniform where the state has no occupancy.
inline Eigen::MatrixXd lp_to_policy(const OccupancyLpSolution& solution) {
    if (solution.status != LpStatus::Optimal)
        throw std::invalid_argument("lp_to_policy: solution is not optimal");
    const Eigen::MatrixXd& d = solution.occupancy;
    Eigen::MatrixXd pi(d.rows(), d.cols());
    for (Eigen::Index s = 0; s < d.rows(); ++s) {
        const Eigen::VectorXd row = d.row(s).transpose().cwiseMax(0.0);
        const double mass = row.sum();
        if (mass <= 1e-12)
            pi.row(s).setConstant(1.0 / static_cast<double>(d.cols()));
        else
            pi.row(s) = (row / mass).transpose();
    }
    return pi;
}

/// Optimal unconstrained value of signal i at rho, by Bellman iteration.
inline double value_iteration(const TabularCmdp& model, std::size_t i, double tol = 1e-10) {
    validate(model);
    if (i >= model.num_signals()) throw std::out_of_range("value_iteration: signal out of range");
    if (!(tol > 0.0)) throw std::invalid_argument("value_iteration: tol must be positive");
    const std::size_t S = model.num_states, A = model.num_actions;
    const double g = model.discount;
    const double stop = tol * (1.0 - g) / g;
    std::vector<double> v(S, 0.0), next(S);
    for (;;) {
        double resid = 0.0;
        for (std::size_t s = 0; s < S; ++s) {
            double best = -std::numeric_limits<double>::infinity();
            for (std::size_t a = 0; a < A; ++a) {
                double q = model.reward(i, s, a);
                for (std::size_t sp = 0; sp < S; ++sp) q += g * model.prob(s, a, sp) * v[sp];
                best = std::max(best, q);
            }
            next[s] = best;
            resid = std::max(resid, std::abs(best - v[s]));
        }
        v.swap(next);
        if (resid <= stop) break;
    }
    double out = 0.0;
    for (std::size_t s = 0; s < S; ++s) out += model.initial_dist[s] * v[s];
    return out;
}

}  // namespace safecmdp
