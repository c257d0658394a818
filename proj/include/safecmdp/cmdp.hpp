#pragma once

#include "safecmdp/random.hpp"
#include "safecmdp/softmax_policy.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace safecmdp {

/// Thrown when a model or its inputs violate an invariant.
class ModelError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/**
 * Finite constrained MDP.
 *
 * Signal 0 is the objective, signals 1..m are utilities with constraints
 * V_i(rho) >= thresholds[i-1]. Tables are dense and row-major:
 * transition[(s * A + a) * S + s'] and rewards[i][s * A + a].
 */
struct TabularCmdp {
    std::size_t num_states = 0;
    std::size_t num_actions = 0;
    std::vector<double> transition;
    std::vector<double> initial_dist;
    std::vector<std::vector<double>> rewards;
    std::vector<double> reward_bounds;
    double discount = 0.0;
    std::vector<double> thresholds;

    std::size_t num_signals() const noexcept { return rewards.size(); }
    std::size_t num_constraints() const noexcept {
        return rewards.empty() ? 0 : rewards.size() - 1;
    }
    std::size_t pair_index(std::size_t s, std::size_t a) const noexcept {
        return s * num_actions + a;
    }
    double prob(std::size_t s, std::size_t a, std::size_t next) const noexcept {
        return transition[pair_index(s, a) * num_states + next];
    }
    double reward(std::size_t i, std::size_t s, std::size_t a) const noexcept {
        return rewards[i][pair_index(s, a)];
    }
    /// Largest per-signal reward bound.
    double max_reward_bound() const noexcept {
        double r = 0.0;
        for (double b : reward_bounds) r = std::max(r, b);
        return r;
    }
};

namespace detail {
inline std::string fmt_double(double x) {
    std::ostringstream os;
    os.precision(17);
    os << x;
    return os.str();
}
}  // namespace detail

/// Throws ModelError naming the first violated invariant.
inline void validate(const TabularCmdp& m) {
    constexpr double kTol = 1e-12;
    const std::size_t S = m.num_states, A = m.num_actions;
    if (S == 0) throw ModelError("num_states must be positive");
    if (A == 0) throw ModelError("num_actions must be positive");
    if (!(m.discount > 0.0 && m.discount < 1.0))
        throw ModelError("discount out of (0,1): " + detail::fmt_double(m.discount));
    if (m.transition.size() != S * A * S)
        throw ModelError("transition has " + std::to_string(m.transition.size()) +
                         " entries, expected " + std::to_string(S * A * S));
    for (std::size_t s = 0; s < S; ++s) {
        for (std::size_t a = 0; a < A; ++a) {
            double sum = 0.0;
            for (std::size_t n = 0; n < S; ++n) {
                const double p = m.prob(s, a, n);
                if (!std::isfinite(p) || p < 0.0)
                    throw ModelError("transition entry (" + std::to_string(s) + "," +
                                     std::to_string(a) + "," + std::to_string(n) +
                                     ") is negative or not finite");
                sum += p;
            }
            if (std::abs(sum - 1.0) > kTol)
                throw ModelError("transition row (s=" + std::to_string(s) +
                                 ",a=" + std::to_string(a) + ") sums to " +
                                 detail::fmt_double(sum));
        }
    }
    if (m.initial_dist.size() != S)
        throw ModelError("initial_dist has length " + std::to_string(m.initial_dist.size()) +
                         ", expected " + std::to_string(S));
    double rho_sum = 0.0;
    for (std::size_t s = 0; s < S; ++s) {
        const double p = m.initial_dist[s];
        if (!std::isfinite(p) || p < 0.0)
            throw ModelError("initial_dist entry " + std::to_string(s) +
                             " is negative or not finite");
        rho_sum += p;
    }
    if (std::abs(rho_sum - 1.0) > kTol)
        throw ModelError("initial_dist sums to " + detail::fmt_double(rho_sum));
    if (m.rewards.empty()) throw ModelError("at least one reward signal (the objective) required");
    if (m.reward_bounds.size() != m.rewards.size())
        throw ModelError("reward_bounds has length " + std::to_string(m.reward_bounds.size()) +
                         ", expected " + std::to_string(m.rewards.size()));
    if (m.thresholds.size() != m.num_constraints())
        throw ModelError("thresholds has length " + std::to_string(m.thresholds.size()) +
                         ", expected " + std::to_string(m.num_constraints()));
    for (std::size_t i = 0; i < m.rewards.size(); ++i) {
        const double bound = m.reward_bounds[i];
        if (!std::isfinite(bound) || !(bound > 0.0))
            throw ModelError("reward_bounds[" + std::to_string(i) + "] must be positive");
        if (m.rewards[i].size() != S * A)
            throw ModelError("rewards[" + std::to_string(i) + "] has " +
                             std::to_string(m.rewards[i].size()) + " entries, expected " +
                             std::to_string(S * A));
        for (std::size_t s = 0; s < S; ++s)
            for (std::size_t a = 0; a < A; ++a) {
                const double r = m.reward(i, s, a);
                if (!std::isfinite(r) || std::abs(r) > bound)
                    throw ModelError("reward " + std::to_string(i) + " at (" +
                                     std::to_string(s) + "," + std::to_string(a) +
                                     ") exceeds bound " + detail::fmt_double(bound));
            }
    }
    for (std::size_t i = 0; i < m.thresholds.size(); ++i)
        if (!std::isfinite(m.thresholds[i]))
            throw ModelError("threshold " + std::to_string(i + 1) + " is not finite");
}

inline void check_compatible(const TabularCmdp& m, const SoftmaxPolicy& pi) {
    if (pi.num_states() != m.num_states || pi.num_actions() != m.num_actions)
        throw ModelError("policy dimensions (" + std::to_string(pi.num_states()) + "x" +
                         std::to_string(pi.num_actions()) + ") do not match the model (" +
                         std::to_string(m.num_states) + "x" + std::to_string(m.num_actions) +
                         ")");
}

// ---------------------------------------------------------------------------
// Trajectories and sampling
// ---------------------------------------------------------------------------

/// One step of a trajectory; rewards has one entry per signal.
struct StepView {
    std::size_t state;
    std::size_t action;
    std::span<const double> rewards;
};

/// Truncated trajectory of fixed horizon, stored column-wise.
struct Trajectory {
    std::vector<std::uint32_t> states;
    std::vector<std::uint32_t> actions;
    std::vector<double> rewards;  // horizon x num_signals, row-major
    std::size_t num_signals = 0;

    std::size_t horizon() const noexcept { return states.size(); }
    double reward(std::size_t t, std::size_t i) const noexcept {
        return rewards[t * num_signals + i];
    }
    StepView step(std::size_t t) const {
        return {states[t], actions[t],
                std::span<const double>(rewards.data() + t * num_signals, num_signals)};
    }
    friend bool operator==(const Trajectory&, const Trajectory&) = default;
};

namespace detail {

/// Inverse-CDF draw over a cumulative table; roundoff residual goes to the last index.
inline std::size_t draw_cumulative(std::span<const double> cumulative, double u) noexcept {
    for (std::size_t k = 0; k + 1 < cumulative.size(); ++k)
        if (u < cumulative[k]) return k;
    return cumulative.size() - 1;
}

}  // namespace detail

/**
 * Samples trajectories of a fixed (model, policy) pair.
 *
 * Action and transition distributions are converted to cumulative tables once
 * at construction. Transition rows keep only their support, so sparse models
 * (gridworlds) draw in a handful of comparisons.
 */
class TrajectorySampler {
public:
    TrajectorySampler(const TabularCmdp& model, const SoftmaxPolicy& policy) : model_(&model) {
        check_compatible(model, policy);
        const std::size_t S = model.num_states, A = model.num_actions;

        action_cdf_.resize(S * A);
        for (std::size_t s = 0; s < S; ++s) {
            const Eigen::VectorXd p = policy.action_probs(s);
            double c = 0.0;
            for (std::size_t a = 0; a < A; ++a) {
                c += p[static_cast<Eigen::Index>(a)];
                action_cdf_[s * A + a] = c;
            }
        }

        auto compress = [](std::span<const double> probs, std::vector<std::uint32_t>& idx,
                           std::vector<double>& cdf) {
            double c = 0.0;
            for (std::size_t k = 0; k < probs.size(); ++k) {
                if (probs[k] <= 0.0) continue;
                c += probs[k];
                idx.push_back(static_cast<std::uint32_t>(k));
                cdf.push_back(c);
            }
        };
        compress(model.initial_dist, init_idx_, init_cdf_);
        row_begin_.reserve(S * A + 1);
        row_begin_.push_back(0);
        for (std::size_t sa = 0; sa < S * A; ++sa) {
            compress(std::span<const double>(model.transition.data() + sa * S, S), next_idx_,
                     next_cdf_);
            row_begin_.push_back(next_idx_.size());
        }
    }

    /// Fills `out` with a trajectory of the given horizon.
    void sample(std::size_t horizon, Rng& rng, Trajectory& out) const {
        const TabularCmdp& m = *model_;
        const std::size_t A = m.num_actions;
        const std::size_t ns = m.num_signals();
        out.num_signals = ns;
        out.states.resize(horizon);
        out.actions.resize(horizon);
        out.rewards.resize(horizon * ns);

        std::size_t s = init_idx_[detail::draw_cumulative(init_cdf_, uniform01(rng))];
        for (std::size_t t = 0; t < horizon; ++t) {
            const std::size_t a = detail::draw_cumulative(
                std::span<const double>(action_cdf_.data() + s * A, A), uniform01(rng));
            out.states[t] = static_cast<std::uint32_t>(s);
            out.actions[t] = static_cast<std::uint32_t>(a);
            const std::size_t sa = s * A + a;
            for (std::size_t i = 0; i < ns; ++i) out.rewards[t * ns + i] = m.rewards[i][sa];
            if (t + 1 == horizon) break;
            const std::size_t b = row_begin_[sa], e = row_begin_[sa + 1];
            const std::size_t k = detail::draw_cumulative(
                std::span<const double>(next_cdf_.data() + b, e - b), uniform01(rng));
            s = next_idx_[b + k];
        }
    }

    Trajectory sample(std::size_t horizon, Rng& rng) const {
        Trajectory t;
        sample(horizon, rng, t);
        return t;
    }

private:
    const TabularCmdp* model_;
    std::vector<double> action_cdf_;
    std::vector<std::uint32_t> init_idx_;
    std::vector<double> init_cdf_;
    std::vector<std::size_t> row_begin_;
    std::vector<std::uint32_t> next_idx_;
    std::vector<double> next_cdf_;
};

/// Single trajectory: s0 ~ rho, a_t ~ pi(.|s_t), s_{t+1} ~ P(.|s_t,a_t).
inline Trajectory sample_trajectory(const TabularCmdp& model, const SoftmaxPolicy& policy,
                                    std::size_t horizon, Rng& rng) {
    if (horizon == 0) throw ModelError("horizon must be at least 1");
    return TrajectorySampler(model, policy).sample(horizon, rng);
}

// ---------------------------------------------------------------------------
// Exact oracles
// ---------------------------------------------------------------------------

/// State values V_i(s) and the initial-distribution value V_i(rho).
struct ValueResult {
    Eigen::VectorXd state_values;
    double at_initial = 0.0;
};

namespace detail {

inline void check_table(const TabularCmdp& m, const Eigen::MatrixXd& table) {
    if (table.rows() != static_cast<Eigen::Index>(m.num_states) ||
        table.cols() != static_cast<Eigen::Index>(m.num_actions))
        throw ModelError("policy table dimensions do not match the model");
}

inline void check_signal(const TabularCmdp& m, std::size_t i) {
    if (i >= m.num_signals())
        throw ModelError("signal index " + std::to_string(i) + " out of range (" +
                         std::to_string(m.num_signals()) + " signals)");
}

inline Eigen::VectorXd rho_vector(const TabularCmdp& m) {
    return Eigen::Map<const Eigen::VectorXd>(m.initial_dist.data(),
                                             static_cast<Eigen::Index>(m.num_states));
}

}  // namespace detail

/// State-to-state transition matrix under a stochastic policy table.
inline Eigen::MatrixXd policy_transition(const TabularCmdp& m, const Eigen::MatrixXd& pi) {
    detail::check_table(m, pi);
    const auto S = static_cast<Eigen::Index>(m.num_states);
    Eigen::MatrixXd P = Eigen::MatrixXd::Zero(S, S);
    for (std::size_t s = 0; s < m.num_states; ++s)
        for (std::size_t a = 0; a < m.num_actions; ++a) {
            const double w = pi(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(a));
            if (w == 0.0) continue;
            for (std::size_t n = 0; n < m.num_states; ++n)
                P(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(n)) += w * m.prob(s, a, n);
        }
    return P;
}

/// Expected one-step reward of signal i per state under a policy table.
inline Eigen::VectorXd policy_reward(const TabularCmdp& m, const Eigen::MatrixXd& pi,
                                     std::size_t i) {
    detail::check_signal(m, i);
    Eigen::VectorXd r = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(m.num_states));
    for (std::size_t s = 0; s < m.num_states; ++s)
        for (std::size_t a = 0; a < m.num_actions; ++a)
            r[static_cast<Eigen::Index>(s)] +=
                pi(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(a)) * m.reward(i, s, a);
    return r;
}

/// Solves (I - gamma P_pi) V = r_pi by dense LU.
inline ValueResult exact_values(const TabularCmdp& m, const Eigen::MatrixXd& pi, std::size_t i) {
    const auto S = static_cast<Eigen::Index>(m.num_states);
    const Eigen::MatrixXd lhs =
        Eigen::MatrixXd::Identity(S, S) - m.discount * policy_transition(m, pi);
    ValueResult out;
    out.state_values = lhs.partialPivLu().solve(policy_reward(m, pi, i));
    if (!out.state_values.allFinite()) throw ModelError("exact_values: linear solve failed");
    out.at_initial = detail::rho_vector(m).dot(out.state_values);
    return out;
}

inline ValueResult exact_values(const TabularCmdp& m, const SoftmaxPolicy& pi, std::size_t i) {
    check_compatible(m, pi);
    return exact_values(m, pi.probability_table(), i);
}

/// V_i(rho) for every signal.
inline std::vector<double> exact_signal_values(const TabularCmdp& m, const SoftmaxPolicy& pi) {
    const Eigen::MatrixXd table = pi.probability_table();
    std::vector<double> v(m.num_signals());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = exact_values(m, table, i).at_initial;
    return v;
}

/// Q_i(s,a) = r_i(s,a) + gamma * sum_s' P(s'|s,a) V_i(s').
inline Eigen::MatrixXd exact_q_values(const TabularCmdp& m, const Eigen::MatrixXd& pi,
                                      std::size_t i) {
    const Eigen::VectorXd v = exact_values(m, pi, i).state_values;
    Eigen::MatrixXd q(static_cast<Eigen::Index>(m.num_states),
                      static_cast<Eigen::Index>(m.num_actions));
    for (std::size_t s = 0; s < m.num_states; ++s)
        for (std::size_t a = 0; a < m.num_actions; ++a) {
            double acc = m.reward(i, s, a);
            for (std::size_t n = 0; n < m.num_states; ++n)
                acc += m.discount * m.prob(s, a, n) * v[static_cast<Eigen::Index>(n)];
            q(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(a)) = acc;
        }
    return q;
}

/// Normalized discounted state-action occupancy d_rho(s,a).
inline Eigen::MatrixXd exact_occupancy(const TabularCmdp& m, const Eigen::MatrixXd& pi) {
    const auto S = static_cast<Eigen::Index>(m.num_states);
    const Eigen::MatrixXd lhs =
        Eigen::MatrixXd::Identity(S, S) - m.discount * policy_transition(m, pi).transpose();
    const Eigen::VectorXd ds =
        lhs.partialPivLu().solve((1.0 - m.discount) * detail::rho_vector(m));
    if (!ds.allFinite()) throw ModelError("exact_occupancy: linear solve failed");
    return ds.asDiagonal() * pi;
}

inline Eigen::MatrixXd exact_occupancy(const TabularCmdp& m, const SoftmaxPolicy& pi) {
    check_compatible(m, pi);
    return exact_occupancy(m, pi.probability_table());
}

/**
 * Exact policy gradient of V_i(rho) for the softmax parameterization:
 * (1/(1-gamma)) * sum_{s,a} d(s,a) * grad log pi(a|s) * A_i(s,a).
 */
inline Eigen::VectorXd exact_gradient(const TabularCmdp& m, const SoftmaxPolicy& pi,
                                      std::size_t i) {
    check_compatible(m, pi);
    const Eigen::MatrixXd table = pi.probability_table();
    const Eigen::MatrixXd d = exact_occupancy(m, table);
    const Eigen::MatrixXd q = exact_q_values(m, table, i);
    const auto A = static_cast<Eigen::Index>(m.num_actions);
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(pi.dimension()));
    for (std::size_t s = 0; s < m.num_states; ++s) {
        const auto si = static_cast<Eigen::Index>(s);
        const double v = table.row(si).dot(q.row(si));
        for (std::size_t a = 0; a < m.num_actions; ++a) {
            const auto ai = static_cast<Eigen::Index>(a);
            const double w = d(si, ai) * (q(si, ai) - v);
            if (w == 0.0) continue;
            grad.segment(si * A, A) += w * pi.grad_log_prob(s, a).block;
        }
    }
    return grad / (1.0 - m.discount);
}

/// Expected truncated return sum_{t<H} gamma^t E[r_i(s_t,a_t)]; the mean of the value estimator.
inline double exact_truncated_value(const TabularCmdp& m, const SoftmaxPolicy& pi, std::size_t i,
                                    std::size_t horizon) {
    check_compatible(m, pi);
    const Eigen::MatrixXd table = pi.probability_table();
    const Eigen::MatrixXd Pt = policy_transition(m, table).transpose();
    const Eigen::VectorXd r = policy_reward(m, table, i);
    Eigen::VectorXd mu = detail::rho_vector(m);
    double acc = 0.0, disc = 1.0;
    for (std::size_t t = 0; t < horizon; ++t) {
        acc += disc * mu.dot(r);
        mu = Pt * mu;
        disc *= m.discount;
    }
    return acc;
}

/**
 * Gradient of the truncated return; the mean of the GPOMDP estimator.
 *
 * Finite-horizon policy gradient: sum_{t<H} gamma^t sum_{s,a} mu_t(s) pi(a|s)
 * grad log pi(a|s) Q^{(H-t)}(s,a), with Q^{(k)} the k-step action value.
 */
inline Eigen::VectorXd exact_truncated_gradient(const TabularCmdp& m, const SoftmaxPolicy& pi,
                                                std::size_t i, std::size_t horizon) {
    check_compatible(m, pi);
    detail::check_signal(m, i);
    const auto S = static_cast<Eigen::Index>(m.num_states);
    const auto A = static_cast<Eigen::Index>(m.num_actions);
    const Eigen::MatrixXd table = pi.probability_table();
    const Eigen::MatrixXd Pt = policy_transition(m, table).transpose();

    // q_steps[k] holds Q^{(k)} for k = 1..H.
    std::vector<Eigen::MatrixXd> q_steps(horizon + 1);
    Eigen::VectorXd v = Eigen::VectorXd::Zero(S);
    for (std::size_t k = 1; k <= horizon; ++k) {
        Eigen::MatrixXd q(S, A);
        for (std::size_t s = 0; s < m.num_states; ++s)
            for (std::size_t a = 0; a < m.num_actions; ++a) {
                double acc = m.reward(i, s, a);
                for (std::size_t n = 0; n < m.num_states; ++n)
                    acc += m.discount * m.prob(s, a, n) * v[static_cast<Eigen::Index>(n)];
                q(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(a)) = acc;
            }
        v = (table.array() * q.array()).rowwise().sum();
        q_steps[k] = std::move(q);
    }

    Eigen::VectorXd grad = Eigen::VectorXd::Zero(S * A);
    Eigen::VectorXd mu = detail::rho_vector(m);
    double disc = 1.0;
    for (std::size_t t = 0; t < horizon; ++t) {
        const Eigen::MatrixXd& q = q_steps[horizon - t];
        for (Eigen::Index s = 0; s < S; ++s) {
            if (mu[s] == 0.0) continue;
            const double base = table.row(s).dot(q.row(s));
            for (Eigen::Index a = 0; a < A; ++a)
                grad[s * A + a] += disc * mu[s] * table(s, a) * (q(s, a) - base);
        }
        mu = Pt * mu;
        disc *= m.discount;
    }
    return grad;
}

}  // namespace safecmdp
