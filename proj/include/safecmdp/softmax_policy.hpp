#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>

namespace safecmdp {

/// A vector that is zero outside the parameter block of one state.
struct BlockVector {
    std::size_t state = 0;
    Eigen::VectorXd block;

    Eigen::VectorXd to_dense(std::size_t num_states) const {
        const auto na = static_cast<Eigen::Index>(block.size());
        Eigen::VectorXd out = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(num_states) * na);
        out.segment(static_cast<Eigen::Index>(state) * na, na) = block;
        return out;
    }
};

/// A matrix that is zero outside the diagonal block of one state.
struct BlockMatrix {
    std::size_t state = 0;
    Eigen::MatrixXd block;

    Eigen::MatrixXd to_dense(std::size_t num_states) const {
        const auto na = block.rows();
        const auto dim = static_cast<Eigen::Index>(num_states) * na;
        Eigen::MatrixXd out = Eigen::MatrixXd::Zero(dim, dim);
        const auto off = static_cast<Eigen::Index>(state) * na;
        out.block(off, off, na, na) = block;
        return out;
    }
};

/**
 * Tabular softmax policy pi(a|s) = exp(theta(s,a)) / sum_b exp(theta(s,b)).
 *
 * theta is stored state-major: entry s * num_actions + a. The bounds m_g and
 * m_h on the score and its Hessian are configuration values consumed by the
 * smoothness and error-bound formulas; they default to 1.
 */
class SoftmaxPolicy {
public:
    SoftmaxPolicy(std::size_t num_states, std::size_t num_actions, double m_g = 1.0,
                  double m_h = 1.0)
        : SoftmaxPolicy(num_states, num_actions,
                        Eigen::VectorXd::Zero(static_cast<Eigen::Index>(num_states * num_actions)),
                        m_g, m_h) {}

    SoftmaxPolicy(std::size_t num_states, std::size_t num_actions, Eigen::VectorXd theta,
                  double m_g = 1.0, double m_h = 1.0)
        : num_states_(num_states), num_actions_(num_actions), theta_(std::move(theta)),
          m_g_(m_g), m_h_(m_h) {
        if (num_states == 0 || num_actions == 0)
            throw std::invalid_argument("SoftmaxPolicy: state and action counts must be positive");
        if (static_cast<std::size_t>(theta_.size()) != num_states * num_actions)
            throw std::invalid_argument("SoftmaxPolicy: theta has length " +
                                        std::to_string(theta_.size()) + ", expected " +
                                        std::to_string(num_states * num_actions));
        if (!(m_g > 0.0) || !(m_h > 0.0))
            throw std::invalid_argument("SoftmaxPolicy: m_g and m_h must be positive");
    }

    std::size_t num_states() const noexcept { return num_states_; }
    std::size_t num_actions() const noexcept { return num_actions_; }
    std::size_t dimension() const noexcept { return num_states_ * num_actions_; }
    double m_g() const noexcept { return m_g_; }
    double m_h() const noexcept { return m_h_; }

    const Eigen::VectorXd& theta() const noexcept { return theta_; }

    void set_theta(Eigen::VectorXd theta) {
        if (theta.size() != theta_.size())
            throw std::invalid_argument("SoftmaxPolicy::set_theta: dimension mismatch");
        theta_ = std::move(theta);
    }

    std::size_t index(std::size_t s, std::size_t a) const noexcept { return s * num_actions_ + a; }

    /// Softmax of the s-block of theta, max-subtracted; entries below 1e-300 are flushed.
    Eigen::VectorXd action_probs(std::size_t s) const {
        check_state(s);
        const auto na = static_cast<Eigen::Index>(num_actions_);
        const auto blk = theta_.segment(static_cast<Eigen::Index>(s) * na, na);
        const double mx = blk.maxCoeff();
        Eigen::VectorXd p(na);
        for (Eigen::Index a = 0; a < na; ++a) {
            const double e = std::exp(blk[a] - mx);
            p[a] = e < 1e-300 ? 0.0 : e;
        }
        return p / p.sum();
    }

    /// Probability table, one row per state.
    Eigen::MatrixXd probability_table() const {
        Eigen::MatrixXd table(static_cast<Eigen::Index>(num_states_),
                              static_cast<Eigen::Index>(num_actions_));
        for (std::size_t s = 0; s < num_states_; ++s)
            table.row(static_cast<Eigen::Index>(s)) = action_probs(s).transpose();
        return table;
    }

    double log_prob(std::size_t s, std::size_t a) const {
        check_action(a);
        const auto na = static_cast<Eigen::Index>(num_actions_);
        const auto blk = theta_.segment(static_cast<Eigen::Index>(s) * na, na);
        const double mx = blk.maxCoeff();
        return blk[static_cast<Eigen::Index>(a)] - mx - std::log((blk.array() - mx).exp().sum());
    }

    /// Score: e_a - pi(.|s) on the s-block, zero elsewhere.
    BlockVector grad_log_prob(std::size_t s, std::size_t a) const {
        check_action(a);
        BlockVector g{s, -action_probs(s)};
        g.block[static_cast<Eigen::Index>(a)] += 1.0;
        return g;
    }

    /// Hessian of log pi(a|s): -(diag(pi) - pi pi^T) on the s-block. Does not depend on a.
    BlockMatrix hessian_log_prob(std::size_t s, std::size_t a) const {
        check_action(a);
        const Eigen::VectorXd p = action_probs(s);
        Eigen::MatrixXd h = p * p.transpose();
        h.diagonal() -= p;
        return {s, std::move(h)};
    }

private:
    void check_state(std::size_t s) const {
        if (s >= num_states_)
            throw std::out_of_range("SoftmaxPolicy: state " + std::to_string(s) +
                                    " out of range");
    }
    void check_action(std::size_t a) const {
        if (a >= num_actions_)
            throw std::out_of_range("SoftmaxPolicy: action " + std::to_string(a) +
                                    " out of range");
    }

    std::size_t num_states_;
    std::size_t num_actions_;
    Eigen::VectorXd theta_;
    double m_g_;
    double m_h_;
};

}  // namespace safecmdp
