#pragma once

#include "safecmdp/cmdp.hpp"
#include "safecmdp/random.hpp"
#include "safecmdp/softmax_policy.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace safecmdp {

/// n truncated trajectories sharing one horizon.
struct TrajectoryBatch {
    std::vector<Trajectory> trajectories;
    std::size_t horizon = 0;

    std::size_t size() const noexcept { return trajectories.size(); }
    friend bool operator==(const TrajectoryBatch&, const TrajectoryBatch&) = default;
};

/// Trajectories per substream; a batch is identical for any thread count.
inline constexpr std::size_t kSamplingChunk = 256;

/**
 * Samples n trajectories under (model, policy).
 *
 * One 64-bit key is drawn from `rng`; chunk c of the batch uses
 * substream(key, c). With threads > 1 the chunks are spread over worker
 * threads, and the result is unchanged.
 */
inline TrajectoryBatch sample_batch(const TabularCmdp& model, const SoftmaxPolicy& policy,
                                    std::size_t n, std::size_t horizon, Rng& rng,
                                    unsigned threads = 1) {
    if (n == 0) throw std::invalid_argument("sample_batch: batch size must be at least 1");
    if (horizon == 0) throw std::invalid_argument("sample_batch: horizon must be at least 1");
    const TrajectorySampler sampler(model, policy);
    const std::uint64_t key = rng();
    TrajectoryBatch batch;
    batch.horizon = horizon;
    batch.trajectories.resize(n);
    const std::size_t chunks = (n + kSamplingChunk - 1) / kSamplingChunk;

    auto run_chunk = [&](std::size_t c) {
        Rng sub = substream(key, c);
        const std::size_t end = std::min(n, (c + 1) * kSamplingChunk);
        for (std::size_t j = c * kSamplingChunk; j < end; ++j)
            sampler.sample(horizon, sub, batch.trajectories[j]);
    };

    threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(chunks)));
    if (threads == 1) {
        for (std::size_t c = 0; c < chunks; ++c) run_chunk(c);
    } else {
        std::vector<std::jthread> workers;
        for (unsigned w = 0; w < threads; ++w)
            workers.emplace_back([&, w] {
                for (std::size_t c = w; c < chunks; c += threads) run_chunk(c);
            });
    }
    return batch;
}

// ---------------------------------------------------------------------------
// Error-bound constants
// ---------------------------------------------------------------------------

/// Bias (b0, b1) and sub-Gaussian scales (sigma0, sigma1) of the estimators.
struct ErrorBounds {
    double b0 = 0.0;
    double b1 = 0.0;
    double sigma0 = 0.0;
    double sigma1 = 0.0;
};

/**
 * Bias and deviation constants for batch size n and horizon H, scaled by the
 * signal's reward bound:
 *   b0 = R g^H / (1-g)                 b1 = R m_g g^H / (1-g) * sqrt(1/(1-g) + H)
 *   sigma0 = R sqrt(2) / (sqrt(n)(1-g))  sigma1 = R 2 sqrt(2) m_g / (sqrt(n)(1-g)^{3/2})
 */
inline ErrorBounds error_bounds(std::size_t n, std::size_t horizon, double gamma, double m_g,
                                double reward_bound = 1.0) {
    if (n == 0 || horizon == 0)
        throw std::invalid_argument("error_bounds: n and H must be at least 1");
    const double q = 1.0 - gamma;
    const double gh = std::pow(gamma, static_cast<double>(horizon));
    const double rn = std::sqrt(static_cast<double>(n));
    ErrorBounds e;
    e.b0 = reward_bound * gh / q;
    e.b1 = reward_bound * m_g * gh / q * std::sqrt(1.0 / q + static_cast<double>(horizon));
    e.sigma0 = reward_bound * std::sqrt(2.0) / (rn * q);
    e.sigma1 = reward_bound * 2.0 * std::sqrt(2.0) * m_g / (rn * std::pow(q, 1.5));
    return e;
}

struct SmoothnessConstants {
    double lipschitz = 0.0;   // L = R m_g / (1-g)^2
    double smoothness = 0.0;  // M = R (m_g^2 + m_h) / (1-g)^2
};

inline SmoothnessConstants lipschitz_and_smoothness(double m_g, double m_h, double gamma,
                                                    double reward_bound = 1.0) {
    if (!(gamma > 0.0 && gamma < 1.0))
        throw std::invalid_argument("lipschitz_and_smoothness: discount out of (0,1)");
    const double q2 = (1.0 - gamma) * (1.0 - gamma);
    return {reward_bound * m_g / q2, reward_bound * (m_g * m_g + m_h) / q2};
}

/// Upper limits on the four constants; unset caps are unconstrained.
struct SampleCaps {
    double sigma0 = std::numeric_limits<double>::infinity();
    double sigma1 = std::numeric_limits<double>::infinity();
    double b0 = std::numeric_limits<double>::infinity();
    double b1 = std::numeric_limits<double>::infinity();
};

struct SampleSize {
    std::size_t n = 1;
    std::size_t horizon = 1;
};

/**
 * Smallest (n, H) whose error_bounds meet every cap.
 *
 * n inverts the sigma formulas in closed form and is then corrected by +-1 for
 * rounding. H is found by scanning upward from 1; b1 is decreasing in H for
 * every discount because g^2 (1/(1-g) + H + 1) < 1/(1-g) + H, so the first H
 * that satisfies both bias caps is the answer.
 */
inline SampleSize required_sample_size(const SampleCaps& caps, double gamma, double m_g,
                                       double reward_bound = 1.0) {
    if (!(caps.sigma0 > 0.0 && caps.sigma1 > 0.0 && caps.b0 > 0.0 && caps.b1 > 0.0))
        throw std::invalid_argument("required_sample_size: caps must be positive");
    if (!(gamma > 0.0 && gamma < 1.0))
        throw std::invalid_argument("required_sample_size: discount out of (0,1)");

    const double q = 1.0 - gamma;
    const double n0 = reward_bound * std::sqrt(2.0) / (q * caps.sigma0);
    const double n1 = reward_bound * 2.0 * std::sqrt(2.0) * m_g / (std::pow(q, 1.5) * caps.sigma1);
    const double target = std::max(n0 * n0, n1 * n1);
    constexpr double kMaxN = 4.0e18;
    if (!(target < kMaxN))
        throw std::overflow_error("required_sample_size: sigma caps need n >= " +
                                  detail::fmt_double(target) + ", beyond representable range");

    auto sigma_ok = [&](std::size_t n) {
        const ErrorBounds e = error_bounds(n, 1, gamma, m_g, reward_bound);
        return e.sigma0 <= caps.sigma0 && e.sigma1 <= caps.sigma1;
    };
    SampleSize out;
    out.n = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(target)));
    while (out.n > 1 && sigma_ok(out.n - 1)) --out.n;
    while (!sigma_ok(out.n)) ++out.n;

    constexpr std::size_t kMaxHorizon = 10'000'000;
    for (std::size_t h = 1; h <= kMaxHorizon; ++h) {
        const ErrorBounds e = error_bounds(1, h, gamma, m_g, reward_bound);
        if (e.b0 <= caps.b0 && e.b1 <= caps.b1) {
            out.horizon = h;
            return out;
        }
    }
    throw std::overflow_error("required_sample_size: bias caps unreachable within H <= 1e7");
}

// ---------------------------------------------------------------------------
// Estimators
// ---------------------------------------------------------------------------

namespace detail {

inline void check_batch(const TrajectoryBatch& batch) {
    if (batch.trajectories.empty()) throw std::invalid_argument("empty trajectory batch");
}

inline void check_batch_signal(const TrajectoryBatch& batch, std::size_t i) {
    check_batch(batch);
    if (i >= batch.trajectories.front().num_signals)
        throw std::out_of_range("signal index " + std::to_string(i) + " out of range");
}

/// Discount powers g^0..g^{H-1} built by repeated multiplication.
inline std::vector<double> discount_powers(double gamma, std::size_t horizon) {
    std::vector<double> p(horizon);
    double d = 1.0;
    for (std::size_t t = 0; t < horizon; ++t) {
        p[t] = d;
        d *= gamma;
    }
    return p;
}

/// Discounted reward-to-go G_t = sum_{t' >= t} g^{t'} r_i(t') of one trajectory.
inline void discounted_tails(const Trajectory& tr, std::size_t i, const std::vector<double>& powers,
                             std::vector<double>& tails) {
    const std::size_t H = tr.horizon();
    tails.resize(H);
    double acc = 0.0;
    for (std::size_t t = H; t-- > 0;) {
        acc += powers[t] * tr.reward(t, i);
        tails[t] = acc;
    }
}

}  // namespace detail

/// V_hat_i = (1/n) sum_j sum_{t<H} g^t r_i(s_t^j, a_t^j).
inline double estimate_value(const TrajectoryBatch& batch, std::size_t i, double gamma) {
    detail::check_batch_signal(batch, i);
    double total = 0.0;
    for (const Trajectory& tr : batch.trajectories) {
        double disc = 1.0, acc = 0.0;
        for (std::size_t t = 0; t < tr.horizon(); ++t) {
            acc += disc * tr.reward(t, i);
            disc *= gamma;
        }
        total += acc;
    }
    return total / static_cast<double>(batch.size());
}

namespace detail {

/**
 * GPOMDP for every signal in one pass.
 *
 * sum_t g^t r_t sum_{t'<=t} score_{t'} is regrouped as sum_{t'} score_{t'} G_{t'}
 * with G the discounted reward-to-go. The softmax score is e_a - pi(.|s), so
 * the per-step work is two scalar accumulations: hits(s,a) += G and
 * visits(s) += G; the gradient is hits(s,a) - pi(a|s) visits(s).
 */
inline std::vector<Eigen::VectorXd> gpomdp_all(const TrajectoryBatch& batch,
                                               const SoftmaxPolicy& policy, double gamma,
                                               std::size_t first, std::size_t last) {
    const std::size_t S = policy.num_states(), A = policy.num_actions();
    const Eigen::MatrixXd table = policy.probability_table();
    std::vector<Eigen::VectorXd> hits(last - first, Eigen::VectorXd::Zero(static_cast<Eigen::Index>(S * A)));
    std::vector<Eigen::VectorXd> visits(last - first, Eigen::VectorXd::Zero(static_cast<Eigen::Index>(S)));
    const std::vector<double> powers = discount_powers(gamma, batch.horizon);
    std::vector<double> tails;
    for (const Trajectory& tr : batch.trajectories) {
        for (std::size_t i = first; i < last; ++i) {
            discounted_tails(tr, i, powers, tails);
            Eigen::VectorXd& h = hits[i - first];
            Eigen::VectorXd& v = visits[i - first];
            for (std::size_t t = 0; t < tr.horizon(); ++t) {
                const double g = tails[t];
                if (g == 0.0) continue;
                const std::size_t s = tr.states[t];
                if (s >= S || tr.actions[t] >= A)
                    throw std::out_of_range("trajectory indices exceed policy dimensions");
                h[static_cast<Eigen::Index>(s * A + tr.actions[t])] += g;
                v[static_cast<Eigen::Index>(s)] += g;
            }
        }
    }
    const double inv_n = 1.0 / static_cast<double>(batch.size());
    std::vector<Eigen::VectorXd> grads(last - first);
    for (std::size_t k = 0; k < grads.size(); ++k) {
        Eigen::VectorXd g = hits[k];
        for (std::size_t s = 0; s < S; ++s)
            for (std::size_t a = 0; a < A; ++a)
                g[static_cast<Eigen::Index>(s * A + a)] -=
                    table(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(a)) *
                    visits[k][static_cast<Eigen::Index>(s)];
        grads[k] = g * inv_n;
    }
    return grads;
}

}  // namespace detail

/// GPOMDP estimate of grad V_i; the batch must have been sampled under `policy`.
inline Eigen::VectorXd estimate_gradient_gpomdp(const TrajectoryBatch& batch,
                                                const SoftmaxPolicy& policy, std::size_t i,
                                                double gamma) {
    detail::check_batch_signal(batch, i);
    return detail::gpomdp_all(batch, policy, gamma, i, i + 1).front();
}

/// Value and gradient estimates for every signal, with their error bounds.
struct EstimateBundle {
    std::vector<double> values;
    std::vector<Eigen::VectorXd> gradients;
    std::vector<ErrorBounds> bounds;
    std::size_t n = 0;
    std::size_t horizon = 0;

    std::size_t num_signals() const noexcept { return values.size(); }
};

inline EstimateBundle estimate_bundle(const TrajectoryBatch& batch, const SoftmaxPolicy& policy,
                                      const TabularCmdp& model) {
    detail::check_batch(batch);
    check_compatible(model, policy);
    const std::size_t ns = model.num_signals();
    EstimateBundle b;
    b.n = batch.size();
    b.horizon = batch.horizon;
    b.values.resize(ns);
    for (std::size_t i = 0; i < ns; ++i) b.values[i] = estimate_value(batch, i, model.discount);
    b.gradients = detail::gpomdp_all(batch, policy, model.discount, 0, ns);
    for (std::size_t i = 0; i < ns; ++i)
        b.bounds.push_back(error_bounds(b.n, b.horizon, model.discount, policy.m_g(),
                                        model.reward_bounds[i]));
    return b;
}

/// Raised when an estimated constraint margin is not positive; carries the 1-based constraint.
class MarginError : public std::runtime_error {
public:
    explicit MarginError(std::size_t constraint, const std::string& what)
        : std::runtime_error(what), constraint_(constraint) {}
    std::size_t constraint() const noexcept { return constraint_; }

private:
    std::size_t constraint_;
};

/// grad_hat B = grad_hat V_0 + eta * sum_i grad_hat V_i / (V_hat_i - b_i).
inline Eigen::VectorXd estimate_barrier_gradient(const EstimateBundle& bundle, double eta,
                                                 const std::vector<double>& thresholds) {
    if (bundle.num_signals() != thresholds.size() + 1)
        throw std::invalid_argument("estimate_barrier_gradient: expected " +
                                    std::to_string(bundle.num_signals() - 1) + " thresholds");
    if (!(eta > 0.0)) throw std::invalid_argument("estimate_barrier_gradient: eta must be positive");
    Eigen::VectorXd g = bundle.gradients[0];
    for (std::size_t i = 1; i < bundle.num_signals(); ++i) {
        const double margin = bundle.values[i] - thresholds[i - 1];
        if (!(margin > 0.0))
            throw MarginError(i, "estimated margin nonpositive for constraint " +
                                     std::to_string(i) + ": " + detail::fmt_double(margin));
        g += (eta / margin) * bundle.gradients[i];
    }
    return g;
}

/**
 * Monte-Carlo Hessian of V_i:
 * (1/n) sum_j sum_{t<H} g^t r_t [ sum_{k<=t} hess log pi_k + S_t S_t^T ],
 * with S_t the running score sum.
 *
 * Regrouped by reward-to-go G_k: the Hessian part is sum_k G_k hess_k, and
 * S_t S_t^T telescopes so the outer part is
 * sum_k G_k (g_k g_k^T + g_k S_{k-1}^T + S_{k-1} g_k^T). Only blocks of states
 * visited so far in the trajectory are touched.
 */
inline Eigen::MatrixXd estimate_value_hessian(const TrajectoryBatch& batch,
                                              const SoftmaxPolicy& policy, std::size_t i,
                                              double gamma) {
    detail::check_batch_signal(batch, i);
    const std::size_t S = policy.num_states(), A = policy.num_actions();
    const auto Ai = static_cast<Eigen::Index>(A);
    const auto dim = static_cast<Eigen::Index>(S * A);
    const Eigen::MatrixXd table = policy.probability_table();

    Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(dim, dim);
    Eigen::VectorXd visit_weight = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(S));
    Eigen::VectorXd score_sum = Eigen::VectorXd::Zero(dim);
    std::vector<char> touched(S, 0);
    std::vector<std::size_t> support;
    const std::vector<double> powers = detail::discount_powers(gamma, batch.horizon);
    std::vector<double> tails;
    Eigen::VectorXd g(Ai);

    for (const Trajectory& tr : batch.trajectories) {
        detail::discounted_tails(tr, i, powers, tails);
        for (std::size_t t = 0; t < tr.horizon(); ++t) {
            const std::size_t s = tr.states[t];
            const auto si = static_cast<Eigen::Index>(s);
            g = -table.row(si).transpose();
            g[static_cast<Eigen::Index>(tr.actions[t])] += 1.0;
            const double w = tails[t];
            if (w != 0.0) {
                visit_weight[si] += w;
                // g_k S_{k-1}^T + S_{k-1} g_k^T over visited blocks.
                for (std::size_t u : support) {
                    const auto ui = static_cast<Eigen::Index>(u);
                    const Eigen::MatrixXd cross =
                        w * g * score_sum.segment(ui * Ai, Ai).transpose();
                    acc.block(si * Ai, ui * Ai, Ai, Ai) += cross;
                    acc.block(ui * Ai, si * Ai, Ai, Ai) += cross.transpose();
                }
                acc.block(si * Ai, si * Ai, Ai, Ai) += w * g * g.transpose();
            }
            score_sum.segment(si * Ai, Ai) += g;
            if (!touched[s]) {
                touched[s] = 1;
                support.push_back(s);
            }
        }
        for (std::size_t u : support) {
            touched[u] = 0;
            score_sum.segment(static_cast<Eigen::Index>(u) * Ai, Ai).setZero();
        }
        support.clear();
    }
    for (std::size_t s = 0; s < S; ++s) {
        const auto si = static_cast<Eigen::Index>(s);
        if (visit_weight[si] == 0.0) continue;
        const Eigen::VectorXd p = table.row(si).transpose();
        Eigen::MatrixXd h = p * p.transpose();
        h.diagonal() -= p;
        acc.block(si * Ai, si * Ai, Ai, Ai) += visit_weight[si] * h;
    }
    return acc / static_cast<double>(batch.size());
}

/**
 * Operator norm of a symmetric matrix by power iteration from a fixed start
 * vector. Stops when successive estimates of ||A v|| agree to `rel_tol`.
 */
inline double spectral_norm(const Eigen::MatrixXd& a, double rel_tol = 1e-8,
                            std::size_t max_iters = 10'000) {
    if (a.rows() != a.cols()) throw std::invalid_argument("spectral_norm: matrix must be square");
    if (a.size() == 0 || a.cwiseAbs().maxCoeff() == 0.0) return 0.0;
    Rng rng(0x5eedULL);
    Eigen::VectorXd v(a.rows());
    for (Eigen::Index k = 0; k < v.size(); ++k) v[k] = uniform01(rng) + 0.5;
    v.normalize();
    double prev = 0.0;
    for (std::size_t it = 0; it < max_iters; ++it) {
        Eigen::VectorXd w = a * v;
        const double norm = w.norm();
        if (norm == 0.0) return 0.0;
        if (it > 0 && std::abs(norm - prev) <= rel_tol * norm) return norm;
        prev = norm;
        v = w / norm;
    }
    throw std::runtime_error("spectral_norm: power iteration did not converge in " +
                             std::to_string(max_iters) + " iterations");
}

/// Smoothness estimate of V_i: operator norm of the Monte-Carlo Hessian.
inline double estimate_smoothness(const TrajectoryBatch& batch, const SoftmaxPolicy& policy,
                                  std::size_t i, double gamma) {
    return spectral_norm(estimate_value_hessian(batch, policy, i, gamma));
}

}  // namespace safecmdp
