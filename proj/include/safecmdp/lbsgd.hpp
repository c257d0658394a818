#pragma once

#include "safecmdp/cmdp.hpp"
#include "safecmdp/estimators.hpp"
#include "safecmdp/random.hpp"
#include "safecmdp/softmax_policy.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace safecmdp {

struct RecoveryConfig {
    bool enabled = true;
    double n_multiplier = 2.0;     // batch size growth per recovery, >= 1
    double step_cap_shrink = 0.5;  // new cap = shrink * last accepted stepsize, in (0,1)
    std::size_t max_recoveries = 5;
};

struct LbSgdConfig {
    double eta = 0.01;
    double delta = 0.1;
    std::size_t n = 3000;
    std::size_t horizon = 40;
    std::size_t max_iters = 500;
    double m_g = 1.0;
    double m_h = 1.0;
    RecoveryConfig recovery;
    /// Per-signal smoothness constants M_i replacing the analytic ones (e.g. sampled estimates).
    std::vector<double> smoothness_override;
    unsigned threads = 1;
};

enum class StepEvent { Continued, Break, BudgetExhausted, RecoveryTriggered };

enum class TerminationReason { BreakCondition, IterationBudget, RecoveryBudgetExhausted, InfeasibleEstimate };

constexpr std::string_view to_string(StepEvent e) noexcept {
    switch (e) {
        case StepEvent::Continued: return "continued";
        case StepEvent::Break: return "break";
        case StepEvent::BudgetExhausted: return "budget-exhausted";
        case StepEvent::RecoveryTriggered: return "recovery-triggered";
    }
    return "unknown";
}

constexpr std::string_view to_string(TerminationReason r) noexcept {
    switch (r) {
        case TerminationReason::BreakCondition: return "break";
        case TerminationReason::IterationBudget: return "iteration-budget";
        case TerminationReason::RecoveryBudgetExhausted: return "recovery-budget-exhausted";
        case TerminationReason::InfeasibleEstimate: return "infeasible-estimate";
    }
    return "unknown";
}

/// What happened at one iterate. Undefined quantities are NaN.
struct StepDiagnostics {
    std::vector<double> estimated_values;  // V_hat_i, one per signal
    std::vector<double> alpha_lower;       // one per constraint
    std::vector<double> beta_upper;        // one per constraint
    double local_smoothness = std::numeric_limits<double>::quiet_NaN();
    double stepsize = std::numeric_limits<double>::quiet_NaN();
    double grad_norm = std::numeric_limits<double>::quiet_NaN();
    std::size_t batch_size = 0;
    StepEvent event = StepEvent::Continued;
    std::string note;
};

/// Exact values of an iterate, from the dynamic-programming oracle.
struct OracleRecord {
    std::vector<double> exact_values;  // V_i(rho), one per signal
    bool feasible = true;              // every V_i(rho) >= b_i
};

struct IterateRecord {
    std::size_t t = 0;
    Eigen::VectorXd theta;
    StepDiagnostics diagnostics;
    std::optional<OracleRecord> oracle;
};

struct RunHistory {
    std::vector<IterateRecord> records;
    Eigen::VectorXd theta_out;
    TerminationReason reason = TerminationReason::IterationBudget;
    std::size_t recoveries = 0;
    /// m * T * delta: failure probability budget of the per-event confidence bounds.
    double implied_failure_probability = 0.0;
    /// Whether n >= 8 ln(e^{1/4}/delta), the regime of the gradient tail bound.
    bool gradient_tail_regime = true;
};

class InfeasibleStartError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Confidence bounds, local smoothness, stepsize
// ---------------------------------------------------------------------------

/// alpha_lower = V_hat - b_i - b0 - sigma0 sqrt(ln(2/delta)).
inline double lower_conf_margin(double v_hat, const ErrorBounds& bound, double delta,
                                double threshold) {
    return v_hat - threshold - bound.b0 - bound.sigma0 * std::sqrt(std::log(2.0 / delta));
}

/// beta_upper = |<grad_i, gB/||gB||>| + sigma1 sqrt(ln(e^{1/4}/delta)) + b1.
inline double upper_conf_dirderiv(const Eigen::VectorXd& grad_i,
                                  const Eigen::VectorXd& barrier_grad, const ErrorBounds& bound,
                                  double delta) {
    const double norm = barrier_grad.norm();
    if (!(norm > 0.0))
        throw std::domain_error("upper_conf_dirderiv: barrier gradient has zero norm");
    return std::abs(grad_i.dot(barrier_grad) / norm) +
           bound.sigma1 * std::sqrt(0.25 - std::log(delta)) + bound.b1;
}

namespace detail {
inline void check_bounds_sizes(std::size_t nm, std::span<const double> alpha,
                               std::span<const double> beta) {
    if (alpha.size() != nm || beta.size() != nm)
        throw std::invalid_argument("one alpha and one beta per constraint required");
}
}  // namespace detail

/**
 * M_hat = M_0 + sum_i 10 M_i eta / alpha_i + 8 eta sum_i beta_i^2 / alpha_i^2.
 *
 * `constraint_smoothness` holds M_i for each constraint; the objective's
 * smoothness M_0 stands alone. Throws MarginError for a nonpositive alpha.
 */
inline double local_smoothness(double objective_smoothness,
                               std::span<const double> constraint_smoothness, double eta,
                               std::span<const double> alpha_lower,
                               std::span<const double> beta_upper) {
    detail::check_bounds_sizes(constraint_smoothness.size(), alpha_lower, beta_upper);
    double m = objective_smoothness;
    for (std::size_t i = 0; i < alpha_lower.size(); ++i) {
        const double a = alpha_lower[i];
        if (!(a > 0.0))
            throw MarginError(i + 1, "confidence margin nonpositive for constraint " +
                                         std::to_string(i + 1));
        m += 10.0 * constraint_smoothness[i] * eta / a + 8.0 * eta * beta_upper[i] * beta_upper[i] / (a * a);
    }
    return m;
}

/// Single-M form: every signal shares the smoothness constant M.
inline double local_smoothness(double smoothness, double eta, std::span<const double> alpha_lower,
                               std::span<const double> beta_upper) {
    const std::vector<double> ms(alpha_lower.size(), smoothness);
    return local_smoothness(smoothness, ms, eta, alpha_lower, beta_upper);
}

/**
 * gamma_t = min{ 1/M_hat, min_i alpha_i / (sqrt(M_i alpha_i) + 2|beta_i|) / ||gB|| }.
 *
 * The second term keeps the next iterate where every constraint keeps at
 * least half its margin.
 */
inline double stepsize(std::span<const double> constraint_smoothness, double m_hat,
                       std::span<const double> alpha_lower, std::span<const double> beta_upper,
                       double barrier_grad_norm) {
    detail::check_bounds_sizes(constraint_smoothness.size(), alpha_lower, beta_upper);
    if (!(m_hat > 0.0)) throw std::invalid_argument("stepsize: M_hat must be positive");
    double step = 1.0 / m_hat;
    if (alpha_lower.empty()) return step;
    if (!(barrier_grad_norm > 0.0))
        throw std::domain_error("stepsize: barrier gradient has zero norm");
    double region = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < alpha_lower.size(); ++i) {
        const double a = alpha_lower[i];
        if (!(a > 0.0))
            throw MarginError(i + 1, "confidence margin nonpositive for constraint " +
                                         std::to_string(i + 1));
        region = std::min(region, a / (std::sqrt(constraint_smoothness[i] * a) + 2.0 * std::abs(beta_upper[i])));
    }
    return std::min(step, region / barrier_grad_norm);
}

inline double stepsize(double smoothness, double m_hat, std::span<const double> alpha_lower,
                       std::span<const double> beta_upper, double barrier_grad_norm) {
    const std::vector<double> ms(alpha_lower.size(), smoothness);
    return stepsize(ms, m_hat, alpha_lower, beta_upper, barrier_grad_norm);
}

// ---------------------------------------------------------------------------
// Barrier ascent engine shared by LB-SGD and the fixed-step baseline
// ---------------------------------------------------------------------------

/// Settings common to every barrier-ascent variant.
struct AscentSettings {
    double eta = 0.01;
    double delta = 0.1;
    std::size_t n = 3000;
    std::size_t horizon = 40;
    std::size_t max_iters = 500;
    RecoveryConfig recovery;
    std::vector<double> smoothness;  // M_i per signal
    unsigned threads = 1;

    void validate(const TabularCmdp& model) const {
        if (!(eta > 0.0)) throw std::invalid_argument("eta must be positive");
        if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("delta must be in (0,1)");
        if (n == 0) throw std::invalid_argument("batch size n must be at least 1");
        if (horizon == 0) throw std::invalid_argument("horizon must be at least 1");
        if (recovery.n_multiplier < 1.0)
            throw std::invalid_argument("recovery n_multiplier must be >= 1");
        if (!(recovery.step_cap_shrink > 0.0 && recovery.step_cap_shrink < 1.0))
            throw std::invalid_argument("recovery step_cap_shrink must be in (0,1)");
        if (smoothness.size() != model.num_signals())
            throw std::invalid_argument("one smoothness constant per signal required");
    }
};

/// Adaptive, estimate-aware stepsize with the eta/2 break condition.
struct AdaptiveStep {
    static constexpr bool kBreakCondition = true;
    static constexpr bool kNeedsPositiveLowerBounds = true;
};

/// Constant stepsize, no break condition.
struct FixedStep {
    static constexpr bool kBreakCondition = false;
    static constexpr bool kNeedsPositiveLowerBounds = false;
    double value = 1.0;
};

template <class Rule>
concept StepRule = requires {
    { Rule::kBreakCondition } -> std::convertible_to<bool>;
    { Rule::kNeedsPositiveLowerBounds } -> std::convertible_to<bool>;
};

struct StepResult {
    std::optional<SoftmaxPolicy> next;  // set only when a step was taken
    StepDiagnostics diagnostics;
    Eigen::VectorXd barrier_gradient;   // empty when an estimated margin was nonpositive
};

/**
 * One barrier-ascent iteration at `policy`: fresh batch, estimates, confidence
 * bounds, then break / recovery signal / update theta + gamma_t * gB.
 * `step_cap` bounds gamma_t after recoveries.
 */
template <StepRule Rule>
StepResult barrier_step(const TabularCmdp& model, const SoftmaxPolicy& policy,
                        const AscentSettings& settings, const Rule& rule, std::size_t n,
                        double step_cap, Rng& rng) {
    const std::size_t nm = model.num_constraints();
    const TrajectoryBatch batch = sample_batch(model, policy, n, settings.horizon, rng, settings.threads);
    const EstimateBundle bundle = estimate_bundle(batch, policy, model);

    StepResult out;
    StepDiagnostics& d = out.diagnostics;
    d.estimated_values = bundle.values;
    d.batch_size = n;
    d.alpha_lower.resize(nm);
    d.beta_upper.assign(nm, std::numeric_limits<double>::quiet_NaN());
    bool lower_ok = true;
    for (std::size_t i = 0; i < nm; ++i) {
        d.alpha_lower[i] = lower_conf_margin(bundle.values[i + 1], bundle.bounds[i + 1],
                                             settings.delta, model.thresholds[i]);
        lower_ok = lower_ok && d.alpha_lower[i] > 0.0;
    }

    try {
        out.barrier_gradient = estimate_barrier_gradient(bundle, settings.eta, model.thresholds);
    } catch (const MarginError& e) {
        d.event = StepEvent::RecoveryTriggered;
        d.note = e.what();
        return out;
    }
    const Eigen::VectorXd& gb = out.barrier_gradient;
    d.grad_norm = gb.norm();
    if (d.grad_norm > 0.0)
        for (std::size_t i = 0; i < nm; ++i)
            d.beta_upper[i] = upper_conf_dirderiv(bundle.gradients[i + 1], gb, bundle.bounds[i + 1],
                                                  settings.delta);

    if constexpr (Rule::kBreakCondition) {
        if (d.grad_norm <= settings.eta / 2.0) {
            d.event = StepEvent::Break;
            return out;
        }
    }

    const std::span<const double> m_constraints(settings.smoothness.data() + 1, nm);
    if (lower_ok)
        d.local_smoothness = local_smoothness(settings.smoothness[0], m_constraints, settings.eta,
                                              d.alpha_lower, d.beta_upper);

    double step;
    if constexpr (Rule::kNeedsPositiveLowerBounds) {
        if (!lower_ok) {
            d.event = StepEvent::RecoveryTriggered;
            d.note = "confidence lower bound on a constraint margin is nonpositive";
            return out;
        }
        step = stepsize(m_constraints, d.local_smoothness, d.alpha_lower, d.beta_upper, d.grad_norm);
    } else {
        step = rule.value;
    }
    d.stepsize = std::min(step, step_cap);
    SoftmaxPolicy next = policy;
    next.set_theta(policy.theta() + d.stepsize * gb);
    out.next = std::move(next);
    return out;
}

inline OracleRecord oracle_record(const TabularCmdp& model, const SoftmaxPolicy& policy) {
    OracleRecord r;
    r.exact_values = exact_signal_values(model, policy);
    for (std::size_t i = 0; i < model.num_constraints(); ++i)
        r.feasible = r.feasible && r.exact_values[i + 1] >= model.thresholds[i];
    return r;
}

/**
 * Runs up to max_iters barrier-ascent iterations from `initial`.
 *
 * Records one entry per visited iterate (the final one tagged
 * budget-exhausted). On a recovery signal the iterate is reverted to its
 * predecessor, the batch size is multiplied and the stepsize cap shrinks;
 * after max_recoveries such events the run stops. A recovery signal before
 * any step was accepted means the start is not feasible by estimate.
 */
template <StepRule Rule>
RunHistory barrier_ascent_run(const TabularCmdp& model, const SoftmaxPolicy& initial,
                              const AscentSettings& settings, const Rule& rule, Rng& rng,
                              bool oracle_logging) {
    validate(model);
    check_compatible(model, initial);
    settings.validate(model);

    RunHistory h;
    h.implied_failure_probability =
        static_cast<double>(model.num_constraints() * settings.max_iters) * settings.delta;
    h.gradient_tail_regime =
        static_cast<double>(settings.n) >= 8.0 * (0.25 - std::log(settings.delta));

    auto record = [&](std::size_t t, const SoftmaxPolicy& pi, StepDiagnostics diag) {
        IterateRecord r{t, pi.theta(), std::move(diag), std::nullopt};
        if (oracle_logging) r.oracle = oracle_record(model, pi);
        h.records.push_back(std::move(r));
    };

    SoftmaxPolicy current = initial;
    std::optional<SoftmaxPolicy> previous;
    bool accepted_any = false;
    double last_step = std::numeric_limits<double>::quiet_NaN();
    double cap = std::numeric_limits<double>::infinity();
    std::size_t n = settings.n;

    for (std::size_t t = 0; t < settings.max_iters; ++t) {
        StepResult res = barrier_step(model, current, settings, rule, n, cap, rng);
        const StepEvent event = res.diagnostics.event;
        if (event == StepEvent::RecoveryTriggered && !accepted_any && h.recoveries == 0)
            throw InfeasibleStartError("initial policy is not strictly feasible by estimate: " +
                                       res.diagnostics.note);
        record(t, current, std::move(res.diagnostics));

        if (event == StepEvent::Break) {
            h.reason = TerminationReason::BreakCondition;
            h.theta_out = current.theta();
            return h;
        }
        if (event == StepEvent::RecoveryTriggered) {
            if (previous) {
                current = *previous;
                previous.reset();
            }
            if (!settings.recovery.enabled || h.recoveries >= settings.recovery.max_recoveries) {
                h.reason = settings.recovery.enabled ? TerminationReason::RecoveryBudgetExhausted
                                                     : TerminationReason::InfeasibleEstimate;
                h.theta_out = current.theta();
                return h;
            }
            ++h.recoveries;
            n = static_cast<std::size_t>(
                std::ceil(static_cast<double>(n) * settings.recovery.n_multiplier));
            if (std::isfinite(last_step))
                cap = std::min(cap, settings.recovery.step_cap_shrink * last_step);
            continue;
        }
        previous = std::move(current);
        current = std::move(*res.next);
        last_step = h.records.back().diagnostics.stepsize;
        accepted_any = true;
    }

    StepDiagnostics final_diag;
    final_diag.event = StepEvent::BudgetExhausted;
    final_diag.batch_size = n;
    record(settings.max_iters, current, std::move(final_diag));
    h.reason = TerminationReason::IterationBudget;
    h.theta_out = current.theta();
    return h;
}

/// Per-signal smoothness M_i, analytic unless overridden.
inline std::vector<double> signal_smoothness(const TabularCmdp& model, double m_g, double m_h,
                                             const std::vector<double>& override_values = {}) {
    if (!override_values.empty()) {
        if (override_values.size() != model.num_signals())
            throw std::invalid_argument("smoothness override needs one value per signal");
        return override_values;
    }
    std::vector<double> ms(model.num_signals());
    for (std::size_t i = 0; i < ms.size(); ++i)
        ms[i] = lipschitz_and_smoothness(m_g, m_h, model.discount, model.reward_bounds[i]).smoothness;
    return ms;
}

inline AscentSettings ascent_settings(const TabularCmdp& model, const LbSgdConfig& c) {
    AscentSettings s;
    s.eta = c.eta;
    s.delta = c.delta;
    s.n = c.n;
    s.horizon = c.horizon;
    s.max_iters = c.max_iters;
    s.recovery = c.recovery;
    s.smoothness = signal_smoothness(model, c.m_g, c.m_h, c.smoothness_override);
    s.threads = c.threads;
    return s;
}

inline SoftmaxPolicy with_bounds(const SoftmaxPolicy& p, double m_g, double m_h) {
    return SoftmaxPolicy(p.num_states(), p.num_actions(), p.theta(), m_g, m_h);
}

/// One LB-SGD step; `next` is empty on break or recovery signal.
inline StepResult lbsgd_step(const TabularCmdp& model, const SoftmaxPolicy& policy,
                             const LbSgdConfig& config, Rng& rng) {
    check_compatible(model, policy);
    const AscentSettings s = ascent_settings(model, config);
    s.validate(model);
    return barrier_step(model, with_bounds(policy, config.m_g, config.m_h), s, AdaptiveStep{},
                        config.n, std::numeric_limits<double>::infinity(), rng);
}

/// LB-SGD. theta_out is theta_break when the break condition fires, else the last iterate.
inline RunHistory lbsgd_run(const TabularCmdp& model, const SoftmaxPolicy& initial,
                            const LbSgdConfig& config, Rng& rng, bool oracle_logging) {
    return barrier_ascent_run(model, with_bounds(initial, config.m_g, config.m_h),
                              ascent_settings(model, config), AdaptiveStep{}, rng, oracle_logging);
}

}  // namespace safecmdp
