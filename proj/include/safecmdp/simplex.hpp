#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <string_view>
#include <vector>

namespace safecmdp {

/// maximize c^T x  subject to  a x = b, x >= 0.
struct LinearProgram {
    Eigen::MatrixXd a;
    Eigen::VectorXd b;
    Eigen::VectorXd c;
};

enum class LpStatus { Optimal, Infeasible, Unbounded };

constexpr std::string_view to_string(LpStatus s) noexcept {
    switch (s) {
        case LpStatus::Optimal: return "optimal";
        case LpStatus::Infeasible: return "infeasible";
        case LpStatus::Unbounded: return "unbounded";
    }
    return "unknown";
}

struct LpResult {
    LpStatus status = LpStatus::Infeasible;
    Eigen::VectorXd x;
    double objective = std::numeric_limits<double>::quiet_NaN();
    std::vector<std::size_t> basis;  // basic column per remaining row
    std::size_t pivots = 0;
};

struct SimplexOptions {
    double pivot_tol = 1e-9;        // relative to the largest entry of the entering column
    double cost_tol = 1e-10;        // reduced-cost optimality tolerance
    double feasibility_tol = 1e-8;  // phase-one residual accepted as feasible
    /// Consecutive degenerate pivots after which pricing switches from largest
    /// reduced cost to Bland's rule; 0 means Bland's rule throughout.
    std::size_t bland_after = 50;
    std::size_t max_pivots = 100000;
};

namespace detail {

/**
 * Dense simplex state. The basis matrix is refactorized from the original
 * columns at every iteration, so basic values carry no accumulated drift;
 * the gridworld occupancy LP is degenerate enough that incremental tableau
 * updates lose several digits.
 */
class DenseSimplex {
public:
    DenseSimplex(Eigen::MatrixXd a, Eigen::VectorXd b, std::vector<std::size_t> basis,
                 const SimplexOptions& opt)
        : a_(std::move(a)), b_(std::move(b)), basis_(std::move(basis)), opt_(opt) {
        refactor();
    }

    const std::vector<std::size_t>& basis() const { return basis_; }
    const Eigen::VectorXd& basic_values() const { return xb_; }
    Eigen::Index rows() const { return a_.rows(); }
    std::size_t pivots() const { return pivots_; }

    /// Primal simplex over columns [0, active). Returns false when unbounded.
    bool optimize(const Eigen::VectorXd& cost, Eigen::Index active) {
        const Eigen::Index m = rows();
        for (;;) {
            Eigen::VectorXd cb(m);
            for (Eigen::Index r = 0; r < m; ++r) cb[r] = cost[col(r)];
            const Eigen::VectorXd y = lu_.transpose().solve(cb);

            std::vector<char> in_basis(static_cast<std::size_t>(a_.cols()), 0);
            for (std::size_t k : basis_) in_basis[k] = 1;
            const bool bland = degenerate_run_ >= opt_.bland_after;
            Eigen::Index enter = -1;
            double best_rc = opt_.cost_tol;
            for (Eigen::Index j = 0; j < active; ++j) {
                if (in_basis[static_cast<std::size_t>(j)]) continue;
                const double rc = cost[j] - y.dot(a_.col(j));
                if (rc > best_rc) {
                    enter = j;
                    if (bland) break;
                    best_rc = rc;
                }
            }
            if (enter < 0) return true;

            const Eigen::VectorXd d = lu_.solve(a_.col(enter));
            const double floor = opt_.pivot_tol * std::max(1.0, d.cwiseAbs().maxCoeff());
            Eigen::Index leave = -1;
            double best = std::numeric_limits<double>::infinity();
            for (Eigen::Index r = 0; r < m; ++r) {
                if (d[r] <= floor) continue;
                const double ratio = std::max(xb_[r], 0.0) / d[r];
                const double tie = 1e-12 * std::max(1.0, leave < 0 ? 0.0 : best);
                if (leave < 0 || ratio < best - tie ||
                    (ratio <= best + tie && basis_[static_cast<std::size_t>(r)] <
                                                basis_[static_cast<std::size_t>(leave)])) {
                    best = leave < 0 ? ratio : std::min(best, ratio);
                    leave = r;
                }
            }
            if (leave < 0) return false;
            // Bland's rule stays on until the objective moves again, which rules out cycling.
            degenerate_run_ = best * d[leave] > 1e-14 ? 0 : degenerate_run_ + 1;
            replace(leave, static_cast<std::size_t>(enter));
        }
    }

    /// Row r of B^{-1} A restricted to the columns [0, n).
    Eigen::RowVectorXd tableau_row(Eigen::Index r, Eigen::Index n) const {
        const Eigen::VectorXd e = Eigen::VectorXd::Unit(rows(), r);
        const Eigen::VectorXd z = lu_.transpose().solve(e);
        return z.transpose() * a_.leftCols(n);
    }

    void replace(Eigen::Index r, std::size_t column) {
        if (++pivots_ > opt_.max_pivots) throw std::runtime_error("simplex: pivot limit reached");
        basis_[static_cast<std::size_t>(r)] = column;
        refactor();
    }

    void drop_row(Eigen::Index r) {
        const Eigen::Index last = rows() - 1;
        if (r != last) {
            a_.row(r) = a_.row(last);
            b_[r] = b_[last];
            basis_[static_cast<std::size_t>(r)] = basis_.back();
        }
        a_.conservativeResize(last, Eigen::NoChange);
        b_.conservativeResize(last);
        basis_.pop_back();
        refactor();
    }

    void keep_columns(Eigen::Index n) { a_.conservativeResize(Eigen::NoChange, n); }

private:
    Eigen::Index col(Eigen::Index r) const {
        return static_cast<Eigen::Index>(basis_[static_cast<std::size_t>(r)]);
    }

    void refactor() {
        const Eigen::Index m = rows();
        Eigen::MatrixXd bm(m, m);
        for (Eigen::Index r = 0; r < m; ++r) bm.col(r) = a_.col(col(r));
        lu_.compute(bm);
        xb_ = lu_.solve(b_);
    }

    Eigen::MatrixXd a_;
    Eigen::VectorXd b_;
    std::vector<std::size_t> basis_;
    SimplexOptions opt_;
    Eigen::PartialPivLU<Eigen::MatrixXd> lu_;
    Eigen::VectorXd xb_;
    std::size_t pivots_ = 0;
    std::size_t degenerate_run_ = 0;
};

}  // namespace detail

/**
 * Dense two-phase primal simplex with Bland's anti-cycling rule.
 *
 * Entering columns are priced by largest reduced cost until a run of
 * degenerate pivots, then by Bland's rule (lowest index) until a pivot
 * moves the objective. Ratio-test ties always go to the lowest basic index.
 * Phase one adds one artificial per row and minimizes their sum; artificials
 * left in the basis at level zero are pivoted out, and rows where that is
 * impossible are redundant and dropped.
 */
inline LpResult simplex_solve(const LinearProgram& lp, const SimplexOptions& opt = {}) {
    const Eigen::Index m = lp.a.rows(), n = lp.a.cols();
    if (lp.b.size() != m || lp.c.size() != n)
        throw std::invalid_argument("simplex_solve: dimension mismatch");

    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(m, n + m);
    Eigen::VectorXd b(m);
    std::vector<std::size_t> basis(static_cast<std::size_t>(m));
    for (Eigen::Index r = 0; r < m; ++r) {
        const double sign = lp.b[r] < 0.0 ? -1.0 : 1.0;
        a.row(r).head(n) = sign * lp.a.row(r);
        a(r, n + r) = 1.0;
        b[r] = sign * lp.b[r];
        basis[static_cast<std::size_t>(r)] = static_cast<std::size_t>(n + r);
    }
    detail::DenseSimplex sx(std::move(a), std::move(b), std::move(basis), opt);

    Eigen::VectorXd phase1 = Eigen::VectorXd::Zero(n + m);
    phase1.tail(m).setConstant(-1.0);
    sx.optimize(phase1, n + m);

    LpResult out;
    double infeasibility = 0.0;
    for (Eigen::Index r = 0; r < sx.rows(); ++r)
        if (sx.basis()[static_cast<std::size_t>(r)] >= static_cast<std::size_t>(n))
            infeasibility += std::max(sx.basic_values()[r], 0.0);
    if (infeasibility > opt.feasibility_tol) {
        out.status = LpStatus::Infeasible;
        out.pivots = sx.pivots();
        return out;
    }

    for (Eigen::Index r = sx.rows() - 1; r >= 0; --r) {
        if (sx.basis()[static_cast<std::size_t>(r)] < static_cast<std::size_t>(n)) continue;
        // The artificial sits at level ~0, so any nonzero entry gives a degenerate
        // pivot; the largest one keeps the basis well conditioned.
        const Eigen::RowVectorXd row = sx.tableau_row(r, n);
        Eigen::Index j = -1;
        const double best = row.cwiseAbs().maxCoeff(&j);
        if (best > opt.pivot_tol)
            sx.replace(r, static_cast<std::size_t>(j));
        else
            sx.drop_row(r);
    }
    sx.keep_columns(n);

    const bool bounded = sx.optimize(lp.c, n);
    out.pivots = sx.pivots();
    if (!bounded) {
        out.status = LpStatus::Unbounded;
        return out;
    }
    out.status = LpStatus::Optimal;
    out.x = Eigen::VectorXd::Zero(n);
    for (Eigen::Index r = 0; r < sx.rows(); ++r)
        out.x[static_cast<Eigen::Index>(sx.basis()[static_cast<std::size_t>(r)])] = sx.basic_values()[r];
    out.objective = lp.c.dot(out.x);
    out.basis = sx.basis();
    return out;
}

}  // namespace safecmdp
