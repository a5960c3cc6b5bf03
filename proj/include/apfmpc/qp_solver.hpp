#pragma once

// Dense strictly convex QP:
//
//   minimize    0.5 x' H x + f' x
//   subject to  A_in x <= b_in,  A_eq x = b_eq,  lb <= x <= ub
//
// solved with the Goldfarb-Idnani dual active-set method. The method starts
// from the unconstrained minimizer and adds the most violated constraint
// each iteration, so no feasible starting point is needed and an empty
// feasible set shows up as a blocked dual step.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <ostream>
#include <string_view>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/LU>

#include "apfmpc/errors.hpp"

namespace apfmpc {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct QpProblem {
    MatrixXd H;
    VectorXd f;
    MatrixXd A_in;
    VectorXd b_in;
    MatrixXd A_eq;
    VectorXd b_eq;
    VectorXd lb;  // -inf entries mean unbounded
    VectorXd ub;  // +inf entries mean unbounded

    Eigen::Index size() const { return H.rows(); }

    /// Unconstrained problem of dimension n with infinite bounds.
    static QpProblem unconstrained(MatrixXd h, VectorXd f) {
        QpProblem p;
        const Eigen::Index n = h.rows();
        p.H = std::move(h);
        p.f = std::move(f);
        p.A_in.resize(0, n);
        p.A_eq.resize(0, n);
        p.lb = VectorXd::Constant(n, -std::numeric_limits<double>::infinity());
        p.ub = VectorXd::Constant(n, std::numeric_limits<double>::infinity());
        return p;
    }

    void check_dimensions() const {
        const Eigen::Index n = H.rows();
        if (H.cols() != n || f.size() != n || A_in.cols() != n || A_in.rows() != b_in.size() ||
            A_eq.cols() != n || A_eq.rows() != b_eq.size() || lb.size() != n || ub.size() != n) {
            throw DimensionMismatch("QpProblem: inconsistent dimensions");
        }
    }

    double objective(const VectorXd& x) const { return 0.5 * x.dot(H * x) + f.dot(x); }
};

enum class QpStatus { Optimal, Infeasible, MaxIterations };

inline std::string_view to_string(QpStatus s) {
    switch (s) {
        case QpStatus::Optimal: return "Optimal";
        case QpStatus::Infeasible: return "Infeasible";
        case QpStatus::MaxIterations: return "MaxIterations";
    }
    return "Unknown";
}

/// Lagrange multipliers, all non-negative at a KKT point except `eq`.
struct QpMultipliers {
    VectorXd in;     // A_in rows
    VectorXd eq;     // A_eq rows (free sign)
    VectorXd lower;  // x >= lb
    VectorXd upper;  // x <= ub
};

struct KktResiduals {
    double stationarity = 0.0;
    double primal_feasibility = 0.0;
    double dual_feasibility = 0.0;
    double complementarity = 0.0;

    double max() const {
        return std::max({stationarity, primal_feasibility, dual_feasibility, complementarity});
    }
};

struct QpSolution {
    VectorXd x;
    QpStatus status = QpStatus::MaxIterations;
    double objective = 0.0;
    KktResiduals kkt;
    QpMultipliers multipliers;
    int iterations = 0;
    bool regularized = false;
};

/// Infinity-norm KKT residuals for a candidate primal-dual pair:
/// stationarity of H x + f + A_in' l + A_eq' v - mu_lo + mu_up, the largest
/// constraint violation, the most negative inequality multiplier (as a
/// positive number) and the largest |multiplier * slack|.
inline KktResiduals kkt_residuals(const QpProblem& p, const VectorXd& x, const QpMultipliers& m) {
    p.check_dimensions();
    const Eigen::Index n = p.size();
    if (x.size() != n || m.in.size() != p.A_in.rows() || m.eq.size() != p.A_eq.rows() ||
        m.lower.size() != n || m.upper.size() != n) {
        throw DimensionMismatch("kkt_residuals: multiplier or iterate size mismatch");
    }

    KktResiduals r;
    VectorXd grad = p.H * x + p.f - m.lower + m.upper;
    if (p.A_in.rows() > 0) grad += p.A_in.transpose() * m.in;
    if (p.A_eq.rows() > 0) grad += p.A_eq.transpose() * m.eq;
    r.stationarity = grad.lpNorm<Eigen::Infinity>();

    auto violation = [&](double v) { r.primal_feasibility = std::max(r.primal_feasibility, v); };
    auto dual = [&](double u) { r.dual_feasibility = std::max(r.dual_feasibility, -u); };
    auto comp = [&](double u, double slack) {
        if (u != 0.0) r.complementarity = std::max(r.complementarity, std::abs(u * slack));
    };

    if (p.A_in.rows() > 0) {
        const VectorXd ax = p.A_in * x;
        for (Eigen::Index i = 0; i < ax.size(); ++i) {
            const double slack = p.b_in[i] - ax[i];
            violation(-slack);
            dual(m.in[i]);
            comp(m.in[i], slack);
        }
    }
    if (p.A_eq.rows() > 0) {
        const VectorXd ax = p.A_eq * x;
        for (Eigen::Index i = 0; i < ax.size(); ++i) violation(std::abs(ax[i] - p.b_eq[i]));
    }
    for (Eigen::Index j = 0; j < n; ++j) {
        if (std::isfinite(p.lb[j])) {
            violation(p.lb[j] - x[j]);
            comp(m.lower[j], x[j] - p.lb[j]);
        }
        if (std::isfinite(p.ub[j])) {
            violation(x[j] - p.ub[j]);
            comp(m.upper[j], p.ub[j] - x[j]);
        }
        dual(m.lower[j]);
        dual(m.upper[j]);
    }
    return r;
}

namespace detail {

// One constraint in the solver's internal form a' x >= b (or == b).
struct Row {
    enum class Kind { In, Eq, Lower, Upper } kind;
    Eigen::Index index;
};

class GoldfarbIdnani {
public:
    GoldfarbIdnani(const QpProblem& p, const MatrixXd& h_factored, double tol, int max_iter)
        : p_(p), n_(p.size()), tol_(tol), max_iter_(max_iter) {
        for (Eigen::Index i = 0; i < p.A_eq.rows(); ++i) eq_.push_back({Row::Kind::Eq, i});
        for (Eigen::Index i = 0; i < p.A_in.rows(); ++i) ineq_.push_back({Row::Kind::In, i});
        for (Eigen::Index j = 0; j < n_; ++j) {
            if (std::isfinite(p.lb[j])) ineq_.push_back({Row::Kind::Lower, j});
            if (std::isfinite(p.ub[j])) ineq_.push_back({Row::Kind::Upper, j});
        }

        const Eigen::LLT<MatrixXd> llt(h_factored);
        // J = L^{-T}, so J' H J = I.
        J_ = llt.matrixU().solve(MatrixXd::Identity(n_, n_));
        R_ = MatrixXd::Zero(n_, n_);
        x_ = -llt.solve(p.f);
    }

    QpSolution solve() {
        QpSolution sol;
        sol.status = run(sol.iterations);
        sol.x = x_;
        sol.multipliers = multipliers();
        return sol;
    }

private:
    struct Active {
        const Row* row;
        double u;
    };

    VectorXd normal(const Row& r) const {
        switch (r.kind) {
            case Row::Kind::In: return -p_.A_in.row(r.index).transpose();
            case Row::Kind::Eq: return p_.A_eq.row(r.index).transpose();
            case Row::Kind::Lower: return VectorXd::Unit(n_, r.index);
            case Row::Kind::Upper: return -VectorXd::Unit(n_, r.index);
        }
        return {};
    }

    double rhs(const Row& r) const {
        switch (r.kind) {
            case Row::Kind::In: return -p_.b_in[r.index];
            case Row::Kind::Eq: return p_.b_eq[r.index];
            case Row::Kind::Lower: return p_.lb[r.index];
            case Row::Kind::Upper: return -p_.ub[r.index];
        }
        return 0.0;
    }

    double slack(const Row& r) const {
        switch (r.kind) {
            case Row::Kind::In: return p_.b_in[r.index] - p_.A_in.row(r.index).dot(x_);
            case Row::Kind::Eq: return p_.A_eq.row(r.index).dot(x_) - p_.b_eq[r.index];
            case Row::Kind::Lower: return x_[r.index] - p_.lb[r.index];
            case Row::Kind::Upper: return p_.ub[r.index] - x_[r.index];
        }
        return 0.0;
    }

    double violation_threshold(const Row& r) const {
        return 1e-3 * tol_ * (1.0 + std::abs(rhs(r)));
    }

    Eigen::Index q() const { return static_cast<Eigen::Index>(active_.size()); }

    // z: primal step direction; r: change of active multipliers per unit step.
    void directions(const VectorXd& np, VectorXd& d, VectorXd& z, VectorXd& r) const {
        const Eigen::Index iq = q();
        d = J_.transpose() * np;
        z = J_.rightCols(n_ - iq) * d.tail(n_ - iq);
        r = R_.topLeftCorner(iq, iq).triangularView<Eigen::Upper>().solve(d.head(iq));
    }

    static void reflect(double& a, double& b, double cc, double ss) {
        const double t1 = a, t2 = b;
        a = cc * t1 + ss * t2;
        b = ss * t1 - cc * t2;
    }

    bool add_to_factor(VectorXd& d) {
        const Eigen::Index iq = q();
        for (Eigen::Index j = n_ - 1; j >= iq + 1; --j) {
            double cc = d[j - 1], ss = d[j];
            const double h = std::hypot(cc, ss);
            if (h == 0.0) continue;
            d[j] = 0.0;
            cc /= h;
            ss /= h;
            if (cc < 0.0) {
                cc = -cc;
                ss = -ss;
                d[j - 1] = -h;
            } else {
                d[j - 1] = h;
            }
            for (Eigen::Index k = 0; k < n_; ++k) reflect(J_(k, j - 1), J_(k, j), cc, ss);
        }
        R_.col(iq).head(iq + 1) = d.head(iq + 1);
        if (std::abs(d[iq]) <= std::numeric_limits<double>::epsilon() * r_norm_) return false;
        r_norm_ = std::max(r_norm_, std::abs(d[iq]));
        return true;
    }

    void drop(Eigen::Index pos) {
        // Remove active column `pos`, then restore R to upper-triangular form.
        const Eigen::Index iq = q();
        active_.erase(active_.begin() + pos);
        for (Eigen::Index c = pos; c < iq - 1; ++c) R_.col(c) = R_.col(c + 1);
        R_.col(iq - 1).setZero();
        const Eigen::Index nq = iq - 1;
        for (Eigen::Index j = pos; j < nq; ++j) {
            double cc = R_(j, j), ss = R_(j + 1, j);
            const double h = std::hypot(cc, ss);
            if (h == 0.0) continue;
            cc /= h;
            ss /= h;
            R_(j + 1, j) = 0.0;
            if (cc < 0.0) {
                R_(j, j) = -h;
                cc = -cc;
                ss = -ss;
            } else {
                R_(j, j) = h;
            }
            for (Eigen::Index k = j + 1; k < nq; ++k) reflect(R_(j, k), R_(j + 1, k), cc, ss);
            for (Eigen::Index k = 0; k < n_; ++k) reflect(J_(k, j), J_(k, j + 1), cc, ss);
        }
    }

    QpStatus run(int& iterations) {
        VectorXd d, z, r;

        for (const Row& row : eq_) {
            const VectorXd np = normal(row);
            directions(np, d, z, r);
            const double znp = z.dot(np);
            const double resid = rhs(row) - np.dot(x_);
            if (std::abs(znp) <= 1e-14 * std::max(1.0, np.squaredNorm())) {
                // Dependent on equalities already active; fine only if consistent.
                if (std::abs(resid) > tol_) return QpStatus::Infeasible;
                continue;
            }
            const double t = resid / znp;
            x_ += t * z;
            for (Eigen::Index i = 0; i < q(); ++i) active_[static_cast<std::size_t>(i)].u -= t * r[i];
            if (!add_to_factor(d)) return QpStatus::Infeasible;
            active_.push_back({&row, t});
        }
        const std::size_t n_eq = active_.size();

        std::vector<char> excluded(ineq_.size(), 0);
        std::vector<char> is_active(ineq_.size(), 0);

        while (true) {
            if (iterations >= max_iter_) return QpStatus::MaxIterations;

            // Step 1: most violated inactive inequality.
            std::ptrdiff_t pick = -1;
            double worst = 0.0;
            bool any_excluded_violated = false;
            for (std::size_t i = 0; i < ineq_.size(); ++i) {
                if (is_active[i]) continue;
                const double s = slack(ineq_[i]);
                if (s >= -violation_threshold(ineq_[i])) continue;
                if (excluded[i]) {
                    any_excluded_violated = true;
                    continue;
                }
                if (pick < 0 || s < worst) {
                    pick = static_cast<std::ptrdiff_t>(i);
                    worst = s;
                }
            }
            if (pick < 0) return any_excluded_violated ? QpStatus::Infeasible : QpStatus::Optimal;
            ++iterations;

            const auto saved_x = x_;
            const auto saved_active = active_;
            const auto saved_J = J_;
            const auto saved_R = R_;
            const auto saved_is_active = is_active;

            const Row& row = ineq_[static_cast<std::size_t>(pick)];
            const VectorXd np = normal(row);
            double s_p = worst;
            double u_plus = 0.0;

            while (true) {
                directions(np, d, z, r);

                // Partial (dual) step length, limited by active inequalities.
                double t1 = std::numeric_limits<double>::infinity();
                std::ptrdiff_t drop_pos = -1;
                for (std::size_t k = n_eq; k < active_.size(); ++k) {
                    const double rk = r[static_cast<Eigen::Index>(k)];
                    if (rk > 0.0) {
                        const double ratio = active_[k].u / rk;
                        if (ratio < t1) {
                            t1 = ratio;
                            drop_pos = static_cast<std::ptrdiff_t>(k);
                        }
                    }
                }
                // Full (primal) step length.
                double t2 = std::numeric_limits<double>::infinity();
                const double znp = z.dot(np);
                if (z.squaredNorm() > std::numeric_limits<double>::epsilon() && znp > 0.0) t2 = -s_p / znp;

                const double t = std::min(t1, t2);
                if (!std::isfinite(t)) return QpStatus::Infeasible;

                if (!std::isfinite(t2)) {
                    for (Eigen::Index i = 0; i < q(); ++i) active_[static_cast<std::size_t>(i)].u -= t * r[i];
                    u_plus += t;
                    release(static_cast<Eigen::Index>(drop_pos), is_active);
                    continue;
                }

                x_ += t * z;
                for (Eigen::Index i = 0; i < q(); ++i) active_[static_cast<std::size_t>(i)].u -= t * r[i];
                u_plus += t;

                if (t == t2) {
                    if (!add_to_factor(d)) {
                        x_ = saved_x;
                        active_ = saved_active;
                        J_ = saved_J;
                        R_ = saved_R;
                        is_active = saved_is_active;
                        excluded[static_cast<std::size_t>(pick)] = 1;
                        break;
                    }
                    active_.push_back({&row, u_plus});
                    is_active[static_cast<std::size_t>(pick)] = 1;
                    std::fill(excluded.begin(), excluded.end(), 0);
                    break;
                }
                release(static_cast<Eigen::Index>(drop_pos), is_active);
                s_p = slack(row);
            }
        }
    }

    void release(Eigen::Index pos, std::vector<char>& is_active) {
        const Row* row = active_[static_cast<std::size_t>(pos)].row;
        is_active[static_cast<std::size_t>(row - ineq_.data())] = 0;
        drop(pos);
    }

    QpMultipliers multipliers() const {
        QpMultipliers m;
        m.in = VectorXd::Zero(p_.A_in.rows());
        m.eq = VectorXd::Zero(p_.A_eq.rows());
        m.lower = VectorXd::Zero(n_);
        m.upper = VectorXd::Zero(n_);
        for (const Active& a : active_) {
            switch (a.row->kind) {
                case Row::Kind::In: m.in[a.row->index] = a.u; break;
                case Row::Kind::Eq: m.eq[a.row->index] = -a.u; break;
                case Row::Kind::Lower: m.lower[a.row->index] = a.u; break;
                case Row::Kind::Upper: m.upper[a.row->index] = a.u; break;
            }
        }
        return m;
    }

    const QpProblem& p_;
    Eigen::Index n_;
    double tol_;
    int max_iter_;
    std::vector<Row> eq_;
    std::vector<Row> ineq_;
    std::vector<Active> active_;
    MatrixXd J_;
    MatrixXd R_;
    VectorXd x_;
    double r_norm_ = 1.0;
};

// Re-solves the KKT system restricted to the constraints that carry a
// nonzero multiplier. Tightens stationarity after long active-set runs.
inline void polish(const QpProblem& p, const MatrixXd& h, QpSolution& sol) {
    const Eigen::Index n = p.size();
    std::vector<VectorXd> rows;
    std::vector<double> rhs;
    struct Ref { int kind; Eigen::Index index; };
    std::vector<Ref> refs;
    auto push = [&](VectorXd a, double b, int kind, Eigen::Index idx) {
        rows.push_back(std::move(a));
        rhs.push_back(b);
        refs.push_back({kind, idx});
    };
    for (Eigen::Index i = 0; i < p.A_eq.rows(); ++i) push(p.A_eq.row(i).transpose(), p.b_eq[i], 0, i);
    for (Eigen::Index i = 0; i < p.A_in.rows(); ++i)
        if (sol.multipliers.in[i] > 0.0) push(p.A_in.row(i).transpose(), p.b_in[i], 1, i);
    for (Eigen::Index j = 0; j < n; ++j) {
        if (sol.multipliers.lower[j] > 0.0) push(-VectorXd::Unit(n, j), -p.lb[j], 2, j);
        if (sol.multipliers.upper[j] > 0.0) push(VectorXd::Unit(n, j), p.ub[j], 3, j);
    }
    const Eigen::Index m = static_cast<Eigen::Index>(rows.size());
    MatrixXd kkt = MatrixXd::Zero(n + m, n + m);
    VectorXd b(n + m);
    kkt.topLeftCorner(n, n) = h;
    b.head(n) = -p.f;
    for (Eigen::Index i = 0; i < m; ++i) {
        kkt.block(0, n + i, n, 1) = rows[static_cast<std::size_t>(i)];
        kkt.block(n + i, 0, 1, n) = rows[static_cast<std::size_t>(i)].transpose();
        b[n + i] = rhs[static_cast<std::size_t>(i)];
    }
    const Eigen::FullPivLU<MatrixXd> lu(kkt);
    if (!lu.isInvertible()) return;
    const VectorXd s = lu.solve(b);
    QpSolution cand = sol;
    cand.x = s.head(n);
    for (Eigen::Index i = 0; i < m; ++i) {
        const Ref& r = refs[static_cast<std::size_t>(i)];
        const double u = s[n + i];
        switch (r.kind) {
            case 0: cand.multipliers.eq[r.index] = u; break;
            case 1: cand.multipliers.in[r.index] = u; break;
            case 2: cand.multipliers.lower[r.index] = u; break;
            case 3: cand.multipliers.upper[r.index] = u; break;
        }
    }
    cand.kkt = kkt_residuals(p, cand.x, cand.multipliers);
    if (cand.kkt.max() < sol.kkt.max()) sol = std::move(cand);
}

}  // namespace detail

inline constexpr double kQpDefaultTolerance = 1e-8;
inline constexpr double kQpRegularization = 1e-10;

inline int default_max_iterations(Eigen::Index n) { return 200 + 10 * static_cast<int>(n); }

/// Solves the QP. Optimal is reported only when every KKT residual is
/// within `tol`. Deterministic: no randomness, ties broken by index.
inline QpSolution solve_qp(const QpProblem& problem, double tol = kQpDefaultTolerance, int max_iter = -1) {
    problem.check_dimensions();
    if (!(tol > 0.0)) throw ValidationError("solve_qp: tol must be > 0");
    const Eigen::Index n = problem.size();
    if (max_iter < 0) max_iter = default_max_iterations(n);

    QpProblem p = problem;
    p.H = 0.5 * (problem.H + problem.H.transpose());

    QpSolution sol;
    for (Eigen::Index j = 0; j < n; ++j) {
        if (p.lb[j] > p.ub[j]) {
            sol.x = VectorXd::Zero(n);
            sol.status = QpStatus::Infeasible;
            sol.multipliers = {VectorXd::Zero(p.A_in.rows()), VectorXd::Zero(p.A_eq.rows()), VectorXd::Zero(n),
                               VectorXd::Zero(n)};
            sol.kkt = kkt_residuals(p, sol.x, sol.multipliers);
            sol.objective = p.objective(sol.x);
            return sol;
        }
    }

    MatrixXd h = p.H;
    bool regularized = false;
    {
        const Eigen::LLT<MatrixXd> llt(h);
        const double scale = std::max(1.0, h.diagonal().cwiseAbs().maxCoeff());
        const bool ok = llt.info() == Eigen::Success &&
                        llt.matrixL().toDenseMatrix().diagonal().array().square().minCoeff() > 1e-13 * scale;
        if (!ok) {
            h += kQpRegularization * MatrixXd::Identity(n, n);
            regularized = true;
            if (Eigen::LLT<MatrixXd>(h).info() != Eigen::Success)
                throw ValidationError("solve_qp: Hessian is not positive semidefinite");
        }
    }

    detail::GoldfarbIdnani gi(p, h, tol, max_iter);
    sol = gi.solve();
    sol.regularized = regularized;
    sol.kkt = kkt_residuals(p, sol.x, sol.multipliers);
    if (sol.status == QpStatus::Optimal && sol.kkt.max() > tol) detail::polish(p, h, sol);
    if (sol.status == QpStatus::Optimal && sol.kkt.max() > tol) sol.status = QpStatus::MaxIterations;
    sol.objective = p.objective(sol.x);
    return sol;
}

/// Plain-text dump: a header line "qp n m_in m_eq", then H, f, A_in, b_in,
/// A_eq, b_eq, lb, ub, each preceded by "name rows cols" and written
/// row-major with 17 significant digits.
inline void write_qp_text(std::ostream& os, const QpProblem& p) {
    p.check_dimensions();
    const auto old_prec = os.precision(17);
    os << "qp " << p.size() << ' ' << p.A_in.rows() << ' ' << p.A_eq.rows() << '\n';
    auto block = [&](std::string_view name, const MatrixXd& m) {
        os << name << ' ' << m.rows() << ' ' << m.cols() << '\n';
        for (Eigen::Index i = 0; i < m.rows(); ++i) {
            for (Eigen::Index j = 0; j < m.cols(); ++j) os << (j ? " " : "") << m(i, j);
            os << '\n';
        }
    };
    block("H", p.H);
    block("f", p.f.transpose());
    block("A_in", p.A_in);
    block("b_in", p.b_in.transpose());
    block("A_eq", p.A_eq);
    block("b_eq", p.b_eq.transpose());
    block("lb", p.lb.transpose());
    block("ub", p.ub.transpose());
    os.precision(old_prec);
}

}  // namespace apfmpc
