#pragma once

// Condensed linear MPC over the double integrator.
//
// Predicted states X = M x0 + C U are substituted into
//   J = (X - X_ref)' Q_aug (X - X_ref) + U' R_aug U
// giving J = c + 2 E' U + U' H U. The QP handed to the solver is the
// half-scaled form 0.5 U' H U + E' U, which has the same minimizer.

#include <algorithm>
#include <cmath>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Eigenvalues>

#include "apfmpc/dynamics.hpp"
#include "apfmpc/qp_solver.hpp"
#include "apfmpc/reference.hpp"

namespace apfmpc {

struct MpcConfig {
    int horizon = 20;
    double dt = 0.1;
    Mat6 Q = (Eigen::Matrix<double, 6, 1>() << 1, 1, 1, 0, 0, 0).finished().asDiagonal();
    Mat6 F_term = 10.0 * Q;
    Mat3 R = 0.1 * Mat3::Identity();
    double v_max = 2.0;
    double a_max = 2.0;
    /// Optional equality constraints on U; empty by default.
    MatrixXd A_eq;
    VectorXd b_eq;

    void validate() const {
        if (horizon < 1) throw InvalidHorizon("MpcConfig: horizon must be >= 1");
        if (!(dt > 0.0)) throw ValidationError("MpcConfig: dt must be > 0");
        if (!(v_max > 0.0)) throw ValidationError("MpcConfig: v_max must be > 0");
        if (!(a_max > 0.0)) throw ValidationError("MpcConfig: a_max must be > 0");
        auto min_eig = [](const auto& m) {
            return Eigen::SelfAdjointEigenSolver<std::decay_t<decltype(m)>>(m, Eigen::EigenvaluesOnly)
                .eigenvalues()
                .minCoeff();
        };
        if (!Q.isApprox(Q.transpose()) || min_eig(Q) < -1e-12) throw ValidationError("MpcConfig: Q must be PSD");
        if (!F_term.isApprox(F_term.transpose()) || min_eig(F_term) < -1e-12)
            throw ValidationError("MpcConfig: F_term must be PSD");
        if (!R.isApprox(R.transpose()) || !(min_eig(R) > 0.0)) throw ValidationError("MpcConfig: R must be PD");
        const Eigen::Index n_u = 3 * static_cast<Eigen::Index>(horizon);
        if (A_eq.size() != 0 || b_eq.size() != 0) {
            if (A_eq.cols() != n_u || A_eq.rows() != b_eq.size())
                throw DimensionMismatch("MpcConfig: A_eq must have 3N columns and match b_eq");
        }
    }
};

/// Cost part of the condensed QP.
struct CondensedQp {
    MatrixXd H;
    VectorXd E;
    double qp_constant = 0.0;
};

struct ConstraintSet {
    MatrixXd A_in;
    VectorXd b_in;
    MatrixXd A_eq;
    VectorXd b_eq;
    VectorXd lb;
    VectorXd ub;
    /// Largest relaxation applied to a velocity bound because the initial
    /// velocity could not be brought inside v_max in time (0 when none).
    double start_slack = 0.0;
    bool infeasible_at_start() const { return start_slack > 0.0; }
};

inline MatrixXd block_diagonal_weights(const Mat6& q, const Mat6& f_term, int horizon) {
    const Eigen::Index n = horizon;
    MatrixXd w = MatrixXd::Zero(6 * (n + 1), 6 * (n + 1));
    for (Eigen::Index i = 0; i < n; ++i) w.block<6, 6>(6 * i, 6 * i) = q;
    w.block<6, 6>(6 * n, 6 * n) = f_term;
    return w;
}

inline MatrixXd block_diagonal_inputs(const Mat3& r, int horizon) {
    const Eigen::Index n = horizon;
    MatrixXd w = MatrixXd::Zero(3 * n, 3 * n);
    for (Eigen::Index i = 0; i < n; ++i) w.block<3, 3>(3 * i, 3 * i) = r;
    return w;
}

inline CondensedQp build_cost(const UavState& x0, const ReferenceTrajectory& ref, const MpcConfig& cfg,
                              const PredictionMatrices& pm) {
    if (ref.horizon() != cfg.horizon) throw DimensionMismatch("build_cost: reference length must be N+1");
    if (pm.C.cols() != 3 * cfg.horizon) throw DimensionMismatch("build_cost: prediction matrices do not match N");

    const MatrixXd q_aug = block_diagonal_weights(cfg.Q, cfg.F_term, cfg.horizon);
    const MatrixXd ct_q = pm.C.transpose() * q_aug;
    const VectorXd err = pm.M * stack_state(x0) - ref.stacked_states();

    CondensedQp qp;
    qp.H = ct_q * pm.C + block_diagonal_inputs(cfg.R, cfg.horizon);
    qp.H = 0.5 * (qp.H + qp.H.transpose()).eval();
    qp.E = ct_q * err;
    qp.qp_constant = err.dot(q_aug * err);
    return qp;
}

inline CondensedQp build_cost(const UavState& x0, const ReferenceTrajectory& ref, const MpcConfig& cfg) {
    return build_cost(x0, ref, cfg, prediction_matrices(cfg.horizon, cfg.dt));
}

/// Direct evaluation of the tracking cost for a given input sequence.
inline double tracking_cost(const UavState& x0, const ReferenceTrajectory& ref, const MpcConfig& cfg,
                            const PredictionMatrices& pm, const VectorXd& u) {
    const VectorXd x = pm.M * stack_state(x0) + pm.C * u;
    const VectorXd e = x - ref.stacked_states();
    return e.dot(block_diagonal_weights(cfg.Q, cfg.F_term, cfg.horizon) * e) +
           u.dot(block_diagonal_inputs(cfg.R, cfg.horizon) * u);
}

/// Box bounds +-a_max on every input and +-v_max on every predicted
/// velocity component for steps 1..N (two rows each). A velocity bound that
/// is unreachable from x0 under the acceleration limit is widened just
/// enough to stay feasible.
inline ConstraintSet build_constraints(const UavState& x0, const MpcConfig& cfg, const PredictionMatrices& pm) {
    const Eigen::Index n = cfg.horizon;
    const Eigen::Index n_u = 3 * n;
    if (pm.C.cols() != n_u || pm.M.rows() != 6 * (n + 1))
        throw DimensionMismatch("build_constraints: prediction matrices do not match N");

    ConstraintSet cs;
    cs.lb = VectorXd::Constant(n_u, -cfg.a_max);
    cs.ub = VectorXd::Constant(n_u, cfg.a_max);
    cs.A_in.resize(6 * n, n_u);
    cs.b_in.resize(6 * n);

    const VectorXd free_response = pm.M * stack_state(x0);
    for (Eigen::Index i = 1; i <= n; ++i) {
        for (Eigen::Index c = 0; c < 3; ++c) {
            const Eigen::Index src = 6 * i + 3 + c;
            const double reachable = std::abs(x0.velocity[c]) - static_cast<double>(i) * cfg.a_max * cfg.dt;
            const double slack = std::max(0.0, reachable - cfg.v_max);
            cs.start_slack = std::max(cs.start_slack, slack);
            const double bound = cfg.v_max + slack;
            const Eigen::Index row = 6 * (i - 1) + 2 * c;
            cs.A_in.row(row) = pm.C.row(src);
            cs.b_in[row] = bound - free_response[src];
            cs.A_in.row(row + 1) = -pm.C.row(src);
            cs.b_in[row + 1] = bound + free_response[src];
        }
    }
    if (cfg.A_eq.size() != 0) {
        cs.A_eq = cfg.A_eq;
        cs.b_eq = cfg.b_eq;
    } else {
        cs.A_eq.resize(0, n_u);
        cs.b_eq.resize(0);
    }
    return cs;
}

inline QpProblem assemble_qp(const CondensedQp& cost, const ConstraintSet& cs) {
    QpProblem p;
    p.H = cost.H;
    p.f = cost.E;
    p.A_in = cs.A_in;
    p.b_in = cs.b_in;
    p.A_eq = cs.A_eq;
    p.b_eq = cs.b_eq;
    p.lb = cs.lb;
    p.ub = cs.ub;
    return p;
}

struct MpcDiagnostics {
    QpStatus status = QpStatus::MaxIterations;
    KktResiduals kkt;
    int iterations = 0;
    bool regularized = false;
    bool degraded = false;
    double start_slack = 0.0;
    double objective = 0.0;
};

struct MpcStep {
    Vec3 first_control = Vec3::Zero();
    std::vector<Vec3> sequence;
    MpcDiagnostics diagnostics;
};

/// Receding-horizon controller with the state-independent pieces (prediction
/// matrices, Hessian) built once.
class MpcController {
public:
    explicit MpcController(MpcConfig cfg) : cfg_(std::move(cfg)) {
        cfg_.validate();
        pm_ = prediction_matrices(cfg_.horizon, cfg_.dt);
    }

    const MpcConfig& config() const { return cfg_; }
    const PredictionMatrices& prediction() const { return pm_; }

    MpcStep solve(const UavState& x0, const ReferenceTrajectory& ref, double tol = kQpDefaultTolerance) const {
        const CondensedQp cost = build_cost(x0, ref, cfg_, pm_);
        const ConstraintSet cs = build_constraints(x0, cfg_, pm_);
        const QpSolution sol = solve_qp(assemble_qp(cost, cs), tol);

        MpcStep step;
        step.diagnostics.status = sol.status;
        step.diagnostics.kkt = sol.kkt;
        step.diagnostics.iterations = sol.iterations;
        step.diagnostics.regularized = sol.regularized;
        step.diagnostics.degraded = sol.status == QpStatus::MaxIterations;
        step.diagnostics.start_slack = cs.start_slack;
        step.diagnostics.objective = sol.objective;
        if (sol.status == QpStatus::Infeasible) {
            step.sequence.assign(static_cast<std::size_t>(cfg_.horizon), Vec3::Zero());
            return step;
        }
        step.sequence.reserve(static_cast<std::size_t>(cfg_.horizon));
        for (Eigen::Index i = 0; i < cfg_.horizon; ++i) step.sequence.emplace_back(sol.x.segment<3>(3 * i));
        step.first_control = step.sequence.front();
        return step;
    }

private:
    MpcConfig cfg_;
    PredictionMatrices pm_;
};

inline MpcStep solve_step(const UavState& x0, const ReferenceTrajectory& ref, const MpcConfig& cfg) {
    return MpcController(cfg).solve(x0, ref);
}

}  // namespace apfmpc
