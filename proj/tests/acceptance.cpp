// Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any fail.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "apfmpc/apfmpc.hpp"
#include "cli_support.hpp"
#include "oracles.hpp"

using namespace apfmpc;

namespace {

int failures = 0;

void report(bool ok, const char* name, const std::string& detail) {
    std::printf("%s  %-22s %s\n", ok ? "PASS" : "FAIL", name, detail.c_str());
    if (!ok) ++failures;
}

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

RunMetrics run_mode(const Scenario& base, ApfMode mode) {
    Scenario s = base;
    s.apf.mode = mode;
    return compute_metrics(run_closed_loop(s), s);
}

void local_minimum() {
    const Scenario s = load_scenario(cli::scenario("symmetric_trap.json")).scenario;
    const auto t0 = std::chrono::steady_clock::now();
    const RunMetrics basic = run_mode(s, ApfMode::Basic);
    Scenario w = s;
    w.apf.gamma = 1;
    w.apf.k = 1;
    w.apf.approach_sign = ApproachSign::ThreatPositive;
    const RunMetrics weighted = run_mode(w, ApfMode::DirectionVelocityWeighted);
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    const bool ok = basic.outcome == Outcome::Stalled && !basic.stall_events.empty() &&
                    basic.final_goal_distance > 5.0 && weighted.outcome == Outcome::GoalReached &&
                    weighted.final_goal_distance < 0.5 && weighted.time_to_goal && *weighted.time_to_goal <= 120.0 &&
                    s.t_max <= 120.0 && wall < 30.0;
    report(ok, "local-minimum",
           fmt("basic=%s events=%zu goal_dist=%.2f m; weighted=%s goal_dist=%.3f m t=%.1f s; wall=%.2f s",
               std::string(to_string(basic.outcome)).c_str(), basic.stall_events.size(), basic.final_goal_distance,
               std::string(to_string(weighted.outcome)).c_str(), weighted.final_goal_distance,
               weighted.time_to_goal.value_or(-1.0), wall));
}

void clearance() {
    const Scenario s = load_scenario(cli::scenario("cluttered_moving.json")).scenario;
    const RunMetrics basic = run_mode(s, ApfMode::Basic);
    const RunMetrics weighted = run_mode(s, ApfMode::DirectionVelocityWeighted);
    const double cb = basic.min_clearance_overall();
    const double cw = weighted.min_clearance_overall();
    const bool ok = basic.outcome == Outcome::GoalReached && weighted.outcome == Outcome::GoalReached && cw >= 2.0 &&
                    cw >= cb;
    report(ok, "clearance",
           fmt("basic=%s min_clearance=%.3f m; weighted=%s min_clearance=%.3f m (line 2.0 m)",
               std::string(to_string(basic.outcome)).c_str(), cb, std::string(to_string(weighted.outcome)).c_str(),
               cw));
}

void weight_bounds() {
    std::mt19937_64 rng(20240601);
    std::uniform_real_distribution<double> th(0, std::numbers::pi), gr(-20, 20), ga(0, 5), kk(0, 1);
    const auto signs = {ApproachSign::RecedingPositive, ApproachSign::ThreatPositive};
    int violations = 0;
    for (int i = 0; i < 100000; ++i) {
        const double gamma = ga(rng), k = kk(rng), theta = th(rng), g = gr(rng);
        const ApproachSign sign = *(signs.begin() + (i % 2));
        const double w = combined_weight(theta, g, gamma, k, sign);
        if (!(w >= 1.0 && w <= (1.0 + gamma) * (2.0 + k))) ++violations;
    }
    report(violations == 0, "weight-bounds", fmt("100000 samples, %d violations", violations));
}

void gradient_oracle() {
    std::mt19937_64 rng(777);
    std::uniform_real_distribution<double> u(-1, 1), frac(0.1, 0.98), ds(0.5, 8), kr(0.1, 100);
    double worst = 0.0;
    for (int i = 0; i < 1000; ++i) {
        const Vec3 po(10 * u(rng), 10 * u(rng), 10 * u(rng));
        Vec3 dir(u(rng), u(rng), u(rng));
        while (dir.norm() < 1e-3) dir = Vec3(u(rng), u(rng), u(rng));
        const double d_s = ds(rng), k = kr(rng);
        const Vec3 p = po + dir.normalized() * frac(rng) * d_s;
        const Vec3 a = repulsive_force_basic(p, po, d_s, k);
        const Vec3 n = oracle::fd_repulsive_force(p, po, d_s, k);
        worst = std::max(worst, (a - n).norm() / a.norm());
    }
    report(worst < 1e-6, "gradient-oracle", fmt("1000 points, max relative error %.2e (tol 1e-6)", worst));
}

void qp_correctness() {
    std::mt19937_64 rng(31337);
    std::uniform_int_distribution<int> nd(1, 6);
    std::uniform_real_distribution<double> w(0.1, 2.0), s(0.05, 1.0);
    double worst_x = 0.0, worst_kkt = 0.0;
    int not_optimal = 0;
    for (int t = 0; t < 200; ++t) {
        const int n = nd(rng);
        QpProblem p = QpProblem::unconstrained(oracle::random_spd(rng, n), oracle::random_vector(rng, n, 3.0));
        const VectorXd c = oracle::random_vector(rng, n, 0.5);
        for (int j = 0; j < n; ++j) {
            p.lb[j] = c[j] - w(rng);
            p.ub[j] = c[j] + w(rng);
        }
        const QpSolution sol = solve_qp(p, 1e-8);
        if (sol.status != QpStatus::Optimal) {
            ++not_optimal;
            continue;
        }
        worst_kkt = std::max(worst_kkt, kkt_residuals(p, sol.x, sol.multipliers).max());
        worst_x = std::max(worst_x, (sol.x - oracle::box_qp_enumerate(p.H, p.f, p.lb, p.ub)).lpNorm<Eigen::Infinity>());
    }
    double worst_ineq = 0.0;
    for (int t = 0; t < 50; ++t) {
        const int n = std::uniform_int_distribution<int>(1, 8)(rng);
        const int m = std::uniform_int_distribution<int>(1, 2 * n)(rng);
        QpProblem p = QpProblem::unconstrained(oracle::random_spd(rng, n), oracle::random_vector(rng, n, 5.0));
        const VectorXd x0 = oracle::random_vector(rng, n, 0.5);
        p.A_in.resize(m, n);
        p.b_in.resize(m);
        for (int i = 0; i < m; ++i) {
            p.A_in.row(i) = oracle::random_vector(rng, n).transpose();
            p.b_in[i] = p.A_in.row(i).dot(x0) + s(rng);
        }
        const QpSolution sol = solve_qp(p, 1e-8);
        if (sol.status != QpStatus::Optimal) {
            ++not_optimal;
            continue;
        }
        worst_ineq = std::max(worst_ineq, kkt_residuals(p, sol.x, sol.multipliers).max());
    }
    const bool ok = not_optimal == 0 && worst_x <= 1e-8 && worst_kkt <= 1e-8 && worst_ineq <= 1e-8;
    report(ok, "qp-correctness",
           fmt("200 box QPs: max |x-oracle| %.2e, max KKT %.2e; 50 inequality QPs: max KKT %.2e; non-optimal %d",
               worst_x, worst_kkt, worst_ineq, not_optimal));
}

void mpc_algebra() {
    std::mt19937_64 rng(4242);
    std::uniform_int_distribution<int> hn(1, 20);
    std::uniform_real_distribution<double> dtd(0.01, 0.5), wd(0.01, 5);
    double worst_pred = 0.0;
    for (int t = 0; t < 100; ++t) {
        const int n = hn(rng);
        const double dt = dtd(rng);
        const auto pm = prediction_matrices(n, dt);
        const Vec3 p0 = oracle::random_vector(rng, 3, 5), v0 = oracle::random_vector(rng, 3, 2);
        const VectorXd u = oracle::random_vector(rng, 3 * n, 2);
        const VectorXd pred = pm.M * stack_state({p0, v0}) + pm.C * u;
        worst_pred = std::max(worst_pred, (pred - oracle::simulate_stacked(p0, v0, u, dt)).lpNorm<Eigen::Infinity>());
    }

    double worst_unc = 0.0;
    bool all_optimal = true;
    for (int t = 0; t < 50; ++t) {
        MpcConfig cfg;
        cfg.horizon = hn(rng);
        cfg.dt = dtd(rng);
        cfg.R = Vec3(wd(rng), wd(rng), wd(rng)).asDiagonal();
        cfg.v_max = 1e9;
        cfg.a_max = 1e9;
        const UavState x0{oracle::random_vector(rng, 3, 2), oracle::random_vector(rng, 3)};
        ReferenceTrajectory ref;
        const Vec3 step = oracle::random_vector(rng, 3, 0.2);
        for (int i = 0; i <= cfg.horizon; ++i) ref.points.push_back(x0.position + i * step);
        const CondensedQp cost = build_cost(x0, ref, cfg);
        const VectorXd expected = -cost.H.ldlt().solve(cost.E);
        const MpcStep st = solve_step(x0, ref, cfg);
        all_optimal = all_optimal && st.diagnostics.status == QpStatus::Optimal;
        for (int i = 0; i < cfg.horizon; ++i)
            worst_unc = std::max(worst_unc, (st.sequence[static_cast<std::size_t>(i)] - expected.segment<3>(3 * i))
                                                .lpNorm<Eigen::Infinity>());
    }

    MpcConfig scalar;
    scalar.horizon = 1;
    scalar.dt = 1.0;
    scalar.Q = Mat6::Zero();
    scalar.Q(0, 0) = 1.0;
    scalar.F_term = scalar.Q;
    scalar.R = 0.25 * Mat3::Identity();
    scalar.v_max = 1e6;
    scalar.a_max = 1e6;
    ReferenceTrajectory r1;
    r1.dt = 1.0;
    r1.points = {Vec3(1, 0, 0), Vec3(1, 0, 0)};
    const double ax = solve_step({}, r1, scalar).first_control.x();

    const bool ok = worst_pred <= 1e-12 && all_optimal && worst_unc <= 1e-9 && std::abs(ax - 1.0) <= 1e-9;
    report(ok, "mpc-algebra",
           fmt("prediction max err %.2e (tol 1e-12); unconstrained vs -H^-1 E max err %.2e (tol 1e-9); N=1 a_x=%.12f",
               worst_pred, worst_unc, ax));
}

void rigid_body() {
    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> a(-std::numbers::pi, std::numbers::pi);
    double worst_orth = 0.0, worst_det = 0.0;
    for (int i = 0; i < 10000; ++i) {
        const Mat3 r = rotation_body_to_world(a(rng), a(rng), a(rng));
        worst_orth = std::max(worst_orth, (r.transpose() * r - Mat3::Identity()).cwiseAbs().maxCoeff());
        worst_det = std::max(worst_det, std::abs(r.determinant() - 1.0));
    }
    RigidBodyParams rb;
    rb.mass = 1.3;
    rb.inertia = Vec3(0.015, 0.017, 0.03).asDiagonal();
    const Vec3 lin = linear_acceleration(Mat3::Identity(), rb.mass * rb.gravity, rb);
    RotorCommand hover;
    hover.lift.fill(rb.mass * rb.gravity / 4);
    hover.moment.fill(0.02);
    const Vec3 ang = angular_acceleration(hover, Vec3::Zero(), rb);
    const bool ok = worst_orth <= 1e-12 && worst_det <= 1e-12 && lin == Vec3::Zero() && ang == Vec3::Zero();
    report(ok, "rigid-body",
           fmt("10000 rotations: max |R'R-I| %.2e, max |det-1| %.2e; hover linear (%g,%g,%g) angular (%g,%g,%g)",
               worst_orth, worst_det, lin.x(), lin.y(), lin.z(), ang.x(), ang.y(), ang.z()));
}

void determinism() {
    const auto a = cli::fresh_dir("acc-det-a");
    const auto b = cli::fresh_dir("acc-det-b");
    bool ok = true;
    std::string detail;
    for (const char* name : {"symmetric_trap.json", "cluttered_moving.json"}) {
        const std::string sc = cli::scenario(name).string();
        const int ra = cli::run("compare --scenario " + sc + " --out " + a.string());
        const int rb = cli::run("compare --scenario " + sc + " --out " + b.string());
        bool same = ra == 0 && rb == 0;
        for (const char* f : {"trajectory_basic.csv", "trajectory_direction-velocity.csv"}) {
            const std::string x = cli::slurp(a / f), y = cli::slurp(b / f);
            same = same && !x.empty() && x == y;
        }
        ok = ok && same;
        detail += std::string(name) + (same ? " identical; " : " DIFFER; ");
    }
    std::filesystem::remove_all(a);
    std::filesystem::remove_all(b);
    report(ok, "determinism", detail + "byte comparison of both compare CSVs");
}

}  // namespace

int main() {
    local_minimum();
    clearance();
    weight_bounds();
    gradient_oracle();
    qp_correctness();
    mpc_algebra();
    rigid_body();
    determinism();
    std::printf("%s: %d criterion(s) failed\n", failures ? "FAILED" : "OK", failures);
    return failures ? 1 : 0;
}
