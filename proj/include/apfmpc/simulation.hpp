#pragma once

// Closed-loop simulation: APF reference -> MPC step -> double-integrator
// propagation -> obstacle motion, with per-step logging, online stall
// detection and run metrics.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "apfmpc/mpc.hpp"
#include "apfmpc/potential_field.hpp"
#include "apfmpc/reference.hpp"

namespace apfmpc {

struct WorldBounds {
    Vec3 min = Vec3::Constant(-1e9);
    Vec3 max = Vec3::Constant(1e9);
};

struct StallConfig {
    double window = 5.0;    // s
    double eps_v = 0.05;    // m/s
    double eps_goal = 1.0;  // m
};

enum class AxisConvention { ZUp, ZDown };

struct Scenario {
    std::string name = "scenario";
    UavState start;
    Goal goal;
    std::vector<Obstacle> obstacles;
    std::optional<WorldBounds> bounds;
    ApfParams apf;
    MpcConfig mpc;
    /// Spacing of consecutive reference points (m).
    double reference_step = 0.1;
    StallConfig stall;
    double t_max = 120.0;
    AxisConvention axis = AxisConvention::ZUp;
};

enum class Outcome { GoalReached, Stalled, Timeout, SolverFailure };

inline std::string_view to_string(Outcome o) {
    switch (o) {
        case Outcome::GoalReached: return "GoalReached";
        case Outcome::Stalled: return "Stalled";
        case Outcome::Timeout: return "Timeout";
        case Outcome::SolverFailure: return "SolverFailure";
    }
    return "Unknown";
}

struct StepRecord {
    std::int64_t step = 0;
    double t = 0.0;
    UavState state;
    Vec3 control = Vec3::Zero();
    double goal_distance = 0.0;
    std::vector<double> obstacle_distances;  // center distances
    std::vector<double> weights;             // repulsion weight per obstacle
    /// Empty on records where no QP was solved (terminal records).
    std::optional<QpStatus> solver_status;
};

struct StallEvent {
    double t_start = 0.0;
    double t_end = 0.0;
};

struct TrajectoryLog {
    double dt = 0.1;
    ApfMode mode = ApfMode::Basic;
    std::vector<StepRecord> records;
    Outcome outcome = Outcome::Timeout;
};

/// Constant-velocity motion; obstacles in Bounce mode reflect off the
/// world bounds (position mirrored, velocity component negated).
inline std::vector<Obstacle> step_obstacles(std::span<const Obstacle> obstacles, double dt,
                                            const std::optional<WorldBounds>& bounds = std::nullopt) {
    std::vector<Obstacle> out(obstacles.begin(), obstacles.end());
    for (Obstacle& o : out) {
        o.center += o.velocity * dt;
        if (o.motion != ObstacleMotion::Bounce || !bounds) continue;
        for (int c = 0; c < 3; ++c) {
            if (o.center[c] < bounds->min[c]) {
                o.center[c] = 2.0 * bounds->min[c] - o.center[c];
                o.velocity[c] = -o.velocity[c];
            } else if (o.center[c] > bounds->max[c]) {
                o.center[c] = 2.0 * bounds->max[c] - o.center[c];
                o.velocity[c] = -o.velocity[c];
            }
        }
    }
    return out;
}

namespace detail {

inline std::int64_t window_samples(double window, double dt) {
    return std::max<std::int64_t>(1, std::llround(window / dt));
}

// True when the window of `w` intervals ending at record `k` has mean speed
// at most eps_v with the UAV at least eps_goal from the goal throughout.
inline bool stall_window(const std::vector<StepRecord>& recs, std::size_t k, std::int64_t w, const StallConfig& cfg) {
    if (static_cast<std::int64_t>(k) < w) return false;
    double speed_sum = 0.0;
    for (std::size_t i = k - static_cast<std::size_t>(w); i <= k; ++i) {
        if (recs[i].goal_distance < cfg.eps_goal) return false;
        speed_sum += recs[i].state.velocity.norm();
    }
    return speed_sum / static_cast<double>(w + 1) <= cfg.eps_v;
}

}  // namespace detail

/// Maximal intervals (each at least `window` long) covered by stalled windows.
inline std::vector<StallEvent> detect_stall(const TrajectoryLog& log, const StallConfig& cfg) {
    if (!(cfg.window > 0.0)) throw ValidationError("detect_stall: window must be > 0");
    std::vector<StallEvent> events;
    const std::int64_t w = detail::window_samples(cfg.window, log.dt);
    const auto& recs = log.records;
    std::optional<std::size_t> run_begin;
    for (std::size_t k = 0; k <= recs.size(); ++k) {
        const bool hit = k < recs.size() && detail::stall_window(recs, k, w, cfg);
        if (hit && !run_begin) run_begin = k;
        if (!hit && run_begin) {
            events.push_back({recs[*run_begin - static_cast<std::size_t>(w)].t, recs[k - 1].t});
            run_begin.reset();
        }
    }
    return events;
}

inline std::vector<double> obstacle_distances(std::span<const Obstacle> obstacles, const Vec3& p) {
    std::vector<double> d;
    d.reserve(obstacles.size());
    for (const Obstacle& o : obstacles) d.push_back(obstacle_distance(o, p));
    return d;
}

/// Consecutive solver failures tolerated (coasting with zero acceleration)
/// before the run ends with SolverFailure.
inline constexpr int kMaxConsecutiveSolverFailures = 5;

inline TrajectoryLog run_closed_loop(const Scenario& scenario, const ApfParams& apf, const MpcConfig& mpc,
                                     double t_max) {
    apf.validate();
    if (!(t_max > 0.0)) throw ValidationError("run_closed_loop: t_max must be > 0");
    const MpcController controller(mpc);
    const double dt = mpc.dt;
    const auto max_steps = static_cast<std::int64_t>(std::ceil(t_max / dt - 1e-9));
    const std::int64_t stall_w = detail::window_samples(scenario.stall.window, dt);

    TrajectoryLog log;
    log.dt = dt;
    log.mode = apf.mode;

    UavState state = scenario.start;
    std::vector<Obstacle> obstacles = scenario.obstacles;
    int failures = 0;

    for (std::int64_t k = 0;; ++k) {
        StepRecord rec;
        rec.step = k;
        rec.t = static_cast<double>(k) * dt;
        rec.state = state;
        rec.goal_distance = (scenario.goal.position - state.position).norm();
        rec.obstacle_distances = obstacle_distances(obstacles, state.position);
        rec.weights.reserve(obstacles.size());
        for (const Obstacle& o : obstacles) rec.weights.push_back(repulsion_weight(state, o, apf));

        if (rec.goal_distance < scenario.goal.capture_radius) {
            log.records.push_back(std::move(rec));
            log.outcome = Outcome::GoalReached;
            break;
        }
        if (k >= max_steps) {
            log.records.push_back(std::move(rec));
            log.outcome = Outcome::Timeout;
            break;
        }

        const ReferenceTrajectory ref = generate_reference(state, obstacles, scenario.goal, apf, mpc.horizon,
                                                           scenario.reference_step, dt);
        const MpcStep step = controller.solve(state, ref);
        rec.solver_status = step.diagnostics.status;
        Vec3 control = step.first_control;
        if (step.diagnostics.status == QpStatus::Optimal) {
            failures = 0;
        } else {
            ++failures;
            if (step.diagnostics.status == QpStatus::Infeasible) control.setZero();
            control = control.cwiseMax(-mpc.a_max).cwiseMin(mpc.a_max);
        }
        if (failures > kMaxConsecutiveSolverFailures) {
            rec.control.setZero();
            log.records.push_back(std::move(rec));
            log.outcome = Outcome::SolverFailure;
            break;
        }
        rec.control = control;
        log.records.push_back(std::move(rec));

        if (detail::stall_window(log.records, log.records.size() - 1, stall_w, scenario.stall)) {
            log.outcome = Outcome::Stalled;
            break;
        }

        state = double_integrator_step(state, control, dt);
        obstacles = step_obstacles(obstacles, dt, scenario.bounds);
    }
    return log;
}

inline TrajectoryLog run_closed_loop(const Scenario& scenario) {
    return run_closed_loop(scenario, scenario.apf, scenario.mpc, scenario.t_max);
}

struct RunMetrics {
    ApfMode mode = ApfMode::Basic;
    Outcome outcome = Outcome::Timeout;
    std::vector<double> min_clearance;  // per obstacle, m
    std::optional<double> time_to_goal;
    double path_length = 0.0;
    double control_effort = 0.0;
    std::vector<StallEvent> stall_events;
    double final_goal_distance = 0.0;
    std::size_t steps = 0;

    /// Smallest clearance over all obstacles; +inf without obstacles.
    double min_clearance_overall() const {
        double m = std::numeric_limits<double>::infinity();
        for (double c : min_clearance) m = std::min(m, c);
        return m;
    }
};

inline RunMetrics compute_metrics(const TrajectoryLog& log, const Scenario& scenario) {
    if (log.records.empty()) throw ValidationError("compute_metrics: empty log");
    RunMetrics m;
    m.mode = log.mode;
    m.outcome = log.outcome;
    m.steps = log.records.size();
    m.final_goal_distance = log.records.back().goal_distance;
    m.min_clearance.assign(scenario.obstacles.size(), std::numeric_limits<double>::infinity());

    for (std::size_t i = 0; i < log.records.size(); ++i) {
        const StepRecord& r = log.records[i];
        for (std::size_t j = 0; j < m.min_clearance.size() && j < r.obstacle_distances.size(); ++j)
            m.min_clearance[j] = std::min(m.min_clearance[j], r.obstacle_distances[j] - scenario.obstacles[j].hard_radius);
        if (i > 0) m.path_length += (r.state.position - log.records[i - 1].state.position).norm();
        m.control_effort += r.control.squaredNorm() * log.dt;
        if (!m.time_to_goal && r.goal_distance < scenario.goal.capture_radius) m.time_to_goal = r.t;
    }
    m.stall_events = detect_stall(log, scenario.stall);
    return m;
}

/// Record closest in time to each requested instant. With `fractional`
/// set, instants are fractions of the completion time (time to goal, or
/// the final logged time if the goal was not reached).
inline std::vector<StepRecord> snapshot_records(const TrajectoryLog& log, std::span<const double> instants,
                                                bool fractional) {
    std::vector<StepRecord> out;
    if (log.records.empty()) return out;
    const double horizon = log.records.back().t;
    for (double v : instants) {
        const double t = fractional ? v * horizon : v;
        auto idx = std::llround(t / log.dt);
        idx = std::clamp<long long>(idx, 0, static_cast<long long>(log.records.size()) - 1);
        out.push_back(log.records[static_cast<std::size_t>(idx)]);
    }
    return out;
}

}  // namespace apfmpc
