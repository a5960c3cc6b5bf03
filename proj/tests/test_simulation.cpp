#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "apfmpc/simulation.hpp"

using namespace apfmpc;

namespace {

Scenario open_field() {
    Scenario s;
    s.name = "open";
    s.goal.position = Vec3(10, 0, 0);
    s.reference_step = 0.15;
    s.t_max = 60;
    return s;
}

// Synthetic log: speed(t) sampled every dt at a fixed 10 m from the goal.
template <class Speed>
TrajectoryLog synthetic_log(double duration, double dt, Speed speed, double goal_distance = 10.0) {
    TrajectoryLog log;
    log.dt = dt;
    const auto n = static_cast<std::int64_t>(std::llround(duration / dt));
    for (std::int64_t k = 0; k <= n; ++k) {
        StepRecord r;
        r.step = k;
        r.t = static_cast<double>(k) * dt;
        r.state.velocity = Vec3(speed(r.t), 0, 0);
        r.goal_distance = goal_distance;
        log.records.push_back(r);
    }
    return log;
}

}  // namespace

TEST(StepObstacles, Examples) {
    Obstacle still;
    still.center = Vec3(1, 2, 3);
    EXPECT_EQ(step_obstacles(std::vector<Obstacle>{still}, 0.5)[0].center, Vec3(1, 2, 3));

    Obstacle mover;
    mover.velocity = Vec3(1, 0, 0);
    EXPECT_EQ(step_obstacles(std::vector<Obstacle>{mover}, 0.5)[0].center, Vec3(0.5, 0, 0));

    Obstacle b;
    b.center = Vec3(9.8, 0, 0);
    b.velocity = Vec3(1, 0.5, 0);
    b.motion = ObstacleMotion::Bounce;
    WorldBounds w;
    w.min = Vec3(-10, -10, -10);
    w.max = Vec3(10, 10, 10);
    const Obstacle out = step_obstacles(std::vector<Obstacle>{b}, 0.5, w)[0];
    EXPECT_NEAR(out.center.x(), 9.7, 1e-12);
    EXPECT_NEAR(out.center.y(), 0.25, 1e-12);
    EXPECT_EQ(out.velocity, Vec3(-1, 0.5, 0));

    b.motion = ObstacleMotion::ConstantVelocity;
    EXPECT_NEAR(step_obstacles(std::vector<Obstacle>{b}, 0.5, w)[0].center.x(), 10.3, 1e-12);
}

TEST(StallDetector, ParkedAtGoalIsNotAStall) {
    const auto log = synthetic_log(20, 0.1, [](double) { return 0.0; }, 0.2);
    EXPECT_TRUE(detect_stall(log, StallConfig{}).empty());
}

TEST(StallDetector, FrozenForTwoWindowsIsOneEvent) {
    const auto log = synthetic_log(10, 0.1, [](double) { return 0.0; });
    const auto ev = detect_stall(log, StallConfig{});
    ASSERT_EQ(ev.size(), 1u);
    EXPECT_DOUBLE_EQ(ev[0].t_start, 0.0);
    EXPECT_DOUBLE_EQ(ev[0].t_end, 10.0);
}

TEST(StallDetector, MovingIsNotAStall) {
    const auto log = synthetic_log(30, 0.1, [](double) { return 0.5; });
    EXPECT_TRUE(detect_stall(log, StallConfig{}).empty());
}

TEST(StallDetector, OscillationNeedsShorterWindow) {
    // 3 s parked, then 0.5 s at 1 m/s, repeating: the 5 s mean never drops
    // to eps_v, but a 2.5 s window fits inside a parked phase.
    auto speed = [](double t) {
        const double phase = std::fmod(t + 1e-9, 3.5);
        return phase < 3.0 ? 0.0 : 1.0;
    };
    const auto log = synthetic_log(40, 0.1, speed);
    StallConfig cfg;
    EXPECT_TRUE(detect_stall(log, cfg).empty());
    cfg.window = 2.5;
    EXPECT_GE(detect_stall(log, cfg).size(), 1u);
}

TEST(StallDetector, SeparateEventsForSeparateStops) {
    auto speed = [](double t) { return (t < 6.0 || (t > 10.0 && t < 16.0)) ? 0.0 : 1.0; };
    const auto log = synthetic_log(20, 0.1, speed);
    EXPECT_EQ(detect_stall(log, StallConfig{}).size(), 2u);
}

TEST(Metrics, SingleRecord) {
    TrajectoryLog log;
    log.records.emplace_back();
    Scenario s;
    const RunMetrics m = compute_metrics(log, s);
    EXPECT_EQ(m.path_length, 0.0);
    EXPECT_EQ(m.control_effort, 0.0);
    EXPECT_EQ(m.steps, 1u);
}

TEST(Metrics, ClearanceIsDistanceMinusHardRadius) {
    Scenario s;
    Obstacle o;
    o.hard_radius = 1.5;
    o.influence_radius = 4;
    s.obstacles = {o};
    TrajectoryLog log;
    for (double d : {6.0, 3.5, 4.0}) {
        StepRecord r;
        r.obstacle_distances = {d};
        r.goal_distance = 5;
        log.records.push_back(r);
    }
    EXPECT_DOUBLE_EQ(compute_metrics(log, s).min_clearance[0], 2.0);
}

TEST(ClosedLoop, OpenFieldReachesGoal) {
    const Scenario s = open_field();
    const auto log = run_closed_loop(s);
    ASSERT_EQ(log.outcome, Outcome::GoalReached);
    EXPECT_LT(log.records.back().goal_distance, s.goal.capture_radius);
    const RunMetrics m = compute_metrics(log, s);
    ASSERT_TRUE(m.time_to_goal.has_value());
    EXPECT_NEAR(m.path_length, 10.0 - s.goal.capture_radius, s.mpc.dt * s.mpc.v_max);
    EXPECT_TRUE(m.stall_events.empty());
}

TEST(ClosedLoop, TimestampsAreStepTimesDt) {
    const auto log = run_closed_loop(open_field());
    for (const StepRecord& r : log.records) EXPECT_EQ(r.t, static_cast<double>(r.step) * log.dt);
}

TEST(ClosedLoop, Deterministic) {
    Scenario s = open_field();
    Obstacle o;
    o.center = Vec3(5, 0.4, 0);
    o.velocity = Vec3(0, -0.1, 0);
    o.influence_radius = 3;
    o.hard_radius = 0.5;
    s.obstacles = {o};
    const auto a = run_closed_loop(s);
    const auto b = run_closed_loop(s);
    ASSERT_EQ(a.records.size(), b.records.size());
    for (std::size_t i = 0; i < a.records.size(); ++i) {
        EXPECT_EQ(a.records[i].state.position, b.records[i].state.position);
        EXPECT_EQ(a.records[i].control, b.records[i].control);
    }
}

TEST(ClosedLoop, GoalDistanceDecreasesAfterTransient) {
    const auto log = run_closed_loop(open_field());
    const std::size_t n = log.records.size();
    for (std::size_t i = n / 5 + 1; i < n; ++i)
        EXPECT_LT(log.records[i].goal_distance, log.records[i - 1].goal_distance) << "step " << i;
}

TEST(ClosedLoop, ControlsAndVelocitiesRespectLimits) {
    Scenario s = open_field();
    s.start.velocity = Vec3(0, 2.5, 0);
    Obstacle o;
    o.center = Vec3(5, 0.3, 0);
    o.influence_radius = 3;
    o.hard_radius = 0.5;
    s.obstacles = {o};
    const auto log = run_closed_loop(s);
    double slack = 0.0;
    for (const StepRecord& r : log.records) {
        EXPECT_LE(r.control.lpNorm<Eigen::Infinity>(), s.mpc.a_max + 1e-9);
        slack = std::max(0.0, r.state.velocity.lpNorm<Eigen::Infinity>() - s.mpc.v_max);
        if (r.step > 5) EXPECT_LE(slack, 1e-9) << "step " << r.step;
        if (r.solver_status) EXPECT_EQ(*r.solver_status, QpStatus::Optimal);
    }
}

TEST(ClosedLoop, TimeoutWhenTooShort) {
    Scenario s = open_field();
    s.t_max = 1.0;
    const auto log = run_closed_loop(s);
    EXPECT_EQ(log.outcome, Outcome::Timeout);
    EXPECT_EQ(log.records.back().step, 10);
}

TEST(Snapshots, FractionalAndAbsolute) {
    const auto log = synthetic_log(10, 0.1, [](double t) { return t; });
    const std::vector<double> f{0.25, 0.5, 1.0};
    const auto a = snapshot_records(log, f, true);
    ASSERT_EQ(a.size(), 3u);
    EXPECT_NEAR(a[0].t, 2.5, 1e-12);
    EXPECT_NEAR(a[2].t, 10.0, 1e-12);
    const std::vector<double> t{3.0, 99.0};
    const auto b = snapshot_records(log, t, false);
    EXPECT_NEAR(b[0].t, 3.0, 1e-12);
    EXPECT_NEAR(b[1].t, 10.0, 1e-12);
}
