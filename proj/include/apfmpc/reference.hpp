#pragma once

#include <span>
#include <vector>

#include <Eigen/Core>

#include "apfmpc/potential_field.hpp"

namespace apfmpc {

/// Field magnitude at or below which a virtual point does not move.
inline constexpr double kForceEpsilon = 1e-9;

/// N+1 reference positions (index 0 is the current position) with implied
/// zero reference velocity, spaced dt apart in time.
struct ReferenceTrajectory {
    std::vector<Vec3> points;
    double dt = 0.1;
    /// Steps where the field was degenerate and the point was repeated.
    int virtual_stalls = 0;

    int horizon() const { return static_cast<int>(points.size()) - 1; }

    /// Stacked 6(N+1) state reference [p_0, 0, p_1, 0, ...].
    Eigen::VectorXd stacked_states() const {
        Eigen::VectorXd x = Eigen::VectorXd::Zero(6 * static_cast<Eigen::Index>(points.size()));
        for (std::size_t i = 0; i < points.size(); ++i) x.segment<3>(6 * static_cast<Eigen::Index>(i)) = points[i];
        return x;
    }
};

inline std::vector<Obstacle> advance_obstacles(std::span<const Obstacle> obstacles, double t) {
    std::vector<Obstacle> out(obstacles.begin(), obstacles.end());
    for (Obstacle& o : out) o.center += o.velocity * t;
    return out;
}

/// Walks the field from the current position in fixed `step_size` strides
/// along the normalized total force. Each virtual point carries the UAV's
/// current velocity, and obstacles are extrapolated at constant velocity to
/// the matching time.
inline ReferenceTrajectory generate_reference(const UavState& uav, std::span<const Obstacle> obstacles,
                                              const Goal& goal, const ApfParams& params, int horizon,
                                              double step_size, double dt) {
    if (horizon < 1) throw InvalidHorizon("generate_reference: horizon must be >= 1");
    if (!(step_size > 0.0)) throw ValidationError("generate_reference: step_size must be > 0");

    ReferenceTrajectory ref;
    ref.dt = dt;
    ref.points.reserve(static_cast<std::size_t>(horizon) + 1);
    ref.points.push_back(uav.position);

    for (int i = 0; i < horizon; ++i) {
        const Vec3 cur = ref.points.back();
        if ((goal.position - cur).norm() <= step_size) {
            ref.points.push_back(goal.position);
            continue;
        }
        const auto moved = advance_obstacles(obstacles, i * dt);
        const Vec3 f = total_force(UavState{cur, uav.velocity}, moved, goal, params);
        const double n = f.norm();
        if (n <= kForceEpsilon) {
            ++ref.virtual_stalls;
            ref.points.push_back(cur);
            continue;
        }
        ref.points.push_back(cur + (step_size / n) * f);
    }
    return ref;
}

}  // namespace apfmpc
