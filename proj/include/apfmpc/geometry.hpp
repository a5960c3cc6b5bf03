#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>

#include <Eigen/Core>

#include "apfmpc/errors.hpp"

namespace apfmpc {

/// Position, velocity or acceleration in the world frame (m, m/s, m/s^2).
using Vec3 = Eigen::Vector3d;

/// Below this length a vector has no usable direction (m).
inline constexpr double kLengthEpsilon = 1e-9;

/// Outer-loop state: position and velocity in the world frame.
struct UavState {
    Vec3 position = Vec3::Zero();
    Vec3 velocity = Vec3::Zero();
};

/// How an obstacle moves between control steps.
enum class ObstacleMotion { ConstantVelocity, Bounce };

/// Spherical obstacle. With `vertical_cylinder` set the obstacle extends
/// infinitely along z and all distances are measured in the xy-plane.
struct Obstacle {
    Vec3 center = Vec3::Zero();
    Vec3 velocity = Vec3::Zero();
    double influence_radius = 1.0;  // d_s
    double hard_radius = 0.5;
    bool vertical_cylinder = false;
    ObstacleMotion motion = ObstacleMotion::ConstantVelocity;
};

struct Goal {
    Vec3 position = Vec3::Zero();
    double capture_radius = 0.3;
};

/// Point of the obstacle closest in the sense used for every distance
/// computation: the center itself, or the center lifted to the UAV altitude
/// for vertical cylinders.
inline Vec3 effective_center(const Obstacle& obstacle, const Vec3& p) {
    if (!obstacle.vertical_cylinder) return obstacle.center;
    return {obstacle.center.x(), obstacle.center.y(), p.z()};
}

/// Center distance from `p` to the obstacle.
inline double obstacle_distance(const Obstacle& obstacle, const Vec3& p) {
    return (p - effective_center(obstacle, p)).norm();
}

inline bool is_finite(const Vec3& v) { return v.allFinite(); }

inline Vec3 unit_vector(const Vec3& r, double eps = kLengthEpsilon) {
    const double n = r.norm();
    if (!(n > eps)) throw DegenerateVector("unit_vector: vector norm below epsilon");
    return r / n;
}

/// Angle in [0, pi] between two vectors, via the clamped normalized dot product.
inline double angle_between(const Vec3& a, const Vec3& b, double eps = kLengthEpsilon) {
    const double na = a.norm();
    const double nb = b.norm();
    if (!(na > eps) || !(nb > eps)) throw DegenerateVector("angle_between: near-zero input");
    const double c = std::clamp(a.dot(b) / (na * nb), -1.0, 1.0);
    return std::acos(c);
}

}  // namespace apfmpc
