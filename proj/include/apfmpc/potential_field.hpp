#pragma once

// Repulsive and attractive artificial potential fields.
//
// Three repulsion models are provided: the classical gradient of
// 0.5 * k_rep * (1/d - 1/d_s)^2, the same force scaled by a heading weight
// 1 + gamma * (1 + cos theta) / 2, and the heading weight further multiplied
// by (2 + k * tanh(G)) where G is the approach rate along the separation
// vector. The weight scales the classical force vector; its own spatial
// gradient is not included.

#include <cmath>
#include <span>
#include <string>
#include <string_view>

#include "apfmpc/geometry.hpp"

namespace apfmpc {

enum class ApfMode { Basic, DirectionWeighted, DirectionVelocityWeighted };

/// Which sign of the approach rate raises the weight. `RecedingPositive` feeds
/// tanh(G), so a separating pair (G > 0) weighs more; `ThreatPositive` feeds
/// tanh(-G) so closing obstacles weigh more.
enum class ApproachSign { RecedingPositive, ThreatPositive };

/// Below this UAV speed the heading angle is undefined and the heading
/// factor falls back to 1 (m/s).
inline constexpr double kSpeedEpsilon = 1e-6;

struct ApfParams {
    double k_rep = 20.0;
    double k_att = 1.0;
    double gamma = 1.0;
    double k = 1.0;
    ApfMode mode = ApfMode::DirectionVelocityWeighted;
    ApproachSign approach_sign = ApproachSign::ThreatPositive;
    double att_saturation_radius = 2.0;

    /// Throws ValidationError naming the first violated constraint.
    void validate() const {
        if (!(k_rep > 0.0)) throw ValidationError("k_rep must be > 0");
        if (!(k_att > 0.0)) throw ValidationError("k_att must be > 0");
        if (!(gamma >= 0.0) || !std::isfinite(gamma)) throw ValidationError("gamma must be >= 0");
        if (!(k >= 0.0 && k <= 1.0)) throw ValidationError("k must lie in [0, 1]");
        if (!(att_saturation_radius > 0.0)) throw ValidationError("att_saturation_radius must be > 0");
    }
};

inline std::string_view to_string(ApfMode mode) {
    switch (mode) {
        case ApfMode::Basic: return "basic";
        case ApfMode::DirectionWeighted: return "direction";
        case ApfMode::DirectionVelocityWeighted: return "direction-velocity";
    }
    return "unknown";
}

inline std::string_view to_string(ApproachSign sign) {
    return sign == ApproachSign::RecedingPositive ? "receding-positive" : "threat-positive";
}

/// Inverse of to_string(ApfMode); throws ValidationError on unknown names.
inline ApfMode parse_apf_mode(std::string_view name) {
    if (name == "basic") return ApfMode::Basic;
    if (name == "direction") return ApfMode::DirectionWeighted;
    if (name == "direction-velocity") return ApfMode::DirectionVelocityWeighted;
    throw ValidationError("unknown APF mode '" + std::string(name) +
                          "' (expected basic|direction|direction-velocity)");
}

inline ApproachSign parse_approach_sign(std::string_view name) {
    if (name == "receding-positive") return ApproachSign::RecedingPositive;
    if (name == "threat-positive") return ApproachSign::ThreatPositive;
    throw ValidationError("unknown approach_sign '" + std::string(name) +
                          "' (expected receding-positive|threat-positive)");
}

inline double repulsive_potential(double d, double d_s, double k_rep) {
    if (!(d > 0.0)) throw NonPositiveDistance("repulsive_potential: distance must be > 0");
    if (d > d_s) return 0.0;
    const double s = 1.0 / d - 1.0 / d_s;
    return 0.5 * k_rep * s * s;
}

/// Negative gradient of repulsive_potential with respect to the UAV position.
inline Vec3 repulsive_force_basic(const Vec3& p, const Vec3& p_o, double d_s, double k_rep) {
    const Vec3 r = p - p_o;
    const double d = r.norm();
    if (!(d > kLengthEpsilon)) throw DegenerateVector("repulsive_force_basic: UAV at obstacle center");
    if (d > d_s) return Vec3::Zero();
    return (k_rep * (1.0 / d - 1.0 / d_s) / (d * d)) * (r / d);
}

/// Quadratic well within `sat_radius` of the goal, constant-magnitude cone beyond.
inline Vec3 attractive_force(const Vec3& p, const Goal& goal, double k_att, double sat_radius) {
    const Vec3 e = goal.position - p;
    const double n = e.norm();
    if (n <= sat_radius) return k_att * e;
    return (k_att * sat_radius / n) * e;
}

inline double direction_weight(double theta, double gamma) {
    return 1.0 + gamma * (1.0 + std::cos(theta)) / 2.0;
}

/// Relative velocity projected on the unit vector from obstacle to UAV.
/// Negative while the separation shrinks.
inline double approach_rate(const UavState& uav, const Obstacle& obstacle) {
    const Vec3 r_e = uav.position - effective_center(obstacle, uav.position);
    const Vec3 v_e = uav.velocity - obstacle.velocity;
    return v_e.dot(unit_vector(r_e));
}

inline double combined_weight(double theta, double g_rate, double gamma, double k, ApproachSign sign) {
    const double g = sign == ApproachSign::ThreatPositive ? -g_rate : g_rate;
    return direction_weight(theta, gamma) * (2.0 + k * std::tanh(g));
}

/// Per-obstacle quantities that feed the weights.
struct ThreatContext {
    /// Angle between the UAV velocity and the UAV-to-obstacle vector;
    /// 0 means the obstacle lies dead ahead. Empty when the UAV is
    /// effectively stationary.
    bool has_heading = false;
    double theta = 0.0;
    double g_rate = 0.0;
};

inline ThreatContext threat_context(const UavState& uav, const Obstacle& obstacle) {
    ThreatContext ctx;
    const Vec3 to_obstacle = effective_center(obstacle, uav.position) - uav.position;
    if (uav.velocity.norm() > kSpeedEpsilon) {
        ctx.has_heading = true;
        ctx.theta = angle_between(uav.velocity, to_obstacle);
    }
    ctx.g_rate = approach_rate(uav, obstacle);
    return ctx;
}

/// Scalar multiplying the classical repulsive force for this mode.
inline double repulsion_weight(const UavState& uav, const Obstacle& obstacle, const ApfParams& params) {
    if (params.mode == ApfMode::Basic) return 1.0;
    const ThreatContext ctx = threat_context(uav, obstacle);
    const double heading = ctx.has_heading ? direction_weight(ctx.theta, params.gamma) : 1.0;
    if (params.mode == ApfMode::DirectionWeighted) return heading;
    const double g = params.approach_sign == ApproachSign::ThreatPositive ? -ctx.g_rate : ctx.g_rate;
    return heading * (2.0 + params.k * std::tanh(g));
}

inline Vec3 weighted_repulsive_force(const UavState& uav, const Obstacle& obstacle, const ApfParams& params) {
    const Vec3 p_o = effective_center(obstacle, uav.position);
    const Vec3 base = repulsive_force_basic(uav.position, p_o, obstacle.influence_radius, params.k_rep);
    if (params.mode == ApfMode::Basic || base.isZero(0.0)) return base;
    return repulsion_weight(uav, obstacle, params) * base;
}

inline Vec3 total_force(const UavState& uav, std::span<const Obstacle> obstacles, const Goal& goal,
                        const ApfParams& params) {
    Vec3 f = attractive_force(uav.position, goal, params.k_att, params.att_saturation_radius);
    for (const Obstacle& o : obstacles) f += weighted_repulsive_force(uav, o, params);
    return f;
}

}  // namespace apfmpc
