#pragma once

// Plant models. The control loop uses the discrete double integrator; the
// rigid-body equations are kept for validating attitude/thrust conventions
// and are not stepped by the simulator.

#include <array>
#include <cmath>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/LU>

#include "apfmpc/geometry.hpp"

namespace apfmpc {

using Mat3 = Eigen::Matrix3d;
using Mat6 = Eigen::Matrix<double, 6, 6>;
using Mat63 = Eigen::Matrix<double, 6, 3>;

struct PlantConfig {
    double dt = 0.1;
    double v_max = 2.0;
    double a_max = 2.0;
};

/// Exact zero-order-hold step of p'' = a: p += v dt + a dt^2 / 2, v += a dt.
inline UavState double_integrator_step(const UavState& x, const Vec3& a, double dt) {
    UavState out;
    out.position = x.position + x.velocity * dt + 0.5 * dt * dt * a;
    out.velocity = x.velocity + a * dt;
    return out;
}

inline Mat6 transition_matrix(double dt) {
    Mat6 a = Mat6::Identity();
    a.block<3, 3>(0, 3) = dt * Mat3::Identity();
    return a;
}

inline Mat63 input_matrix(double dt) {
    Mat63 b;
    b.block<3, 3>(0, 0) = 0.5 * dt * dt * Mat3::Identity();
    b.block<3, 3>(3, 0) = dt * Mat3::Identity();
    return b;
}

inline Eigen::Matrix<double, 6, 1> stack_state(const UavState& x) {
    Eigen::Matrix<double, 6, 1> s;
    s << x.position, x.velocity;
    return s;
}

/// Stacked prediction X = M x0 + C U over a horizon of `horizon` steps.
/// X has 6(N+1) rows (step 0 first), U has 3N rows.
struct PredictionMatrices {
    Eigen::MatrixXd M;
    Eigen::MatrixXd C;
};

inline PredictionMatrices prediction_matrices(int horizon, double dt) {
    if (horizon < 1) throw InvalidHorizon("prediction_matrices: horizon must be >= 1");
    const Eigen::Index n = horizon;
    const Mat6 a = transition_matrix(dt);
    const Mat63 b = input_matrix(dt);

    PredictionMatrices pm;
    pm.M = Eigen::MatrixXd::Zero(6 * (n + 1), 6);
    pm.C = Eigen::MatrixXd::Zero(6 * (n + 1), 3 * n);

    // powers[k] = A^k
    std::vector<Mat6> powers(static_cast<std::size_t>(n) + 1);
    powers[0] = Mat6::Identity();
    for (Eigen::Index k = 1; k <= n; ++k) powers[static_cast<std::size_t>(k)] = a * powers[static_cast<std::size_t>(k - 1)];

    for (Eigen::Index i = 0; i <= n; ++i) {
        pm.M.block<6, 6>(6 * i, 0) = powers[static_cast<std::size_t>(i)];
        for (Eigen::Index j = 0; j < i; ++j)
            pm.C.block<6, 3>(6 * i, 3 * j) = powers[static_cast<std::size_t>(i - 1 - j)] * b;
    }
    return pm;
}

// --- rigid body -----------------------------------------------------------

struct RigidBodyParams {
    double mass = 1.0;
    double gravity = 9.81;
    Mat3 inertia = Mat3::Identity();
    double arm_length = 0.2;

    void validate() const {
        if (!(mass > 0.0)) throw ValidationError("mass must be > 0");
        if (!(arm_length > 0.0)) throw ValidationError("arm_length must be > 0");
        if (!inertia.isApprox(inertia.transpose(), 1e-12))
            throw ValidationError("inertia must be symmetric");
        if (Eigen::LLT<Mat3>(inertia).info() != Eigen::Success)
            throw SingularInertia("inertia must be positive definite");
    }
};

/// Roll, pitch, yaw (rad) and body rates (rad/s).
struct AttitudeState {
    double roll = 0.0;
    double pitch = 0.0;
    double yaw = 0.0;
    Vec3 body_rates = Vec3::Zero();
};

struct RotorCommand {
    std::array<double, 4> lift{};     // F_1..F_4 (N)
    std::array<double, 4> moment{};   // M_1..M_4 (N m)

    double total_thrust() const { return lift[0] + lift[1] + lift[2] + lift[3]; }
};

/// ZYX body-to-world direction cosine matrix, R = Rz(yaw) Ry(pitch) Rx(roll).
inline Mat3 rotation_body_to_world(double roll, double pitch, double yaw) {
    const double cr = std::cos(roll), sr = std::sin(roll);
    const double cp = std::cos(pitch), sp = std::sin(pitch);
    const double cy = std::cos(yaw), sy = std::sin(yaw);
    Mat3 r;
    r << cy * cp, cy * sp * sr - sy * cr, cy * sp * cr + sy * sr,
         sy * cp, sy * sp * sr + cy * cr, sy * sp * cr - cy * sr,
         -sp,     cp * sr,                cp * cr;
    return r;
}

/// World-frame acceleration for a z-down world: gravity along +z, thrust
/// along body -z. The force balance is formed before dividing by mass so a
/// hover command cancels exactly.
inline Vec3 linear_acceleration(const Mat3& body_to_world, double thrust, const RigidBodyParams& params) {
    const Vec3 weight(0.0, 0.0, params.mass * params.gravity);
    const Vec3 force = weight + body_to_world * Vec3(0.0, 0.0, -thrust);
    return force / params.mass;
}

/// Body torque from rotor lifts (plus-configuration arms) and drag moments.
inline Vec3 rotor_torque(const RotorCommand& cmd, double arm_length) {
    const auto& f = cmd.lift;
    const auto& m = cmd.moment;
    return {arm_length * (f[1] - f[3]), arm_length * (f[0] - f[2]), m[1] + m[3] - m[0] - m[2]};
}

/// Euler's equation J w' = tau - w x J w, solved for w'.
inline Vec3 angular_acceleration(const RotorCommand& cmd, const Vec3& omega, const RigidBodyParams& params) {
    const Eigen::FullPivLU<Mat3> lu(params.inertia);
    if (!lu.isInvertible()) throw SingularInertia("angular_acceleration: inertia is singular");
    const Vec3 rhs = rotor_torque(cmd, params.arm_length) - omega.cross(params.inertia * omega);
    if (rhs.isZero(0.0)) return Vec3::Zero();
    return lu.solve(rhs);
}

}  // namespace apfmpc
