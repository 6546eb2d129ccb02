#pragma once

#include <Eigen/Dense>

namespace teleop {

// Joint-space quantities of one 2-DOF arm (positions rad, velocities rad/s,
// torques N·m). The explicit planar model is two-link, so the joint dimension
// is fixed at compile time.
using JointVector = Eigen::Vector2d;
using JointMatrix = Eigen::Matrix2d;

// Dense dynamically-sized matrices for the stability-analysis blocks.
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

inline constexpr int kJointCount = 2;

} // namespace teleop
