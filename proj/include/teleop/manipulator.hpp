#pragma once

#include <array>

#include "teleop/types.hpp"

namespace teleop {

// Physical constants of one planar two-link revolute arm.
struct ManipulatorParams {
  std::array<double, 2> masses{1.0, 0.5};  // link masses [kg]
  std::array<double, 2> lengths{0.5, 0.3}; // link lengths [m]
  double gravity = 9.81;                   // gravitational acceleration [m/s^2]

  // Throws std::invalid_argument unless all masses and lengths are > 0.
  void validate() const;
};

struct ManipulatorState {
  JointVector q = JointVector::Zero();  // joint positions [rad]
  JointVector dq = JointVector::Zero(); // joint velocities [rad/s]
};

// Inertia matrix M(q); symmetric positive definite for all q.
JointMatrix mass_matrix(const ManipulatorParams& p, const JointVector& q);

// Coriolis/centrifugal matrix C(q, dq); dM/dt - 2C is skew-symmetric.
JointMatrix coriolis_matrix(const ManipulatorParams& p, const JointVector& q,
                            const JointVector& dq);

// Gravity torque vector G(q).
JointVector gravity_vector(const ManipulatorParams& p, const JointVector& q);

// Joint accelerations ddq = M(q)^{-1} (f + tau - C(q,dq) dq - G(q)).
// Throws std::runtime_error if M(q) is not positive definite within 1e-12
// (violates the model's structural property; cannot proceed).
JointVector forward_dynamics(const ManipulatorParams& p,
                             const ManipulatorState& s,
                             const JointVector& applied_torque,
                             const JointVector& external_force);

// Planar end-effector position (x, y) [m].
JointVector end_effector(const ManipulatorParams& p, const JointVector& q);

// Analytic end-effector Jacobian d(x,y)/dq.
JointMatrix jacobian(const ManipulatorParams& p, const JointVector& q);

// Bound c with |C(q, x) y| <= c |x| |y| for all q, x, y: c = 2 l1 l2 m2.
double coriolis_norm_bound(const ManipulatorParams& p);

} // namespace teleop
