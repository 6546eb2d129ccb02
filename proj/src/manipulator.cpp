#include "teleop/manipulator.hpp"

#include <cmath>
#include <stdexcept>

namespace teleop {

void ManipulatorParams::validate() const {
  if (!(masses[0] > 0.0) || !(masses[1] > 0.0))
    throw std::invalid_argument("manipulator: link masses must be > 0");
  if (!(lengths[0] > 0.0) || !(lengths[1] > 0.0))
    throw std::invalid_argument("manipulator: link lengths must be > 0");
}

JointMatrix mass_matrix(const ManipulatorParams& p, const JointVector& q) {
  const double m1 = p.masses[0], m2 = p.masses[1];
  const double l1 = p.lengths[0], l2 = p.lengths[1];
  const double c2 = std::cos(q[1]);
  JointMatrix M;
  M(0, 0) = l2 * l2 * m2 + l1 * l1 * (m1 + m2) + 2.0 * l1 * l2 * m2 * c2;
  M(0, 1) = l2 * l2 * m2 + l1 * l2 * m2 * c2;
  M(1, 0) = M(0, 1);
  M(1, 1) = l2 * l2 * m2;
  return M;
}

JointMatrix coriolis_matrix(const ManipulatorParams& p, const JointVector& q,
                            const JointVector& dq) {
  const double a = p.lengths[0] * p.lengths[1] * p.masses[1];
  const double s2 = std::sin(q[1]);
  JointMatrix C;
  C(0, 0) = -a * s2 * dq[1];
  C(0, 1) = -a * s2 * (dq[0] + dq[1]);
  C(1, 0) = a * s2 * dq[0];
  C(1, 1) = 0.0;
  return C;
}

JointVector gravity_vector(const ManipulatorParams& p, const JointVector& q) {
  const double m1 = p.masses[0], m2 = p.masses[1];
  const double l1 = p.lengths[0], l2 = p.lengths[1];
  const double g = p.gravity;
  // First entry keeps the composite (l2^2 m2 + l1^2 (m1+m2) - l2^2 m2)/l1
  // factor of the source model; it reduces to g l1 (m1+m2) cos(q1).
  const double shoulder_elbow = (1.0 / l2) * g * l2 * l2 * m2 * std::cos(q[0] + q[1]);
  const double shoulder =
      (1.0 / l1) * g * (l2 * l2 * m2 + l1 * l1 * (m1 + m2) - l2 * l2 * m2) *
      std::cos(q[0]);
  return JointVector(shoulder_elbow + shoulder, shoulder_elbow);
}

JointVector forward_dynamics(const ManipulatorParams& p,
                             const ManipulatorState& s,
                             const JointVector& applied_torque,
                             const JointVector& external_force) {
  const JointMatrix M = mass_matrix(p, s.q);
  // 2x2 symmetric positive-definite solve; reject a non-PD inertia matrix.
  const double a = M(0, 0), b = M(0, 1), d = M(1, 1);
  const double det = a * d - b * b;
  if (!(a > 1e-12) || !(det > 1e-12))
    throw std::runtime_error("manipulator: inertia matrix not positive definite");
  const JointVector rhs = external_force + applied_torque -
                          coriolis_matrix(p, s.q, s.dq) * s.dq -
                          gravity_vector(p, s.q);
  return JointVector((d * rhs[0] - b * rhs[1]) / det,
                     (a * rhs[1] - b * rhs[0]) / det);
}

JointVector end_effector(const ManipulatorParams& p, const JointVector& q) {
  const double l1 = p.lengths[0], l2 = p.lengths[1];
  return JointVector(l1 * std::cos(q[0]) + l2 * std::cos(q[0] + q[1]),
                     l1 * std::sin(q[0]) + l2 * std::sin(q[0] + q[1]));
}

JointMatrix jacobian(const ManipulatorParams& p, const JointVector& q) {
  const double l1 = p.lengths[0], l2 = p.lengths[1];
  const double s1 = std::sin(q[0]), c1 = std::cos(q[0]);
  const double s12 = std::sin(q[0] + q[1]), c12 = std::cos(q[0] + q[1]);
  JointMatrix J;
  J(0, 0) = -l1 * s1 - l2 * s12;
  J(0, 1) = -l2 * s12;
  J(1, 0) = l1 * c1 + l2 * c12;
  J(1, 1) = l2 * c12;
  return J;
}

double coriolis_norm_bound(const ManipulatorParams& p) {
  return 2.0 * p.lengths[0] * p.lengths[1] * p.masses[1];
}

} // namespace teleop
