#pragma once

#include <stdexcept>
#include <vector>

#include "teleop/types.hpp"

namespace teleop {

// Raised when an operation supports only gains of the form k*I and receives
// general matrix gains.
struct UnsupportedGains : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Proportional/damping gain matrices, one pair per slave.
struct GainSet {
  std::vector<JointMatrix> kp; // K^p_i, symmetric positive definite [N·m/rad]
  std::vector<JointMatrix> kd; // K^d_i, symmetric positive definite [N·m·s/rad]

  int slave_count() const { return static_cast<int>(kp.size()); }

  // Builds gains k_p[i]*I, k_d[i]*I.
  static GainSet scaled_identity(const std::vector<double>& kp_scalars,
                                 const std::vector<double>& kd_scalars);
  // Same scalar for every slave.
  static GainSet uniform(int slave_count, double kp_scalar, double kd_scalar);

  // Throws std::invalid_argument unless every gain matrix is symmetric
  // positive definite and kp/kd counts match.
  void validate() const;
};

// If every gain is exactly of the form c*I (within 1e-12 relative), fills the
// scalar vectors and returns true; otherwise returns false.
bool try_scaled_identity(const GainSet& gains, std::vector<double>& kp_out,
                         std::vector<double>& kd_out);

// Like try_scaled_identity but throws UnsupportedGains on failure.
void require_scaled_identity(const GainSet& gains, std::vector<double>& kp_out,
                             std::vector<double>& kd_out);

// Formation offsets gamma_i of the slave fleet; they sum to zero and are
// pairwise distinct.
struct FormationGeometry {
  std::vector<JointVector> offsets;

  int slave_count() const { return static_cast<int>(offsets.size()); }

  // Throws std::invalid_argument if the offsets do not sum to zero within
  // 1e-12 or are not pairwise distinct.
  void validate() const;

  // Formation-corrected slave position: q_si - gamma_i (0-based i).
  JointVector corrected(int i, const JointVector& q_si) const {
    return q_si - offsets.at(static_cast<size_t>(i));
  }

  // Built-in offsets: the reference trio for N == 3, otherwise points evenly
  // spaced on a circle of radius 0.2 (sum to zero, pairwise distinct).
  static FormationGeometry default_for(int slave_count);
};

// Master torque: tau_m = -(1/N) sum_i [K^p_i (q_m - held_i) + K^d_i dq_m]
//                + gravity_comp.
// held_slave_positions are the zero-order-hold registers of the (already
// formation-corrected) slave positions.
JointVector master_control(const GainSet& gains,
                           const FormationGeometry& formation,
                           const JointVector& q_m, const JointVector& dq_m,
                           const std::vector<JointVector>& held_slave_positions,
                           const JointVector& gravity_comp);

// Slave torque: tau_si = -K^p_i (q_si - gamma_i - held_master)
//               - K^d_i dq_si + gravity_comp  (0-based i).
JointVector slave_control(const GainSet& gains,
                          const FormationGeometry& formation, int i,
                          const JointVector& q_si, const JointVector& dq_si,
                          const JointVector& held_master_position,
                          const JointVector& gravity_comp);

} // namespace teleop
