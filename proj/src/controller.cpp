#include "teleop/controller.hpp"

#include <cmath>

namespace teleop {

GainSet GainSet::scaled_identity(const std::vector<double>& kp_scalars,
                                 const std::vector<double>& kd_scalars) {
  if (kp_scalars.size() != kd_scalars.size())
    throw std::invalid_argument("gains: kp/kd scalar counts differ");
  GainSet g;
  g.kp.reserve(kp_scalars.size());
  g.kd.reserve(kd_scalars.size());
  for (size_t i = 0; i < kp_scalars.size(); ++i) {
    g.kp.push_back(kp_scalars[i] * JointMatrix::Identity());
    g.kd.push_back(kd_scalars[i] * JointMatrix::Identity());
  }
  g.validate();
  return g;
}

GainSet GainSet::uniform(int slave_count, double kp_scalar, double kd_scalar) {
  return scaled_identity(std::vector<double>(slave_count, kp_scalar),
                         std::vector<double>(slave_count, kd_scalar));
}

namespace {

bool symmetric_positive_definite(const JointMatrix& K) {
  if (std::abs(K(0, 1) - K(1, 0)) > 1e-12 * (1.0 + K.cwiseAbs().maxCoeff()))
    return false;
  return K(0, 0) > 0.0 && K(0, 0) * K(1, 1) - K(0, 1) * K(1, 0) > 0.0;
}

} // namespace

void GainSet::validate() const {
  if (kp.size() != kd.size())
    throw std::invalid_argument("gains: kp/kd counts differ");
  if (kp.empty()) throw std::invalid_argument("gains: empty");
  for (size_t i = 0; i < kp.size(); ++i) {
    if (!symmetric_positive_definite(kp[i]) ||
        !symmetric_positive_definite(kd[i]))
      throw std::invalid_argument(
          "gains: all matrices must be symmetric positive definite");
  }
}

bool try_scaled_identity(const GainSet& gains, std::vector<double>& kp_out,
                         std::vector<double>& kd_out) {
  kp_out.clear();
  kd_out.clear();
  auto scalar_of = [](const JointMatrix& K, double& out) {
    const double scale = 1.0 + K.cwiseAbs().maxCoeff();
    if (std::abs(K(0, 1)) > 1e-12 * scale || std::abs(K(1, 0)) > 1e-12 * scale ||
        std::abs(K(0, 0) - K(1, 1)) > 1e-12 * scale)
      return false;
    out = K(0, 0);
    return true;
  };
  for (size_t i = 0; i < gains.kp.size(); ++i) {
    double p = 0.0, d = 0.0;
    if (!scalar_of(gains.kp[i], p) || !scalar_of(gains.kd[i], d)) return false;
    kp_out.push_back(p);
    kd_out.push_back(d);
  }
  return true;
}

void require_scaled_identity(const GainSet& gains, std::vector<double>& kp_out,
                             std::vector<double>& kd_out) {
  if (!try_scaled_identity(gains, kp_out, kd_out))
    throw UnsupportedGains("general matrix gains unsupported");
}

void FormationGeometry::validate() const {
  if (offsets.empty())
    throw std::invalid_argument("formation: no offsets");
  JointVector sum = JointVector::Zero();
  for (const auto& g : offsets) sum += g;
  if (sum.cwiseAbs().maxCoeff() > 1e-12)
    throw std::invalid_argument("formation: offsets must sum to zero");
  for (size_t i = 0; i < offsets.size(); ++i)
    for (size_t j = i + 1; j < offsets.size(); ++j)
      if ((offsets[i] - offsets[j]).cwiseAbs().maxCoeff() == 0.0)
        throw std::invalid_argument("formation: offsets must be pairwise distinct");
}

FormationGeometry FormationGeometry::default_for(int slave_count) {
  if (slave_count < 2)
    throw std::invalid_argument("formation: at least two slaves required");
  FormationGeometry f;
  if (slave_count == 3) {
    f.offsets = {JointVector(0.1, -0.3), JointVector(-0.3, 0.15),
                 JointVector(0.2, 0.15)};
    return f;
  }
  f.offsets.reserve(static_cast<size_t>(slave_count));
  JointVector sum = JointVector::Zero();
  for (int i = 0; i < slave_count; ++i) {
    const double phi = 2.0 * M_PI * i / slave_count;
    JointVector g(0.2 * std::cos(phi), 0.2 * std::sin(phi));
    if (i + 1 == slave_count) {
      g = -sum; // close the sum exactly against rounding
    }
    sum += g;
    f.offsets.push_back(g);
  }
  f.validate();
  return f;
}

JointVector master_control(const GainSet& gains,
                           const FormationGeometry& formation,
                           const JointVector& q_m, const JointVector& dq_m,
                           const std::vector<JointVector>& held_slave_positions,
                           const JointVector& gravity_comp) {
  const int N = gains.slave_count();
  if (static_cast<int>(held_slave_positions.size()) != N ||
      formation.slave_count() != N)
    throw std::invalid_argument("master_control: slave count mismatch");
  JointVector acc = JointVector::Zero();
  for (int i = 0; i < N; ++i) {
    const size_t ui = static_cast<size_t>(i);
    acc += gains.kp[ui] * (q_m - held_slave_positions[ui]) + gains.kd[ui] * dq_m;
  }
  return -acc / static_cast<double>(N) + gravity_comp;
}

JointVector slave_control(const GainSet& gains,
                          const FormationGeometry& formation, int i,
                          const JointVector& q_si, const JointVector& dq_si,
                          const JointVector& held_master_position,
                          const JointVector& gravity_comp) {
  if (i < 0 || i >= gains.slave_count() || i >= formation.slave_count())
    throw std::invalid_argument("slave_control: index out of range");
  const size_t ui = static_cast<size_t>(i);
  const JointVector corrected = formation.corrected(i, q_si);
  return -(gains.kp[ui] * (corrected - held_master_position)) -
         gains.kd[ui] * dq_si + gravity_comp;
}

} // namespace teleop
