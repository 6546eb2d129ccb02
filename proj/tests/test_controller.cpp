#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <random>

#include "teleop/controller.hpp"
#include "teleop/manipulator.hpp"

using namespace teleop;

namespace {

JointVector random_vec(std::mt19937& rng, double lo, double hi) {
  std::uniform_real_distribution<double> d(lo, hi);
  return JointVector{d(rng), d(rng)};
}

} // namespace

TEST_CASE("gain builders produce validated scaled-identity matrices") {
  const GainSet u = GainSet::uniform(3, 20.0, 15.0);
  REQUIRE(u.slave_count() == 3);
  CHECK_NOTHROW(u.validate());
  for (int i = 0; i < 3; ++i) {
    CHECK((u.kp[i] - 20.0 * JointMatrix::Identity()).cwiseAbs().maxCoeff() == 0.0);
    CHECK((u.kd[i] - 15.0 * JointMatrix::Identity()).cwiseAbs().maxCoeff() == 0.0);
  }
  const GainSet s = GainSet::scaled_identity({10.0, 20.0, 30.0}, {20.0, 20.0, 20.0});
  CHECK(s.kp[2](0, 0) == 30.0);
  CHECK(s.kp[2](0, 1) == 0.0);
  CHECK_NOTHROW(s.validate());
}

TEST_CASE("gain validation rejects mismatched, asymmetric, or indefinite gains") {
  GainSet g = GainSet::uniform(2, 20.0, 20.0);
  g.kd.pop_back();
  CHECK_THROWS_AS(g.validate(), std::invalid_argument);

  g = GainSet::uniform(2, 20.0, 20.0);
  g.kp[0](0, 1) = 0.5; // asymmetric
  CHECK_THROWS_AS(g.validate(), std::invalid_argument);

  g = GainSet::uniform(2, 20.0, 20.0);
  g.kp[1] = -JointMatrix::Identity(); // negative definite
  CHECK_THROWS_AS(g.validate(), std::invalid_argument);
}

TEST_CASE("scaled-identity detection reads back scalars and rejects general gains") {
  const GainSet s = GainSet::scaled_identity({10.0, 25.0}, {5.0, 5.0});
  std::vector<double> kp, kd;
  REQUIRE(try_scaled_identity(s, kp, kd));
  CHECK(kp == std::vector<double>{10.0, 25.0});
  CHECK(kd == std::vector<double>{5.0, 5.0});

  GainSet general = GainSet::uniform(2, 20.0, 20.0);
  general.kp[0] << 2.0, 0.1, 0.1, 1.0; // SPD but not a scaled identity
  CHECK_NOTHROW(general.validate());
  CHECK_FALSE(try_scaled_identity(general, kp, kd));
  CHECK_THROWS_AS(require_scaled_identity(general, kp, kd), UnsupportedGains);
}

TEST_CASE("formation offsets must sum to zero and be pairwise distinct") {
  for (int N : {2, 3, 5, 8}) {
    const FormationGeometry f = FormationGeometry::default_for(N);
    REQUIRE(f.slave_count() == N);
    CHECK_NOTHROW(f.validate());
  }
  FormationGeometry bad;
  bad.offsets = {JointVector{0.1, 0.0}, JointVector{0.1, 0.0}}; // not zero-sum
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad.offsets = {JointVector::Zero(), JointVector::Zero()}; // duplicates
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

  const FormationGeometry f3 = FormationGeometry::default_for(3);
  const JointVector q{0.4, -0.2};
  CHECK((f3.corrected(1, q) - (q - f3.offsets[1])).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("master law returns exactly the gravity term at zero error") {
  const ManipulatorParams params;
  const GainSet gains = GainSet::uniform(3, 20.0, 20.0);
  const FormationGeometry formation = FormationGeometry::default_for(3);
  const JointVector q_m{0.3, -0.9};
  const std::vector<JointVector> held(3, q_m); // every register equals q_m
  const JointVector g = gravity_vector(params, q_m);
  const JointVector tau =
      master_control(gains, formation, q_m, JointVector::Zero(), held, g);
  CHECK((tau - g).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("master law hand-computed value") {
  const GainSet gains = GainSet::uniform(2, 20.0, 20.0);
  const FormationGeometry formation = FormationGeometry::default_for(2);
  const std::vector<JointVector> held(2, JointVector::Zero());
  const JointVector tau =
      master_control(gains, formation, JointVector{1.0, 0.0},
                     JointVector::Zero(), held, JointVector::Zero());
  CHECK(tau(0) == doctest::Approx(-20.0).epsilon(1e-14));
  CHECK(std::abs(tau(1)) < 1e-14);
}

TEST_CASE("master torque is invariant to fleet size with identical slaves") {
  const JointVector q_m{0.7, 0.1};
  const JointVector dq_m{-0.2, 0.5};
  const JointVector held_value{0.2, -0.3};
  JointVector tau2, tau4;
  {
    const GainSet gains = GainSet::uniform(2, 18.0, 7.0);
    const std::vector<JointVector> held(2, held_value);
    tau2 = master_control(gains, FormationGeometry::default_for(2), q_m, dq_m,
                          held, JointVector::Zero());
  }
  {
    const GainSet gains = GainSet::uniform(4, 18.0, 7.0);
    const std::vector<JointVector> held(4, held_value);
    tau4 = master_control(gains, FormationGeometry::default_for(4), q_m, dq_m,
                          held, JointVector::Zero());
  }
  CHECK((tau2 - tau4).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("master torque is permutation-invariant with identical gains") {
  auto rng = std::mt19937{42};
  const GainSet gains = GainSet::uniform(3, 20.0, 20.0);
  const FormationGeometry formation = FormationGeometry::default_for(3);
  const JointVector q_m = random_vec(rng, -1.0, 1.0);
  const JointVector dq_m = random_vec(rng, -1.0, 1.0);
  std::vector<JointVector> held{random_vec(rng, -1.0, 1.0),
                                random_vec(rng, -1.0, 1.0),
                                random_vec(rng, -1.0, 1.0)};
  const JointVector base =
      master_control(gains, formation, q_m, dq_m, held, JointVector::Zero());
  std::rotate(held.begin(), held.begin() + 1, held.end());
  const JointVector rotated =
      master_control(gains, formation, q_m, dq_m, held, JointVector::Zero());
  CHECK((base - rotated).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("slave law returns exactly the gravity term at the formation target") {
  const ManipulatorParams params;
  const GainSet gains = GainSet::uniform(3, 20.0, 20.0);
  const FormationGeometry formation = FormationGeometry::default_for(3);
  const JointVector held_master{0.25, -0.4};
  for (int i = 0; i < 3; ++i) {
    const JointVector q_si = held_master + formation.offsets[i];
    const JointVector g = gravity_vector(params, q_si);
    const JointVector tau = slave_control(gains, formation, i, q_si,
                                          JointVector::Zero(), held_master, g);
    CHECK((tau - g).cwiseAbs().maxCoeff() < 1e-14);
  }
}

TEST_CASE("slave law hand-computed value at its own offset") {
  GainSet gains = GainSet::uniform(2, 20.0, 20.0);
  FormationGeometry formation;
  formation.offsets = {JointVector{0.1, -0.3}, JointVector{-0.1, 0.3}};
  const JointVector tau =
      slave_control(gains, formation, 0, JointVector{0.1, -0.3},
                    JointVector::Zero(), JointVector::Zero(), JointVector::Zero());
  CHECK(tau.cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("both laws are affine with slopes -Kp and -Kd") {
  auto rng = std::mt19937{7};
  const GainSet gains = GainSet::scaled_identity({12.0, 30.0}, {6.0, 9.0});
  const FormationGeometry formation = FormationGeometry::default_for(2);
  const JointVector q = random_vec(rng, -1.0, 1.0);
  const JointVector dq = random_vec(rng, -1.0, 1.0);
  const JointVector held = random_vec(rng, -1.0, 1.0);

  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 2; ++j) {
      JointVector e = JointVector::Zero();
      e(j) = 1.0;
      const JointVector dpos =
          slave_control(gains, formation, i, q + e, dq, held, JointVector::Zero()) -
          slave_control(gains, formation, i, q, dq, held, JointVector::Zero());
      CHECK((dpos + gains.kp[i] * e).cwiseAbs().maxCoeff() < 1e-12);
      const JointVector dvel =
          slave_control(gains, formation, i, q, dq + e, held, JointVector::Zero()) -
          slave_control(gains, formation, i, q, dq, held, JointVector::Zero());
      CHECK((dvel + gains.kd[i] * e).cwiseAbs().maxCoeff() < 1e-12);
    }
  }

  // Master law: slope -avg(Kp) in q_m and -avg(Kd) in dq_m.
  const std::vector<JointVector> regs{held, -held};
  const JointMatrix kp_avg = 0.5 * (gains.kp[0] + gains.kp[1]);
  const JointMatrix kd_avg = 0.5 * (gains.kd[0] + gains.kd[1]);
  for (int j = 0; j < 2; ++j) {
    JointVector e = JointVector::Zero();
    e(j) = 1.0;
    const JointVector dpos =
        master_control(gains, formation, q + e, dq, regs, JointVector::Zero()) -
        master_control(gains, formation, q, dq, regs, JointVector::Zero());
    CHECK((dpos + kp_avg * e).cwiseAbs().maxCoeff() < 1e-12);
    const JointVector dvel =
        master_control(gains, formation, q, dq + e, regs, JointVector::Zero()) -
        master_control(gains, formation, q, dq, regs, JointVector::Zero());
    CHECK((dvel + kd_avg * e).cwiseAbs().maxCoeff() < 1e-12);
  }
}
