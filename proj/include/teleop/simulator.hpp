#pragma once

#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "teleop/controller.hpp"
#include "teleop/manipulator.hpp"
#include "teleop/network.hpp"
#include "teleop/stability.hpp"

namespace teleop {

// Driving-force pulse of the contact scenario: amplitude on [t_on, t_off).
struct RectanglePulse {
  double amplitude = 25.0; // Cartesian force [N]
  double t_on = 0.5;       // [s]
  double t_off = 8.0;      // [s]
};

// Stiff unilateral wall along the y axis.
struct WallModel {
  double y = 0.3;            // wall plane [m]
  double stiffness = 10000.0; // penalty stiffness [N/m]
};

struct Scenario {
  enum class Kind { free_motion, bounded_force, contact };
  Kind kind = Kind::free_motion;
  double duration = 20.0;
  std::vector<ManipulatorState> initial_states; // master first, then the N slaves
  RectanglePulse pulse; // used by the contact scenario
  WallModel wall;       // used by the contact scenario

  // Free motion from the reference initial conditions (non-zero positions,
  // zero velocities), no external forces.
  static Scenario free_motion_default(int slave_count, double duration = 20.0);
  // Sinusoidal bounded operator force on the master, all states from zero.
  static Scenario bounded_force_default(int slave_count, double duration = 20.0);
  // Rectangle operator force pushing the slaves against the wall.
  static Scenario contact_default(int slave_count, double duration = 10.0);

  void validate(int slave_count) const;
};

struct SimConfig {
  ManipulatorParams master_params;
  ManipulatorParams slave_params; // identical model for every slave arm
  GainSet gains;
  FormationGeometry formation;
  SamplingSchedule schedule;
  Protocol protocol = Protocol::RR;
  TodWeights tod_weights; // used when protocol == TOD
  double step = 1e-3;     // base integration step [s]
  // Rows are recorded every trace_stride-th step; rows at event instants
  // (sampling, arrival, pulse edges) and the final row are always recorded.
  // Lyapunov evaluation wants stride 1 (quadrature at the integration step).
  int trace_stride = 1;

  int slave_count() const { return gains.slave_count(); }

  // Reference setup: two-link arms, uniform gains 20 I, built-in formation,
  // sampling interval 0.14 s with the default delay profile (MAD 0.1).
  static SimConfig defaults(int slave_count, Protocol protocol);

  // Throws std::invalid_argument on inconsistent fields
  // (step <= 0, step > sampling_interval / 10, count mismatches).
  void validate() const;
};

struct TraceRow {
  double t = 0.0;
  JointVector q_m, dq_m;
  std::vector<JointVector> q_s, dq_s;
  int sched = 0; // slave scheduled at the latest sampling instant (1-based)
  std::vector<double> eta_norm; // |eta_i| currently in effect
  double V = std::numeric_limits<double>::quiet_NaN(); // filled post-hoc
  JointVector f_m, tau_m;
  std::vector<JointVector> f_s, tau_s;
  JointVector ee_m;
  std::vector<JointVector> ee_s;
  int event_index = -1; // index into SimTrace::events of the last arrival
};

struct SimTrace {
  int N = 0;
  double step = 0.0;
  std::vector<JointVector> offsets; // formation offsets used by the run
  std::vector<TraceRow> rows;       // strictly increasing t
  std::vector<Transmission> events; // delivered packets in arrival order
};

// Integrates the closed loop (1 master + N slaves, held network registers)
// with event-aligned fixed-step RK4: every sampling instant, arrival instant
// and pulse edge lands exactly on a step boundary. Deterministic.
// Throws std::runtime_error with a diagnostic if the state becomes non-finite.
SimTrace run_simulation(const SimConfig& config, const Scenario& scenario);

// Master driving torque of the bounded-force scenario:
// J_m(q_m)^T [0, 25 + 10 sin t]^T.
JointVector human_force_scenario2(double t, const JointVector& q_m,
                                  const ManipulatorParams& params);

// Unilateral penalty torque of the wall: zero when the end effector is at or
// below the wall, otherwise -J^T [0, stiffness * (y - wall.y)]^T.
JointVector wall_contact_force(const ManipulatorParams& params,
                               const JointVector& q_si,
                               const WallModel& wall = WallModel{});

// Rectangle pulse value at time t.
double rectangle_force_scenario3(double t, const RectanglePulse& pulse = RectanglePulse{});

// Energy-like functional of the RR closed loop at rows[row_index]:
//   V1 = N dq_m' M_m dq_m + sum_i dq_si' M_si dq_si
//   V2 = sum_i (q_m - corrected_i)' K^p_i (q_m - corrected_i)
//   V3 = ramp-weighted history integrals over [t - h_M, t] (master, weight
//        R_m, times N) and [t - h_S, t] (each slave, weight R_si),
// with trapezoidal quadrature over the recorded rows.
// Throws std::invalid_argument when history is insufficient
// (requires t >= arrival of the N-th packet + h_S).
double lyapunov_v_rr(const SimTrace& trace, const SimConfig& config,
                     const LmiVariablesRR& vars, std::size_t row_index);

// Fills TraceRow::V with lyapunov_v_rr wherever it is defined (NaN elsewhere).
void fill_lyapunov_rr(SimTrace& trace, const SimConfig& config,
                      const LmiVariablesRR& vars);

// Extended functional of the TOD closed loop at rows[row_index] (both history
// horizons at h_M): adds the scheduling-error terms sum_i eta_i' Q_i eta_i,
// the jump budget V_G = h_M sum_i int_{s_k}^t dq_si' G_i dq_si, and the
// inter-event term W_e = (t_k - t)/(t_{k+1} - t_k) sum_{j != scheduled}
// eta_j' U_j eta_j (<= 0). Throws std::invalid_argument when the row is before
// the first arrival, lacks h_M of history, or has no next arrival.
double lyapunov_ve_tod(const SimTrace& trace, const SimConfig& config,
                       const LmiVariablesTOD& vars, std::size_t row_index);

// Fills TraceRow::V with lyapunov_ve_tod wherever it is defined.
void fill_lyapunov_ve_tod(SimTrace& trace, const SimConfig& config,
                          const LmiVariablesTOD& vars);

// Left/right values of the extended functional at each arrival instant.
struct JumpRecord {
  double t = 0.0;      // arrival instant
  double before = 0.0; // limit from the left
  double after = 0.0;  // value with the newly installed registers
};
std::vector<JumpRecord> lyapunov_ve_jumps(const SimTrace& trace,
                                          const SimConfig& config,
                                          const LmiVariablesTOD& vars);

struct SteadyStateMetrics {
  std::vector<double> mean_position_error; // per slave: mean |q_m - corrected_i|
  JointVector mean_force_residual;     // per joint: |mean(f_m + (1/N) sum f_si)|
  JointVector mean_abs_master_force;   // per joint: |mean f_m|
  JointVector force_reflection_ratio;  // residual / (|mean f_m| + 1e-9)
  double max_tail_velocity = 0.0;      // max |dq| entry over the window
};

// Averages over the final tail_fraction of the trace.
// Throws std::invalid_argument on an empty trace or tail_fraction outside (0, 1].
SteadyStateMetrics steady_state_metrics(const SimTrace& trace, double tail_fraction);

// Writes the recorded rows as CSV (17-significant-digit floats): header
// t, qm0, qm1, dqm0, dqm1, qs<i>_0, qs<i>_1, dqs<i>_0, dqs<i>_1, ..., sched,
// eta1..etaN, V, fm0, fm1, fs<i>_0, fs<i>_1, ..., taum0, taum1,
// taus<i>_0, taus<i>_1, ..., xm, ym, xs<i>, ys<i>, ...
void write_csv_trace(const SimTrace& trace, const std::string& path);

} // namespace teleop
