#include "teleop/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace teleop {

namespace {

constexpr double kEventTol = 1e-9; // event/step alignment tolerance [s]

JointVector cartesian_to_joint(const ManipulatorParams& params,
                               const JointVector& q, double fy) {
  return jacobian(params, q).transpose() * JointVector(0.0, fy);
}

JointVector master_force(const SimConfig& config, const Scenario& scenario,
                         double t, const JointVector& q_m) {
  switch (scenario.kind) {
    case Scenario::Kind::free_motion:
      return JointVector::Zero();
    case Scenario::Kind::bounded_force:
      return human_force_scenario2(t, q_m, config.master_params);
    case Scenario::Kind::contact:
      return cartesian_to_joint(config.master_params, q_m,
                                rectangle_force_scenario3(t, scenario.pulse));
  }
  return JointVector::Zero();
}

JointVector slave_force(const SimConfig& config, const Scenario& scenario,
                        const JointVector& q_si) {
  if (scenario.kind != Scenario::Kind::contact) return JointVector::Zero();
  return wall_contact_force(config.slave_params, q_si, scenario.wall);
}

// Stacked closed-loop state [q_m, dq_m, q_s1, dq_s1, ...] with the network
// registers held constant (they change only between integration steps).
Vector closed_loop_derivative(const SimConfig& config, const Scenario& scenario,
                              const NetworkState& net, double t,
                              const Vector& x) {
  const int N = config.slave_count();
  Vector dx(x.size());
  const ManipulatorState master{x.segment<2>(0), x.segment<2>(2)};
  const JointVector tau_m =
      master_control(config.gains, config.formation, master.q, master.dq,
                     net.slave_registers,
                     gravity_vector(config.master_params, master.q));
  const JointVector f_m = master_force(config, scenario, t, master.q);
  dx.segment<2>(0) = master.dq;
  dx.segment<2>(2) = forward_dynamics(config.master_params, master, tau_m, f_m);
  for (int i = 0; i < N; ++i) {
    const ManipulatorState si{x.segment<2>(4 + 4 * i), x.segment<2>(6 + 4 * i)};
    const JointVector tau_si =
        slave_control(config.gains, config.formation, i, si.q, si.dq,
                      net.master_register,
                      gravity_vector(config.slave_params, si.q));
    const JointVector f_si = slave_force(config, scenario, si.q);
    dx.segment<2>(4 + 4 * i) = si.dq;
    dx.segment<2>(6 + 4 * i) = forward_dynamics(config.slave_params, si, tau_si, f_si);
  }
  return dx;
}

TraceRow make_row(const SimConfig& config, const Scenario& scenario,
                  const NetworkState& net, double t, const Vector& x,
                  int event_index) {
  const int N = config.slave_count();
  TraceRow row;
  row.t = t;
  row.q_m = x.segment<2>(0);
  row.dq_m = x.segment<2>(2);
  row.q_s.resize(static_cast<size_t>(N));
  row.dq_s.resize(static_cast<size_t>(N));
  row.f_s.resize(static_cast<size_t>(N));
  row.tau_s.resize(static_cast<size_t>(N));
  row.ee_s.resize(static_cast<size_t>(N));
  row.eta_norm.resize(static_cast<size_t>(N));
  row.sched = net.prev_scheduled;
  row.event_index = event_index;
  row.f_m = master_force(config, scenario, t, row.q_m);
  row.tau_m = master_control(config.gains, config.formation, row.q_m, row.dq_m,
                             net.slave_registers,
                             gravity_vector(config.master_params, row.q_m));
  row.ee_m = end_effector(config.master_params, row.q_m);
  for (int i = 0; i < N; ++i) {
    const size_t ui = static_cast<size_t>(i);
    row.q_s[ui] = x.segment<2>(4 + 4 * i);
    row.dq_s[ui] = x.segment<2>(6 + 4 * i);
    row.f_s[ui] = slave_force(config, scenario, row.q_s[ui]);
    row.tau_s[ui] =
        slave_control(config.gains, config.formation, i, row.q_s[ui],
                      row.dq_s[ui], net.master_register,
                      gravity_vector(config.slave_params, row.q_s[ui]));
    row.ee_s[ui] = end_effector(config.slave_params, row.q_s[ui]);
    row.eta_norm[ui] = net.eta[ui].norm();
  }
  return row;
}

} // namespace

Scenario Scenario::free_motion_default(int slave_count, double duration) {
  Scenario sc;
  sc.kind = Kind::free_motion;
  sc.duration = duration;
  const double pi = M_PI;
  sc.initial_states.push_back({JointVector(pi / 4, pi / 6), JointVector::Zero()});
  if (slave_count == 3) {
    sc.initial_states.push_back({JointVector(pi / 8, -pi / 4), JointVector::Zero()});
    sc.initial_states.push_back({JointVector(-pi / 4, pi / 8), JointVector::Zero()});
    sc.initial_states.push_back({JointVector(pi / 8, pi / 8), JointVector::Zero()});
  } else {
    for (int i = 0; i < slave_count; ++i) {
      sc.initial_states.push_back(
          {JointVector(pi / 8 - 0.1 * i, -pi / 4 + 0.15 * i), JointVector::Zero()});
    }
  }
  return sc;
}

Scenario Scenario::bounded_force_default(int slave_count, double duration) {
  Scenario sc;
  sc.kind = Kind::bounded_force;
  sc.duration = duration;
  sc.initial_states.assign(static_cast<size_t>(slave_count) + 1,
                           {JointVector::Zero(), JointVector::Zero()});
  return sc;
}

Scenario Scenario::contact_default(int slave_count, double duration) {
  Scenario sc;
  sc.kind = Kind::contact;
  sc.duration = duration;
  sc.initial_states.assign(static_cast<size_t>(slave_count) + 1,
                           {JointVector::Zero(), JointVector::Zero()});
  return sc;
}

void Scenario::validate(int slave_count) const {
  if (duration <= 0.0 || !std::isfinite(duration))
    throw std::invalid_argument("scenario duration must be positive");
  if (initial_states.size() != static_cast<size_t>(slave_count) + 1)
    throw std::invalid_argument(
        "scenario needs initial states for 1 master + N slaves");
  for (const auto& s : initial_states) {
    if (!s.q.allFinite() || !s.dq.allFinite())
      throw std::invalid_argument("scenario initial states must be finite");
  }
  if (kind == Kind::contact) {
    if (!(pulse.t_on <= pulse.t_off) || pulse.t_on < 0.0)
      throw std::invalid_argument("pulse needs 0 <= t_on <= t_off");
    if (!std::isfinite(pulse.amplitude))
      throw std::invalid_argument("pulse amplitude must be finite");
    if (wall.stiffness < 0.0 || !std::isfinite(wall.stiffness))
      throw std::invalid_argument("wall stiffness must be non-negative");
  }
}

SimConfig SimConfig::defaults(int slave_count, Protocol protocol_) {
  SimConfig c;
  c.gains = GainSet::uniform(slave_count, 20.0, 20.0);
  c.formation = FormationGeometry::default_for(slave_count);
  c.protocol = protocol_;
  c.tod_weights = TodWeights::identity(slave_count);
  return c;
}

void SimConfig::validate() const {
  master_params.validate();
  slave_params.validate();
  gains.validate();
  formation.validate();
  schedule.validate();
  const int N = slave_count();
  if (N < 2) throw std::invalid_argument("at least two slaves are required");
  if (formation.offsets.size() != static_cast<size_t>(N))
    throw std::invalid_argument("formation size must match the gain count");
  if (protocol == Protocol::TOD) {
    tod_weights.validate();
    if (tod_weights.Q.size() != static_cast<size_t>(N))
      throw std::invalid_argument("TOD weight count must match the gain count");
  }
  if (!(step > 0.0) || !std::isfinite(step))
    throw std::invalid_argument("step must be positive");
  if (step > schedule.sampling_interval / 10.0 + 1e-15)
    throw std::invalid_argument("step must not exceed sampling_interval / 10");
  if (trace_stride < 1)
    throw std::invalid_argument("trace_stride must be >= 1");
}

JointVector human_force_scenario2(double t, const JointVector& q_m,
                                  const ManipulatorParams& params) {
  return cartesian_to_joint(params, q_m, 25.0 + 10.0 * std::sin(t));
}

JointVector wall_contact_force(const ManipulatorParams& params,
                               const JointVector& q_si, const WallModel& wall) {
  const double y = end_effector(params, q_si)[1];
  if (y <= wall.y) return JointVector::Zero();
  return -cartesian_to_joint(params, q_si, wall.stiffness * (y - wall.y));
}

double rectangle_force_scenario3(double t, const RectanglePulse& pulse) {
  return (t >= pulse.t_on && t < pulse.t_off) ? pulse.amplitude : 0.0;
}

SimTrace run_simulation(const SimConfig& config, const Scenario& scenario) {
  config.validate();
  const int N = config.slave_count();
  scenario.validate(N);

  Vector x(4 + 4 * N);
  x.segment<2>(0) = scenario.initial_states[0].q;
  x.segment<2>(2) = scenario.initial_states[0].dq;
  std::vector<JointVector> corrected0(static_cast<size_t>(N));
  for (int i = 0; i < N; ++i) {
    const auto& s = scenario.initial_states[static_cast<size_t>(i) + 1];
    x.segment<2>(4 + 4 * i) = s.q;
    x.segment<2>(6 + 4 * i) = s.dq;
    corrected0[static_cast<size_t>(i)] = config.formation.corrected(i, s.q);
  }
  NetworkState net =
      NetworkState::initial(scenario.initial_states[0].q, corrected0);

  SimTrace trace;
  trace.N = N;
  trace.step = config.step;
  trace.offsets = config.formation.offsets;
  const double t_end = scenario.duration;
  trace.rows.reserve(static_cast<size_t>(t_end / config.step /
                                         std::max(config.trace_stride, 1)) +
                     256);

  double t = 0.0;
  long k = 0;
  double next_sample = 0.0;
  int steps_since_log = config.trace_stride; // force a row at t = 0
  const bool contact = scenario.kind == Scenario::Kind::contact;

  while (true) {
    bool event_now = false;
    while (next_sample <= t + kEventTol) {
      std::vector<JointVector> corrected(static_cast<size_t>(N));
      for (int i = 0; i < N; ++i)
        corrected[static_cast<size_t>(i)] =
            config.formation.corrected(i, x.segment<2>(4 + 4 * i));
      sample_and_transmit(net, config.schedule, config.protocol,
                          config.tod_weights, k, x.segment<2>(0), corrected);
      ++k;
      next_sample = config.schedule.sample_time(k);
      event_now = true;
    }
    for (auto& tr : process_arrivals(net, t)) {
      trace.events.push_back(std::move(tr));
      event_now = true;
    }
    if (contact && (std::abs(t - scenario.pulse.t_on) <= kEventTol ||
                    std::abs(t - scenario.pulse.t_off) <= kEventTol))
      event_now = true;

    const bool final_row = t >= t_end - kEventTol;
    if (event_now || final_row || steps_since_log >= config.trace_stride) {
      trace.rows.push_back(
          make_row(config, scenario, net, t, x,
                   static_cast<int>(trace.events.size()) - 1));
      steps_since_log = 0;
    }
    if (final_row) break;

    double boundary = std::min(next_sample, t_end);
    if (!net.pending.empty())
      boundary = std::min(boundary, net.pending.front().arrival);
    if (contact) {
      if (scenario.pulse.t_on > t + kEventTol)
        boundary = std::min(boundary, scenario.pulse.t_on);
      if (scenario.pulse.t_off > t + kEventTol)
        boundary = std::min(boundary, scenario.pulse.t_off);
    }
    const double dt = std::min(config.step, boundary - t);
    if (!(dt > 0.0)) throw std::logic_error("non-positive integration step");

    const Vector k1 = closed_loop_derivative(config, scenario, net, t, x);
    const Vector k2 = closed_loop_derivative(config, scenario, net, t + dt / 2,
                                             x + (dt / 2) * k1);
    const Vector k3 = closed_loop_derivative(config, scenario, net, t + dt / 2,
                                             x + (dt / 2) * k2);
    const Vector k4 =
        closed_loop_derivative(config, scenario, net, t + dt, x + dt * k3);
    x += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    t += dt;
    ++steps_since_log;

    if (!x.allFinite()) {
      std::ostringstream msg;
      msg << "simulation diverged: non-finite state at t = " << t;
      throw std::runtime_error(msg.str());
    }
  }
  return trace;
}

namespace {

// Quadratic form dq' R dq of the selected arm at a recorded row.
double velocity_form(const TraceRow& row, const Matrix& R, int arm) {
  const JointVector& dq =
      arm < 0 ? row.dq_m : row.dq_s[static_cast<size_t>(arm)];
  return dq.dot(R * dq);
}

// Trapezoidal quadrature of (h - (t - delta)) * dq(delta)' R dq(delta) over
// recorded rows with delta in [t - h, t]; the weight vanishes at the lower
// end, so clipping at the first recorded row is harmless.
double ramp_history_integral(const SimTrace& trace, std::size_t idx, double h,
                             const Matrix& R, int arm) {
  const double t = trace.rows[idx].t;
  const double lo = t - h;
  double acc = 0.0;
  std::size_t j = idx;
  double g1 = velocity_form(trace.rows[j], R, arm); // weight at j: h - (t - t_j)
  while (j > 0 && trace.rows[j - 1].t >= lo - 1e-12) {
    const double t1 = trace.rows[j].t;
    const double t0 = trace.rows[j - 1].t;
    const double g0 = velocity_form(trace.rows[j - 1], R, arm);
    const double w1 = h - (t - t1);
    const double w0 = h - (t - t0);
    acc += 0.5 * (g0 * w0 + g1 * w1) * (t1 - t0);
    g1 = g0;
    --j;
  }
  return acc;
}

// Plain trapezoid of dq' R dq over [lo, t] (used by the jump-budget term).
double history_integral(const SimTrace& trace, std::size_t idx, double lo,
                        const Matrix& R, int arm) {
  double acc = 0.0;
  std::size_t j = idx;
  double g1 = velocity_form(trace.rows[j], R, arm);
  while (j > 0 && trace.rows[j - 1].t >= lo - 1e-12) {
    const double g0 = velocity_form(trace.rows[j - 1], R, arm);
    acc += 0.5 * (g0 + g1) * (trace.rows[j].t - trace.rows[j - 1].t);
    g1 = g0;
    --j;
  }
  return acc;
}

// V1 + V2 + V3 with the given horizons (h_master for the master history,
// h_slave for each slave history).
double lyapunov_core(const SimTrace& trace, const SimConfig& config,
                     const Matrix& R_m, const std::vector<Matrix>& R_s,
                     double h_master, double h_slave, std::size_t idx) {
  const TraceRow& row = trace.rows[idx];
  const int N = trace.N;
  double v = N * row.dq_m.dot(mass_matrix(config.master_params, row.q_m) * row.dq_m);
  for (int i = 0; i < N; ++i) {
    const size_t ui = static_cast<size_t>(i);
    v += row.dq_s[ui].dot(mass_matrix(config.slave_params, row.q_s[ui]) * row.dq_s[ui]);
    const JointVector e =
        row.q_m - config.formation.corrected(i, row.q_s[ui]);
    v += e.dot(config.gains.kp[ui] * e);
  }
  v += N * ramp_history_integral(trace, idx, h_master, R_m, -1);
  for (int i = 0; i < N; ++i)
    v += ramp_history_integral(trace, idx, h_slave,
                               R_s[static_cast<size_t>(i)], i);
  return v;
}

void check_vars_rr(const SimTrace& trace, const LmiVariablesRR& vars) {
  if (vars.R_s.size() != static_cast<size_t>(trace.N))
    throw std::invalid_argument("variable count must match the slave count");
}

void check_vars_tod(const SimTrace& trace, const LmiVariablesTOD& vars) {
  const size_t n = static_cast<size_t>(trace.N);
  if (vars.R_s.size() != n || vars.Q.size() != n || vars.U.size() != n ||
      vars.G.size() != n)
    throw std::invalid_argument("variable count must match the slave count");
}

// Index of the row at time t (exact within tolerance); the trace records a row
// at every event instant.
std::size_t row_at_time(const SimTrace& trace, double t) {
  auto it = std::lower_bound(
      trace.rows.begin(), trace.rows.end(), t - 1e-9,
      [](const TraceRow& r, double val) { return r.t < val; });
  if (it == trace.rows.end() || std::abs(it->t - t) > 1e-9)
    throw std::invalid_argument("no recorded row at the requested instant");
  return static_cast<std::size_t>(it - trace.rows.begin());
}

// Scheduling-error part sum_i eta_i' Q_i eta_i for a packet's eta snapshot.
double eta_quadratic(const std::vector<JointVector>& eta,
                     const std::vector<Matrix>& Q) {
  double v = 0.0;
  for (size_t i = 0; i < eta.size(); ++i) v += eta[i].dot(Q[i] * eta[i]);
  return v;
}

// Jump budget V_G = h_M * sum_i int_{s_k}^{t} dq_si' G_i dq_si for the packet
// sampled at s_k.
double jump_budget(const SimTrace& trace, const std::vector<Matrix>& G,
                   double h_M, double s_k, std::size_t idx) {
  double v = 0.0;
  for (int i = 0; i < trace.N; ++i)
    v += history_integral(trace, idx, s_k, G[static_cast<size_t>(i)], i);
  return h_M * v;
}

} // namespace

double lyapunov_v_rr(const SimTrace& trace, const SimConfig& config,
                     const LmiVariablesRR& vars, std::size_t row_index) {
  if (row_index >= trace.rows.size())
    throw std::invalid_argument("row index out of range");
  check_vars_rr(trace, vars);
  const auto h = delay_horizons(trace.N, config.schedule.mati,
                                config.schedule.mad, Protocol::RR);
  if (trace.events.size() < static_cast<size_t>(trace.N))
    throw std::invalid_argument(
        "insufficient history: fewer arrivals than slaves");
  const double t_ready =
      trace.events[static_cast<size_t>(trace.N) - 1].arrival + h.h_S;
  if (trace.rows[row_index].t < t_ready - 1e-12)
    throw std::invalid_argument("insufficient history for the slave horizon");
  return lyapunov_core(trace, config, vars.R_m, vars.R_s, h.h_M, h.h_S,
                       row_index);
}

void fill_lyapunov_rr(SimTrace& trace, const SimConfig& config,
                      const LmiVariablesRR& vars) {
  check_vars_rr(trace, vars);
  if (trace.events.size() < static_cast<size_t>(trace.N)) return;
  const auto h = delay_horizons(trace.N, config.schedule.mati,
                                config.schedule.mad, Protocol::RR);
  const double t_ready =
      trace.events[static_cast<size_t>(trace.N) - 1].arrival + h.h_S;
  for (std::size_t idx = 0; idx < trace.rows.size(); ++idx) {
    if (trace.rows[idx].t >= t_ready - 1e-12)
      trace.rows[idx].V = lyapunov_core(trace, config, vars.R_m, vars.R_s,
                                        h.h_M, h.h_S, idx);
  }
}

double lyapunov_ve_tod(const SimTrace& trace, const SimConfig& config,
                       const LmiVariablesTOD& vars, std::size_t row_index) {
  if (row_index >= trace.rows.size())
    throw std::invalid_argument("row index out of range");
  check_vars_tod(trace, vars);
  const TraceRow& row = trace.rows[row_index];
  if (row.event_index < 0)
    throw std::invalid_argument("insufficient history: before the first arrival");
  const auto h = delay_horizons(trace.N, config.schedule.mati,
                                config.schedule.mad, Protocol::TOD);
  if (row.t < h.h_M - 1e-12)
    throw std::invalid_argument("insufficient history for the delay horizon");
  const size_t e = static_cast<size_t>(row.event_index);
  if (e + 1 >= trace.events.size())
    throw std::invalid_argument("no next arrival: inter-event term undefined");
  const Transmission& cur = trace.events[e];
  const Transmission& next = trace.events[e + 1];

  double v = lyapunov_core(trace, config, vars.R_m, vars.R_s, h.h_M, h.h_M,
                           row_index);
  v += eta_quadratic(cur.eta, vars.Q);
  v += jump_budget(trace, vars.G, h.h_M, cur.sample_time, row_index);
  double w_e = 0.0;
  for (int j = 0; j < trace.N; ++j) {
    if (j + 1 == cur.scheduled) continue;
    const size_t uj = static_cast<size_t>(j);
    w_e += cur.eta[uj].dot(vars.U[uj] * cur.eta[uj]);
  }
  v += (cur.arrival - row.t) / (next.arrival - cur.arrival) * w_e;
  return v;
}

void fill_lyapunov_ve_tod(SimTrace& trace, const SimConfig& config,
                          const LmiVariablesTOD& vars) {
  check_vars_tod(trace, vars);
  const auto h = delay_horizons(trace.N, config.schedule.mati,
                                config.schedule.mad, Protocol::TOD);
  for (std::size_t idx = 0; idx < trace.rows.size(); ++idx) {
    const TraceRow& row = trace.rows[idx];
    if (row.event_index < 0 || row.t < h.h_M - 1e-12) continue;
    if (static_cast<size_t>(row.event_index) + 1 >= trace.events.size()) continue;
    trace.rows[idx].V = lyapunov_ve_tod(trace, config, vars, idx);
  }
}

std::vector<JumpRecord> lyapunov_ve_jumps(const SimTrace& trace,
                                          const SimConfig& config,
                                          const LmiVariablesTOD& vars) {
  check_vars_tod(trace, vars);
  const auto h = delay_horizons(trace.N, config.schedule.mati,
                                config.schedule.mad, Protocol::TOD);
  std::vector<JumpRecord> jumps;
  const double t_last = trace.rows.empty() ? 0.0 : trace.rows.back().t;
  for (size_t e = 1; e + 1 < trace.events.size(); ++e) {
    const Transmission& prev = trace.events[e - 1];
    const Transmission& cur = trace.events[e];
    if (cur.arrival > t_last + 1e-9) break;
    if (cur.arrival < h.h_M - 1e-12) continue; // history not yet complete
    const std::size_t idx = row_at_time(trace, cur.arrival);
    const double core = lyapunov_core(trace, config, vars.R_m, vars.R_s,
                                      h.h_M, h.h_M, idx);
    // Limit from the left: the previous interval's packet still in effect,
    // with the inter-event weight at its final value -1.
    double w_prev = 0.0;
    for (int j = 0; j < trace.N; ++j) {
      if (j + 1 == prev.scheduled) continue;
      const size_t uj = static_cast<size_t>(j);
      w_prev += prev.eta[uj].dot(vars.U[uj] * prev.eta[uj]);
    }
    JumpRecord rec;
    rec.t = cur.arrival;
    rec.before = core + eta_quadratic(prev.eta, vars.Q) +
                 jump_budget(trace, vars.G, h.h_M, prev.sample_time, idx) -
                 w_prev;
    rec.after = core + eta_quadratic(cur.eta, vars.Q) +
                jump_budget(trace, vars.G, h.h_M, cur.sample_time, idx);
    jumps.push_back(rec);
  }
  return jumps;
}

SteadyStateMetrics steady_state_metrics(const SimTrace& trace,
                                        double tail_fraction) {
  if (trace.rows.empty()) throw std::invalid_argument("empty trace");
  if (!(tail_fraction > 0.0) || tail_fraction > 1.0)
    throw std::invalid_argument("tail_fraction must lie in (0, 1]");
  const int N = trace.N;
  if (trace.offsets.size() != static_cast<size_t>(N))
    throw std::invalid_argument("trace is missing its formation offsets");
  const double t_last = trace.rows.back().t;
  const double t_from = t_last - tail_fraction * (t_last - trace.rows.front().t);

  SteadyStateMetrics m;
  m.mean_position_error.assign(static_cast<size_t>(N), 0.0);
  JointVector sum_fm = JointVector::Zero();
  JointVector sum_residual = JointVector::Zero();
  long count = 0;
  for (const TraceRow& row : trace.rows) {
    if (row.t < t_from - 1e-12) continue;
    ++count;
    JointVector fbar = JointVector::Zero();
    for (int i = 0; i < N; ++i) {
      const size_t ui = static_cast<size_t>(i);
      m.mean_position_error[ui] +=
          (row.q_m - (row.q_s[ui] - trace.offsets[ui])).norm();
      fbar += row.f_s[ui];
      m.max_tail_velocity = std::max(
          m.max_tail_velocity, row.dq_s[ui].cwiseAbs().maxCoeff());
    }
    fbar /= static_cast<double>(N);
    sum_fm += row.f_m;
    sum_residual += row.f_m + fbar;
    m.max_tail_velocity =
        std::max(m.max_tail_velocity, row.dq_m.cwiseAbs().maxCoeff());
  }
  if (count == 0) throw std::invalid_argument("empty averaging window");
  for (double& v : m.mean_position_error) v /= static_cast<double>(count);
  m.mean_force_residual = (sum_residual / static_cast<double>(count)).cwiseAbs();
  m.mean_abs_master_force = (sum_fm / static_cast<double>(count)).cwiseAbs();
  for (int j = 0; j < kJointCount; ++j)
    m.force_reflection_ratio[j] =
        m.mean_force_residual[j] / (m.mean_abs_master_force[j] + 1e-9);
  return m;
}

void write_csv_trace(const SimTrace& trace, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open output file: " + path);
  const int N = trace.N;
  out << "t,qm0,qm1,dqm0,dqm1";
  for (int i = 1; i <= N; ++i)
    out << ",qs" << i << "_0,qs" << i << "_1,dqs" << i << "_0,dqs" << i << "_1";
  out << ",sched";
  for (int i = 1; i <= N; ++i) out << ",eta" << i;
  out << ",V,fm0,fm1";
  for (int i = 1; i <= N; ++i) out << ",fs" << i << "_0,fs" << i << "_1";
  out << ",taum0,taum1";
  for (int i = 1; i <= N; ++i) out << ",taus" << i << "_0,taus" << i << "_1";
  out << ",xm,ym";
  for (int i = 1; i <= N; ++i) out << ",xs" << i << ",ys" << i;
  out << "\n";

  char buf[32];
  auto put = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    out << ',' << buf;
  };
  for (const TraceRow& row : trace.rows) {
    std::snprintf(buf, sizeof buf, "%.17g", row.t);
    out << buf;
    put(row.q_m[0]); put(row.q_m[1]); put(row.dq_m[0]); put(row.dq_m[1]);
    for (int i = 0; i < N; ++i) {
      const auto& q = row.q_s[static_cast<size_t>(i)];
      const auto& dq = row.dq_s[static_cast<size_t>(i)];
      put(q[0]); put(q[1]); put(dq[0]); put(dq[1]);
    }
    out << ',' << row.sched;
    for (int i = 0; i < N; ++i) put(row.eta_norm[static_cast<size_t>(i)]);
    put(row.V);
    put(row.f_m[0]); put(row.f_m[1]);
    for (int i = 0; i < N; ++i) {
      const auto& f = row.f_s[static_cast<size_t>(i)];
      put(f[0]); put(f[1]);
    }
    put(row.tau_m[0]); put(row.tau_m[1]);
    for (int i = 0; i < N; ++i) {
      const auto& tau = row.tau_s[static_cast<size_t>(i)];
      put(tau[0]); put(tau[1]);
    }
    put(row.ee_m[0]); put(row.ee_m[1]);
    for (int i = 0; i < N; ++i) {
      const auto& ee = row.ee_s[static_cast<size_t>(i)];
      put(ee[0]); put(ee[1]);
    }
    out << '\n';
  }
  if (!out) throw std::runtime_error("failed writing output file: " + path);
}

} // namespace teleop
