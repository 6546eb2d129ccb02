#include "teleop/network.hpp"

#include <cmath>
#include <stdexcept>

namespace teleop {

double default_delay(double s) { return 0.04 + 0.06 * std::abs(std::sin(s)); }

SamplingSchedule::SamplingSchedule() : delay_fn(default_delay) {}

double SamplingSchedule::delay_at(long k) const {
  const double T = delay_fn(sample_time(k));
  if (!(T >= 0.0) || T > mad + 1e-12)
    throw std::invalid_argument("schedule: delay out of [0, mad]");
  return T;
}

void SamplingSchedule::validate() const {
  if (!(sampling_interval > 0.0))
    throw std::invalid_argument("schedule: sampling interval must be > 0");
  if (sampling_interval > mati + 1e-12)
    throw std::invalid_argument("schedule: sampling interval must be <= mati");
  if (!(mad >= 0.0)) throw std::invalid_argument("schedule: mad must be >= 0");
  if (!delay_fn) throw std::invalid_argument("schedule: missing delay function");
}

TodWeights TodWeights::identity(int slave_count) {
  TodWeights w;
  w.Q.assign(static_cast<size_t>(slave_count), JointMatrix::Identity());
  return w;
}

TodWeights TodWeights::scaled_identity(const std::vector<double>& q_scalars) {
  TodWeights w;
  w.Q.reserve(q_scalars.size());
  for (double q : q_scalars) w.Q.push_back(q * JointMatrix::Identity());
  w.validate();
  return w;
}

void TodWeights::validate() const {
  for (const auto& Qi : Q) {
    if (std::abs(Qi(0, 1) - Qi(1, 0)) > 1e-12 * (1.0 + Qi.cwiseAbs().maxCoeff()) ||
        !(Qi(0, 0) > 0.0) || !(Qi(0, 0) * Qi(1, 1) - Qi(0, 1) * Qi(1, 0) > 0.0))
      throw std::invalid_argument(
          "tod weights: matrices must be symmetric positive definite");
  }
}

NetworkState NetworkState::initial(
    const JointVector& master_pos,
    const std::vector<JointVector>& corrected_slave_pos) {
  NetworkState st;
  st.master_register = master_pos;
  st.slave_registers = corrected_slave_pos;
  st.eta.reserve(corrected_slave_pos.size());
  for (const auto& p : corrected_slave_pos) st.eta.push_back(-p);
  return st;
}

int rr_next_index(long k, int N) {
  if (N < 2) throw std::invalid_argument("rr_next_index: N >= 2 required");
  return static_cast<int>(k % N) + 1;
}

int tod_next_index(const std::vector<JointVector>& eta,
                   const TodWeights& weights) {
  const int N = static_cast<int>(eta.size());
  if (N < 2) throw std::invalid_argument("tod_next_index: N >= 2 required");
  if (static_cast<int>(weights.Q.size()) != N)
    throw std::invalid_argument("tod_next_index: weight count mismatch");
  int best = 1;
  double best_val = eta[0].dot(weights.Q[0] * eta[0]);
  for (int i = 1; i < N; ++i) {
    const size_t ui = static_cast<size_t>(i);
    const double v = eta[ui].dot(weights.Q[ui] * eta[ui]);
    if (v > best_val) { // strict: ties keep the smallest index
      best_val = v;
      best = i + 1;
    }
  }
  return best;
}

void sample_and_transmit(NetworkState& state, const SamplingSchedule& schedule,
                         Protocol protocol, const TodWeights& weights, long k,
                         const JointVector& master_pos,
                         const std::vector<JointVector>& slave_pos_corrected) {
  const int N = state.slave_count();
  if (static_cast<int>(slave_pos_corrected.size()) != N)
    throw std::invalid_argument("sample_and_transmit: slave count mismatch");
  if (k != state.next_k)
    throw std::invalid_argument("sample_and_transmit: sample counter out of sequence");

  // Scheduling-error values that take effect when this packet arrives:
  // the scheduled slave's error restarts from the motion since its last
  // transmission, the others accumulate the motion since the previous sample.
  std::vector<JointVector> eta_next(static_cast<size_t>(N));
  for (int i = 0; i < N; ++i) {
    const size_t ui = static_cast<size_t>(i);
    if (state.prev_scheduled == 0) { // first sample; nothing ever transmitted
      eta_next[ui] = -slave_pos_corrected[ui];
    } else {
      const JointVector carried = (i + 1 == state.prev_scheduled)
                                      ? JointVector::Zero()
                                      : state.prev_eta[ui];
      eta_next[ui] = carried + state.prev_sample[ui] - slave_pos_corrected[ui];
    }
  }

  const int istar = (protocol == Protocol::RR) ? rr_next_index(k, N)
                                               : tod_next_index(eta_next, weights);

  Transmission tx;
  tx.k = k;
  tx.sample_time = schedule.sample_time(k);
  tx.arrival = schedule.arrival_time(k);
  tx.scheduled = istar;
  tx.master_pos = master_pos;
  tx.slave_pos = slave_pos_corrected[static_cast<size_t>(istar - 1)];
  tx.eta = eta_next;
  if (tx.arrival < state.last_enqueued_arrival - 1e-12)
    throw std::invalid_argument(
        "sample_and_transmit: arrival times must be non-decreasing");

  state.last_enqueued_arrival = tx.arrival;
  state.pending.push_back(std::move(tx));
  state.prev_sample = slave_pos_corrected;
  state.prev_eta = std::move(eta_next);
  state.prev_scheduled = istar;
  state.next_k = k + 1;
}

std::vector<Transmission> process_arrivals(NetworkState& state, double t) {
  std::vector<Transmission> delivered;
  while (!state.pending.empty() && state.pending.front().arrival <= t + 1e-12) {
    Transmission tx = std::move(state.pending.front());
    state.pending.pop_front();
    state.master_register = tx.master_pos;
    state.slave_registers[static_cast<size_t>(tx.scheduled - 1)] = tx.slave_pos;
    state.eta = tx.eta;
    state.last_scheduled = tx.scheduled;
    delivered.push_back(std::move(tx));
  }
  return delivered;
}

DelayHorizons delay_horizons(int N, double mati, double mad, Protocol protocol) {
  if (!(mati > 0.0)) throw std::invalid_argument("delay_horizons: mati must be > 0");
  if (!(mad >= 0.0)) throw std::invalid_argument("delay_horizons: mad must be >= 0");
  DelayHorizons h;
  h.h_M = mati + mad;
  h.h_S = (protocol == Protocol::RR) ? N * mati + mad : mati + mad;
  return h;
}

} // namespace teleop
