#pragma once

#include <deque>
#include <functional>
#include <limits>
#include <vector>

#include "teleop/types.hpp"

namespace teleop {

enum class Protocol { RR, TOD };

// Per-slave positive-definite weighting matrices of the TOD scheduling rule.
struct TodWeights {
  std::vector<JointMatrix> Q;

  static TodWeights identity(int slave_count);
  // Diagonal scalar weights q_i * I.
  static TodWeights scaled_identity(const std::vector<double>& q_scalars);
  void validate() const;
};

// Uniform sampling instants s_k = k * sampling_interval with deterministic
// transmission delays T_k = delay_fn(s_k); packets arrive at t_k = s_k + T_k.
struct SamplingSchedule {
  double sampling_interval = 0.14; // s_{k+1} - s_k [s]
  double mati = 0.14;              // maximum allowable transmission interval [s]
  double mad = 0.1;                // maximum allowable delay [s]
  std::function<double(double)> delay_fn;

  SamplingSchedule();

  double sample_time(long k) const { return static_cast<double>(k) * sampling_interval; }
  // Delay of the packet sampled at s_k; throws std::invalid_argument if the
  // delay is negative or exceeds mad.
  double delay_at(long k) const;
  double arrival_time(long k) const { return sample_time(k) + delay_at(k); }

  // Throws std::invalid_argument unless 0 < sampling_interval <= mati and
  // mad >= 0.
  void validate() const;
};

// Default deterministic delay profile 0.04 + 0.06 |sin(s)|.
double default_delay(double s);

// One sampled packet in flight (or already delivered): the scheduled slave's
// corrected position, the master position, and the scheduling-error values
// that take effect when the packet arrives.
struct Transmission {
  long k = 0;              // sample counter
  double sample_time = 0;  // s_k
  double arrival = 0;      // t_k = s_k + T_k
  int scheduled = 0;       // 1-based index of the transmitting slave
  JointVector master_pos = JointVector::Zero(); // q_m(s_k)
  JointVector slave_pos = JointVector::Zero();  // corrected position of the scheduled slave
  std::vector<JointVector> eta;                 // eta values installed at arrival
};

// Zero-order-hold registers plus scheduling-error bookkeeping. Registers
// change only when process_arrivals delivers a pending transmission.
struct NetworkState {
  JointVector master_register = JointVector::Zero(); // \hat q_m held at the slaves
  std::vector<JointVector> slave_registers;          // \hat q_si held at the master
  std::vector<JointVector> eta;                      // current scheduling errors
  int last_scheduled = 0;                            // 1-based; 0 before any arrival
  std::deque<Transmission> pending;                  // in flight, arrival-ordered

  // Sampling-side recursion state (previous sample's corrected positions,
  // decision values, and scheduled index).
  std::vector<JointVector> prev_sample;
  std::vector<JointVector> prev_eta;
  int prev_scheduled = 0; // 1-based; 0 before the first sample
  long next_k = 0;
  double last_enqueued_arrival = -std::numeric_limits<double>::infinity();

  int slave_count() const { return static_cast<int>(slave_registers.size()); }

  // Registers start at the arms' initial (corrected) positions so the
  // controllers are well defined from t = 0; eta_i starts at -corrected_i(0)
  // (nothing has ever been transmitted).
  static NetworkState initial(const JointVector& master_pos,
                              const std::vector<JointVector>& corrected_slave_pos);
};

// Round-Robin scheduling: returns (k mod N) + 1 (1-based).
int rr_next_index(long k, int N);

// Try-Once-Discard scheduling: 1-based index maximizing eta_i^T Q_i eta_i,
// ties broken by the smallest index.
int tod_next_index(const std::vector<JointVector>& eta, const TodWeights& weights);

// Samples at s_k: chooses the transmitting slave by the protocol, computes the
// scheduling-error values that will take effect on delivery, and enqueues the
// packet at t_k = s_k + T_k. Throws std::invalid_argument if k is out of
// sequence or if arrival times would decrease (packet overtaking).
void sample_and_transmit(NetworkState& state, const SamplingSchedule& schedule,
                         Protocol protocol, const TodWeights& weights, long k,
                         const JointVector& master_pos,
                         const std::vector<JointVector>& slave_pos_corrected);

// Delivers every pending transmission with arrival <= t (in order): installs
// the master register, the scheduled slave's register, and the eta values.
// Returns the delivered transmissions.
std::vector<Transmission> process_arrivals(NetworkState& state, double t);

struct DelayHorizons {
  double h_M = 0; // master-data age bound [s]
  double h_S = 0; // slave-data age bound [s]
};

// RR: h_M = MATI + MAD, h_S = N*MATI + MAD. TOD: h_M = h_S = MATI + MAD.
DelayHorizons delay_horizons(int N, double mati, double mad, Protocol protocol);

} // namespace teleop
