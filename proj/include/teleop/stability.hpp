#pragma once

#include <optional>
#include <string>
#include <vector>

#include "teleop/controller.hpp"
#include "teleop/network.hpp"
#include "teleop/types.hpp"

namespace teleop {

// One stability question: protocol, fleet size, gains, and delay bound.
struct StabilityQuery {
  int N = 3;           // slave count (>= 2)
  int n = kJointCount; // joint count per arm
  GainSet gains;
  double mad = 0.0;    // maximum allowable delay [s]
  Protocol protocol = Protocol::RR;

  void validate() const;
};

// Decision variables of the delay-dependent stability test (RR protocol).
struct LmiVariablesRR {
  Matrix R_m;                // n x n, positive definite
  std::vector<Matrix> R_s;   // one n x n positive-definite matrix per slave
};

// Decision variables of the scheduling-aware stability test (TOD protocol).
struct LmiVariablesTOD {
  Matrix R_m;
  std::vector<Matrix> R_s;
  std::vector<Matrix> Q; // scheduling-error weights
  std::vector<Matrix> U; // inter-event decay weights
  std::vector<Matrix> G; // jump-budget weights
};

struct FeasibilityResultRR {
  bool feasible = false;
  double max_block_eigenvalue = 0.0; // over all assembled blocks at the witness
  std::optional<LmiVariablesRR> witness;
};

struct FeasibilityResultTOD {
  bool feasible = false;
  bool undecided = false; // solver hit its evaluation cap without a verdict
  double max_block_eigenvalue = 0.0;
  std::optional<LmiVariablesTOD> witness;
  int evaluations = 0;
  // Scalar witness (r_m, r_s[N], q[N], u[N], g[N]) for warm starts.
  std::vector<double> scalar_witness;
};

// 4n x 4n block matrix of the RR stability test for slave i (0-based), in the
// coordinates (dq_m, dq_si, integral dq_m, integral dq_si):
//   diag(-2 K^d_i + h_M R_m, -2 K^d_i + h_S R_si, -R_m/h_M, -R_si/h_S),
//   blocks (1,4) = (4,1) = -K^p_i and (2,3) = (3,2) = -K^p_i, rest zero.
Matrix assemble_pi(int i, const GainSet& gains, double h_M, double h_S,
                   const LmiVariablesRR& vars);

// 2n x 2n jump-condition block for slave i (0-based):
//   [[-Q_i/(N-1) + U_i, Q_i], [Q_i, -G_i + Q_i]].
Matrix assemble_omega(int i, int N, const LmiVariablesTOD& vars);

// (N+3)n x (N+3)n flow-condition block for slave i (0-based): the RR block
// with h_S := h_M and h_M G_i added to the (2,2) block, bordered by the other
// slaves' scheduling errors: row r for each j != i couples K^p_j against the
// dq_m coordinate and carries -U_j/h_M on its diagonal.
Matrix assemble_sigma(int i, int N, const GainSet& gains, double h_M,
                      const LmiVariablesTOD& vars);

// True iff lambda_max(M) < -eps_feas. Throws std::invalid_argument when M is
// asymmetric beyond 1e-12*(1 + max |entry|).
bool is_negative_definite(const Matrix& M, double eps_feas);

// Scale-free definiteness margin: 1e-9 * (1 + max |entry|).
double eps_feas_for(const Matrix& M);

// Exact scalar feasibility test of the RR stability condition for
// scaled-identity gains (see rr_analytic_max_mati for the closed form).
// Throws UnsupportedGains for general matrix gains.
FeasibilityResultRR feasible_rr(const StabilityQuery& query, double mati);

// Supremum MATI of the RR condition in closed form:
//   (2 min_i k_d,i / max_i k_p,i - 2 MAD) / (N + 1),
// clamped to 0 when no positive MATI is feasible. Exact for uniform k_d;
// independent oracle for the bisection.
double rr_analytic_max_mati(const StabilityQuery& query);

struct TodSolverOptions {
  int evaluation_cap = 10000;   // smoothed-objective evaluations per call
  double target_margin = 1e-6;  // stop early once lambda_max < -this
  std::vector<double> warm_start; // optional scalar variables from a prior call
};

// Scheduling-aware (TOD) feasibility for scaled-identity gains: minimizes the
// maximum eigenvalue over all assembled blocks with scalar variables
// (r_m, r_s[i], q[i], u[i], g[i]) by smoothed convex descent; feasible when a
// verified witness is found, undecided (treated as infeasible) at the cap.
FeasibilityResultTOD feasible_tod(const StabilityQuery& query, double mati,
                                  const TodSolverOptions& options = {});

struct MaxMatiResult {
  bool feasible = false;   // false: infeasible for every MATI > 0
  double mati = 0.0;       // largest feasible MATI found (within tol)
  bool undecided_warning = false; // TOD solver hit its cap near the boundary
};

// Bisection between 0 and a doubling upper bracket with the protocol's
// feasibility test; verifies monotonicity on a 10-point scan (throws
// std::runtime_error if feasibility is not monotone in MATI).
MaxMatiResult max_mati(const StabilityQuery& query, double tol);

// Default bisection tolerances: 1e-4 (RR, analytic inner test),
// 5e-3 (TOD, iterative inner solver).
double default_mati_tolerance(Protocol protocol);

// ------------------------------- tables ------------------------------------

struct TableCell {
  double mad = 0.0;
  bool feasible = false;
  double computed = 0.0;  // computed MATI (or h value for delay tables)
  bool has_reference = false;
  double reference = 0.0; // published reference value
  bool discrepancy = false;
  bool undecided_warning = false;
};

struct StabilityTable {
  std::string name;
  std::string caption;
  // rows: protocol label -> cells over the MAD grid (and N grid when present)
  std::vector<std::string> row_labels;
  std::vector<std::string> column_labels;
  std::vector<std::vector<TableCell>> cells; // [row][column]
};

struct TableSet {
  std::vector<StabilityTable> tables;
  std::string text;             // aligned plain-text rendering
  std::string csv;              // machine-readable rendering
};

// Reproduces the four reference tables (max MATI and delay horizons for the
// uniform and heterogeneous gain sets under both protocols), flagging cells
// whose computed value differs from the published reference value by more
// than the protocol tolerance (0.005 RR, 0.02 TOD).
TableSet reproduce_tables();

} // namespace teleop
