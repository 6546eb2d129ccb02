#include "teleop/stability.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace teleop {

void StabilityQuery::validate() const {
  if (N < 2) throw std::invalid_argument("stability: N >= 2 required");
  if (n < 1) throw std::invalid_argument("stability: n >= 1 required");
  if (!(mad >= 0.0)) throw std::invalid_argument("stability: mad must be >= 0");
  if (gains.slave_count() != N)
    throw std::invalid_argument("stability: gain count must equal N");
}

namespace {

Matrix to_dense(const JointMatrix& K, int n) {
  if (n == kJointCount) return K;
  // Scaled-identity gains only for n != 2 (checked by callers).
  return K(0, 0) * Matrix::Identity(n, n);
}

constexpr double kInf = std::numeric_limits<double>::infinity();

} // namespace

Matrix assemble_pi(int i, const GainSet& gains, double h_M, double h_S,
                   const LmiVariablesRR& vars) {
  if (!(h_M > 0.0) || !(h_S > 0.0))
    throw std::invalid_argument("assemble_pi: horizons must be > 0");
  if (i < 0 || i >= gains.slave_count())
    throw std::invalid_argument("assemble_pi: slave index out of range");
  const int n = static_cast<int>(vars.R_m.rows());
  const size_t ui = static_cast<size_t>(i);
  const Matrix Kp = to_dense(gains.kp[ui], n);
  const Matrix Kd = to_dense(gains.kd[ui], n);
  const Matrix& Rm = vars.R_m;
  const Matrix& Rs = vars.R_s.at(ui);

  Matrix P = Matrix::Zero(4 * n, 4 * n);
  P.block(0, 0, n, n) = -2.0 * Kd + h_M * Rm;
  P.block(n, n, n, n) = -2.0 * Kd + h_S * Rs;
  P.block(2 * n, 2 * n, n, n) = -Rm / h_M;
  P.block(3 * n, 3 * n, n, n) = -Rs / h_S;
  P.block(0, 3 * n, n, n) = -Kp;
  P.block(3 * n, 0, n, n) = -Kp.transpose();
  P.block(n, 2 * n, n, n) = -Kp;
  P.block(2 * n, n, n, n) = -Kp.transpose();
  return 0.5 * (P + P.transpose()); // exact symmetry by construction
}

Matrix assemble_omega(int i, int N, const LmiVariablesTOD& vars) {
  if (N < 2) throw std::invalid_argument("assemble_omega: N >= 2 required");
  const size_t ui = static_cast<size_t>(i);
  const Matrix& Qi = vars.Q.at(ui);
  const Matrix& Ui = vars.U.at(ui);
  const Matrix& Gi = vars.G.at(ui);
  const int n = static_cast<int>(Qi.rows());
  Matrix O = Matrix::Zero(2 * n, 2 * n);
  O.block(0, 0, n, n) = -Qi / static_cast<double>(N - 1) + Ui;
  O.block(0, n, n, n) = Qi;
  O.block(n, 0, n, n) = Qi.transpose();
  O.block(n, n, n, n) = -Gi + Qi;
  return 0.5 * (O + O.transpose());
}

Matrix assemble_sigma(int i, int N, const GainSet& gains, double h_M,
                      const LmiVariablesTOD& vars) {
  if (N < 2) throw std::invalid_argument("assemble_sigma: N >= 2 required");
  if (!(h_M > 0.0))
    throw std::invalid_argument("assemble_sigma: horizon must be > 0");
  const int n = static_cast<int>(vars.R_m.rows());
  const size_t ui = static_cast<size_t>(i);

  LmiVariablesRR flow{vars.R_m, vars.R_s};
  Matrix S = Matrix::Zero((N + 3) * n, (N + 3) * n);
  // Flow block with both data-age horizons at h_M, plus the jump budget on
  // the slave-velocity coordinate.
  S.topLeftCorner(4 * n, 4 * n) = assemble_pi(i, gains, h_M, h_M, flow);
  S.block(n, n, n, n) += h_M * vars.G.at(ui);
  // Border: the other slaves' scheduling errors couple to dq_m.
  int r = 4 * n;
  for (int j = 0; j < N; ++j) {
    if (j == i) continue;
    const size_t uj = static_cast<size_t>(j);
    const Matrix Kpj = to_dense(gains.kp[uj], n);
    S.block(r, 0, n, n) = Kpj;
    S.block(0, r, n, n) = Kpj.transpose();
    S.block(r, r, n, n) = -vars.U.at(uj) / h_M;
    r += n;
  }
  return 0.5 * (S + S.transpose());
}

bool is_negative_definite(const Matrix& M, double eps_feas) {
  if (M.rows() != M.cols())
    throw std::invalid_argument("is_negative_definite: matrix must be square");
  const double scale = 1.0 + M.cwiseAbs().maxCoeff();
  if ((M - M.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
    throw std::invalid_argument("is_negative_definite: matrix not symmetric");
  Eigen::SelfAdjointEigenSolver<Matrix> es(M, Eigen::EigenvaluesOnly);
  return es.eigenvalues().maxCoeff() < -eps_feas;
}

double eps_feas_for(const Matrix& M) {
  return 1e-9 * (1.0 + M.cwiseAbs().maxCoeff());
}

// ----------------------------- RR feasibility -------------------------------

namespace {

// Feasible interval (lo, hi) of a = h_M * r_m for slave i, from the pair of
// 2x2 determinant conditions with b = h_S * r_si eliminated:
//   -2 kd a^2 + (4 kd^2 + kp^2 h_M^2 - kp^2 h_S^2) a - 2 kd kp^2 h_M^2 > 0.
// Returns false when the interval is empty.
bool rr_interval(double kp, double kd, double hM, double hS, double& lo,
                 double& hi) {
  const double c = kp * kp * hM * hM;
  const double A = -2.0 * kd;
  const double B = 4.0 * kd * kd + c - kp * kp * hS * hS;
  const double C = -2.0 * kd * c;
  const double disc = B * B - 4.0 * A * C;
  if (!(disc > 0.0)) return false;
  const double sq = std::sqrt(disc);
  const double r1 = (-B + sq) / (2.0 * A);
  const double r2 = (-B - sq) / (2.0 * A);
  lo = std::min(r1, r2);
  hi = std::max(r1, r2);
  if (hi <= 0.0) return false; // both roots nonpositive
  lo = std::max(lo, 0.0);
  return lo < hi;
}

LmiVariablesRR scalars_to_rr_vars(double r_m, const std::vector<double>& r_s,
                                  int n) {
  LmiVariablesRR v;
  v.R_m = r_m * Matrix::Identity(n, n);
  v.R_s.reserve(r_s.size());
  for (double r : r_s) v.R_s.push_back(r * Matrix::Identity(n, n));
  return v;
}

} // namespace

FeasibilityResultRR feasible_rr(const StabilityQuery& query, double mati) {
  query.validate();
  if (!(mati > 0.0)) throw std::invalid_argument("feasible_rr: mati must be > 0");
  std::vector<double> kp, kd;
  require_scaled_identity(query.gains, kp, kd);
  const DelayHorizons h = delay_horizons(query.N, mati, query.mad, Protocol::RR);

  FeasibilityResultRR out;
  out.max_block_eigenvalue = std::numeric_limits<double>::quiet_NaN();

  double glo = 0.0, ghi = kInf;
  for (int i = 0; i < query.N; ++i) {
    double lo = 0.0, hi = 0.0;
    if (!rr_interval(kp[static_cast<size_t>(i)], kd[static_cast<size_t>(i)],
                     h.h_M, h.h_S, lo, hi))
      return out;
    glo = std::max(glo, lo);
    ghi = std::min(ghi, hi);
  }
  if (!(glo < ghi)) return out;

  const double a = 0.5 * (glo + ghi);
  std::vector<double> r_s(static_cast<size_t>(query.N));
  for (int i = 0; i < query.N; ++i) {
    const size_t ui = static_cast<size_t>(i);
    const double c = kp[ui] * kp[ui] * h.h_M * h.h_M;
    const double b_lo = kp[ui] * kp[ui] * h.h_S * h.h_S / (2.0 * kd[ui] - a);
    const double b_hi = 2.0 * kd[ui] - c / a;
    r_s[ui] = 0.5 * (b_lo + b_hi) / h.h_S;
  }
  LmiVariablesRR witness = scalars_to_rr_vars(a / h.h_M, r_s, query.n);

  double worst = -kInf;
  for (int i = 0; i < query.N; ++i) {
    const Matrix P = assemble_pi(i, query.gains, h.h_M, h.h_S, witness);
    Eigen::SelfAdjointEigenSolver<Matrix> es(P, Eigen::EigenvaluesOnly);
    worst = std::max(worst, es.eigenvalues().maxCoeff());
    if (!is_negative_definite(P, eps_feas_for(P))) return out;
  }
  out.feasible = true;
  out.max_block_eigenvalue = worst;
  out.witness = std::move(witness);
  return out;
}

double rr_analytic_max_mati(const StabilityQuery& query) {
  query.validate();
  std::vector<double> kp, kd;
  require_scaled_identity(query.gains, kp, kd);
  const double kp_max = *std::max_element(kp.begin(), kp.end());
  const double kd_min = *std::min_element(kd.begin(), kd.end());
  const double mati =
      (2.0 * kd_min / kp_max - 2.0 * query.mad) / static_cast<double>(query.N + 1);
  return std::max(mati, 0.0);
}

// ----------------------------- TOD feasibility ------------------------------

namespace {

// Scalar reduction of the TOD stability conditions: the decision vector is
// x = [r_m, r_s(N), q(N), u(N), g(N)] and every condition is an affine
// symmetric matrix B_k(x) = B0_k + sum_j x_j D_kj required negative definite
// (including 1x1 blocks -x_j enforcing positivity).
struct ScalarTodLmi {
  int N = 0;
  double hM = 0.0;
  std::vector<double> kp, kd;

  struct Block {
    Matrix B0;
    std::vector<std::pair<int, Matrix>> terms;
  };
  std::vector<Block> blocks;

  int dim() const { return 1 + 4 * N; }
  int ix_rm() const { return 0; }
  int ix_rs(int i) const { return 1 + i; }
  int ix_q(int i) const { return 1 + N + i; }
  int ix_u(int i) const { return 1 + 2 * N + i; }
  int ix_g(int i) const { return 1 + 3 * N + i; }

  void build() {
    blocks.clear();
    // Jump conditions (2x2 per slave).
    for (int i = 0; i < N; ++i) {
      Block b;
      b.B0 = Matrix::Zero(2, 2);
      Matrix Dq(2, 2), Du(2, 2), Dg(2, 2);
      Dq << -1.0 / (N - 1), 1.0, 1.0, 1.0;
      Du << 1.0, 0.0, 0.0, 0.0;
      Dg << 0.0, 0.0, 0.0, -1.0;
      b.terms = {{ix_q(i), Dq}, {ix_u(i), Du}, {ix_g(i), Dg}};
      blocks.push_back(std::move(b));
    }
    // Flow conditions ((N+3) x (N+3) per slave), coordinates
    // (dq_m, dq_si, int dq_m, int dq_si, eta_j for j != i ascending).
    for (int i = 0; i < N; ++i) {
      const int s = N + 3;
      Block b;
      b.B0 = Matrix::Zero(s, s);
      b.B0(0, 0) = -2.0 * kd[static_cast<size_t>(i)];
      b.B0(1, 1) = -2.0 * kd[static_cast<size_t>(i)];
      b.B0(0, 3) = b.B0(3, 0) = -kp[static_cast<size_t>(i)];
      b.B0(1, 2) = b.B0(2, 1) = -kp[static_cast<size_t>(i)];
      Matrix Drm = Matrix::Zero(s, s), Drs = Matrix::Zero(s, s),
             Dg = Matrix::Zero(s, s);
      Drm(0, 0) = hM;
      Drm(2, 2) = -1.0 / hM;
      Drs(1, 1) = hM;
      Drs(3, 3) = -1.0 / hM;
      Dg(1, 1) = hM;
      b.terms = {{ix_rm(), Drm}, {ix_rs(i), Drs}, {ix_g(i), Dg}};
      int r = 4;
      for (int j = 0; j < N; ++j) {
        if (j == i) continue;
        b.B0(r, 0) = b.B0(0, r) = kp[static_cast<size_t>(j)];
        Matrix Du = Matrix::Zero(s, s);
        Du(r, r) = -1.0 / hM;
        b.terms.emplace_back(ix_u(j), Du);
        ++r;
      }
      blocks.push_back(std::move(b));
    }
    // Positivity of every variable.
    for (int j = 0; j < dim(); ++j) {
      Block b;
      b.B0 = Matrix::Zero(1, 1);
      Matrix D(1, 1);
      D(0, 0) = -1.0;
      b.terms = {{j, D}};
      blocks.push_back(std::move(b));
    }
  }
};

struct SmoothedEval {
  double phi_true = 0.0; // max eigenvalue over all blocks
  double phi_mu = 0.0;   // log-sum-exp smoothing of phi_true
  Vector grad;           // gradient of phi_mu
};

// phi_mu(x) = mu * log sum_k tr exp(B_k(x)/mu), evaluated stably by shifting
// with the overall max eigenvalue; the gradient uses the eigenvectors as
// weights on the constant derivative matrices.
SmoothedEval eval_smoothed(const ScalarTodLmi& P, const Vector& x, double mu) {
  const size_t nb = P.blocks.size();
  std::vector<Vector> lams(nb);
  std::vector<Matrix> vecs(nb);
  double lam_max = -kInf;
  for (size_t k = 0; k < nb; ++k) {
    Matrix B = P.blocks[k].B0;
    for (const auto& [j, D] : P.blocks[k].terms) B += x[j] * D;
    Eigen::SelfAdjointEigenSolver<Matrix> es(B);
    lams[k] = es.eigenvalues();
    vecs[k] = es.eigenvectors();
    lam_max = std::max(lam_max, lams[k].maxCoeff());
  }
  double Z = 0.0;
  for (size_t k = 0; k < nb; ++k)
    for (int a = 0; a < lams[k].size(); ++a)
      Z += std::exp((lams[k][a] - lam_max) / mu);

  SmoothedEval out;
  out.phi_true = lam_max;
  out.phi_mu = lam_max + mu * std::log(Z);
  out.grad = Vector::Zero(P.dim());
  for (size_t k = 0; k < nb; ++k) {
    for (int a = 0; a < lams[k].size(); ++a) {
      const double w = std::exp((lams[k][a] - lam_max) / mu) / Z;
      if (w < 1e-16) continue;
      const auto v = vecs[k].col(a);
      for (const auto& [j, D] : P.blocks[k].terms)
        out.grad[j] += w * v.dot(D * v);
    }
  }
  return out;
}

struct SolveOutcome {
  double best_phi = kInf;
  Vector best_x;
  int evaluations = 0;
};

// Minimizes max_k lambda_max(B_k(x)) by BFGS on the log-sum-exp smoothing
// with annealed smoothing parameter; keeps the best unsmoothed value seen.
SolveOutcome minimize_max_eigenvalue(const ScalarTodLmi& P, const Vector& x0,
                                     int eval_cap, double early_exit_phi) {
  SolveOutcome out;
  out.best_x = x0;
  Vector x = x0;
  auto evaluate = [&](const Vector& xx, double mu) {
    ++out.evaluations;
    SmoothedEval r = eval_smoothed(P, xx, mu);
    if (r.phi_true < out.best_phi) {
      out.best_phi = r.phi_true;
      out.best_x = xx;
    }
    return r;
  };

  const int d = P.dim();
  const double mus[] = {10.0, 1.0, 0.1, 0.01, 1e-3};
  const int n_stages = static_cast<int>(std::size(mus));
  for (int si = 0; si < n_stages; ++si) {
    const double mu = mus[si];
    // Per-stage budget: one coarse-smoothing stage stalling near its own
    // optimum must not starve the finer stages that expose the true margin.
    const int stage_budget =
        out.evaluations + (eval_cap - out.evaluations) / (n_stages - si);
    Matrix H = Matrix::Identity(d, d);
    SmoothedEval cur = evaluate(x, mu);
    if (out.best_phi < early_exit_phi) return out;
    int stagnant = 0;
    for (int it = 0; it < 4000; ++it) {
      if (out.evaluations >= eval_cap) return out;
      if (out.evaluations >= stage_budget) break;
      const Vector g = cur.grad;
      if (g.norm() < 1e-9 * (1.0 + std::abs(cur.phi_mu))) break;
      Vector p = -(H * g);
      if (p.dot(g) >= 0.0) {
        H = Matrix::Identity(d, d);
        p = -g;
      }
      const double gp = g.dot(p);
      double alpha = 1.0;
      SmoothedEval nxt;
      bool accepted = false;
      for (int ls = 0; ls < 40; ++ls) {
        if (out.evaluations >= eval_cap) return out;
        nxt = evaluate(x + alpha * p, mu);
        if (nxt.phi_mu <= cur.phi_mu + 1e-4 * alpha * gp) {
          accepted = true;
          break;
        }
        alpha *= 0.5;
      }
      if (!accepted) break;
      const double decrease = cur.phi_mu - nxt.phi_mu;
      const Vector s = alpha * p;
      const Vector y = nxt.grad - g;
      x += s;
      const double sy = s.dot(y);
      if (sy > 1e-12 * s.norm() * y.norm()) {
        const double rho = 1.0 / sy;
        const Vector Hy = H * y;
        H += (rho * rho * y.dot(Hy) + rho) * (s * s.transpose()) -
             rho * (Hy * s.transpose() + s * Hy.transpose());
      }
      cur = nxt;
      if (out.best_phi < early_exit_phi) return out;
      // Value stagnation: converged at this smoothing level.
      if (decrease < 1e-10 * (1.0 + std::abs(cur.phi_mu))) {
        if (++stagnant >= 3) break;
      } else {
        stagnant = 0;
      }
    }
  }
  return out;
}

LmiVariablesTOD scalars_to_tod_vars(const ScalarTodLmi& P, const Vector& x,
                                    int n) {
  LmiVariablesTOD v;
  v.R_m = x[P.ix_rm()] * Matrix::Identity(n, n);
  for (int i = 0; i < P.N; ++i) {
    v.R_s.push_back(x[P.ix_rs(i)] * Matrix::Identity(n, n));
    v.Q.push_back(x[P.ix_q(i)] * Matrix::Identity(n, n));
    v.U.push_back(x[P.ix_u(i)] * Matrix::Identity(n, n));
    v.G.push_back(x[P.ix_g(i)] * Matrix::Identity(n, n));
  }
  return v;
}

} // namespace

FeasibilityResultTOD feasible_tod(const StabilityQuery& query, double mati,
                                  const TodSolverOptions& options) {
  query.validate();
  if (!(mati > 0.0)) throw std::invalid_argument("feasible_tod: mati must be > 0");
  std::vector<double> kp, kd;
  require_scaled_identity(query.gains, kp, kd);

  ScalarTodLmi P;
  P.N = query.N;
  P.hM = mati + query.mad;
  P.kp = kp;
  P.kd = kd;
  P.build();

  Vector x0(P.dim());
  int evals_used = 0;
  if (static_cast<int>(options.warm_start.size()) == P.dim()) {
    for (int j = 0; j < P.dim(); ++j) x0[j] = options.warm_start[static_cast<size_t>(j)];
  } else {
    const double K = *std::max_element(kp.begin(), kp.end());
    x0[P.ix_rm()] = K;
    for (int i = 0; i < P.N; ++i) {
      x0[P.ix_rs(i)] = K;
      x0[P.ix_q(i)] = K;
      x0[P.ix_u(i)] = K / 4.0;
      x0[P.ix_g(i)] = 8.0 * K;
    }
    // Continuation over the delay horizon: cold starts near the feasibility
    // boundary stall, so pre-solve the same family at smaller h_M and chain
    // the witnesses. All evaluations count against the one cap.
    for (double fraction : {0.5, 0.8, 0.95}) {
      if (evals_used > options.evaluation_cap / 2) break;
      ScalarTodLmi Pf = P;
      Pf.hM = fraction * P.hM;
      Pf.build();
      const SolveOutcome stage = minimize_max_eigenvalue(
          Pf, x0, options.evaluation_cap / 8, -std::abs(options.target_margin));
      evals_used += stage.evaluations;
      if (stage.best_phi < 0.0) x0 = stage.best_x;
    }
  }

  const SolveOutcome sol = minimize_max_eigenvalue(
      P, x0, options.evaluation_cap - evals_used,
      -std::abs(options.target_margin));
  evals_used += sol.evaluations;

  FeasibilityResultTOD out;
  out.evaluations = evals_used;
  out.scalar_witness.assign(sol.best_x.data(), sol.best_x.data() + P.dim());
  out.max_block_eigenvalue = sol.best_phi;

  bool positive = true;
  for (int j = 0; j < P.dim(); ++j) positive = positive && sol.best_x[j] > 0.0;

  if (positive) {
    LmiVariablesTOD W = scalars_to_tod_vars(P, sol.best_x, query.n);
    bool all_nd = true;
    double worst = -kInf;
    for (int i = 0; i < query.N && all_nd; ++i) {
      const Matrix O = assemble_omega(i, query.N, W);
      const Matrix S = assemble_sigma(i, query.N, query.gains, P.hM, W);
      for (const Matrix* M : {&O, &S}) {
        Eigen::SelfAdjointEigenSolver<Matrix> es(*M, Eigen::EigenvaluesOnly);
        worst = std::max(worst, es.eigenvalues().maxCoeff());
        all_nd = all_nd && is_negative_definite(*M, eps_feas_for(*M));
      }
    }
    if (all_nd) {
      out.feasible = true;
      out.max_block_eigenvalue = worst;
      out.witness = std::move(W);
      return out;
    }
  }
  out.feasible = false;
  out.undecided = evals_used >= options.evaluation_cap;
  return out;
}

double default_mati_tolerance(Protocol protocol) {
  return protocol == Protocol::RR ? 1e-4 : 5e-3;
}

MaxMatiResult max_mati(const StabilityQuery& query, double tol) {
  query.validate();
  if (!(tol > 0.0)) throw std::invalid_argument("max_mati: tol must be > 0");

  std::vector<double> warm;
  bool any_undecided = false;
  auto test = [&](double m) -> bool {
    if (!(m > 0.0)) return false;
    if (query.protocol == Protocol::RR) return feasible_rr(query, m).feasible;
    TodSolverOptions opt;
    opt.warm_start = warm;
    const FeasibilityResultTOD r = feasible_tod(query, m, opt);
    if (r.feasible) warm = r.scalar_witness;
    if (r.undecided) any_undecided = true;
    return r.feasible;
  };

  MaxMatiResult out;
  const double floor = std::min(tol, 1e-3);
  if (!test(floor)) {
    out.undecided_warning = any_undecided;
    return out; // infeasible at every practical MATI
  }
  double lo = floor;
  double hi = std::max(4.0 * floor, 0.1);
  int guard = 0;
  while (test(hi)) {
    lo = hi;
    hi *= 2.0;
    if (++guard > 60)
      throw std::runtime_error("max_mati: no infeasible upper bracket found");
  }
  while (hi - lo > tol) {
    const double mid = 0.5 * (lo + hi);
    (test(mid) ? lo : hi) = mid;
  }
  out.feasible = true;
  out.mati = lo;
  out.undecided_warning = any_undecided;

  // Coarse monotonicity verification: feasibility may switch from true to
  // false at most once over an ascending scan past the found boundary.
  bool seen_infeasible = false;
  for (int j = 1; j <= 10; ++j) {
    const double m = 1.25 * out.mati * j / 10.0;
    const bool f = test(m);
    if (f && seen_infeasible)
      throw std::runtime_error("max_mati: feasibility not monotone in MATI");
    if (!f) seen_infeasible = true;
  }
  out.undecided_warning = out.undecided_warning || any_undecided;
  return out;
}

} // namespace teleop
