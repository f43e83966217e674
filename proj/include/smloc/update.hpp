#pragma once

// S-procedure SDPs that shrink one source's energy interval or position
// ellipsoid given the current bounds on every source, the remainder box and
// the noise box.
//
// All sources are stacked into the lifted vector
//
//   xi = [1, u1_1, u2_1, ..., u1_N, u2_N, delta_1, ..., delta_{L+}]
//
// with s_j = s_hat_j + S_j u1_j, rho_j = rho_hat_j + E_j u2_j (|u1|, |u2| <= 1)
// and one delta in [-1, 1] per sensor with a finite remainder box, absorbing
// both the remainder and the noise. Sensors with a finite box give linear
// equalities Psi+ xi = 0, eliminated by restricting xi to ker(Psi+); sensors
// with an unbounded remainder give one-sided constraints xi' Psi-_l xi <= 0.

#include "smloc/conic.hpp"
#include "smloc/geometry.hpp"
#include "smloc/model.hpp"
#include "smloc/remainder.hpp"

#include <span>
#include <vector>

namespace smloc {

/// Basis of ker(M) from an SVD with cutoff 1e-10 * sigma_max.
inline Mat null_space(const Mat& M) {
  const auto n = M.cols();
  if (M.rows() == 0 || detail::max_abs(M) == 0.0) return Mat::Identity(n, n);
  Eigen::JacobiSVD<Mat> svd(M, Eigen::ComputeFullV);
  const Vec& sv = svd.singularValues();
  const double cut = 1e-10 * sv(0);
  Eigen::Index rank = 0;
  while (rank < sv.size() && sv(rank) > cut) ++rank;
  return svd.matrixV().rightCols(n - rank);
}

/// First-order data at the current centers.
struct Linearization {
  std::vector<SourceState> centers;
  Vec f_hat;    // f(x_hat), length L
  Mat jacobian; // L x (d+1)N
  Mat E_hat;    // block diag(S_j, E_j)
};

inline Linearization linearize(std::span<const SourceSet> sets, std::span<const Sensor> sensors, double alpha) {
  Linearization lin;
  if (sets.empty()) throw ContractViolation("linearize: no sources");
  const auto d = sets.front().position.dim();
  const auto d1 = d + 1;
  const auto N = static_cast<Eigen::Index>(sets.size());
  for (const auto& s : sets) lin.centers.push_back({s.energy.center(), s.position.center()});
  lin.f_hat = measure(lin.centers, sensors, alpha);
  lin.jacobian = jacobian(lin.centers, sensors, alpha);
  lin.E_hat = Mat::Zero(d1 * N, d1 * N);
  for (Eigen::Index j = 0; j < N; ++j) {
    const auto& s = sets[static_cast<std::size_t>(j)];
    lin.E_hat(j * d1, j * d1) = s.energy.half_width();
    lin.E_hat.block(j * d1 + 1, j * d1 + 1, d, d) = cholesky(s.position.shape());
  }
  return lin;
}

struct UpdateInputs {
  Vec y;
  Box remainder;  // aggregated over sources
  SensorPartition partition;
  Box noise;
  Linearization lin;
};

inline UpdateInputs make_update_inputs(std::span<const SourceSet> sets, std::span<const Sensor> sensors,
                                       double alpha, const Vec& y, const Box& noise,
                                       std::span<const Box> remainder_per_source) {
  if (remainder_per_source.size() != sets.size()) {
    throw ContractViolation("make_update_inputs: one remainder box per source is required");
  }
  const auto L = static_cast<Eigen::Index>(sensors.size());
  if (y.size() != L || noise.dim() != L) throw ContractViolation("make_update_inputs: length mismatch");
  UpdateInputs in;
  in.y = y;
  auto [box, part] = aggregate(remainder_per_source);
  in.remainder = std::move(box);
  in.partition = std::move(part);
  in.noise = noise;
  in.lin = linearize(sets, sensors, alpha);
  return in;
}

/// Lifted constraint data shared by the energy and position problems.
struct LiftedSystem {
  int dim = 0;      // d
  int sources = 0;  // N
  int order = 0;    // length of xi
  Mat psi_plus;     // L+ x order
  std::vector<Mat> psi_minus;  // order x order, one per sensor in L-
  Mat basis;        // ker(psi_plus), order x k
  int skipped = 0;  // nearly vacuous sensor rows left out

  int u1(int j) const { return 1 + j * (dim + 1); }
  int u2(int j) const { return u1(j) + 1; }
  int delta(int m) const { return 1 + sources * (dim + 1) + m; }
};

/// A sensor row whose worst violation over the current sets is at most this
/// fraction of its magnitude is left out. Leaving rows out only relaxes the
/// problem, so this is always sound; it keeps rows of a sensor sitting next
/// to an uncertain source (huge, nearly cancelling terms) from wrecking the
/// conditioning of the whole LMI.
inline constexpr double kNearlyVacuous = 1e-3;

/// Cutoffs tried in turn when a solve fails: each drops more of the least
/// informative rows, so every retry is still a valid relaxation.
inline constexpr double kSkipLadder[] = {kNearlyVacuous, 1e-2, 1e-1};

inline LiftedSystem lift(const UpdateInputs& in, int dim, int sources, double skip_tol = kNearlyVacuous) {
  LiftedSystem ls;
  ls.dim = dim;
  ls.sources = sources;
  const int nx = sources * (dim + 1);
  const Mat JE = in.lin.jacobian * in.lin.E_hat;
  // max of |JE.row(l) u| over the unit interval/ball product
  auto reach = [&](Eigen::Index l) {
    double r = 0.0;
    for (int j = 0; j < sources; ++j) {
      r += std::abs(JE(l, j * (dim + 1))) + JE.row(l).segment(j * (dim + 1) + 1, dim).norm();
    }
    return r;
  };
  std::vector<int> plus, minus;
  for (int lidx : in.partition.finite) {
    const auto l = static_cast<Eigen::Index>(lidx);
    const double c = std::abs(in.lin.f_hat(l) + in.remainder.center()(l) + in.noise.center()(l) - in.y(l));
    const double h = 0.5 * (in.remainder.width()(l) + in.noise.width()(l));
    const double r = reach(l);
    if (c + r - h <= skip_tol * (c + r + h)) {
      ++ls.skipped;
    } else {
      plus.push_back(lidx);
    }
  }
  for (int lidx : in.partition.infinite) {
    const auto l = static_cast<Eigen::Index>(lidx);
    const double a = in.lin.f_hat(l) + in.noise.lo(l) + in.remainder.lo(l) - in.y(l);
    const double r = reach(l);
    if (a + r <= skip_tol * (std::abs(a) + r)) {
      ++ls.skipped;
    } else {
      minus.push_back(lidx);
    }
  }
  ls.order = 1 + nx + static_cast<int>(plus.size());

  ls.psi_plus = Mat::Zero(static_cast<Eigen::Index>(plus.size()), ls.order);
  for (std::size_t m = 0; m < plus.size(); ++m) {
    const auto l = static_cast<Eigen::Index>(plus[m]);
    const auto r = static_cast<Eigen::Index>(m);
    const double rem_mid = in.remainder.center()(l);
    const double rem_half = 0.5 * in.remainder.width()(l);
    const double noise_mid = in.noise.center()(l);
    const double noise_half = 0.5 * in.noise.width()(l);
    ls.psi_plus(r, 0) = in.lin.f_hat(l) + rem_mid + noise_mid - in.y(l);
    ls.psi_plus.block(r, 1, 1, nx) = JE.row(l);
    ls.psi_plus(r, ls.delta(static_cast<int>(m))) = rem_half + noise_half;
  }
  for (int lidx : minus) {
    const auto l = static_cast<Eigen::Index>(lidx);
    Mat psi = Mat::Zero(ls.order, ls.order);
    psi(0, 0) = in.lin.f_hat(l) + in.noise.lo(l) + in.remainder.lo(l) - in.y(l);
    psi.block(0, 1, 1, nx) = 0.5 * JE.row(l);
    psi.block(1, 0, nx, 1) = 0.5 * JE.row(l).transpose();
    ls.psi_minus.push_back(psi);
  }
  // Row normalization leaves the kernel unchanged and makes the cutoff scale-free.
  Mat scaled = ls.psi_plus;
  for (Eigen::Index r = 0; r < scaled.rows(); ++r) {
    const double nr = scaled.row(r).norm();
    if (nr > 0.0) scaled.row(r) /= nr;
  }
  ls.basis = null_space(scaled);
  return ls;
}

namespace detail {

// Writes -N' Xi(tau) N into lmi at [offset, offset + k), declaring the
// multipliers tau1_j, tau2_j, tau+_m, tau-_l as nonnegative scalars.
inline void add_multiplier_block(conic::SdpProblem& p, conic::AffineMatrix& lmi, const LiftedSystem& ls,
                                 int offset) {
  const Mat& N = ls.basis;
  const auto k = N.cols();
  const Mat n0 = N.row(0).transpose() * N.row(0);  // N' e0 e0' N
  lmi.constant().block(offset, offset, k, k) -= n0;
  auto place = [&](const std::string& name, const Mat& inner) {
    const int var = p.add_scalar(name, true);
    Mat coef = Mat::Zero(lmi.order(), lmi.order());
    Mat blk = -(N.transpose() * inner * N);
    coef.block(offset, offset, k, k) = 0.5 * (blk + blk.transpose());
    lmi.add(var, coef);
  };
  const Mat e0 = Mat::Zero(ls.order, ls.order);
  auto diag_minus_e0 = [&](int first, int count) {
    Mat m = e0;
    m(0, 0) = -1.0;
    for (int i = 0; i < count; ++i) m(first + i, first + i) = 1.0;
    return m;
  };
  for (int j = 0; j < ls.sources; ++j) {
    place("tau1_" + std::to_string(j), diag_minus_e0(ls.u1(j), 1));
    place("tau2_" + std::to_string(j), diag_minus_e0(ls.u2(j), ls.dim));
  }
  for (int m = 0; m < static_cast<int>(ls.psi_plus.rows()); ++m) {
    place("tau_plus_" + std::to_string(m), diag_minus_e0(ls.delta(m), 1));
  }
  for (std::size_t l = 0; l < ls.psi_minus.size(); ++l) {
    place("tau_minus_" + std::to_string(l), ls.psi_minus[l]);
  }
}

}  // namespace detail

struct EnergyUpdateProblem {
  conic::SdpProblem sdp;
  int center = -1;    // s_hat'
  int width_sq = -1;  // S'^2
  bool degenerate = false;
  int skipped_sensors = 0;
};

struct PositionUpdateProblem {
  conic::SdpProblem sdp;
  std::vector<int> center;  // rho_hat'
  conic::MatrixVar shape;   // P'
  bool degenerate = false;
  int skipped_sensors = 0;
};

/// Energy-interval problem for source n: min S'^2 subject to the projected
/// S-procedure LMI [[-S'^2, Phi N], [N' Phi', -N' Xi N]] <= 0.
inline EnergyUpdateProblem build_s_update(std::span<const SourceSet> sets, const UpdateInputs& in, int n,
                                          double skip_tol = kNearlyVacuous) {
  const int N = static_cast<int>(sets.size());
  if (n < 0 || n >= N) throw ContractViolation("build_s_update: source index out of range");
  const int d = static_cast<int>(sets.front().position.dim());
  const LiftedSystem ls = lift(in, d, N, skip_tol);
  EnergyUpdateProblem out;
  out.skipped_sensors = ls.skipped;
  const auto k = static_cast<int>(ls.basis.cols());
  if (k == 0) {
    out.degenerate = true;
    return out;
  }
  const auto& set = sets[static_cast<std::size_t>(n)];
  const double s_hat = set.energy.center();
  const double S = set.energy.half_width();
  out.center = out.sdp.add_scalar("s_center", false, s_hat);
  out.width_sq = out.sdp.add_scalar("s_width_sq", true, S * S);

  conic::AffineMatrix lmi(1 + k);
  lmi.add_entry(out.width_sq, 0, 0, -1.0);
  // Phi N = (s_hat - s') N(0, :) + S N(u1_n, :)
  const Vec row = s_hat * ls.basis.row(0).transpose() + S * ls.basis.row(ls.u1(n)).transpose();
  for (int c = 0; c < k; ++c) {
    lmi.constant()(0, 1 + c) = lmi.constant()(1 + c, 0) = row(c);
  }
  lmi.add_column(out.center, 1, 0, -ls.basis.row(0).transpose());
  detail::add_multiplier_block(out.sdp, lmi, ls, 1);
  out.sdp.add_lmi(std::move(lmi));

  conic::LinearExpr obj;
  obj.add(out.width_sq, 1.0);
  out.sdp.minimize(obj);
  return out;
}

/// Position-ellipsoid problem for source n: min trace(P') subject to
/// [[-P', Phi N], [N' Phi', -N' Xi N]] <= 0.
inline PositionUpdateProblem build_rho_update(std::span<const SourceSet> sets, const UpdateInputs& in, int n,
                                              double skip_tol = kNearlyVacuous) {
  const int N = static_cast<int>(sets.size());
  if (n < 0 || n >= N) throw ContractViolation("build_rho_update: source index out of range");
  const int d = static_cast<int>(sets.front().position.dim());
  const LiftedSystem ls = lift(in, d, N, skip_tol);
  PositionUpdateProblem out;
  out.skipped_sensors = ls.skipped;
  const auto k = static_cast<int>(ls.basis.cols());
  if (k == 0) {
    out.degenerate = true;
    return out;
  }
  const auto& set = sets[static_cast<std::size_t>(n)];
  const Vec& rho_hat = set.position.center();
  const Mat E = cholesky(set.position.shape());
  for (int i = 0; i < d; ++i) out.center.push_back(out.sdp.add_scalar("rho_center_" + std::to_string(i), false, rho_hat(i)));
  out.shape = out.sdp.add_symmetric("P", d, set.position.shape());

  conic::AffineMatrix lmi(d + k);
  lmi.add_matrix_var(out.shape, 0, -1.0);
  const Mat NE = ls.basis.middleRows(ls.u2(n), d);  // d x k
  const Mat phiN = rho_hat * ls.basis.row(0) + E * NE;
  lmi.constant().block(0, d, d, k) = phiN;
  lmi.constant().block(d, 0, k, d) = phiN.transpose();
  for (int i = 0; i < d; ++i) {
    Mat coef = Mat::Zero(d + k, d + k);
    coef.block(i, d, 1, k) = -ls.basis.row(0);
    coef.block(d, i, k, 1) = -ls.basis.row(0).transpose();
    lmi.add(out.center[static_cast<std::size_t>(i)], coef);
  }
  detail::add_multiplier_block(out.sdp, lmi, ls, d);
  out.sdp.add_lmi(std::move(lmi));

  conic::LinearExpr obj;
  for (int i = 0; i < d; ++i) obj.add(out.shape.at(i, i), 1.0);
  out.sdp.minimize(obj);
  return out;
}

enum class UpdateOutcome { Adopted, SolverFailure, NotImproved, Degenerate };

/// Counts of non-adopted updates and repairs, accumulated over a run.
struct UpdateEvents {
  int solver_failures = 0;
  int not_improved = 0;
  int degenerate = 0;
  int clipped = 0;
  int dropped_sensors = 0;  // sensor constraints left out (empty or nearly vacuous), per update
  int uncertified = 0;      // adopted from a feasible solve whose optimality was not certified

  int fallbacks() const { return solver_failures + not_improved + degenerate; }
  void record(UpdateOutcome o, conic::SolveStatus s = conic::SolveStatus::Optimal) {
    if (o == UpdateOutcome::Adopted && s == conic::SolveStatus::Feasible) ++uncertified;
    if (o == UpdateOutcome::SolverFailure) ++solver_failures;
    if (o == UpdateOutcome::NotImproved) ++not_improved;
    if (o == UpdateOutcome::Degenerate) ++degenerate;
  }
};

/// Tolerance for "no larger than before" on squared width / trace.
inline double monotone_slack(double previous) { return 1e-9 * std::max(1.0, std::abs(previous)); }

/// Extracts the new interval; falls back to the previous one on failure or
/// when the optimum is larger. The result is intersected with the previous
/// interval, which keeps it sound (both contain the state) and never wider.
inline std::pair<Interval, UpdateOutcome> apply_update(const EnergyUpdateProblem& prob,
                                                      const conic::SdpSolution& sol, const Interval& previous,
                                                      UpdateEvents* events = nullptr) {
  auto finish = [&](Interval iv, UpdateOutcome o) {
    if (events) events->record(o, sol.status);
    return std::pair{iv, o};
  };
  if (prob.degenerate) return finish(previous, UpdateOutcome::Degenerate);
  if (!conic::usable(sol.status)) return finish(previous, UpdateOutcome::SolverFailure);
  double q = sol.value(prob.width_sq);
  if (q < 0.0) {
    q = 0.0;
    if (events) ++events->clipped;
  }
  const double S = std::sqrt(q);
  const double c = sol.value(prob.center);
  const double prevS = previous.half_width();
  if (q > prevS * prevS + monotone_slack(prevS * prevS)) return finish(previous, UpdateOutcome::NotImproved);
  const double lo = std::max(c - S, previous.lo);
  const double hi = std::min(c + S, previous.hi);
  if (lo > hi) return finish(previous, UpdateOutcome::SolverFailure);
  return finish(Interval(lo, hi), UpdateOutcome::Adopted);
}

inline std::pair<Ellipsoid, UpdateOutcome> apply_update(const PositionUpdateProblem& prob,
                                                       const conic::SdpSolution& sol, const Ellipsoid& previous,
                                                       UpdateEvents* events = nullptr) {
  auto finish = [&](Ellipsoid e, UpdateOutcome o) {
    if (events) events->record(o, sol.status);
    return std::pair{std::move(e), o};
  };
  if (prob.degenerate) return finish(previous, UpdateOutcome::Degenerate);
  if (!conic::usable(sol.status)) return finish(previous, UpdateOutcome::SolverFailure);
  const auto d = previous.dim();
  Vec c(d);
  for (Eigen::Index i = 0; i < d; ++i) c(i) = sol.value(prob.center[static_cast<std::size_t>(i)]);
  Mat P = sol.matrix(prob.shape);
  double lmin = 0.0;
  P = project_psd(P, &lmin);
  if (lmin < 0.0 && events) ++events->clipped;
  if (!P.allFinite() || !c.allFinite()) return finish(previous, UpdateOutcome::SolverFailure);
  if (P.trace() > previous.trace() + monotone_slack(previous.trace())) {
    return finish(previous, UpdateOutcome::NotImproved);
  }
  return finish(Ellipsoid(c, P), UpdateOutcome::Adopted);
}

}  // namespace smloc
