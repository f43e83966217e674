#pragma once

// Decay factor known only up to an interval [alpha1, alpha2] within [2, 4].
//
// Each source's contribution is first boxed using the extreme distances from
// its position ellipsoid to every sensor. The updates then work in the lifted
// vector z = [1, w, rho] with w = s^(2/alpha): a measurement interval
// f_{n,l} in [a, b] becomes the pair of quadratic constraints
// w / b~ <= |rho - r_l|^2 <= w / a~ with a~, b~ the transformed bounds.

#include "smloc/conic.hpp"
#include "smloc/geometry.hpp"
#include "smloc/model.hpp"
#include "smloc/update.hpp"

#include <span>
#include <vector>

namespace smloc {

/// x^p for x >= 0 through the log domain; 0^p = 0 for p > 0.
inline double pow_pos(double x, double p) {
  if (x < 0.0) throw ContractViolation("pow_pos: negative base");
  if (x == 0.0) return 0.0;
  if (std::isinf(x)) return kInf;
  return std::exp(p * std::log(x));
}

struct DistanceExtremes {
  double min = 0.0;
  double max = 0.0;
  bool fallback = false;  // conic solve failed, ball-based bounds used
};

/// Minimum and maximum of |rho - r| over the ellipsoid. The minimum is the
/// LMI form of the second-order cone problem min |c + E u|, |u| <= 1; the
/// maximum uses the S-procedure in u-coordinates, which is exact (one
/// quadratic constraint) and stays valid for singular shapes.
inline DistanceExtremes distance_extremes(const Ellipsoid& e, const Vec& r) {
  if (r.size() != e.dim()) throw ContractViolation("distance_extremes: dimension mismatch");
  const auto d = static_cast<int>(e.dim());
  const Vec c = e.center() - r;
  const double cn = c.norm();
  const double lmax = std::max(max_eigenvalue(e.shape()), 0.0);
  DistanceExtremes out;
  if (lmax == 0.0) {
    out.min = out.max = cn;
    return out;
  }
  const Mat E = cholesky(e.shape());
  const double radius = std::sqrt(lmax);
  const DistanceExtremes fallback{std::max(0.0, cn - radius), cn + radius, true};

  // max: min t s.t. [[E'E - tau I, E'c], [c'E, c'c - t + tau]] <= 0, tau >= 0
  {
    conic::SdpProblem p;
    const int t = p.add_scalar("t", false, (cn + radius) * (cn + radius));
    const int tau = p.add_scalar("tau", true, 0.0);
    conic::AffineMatrix m(d + 1);
    m.constant().topLeftCorner(d, d) = E.transpose() * E;
    m.constant().block(0, d, d, 1) = E.transpose() * c;
    m.constant().block(d, 0, 1, d) = (E.transpose() * c).transpose();
    m.constant()(d, d) = c.squaredNorm();
    m.add_entry(t, d, d, -1.0);
    Mat ct = -Mat::Identity(d + 1, d + 1);
    ct(d, d) = 1.0;
    m.add(tau, ct);
    p.add_lmi(std::move(m));
    conic::LinearExpr obj;
    obj.add(t, 1.0);
    p.minimize(obj);
    const auto sol = conic::solve(p);
    if (!conic::usable(sol.status)) return fallback;
    // any feasible t certifies an upper bound
    out.max = std::min(std::sqrt(std::max(sol.value(t), 0.0)), fallback.max);
  }

  if (contains(e, r, 0.0)) {
    out.min = 0.0;
    return out;
  }
  // min: min t s.t. [[t, (c + E u)'], [c + E u, t I]] >= 0, [[1, u'], [u, I]] >= 0
  {
    conic::SdpProblem p;
    const int t = p.add_scalar("t", false, cn);
    std::vector<int> u;
    for (int i = 0; i < d; ++i) u.push_back(p.add_scalar("u" + std::to_string(i)));
    conic::AffineMatrix soc(d + 1);
    soc.add_entry(t, 0, 0, -1.0);
    for (int i = 0; i < d; ++i) {
      soc.add_entry(t, i + 1, i + 1, -1.0);
      soc.constant()(0, i + 1) = soc.constant()(i + 1, 0) = -c(i);
      soc.add_column(u[static_cast<std::size_t>(i)], 1, 0, -E.col(i));
    }
    p.add_lmi(std::move(soc));
    conic::AffineMatrix ball(d + 1);
    ball.constant() = -Mat::Identity(d + 1, d + 1);
    for (int i = 0; i < d; ++i) ball.add_entry(u[static_cast<std::size_t>(i)], 0, i + 1, -1.0);
    p.add_lmi(std::move(ball));
    conic::LinearExpr obj;
    obj.add(t, 1.0);
    p.minimize(obj);
    const auto sol = conic::solve(p);
    if (sol.status != conic::SolveStatus::Optimal) {  // only an optimal t bounds the minimum
      out.min = fallback.min;
      out.fallback = true;
      return out;
    }
    // a feasible t is an upper bound on the minimum; back off by the solver tolerance
    const double tstar = sol.value(t);
    out.min = std::max({0.0, fallback.min, tstar - 1e-6 * (1.0 + tstar)});
  }
  return out;
}

/// Interval containing g s / |rho - r|^alpha over the energy interval,
/// position ellipsoid and decay interval. The energy lower end is clamped at 0.
inline Interval f_interval(const Interval& energy, const Ellipsoid& position, const Sensor& sensor,
                           const Decay& alpha) {
  const auto ext = distance_extremes(position, sensor.position);
  const double s_lo = std::max(energy.lo, 0.0);
  const double s_hi = std::max(energy.hi, 0.0);
  const double umax = std::max(pow_pos(ext.max, alpha.lo), pow_pos(ext.max, alpha.hi));
  const double lo = umax > 0.0 ? sensor.gain * s_lo / umax : 0.0;
  if (ext.min <= 0.0) return {lo, kInf};
  const double dmin = std::min(pow_pos(ext.min, alpha.lo), pow_pos(ext.min, alpha.hi));
  return {lo, sensor.gain * s_hi / dmin};
}

/// Per-source, per-sensor contribution intervals: entry [n][l].
using EnergyIntervals = std::vector<std::vector<Interval>>;

inline EnergyIntervals energy_intervals(std::span<const SourceSet> sets, std::span<const Sensor> sensors,
                                        const Decay& alpha) {
  EnergyIntervals out;
  for (const auto& s : sets) {
    std::vector<Interval> row;
    for (const auto& sen : sensors) row.push_back(f_interval(s.energy, s.position, sen, alpha));
    out.push_back(std::move(row));
  }
  return out;
}

/// Transformed data for source n shared by both Prop.-3 problems.
struct AlphaConstraints {
  Vec D_tilde;             // lower transformed bounds (0 => no upper distance constraint)
  Vec U_tilde;             // upper transformed bounds
  std::vector<int> active; // sensors giving a lower distance constraint
  std::vector<int> dropped;
  double Ds = 0.0, Us = 0.0;  // range of w = s^(2/alpha)
  Mat P_inv;                  // inverse of the (regularized) position shape
};

inline AlphaConstraints alpha_constraints(std::span<const SourceSet> sets, std::span<const Sensor> sensors,
                                          const Vec& y, const EnergyIntervals& iv, const Box& noise,
                                          const Decay& alpha, int n) {
  const auto L = static_cast<Eigen::Index>(sensors.size());
  AlphaConstraints ac;
  ac.D_tilde = Vec::Zero(L);
  ac.U_tilde = Vec::Zero(L);
  const double p1 = 2.0 / alpha.lo, p2 = 2.0 / alpha.hi;
  for (Eigen::Index l = 0; l < L; ++l) {
    double lo_other = noise.lo(l), hi_other = noise.hi(l);
    for (std::size_t j = 0; j < sets.size(); ++j) {
      if (static_cast<int>(j) == n) continue;
      lo_other += iv[j][static_cast<std::size_t>(l)].lo;
      hi_other += iv[j][static_cast<std::size_t>(l)].hi;
    }
    const double g = sensors[static_cast<std::size_t>(l)].gain;
    const double upper = (y(l) - lo_other) / g;
    if (!(upper > 0.0)) {
      ac.dropped.push_back(static_cast<int>(l));
      continue;
    }
    // largest transformed upper bound over the decay interval keeps the
    // constraint valid for every alpha
    ac.U_tilde(l) = std::max(pow_pos(upper, p1), pow_pos(upper, p2));
    const double lower = std::isinf(hi_other) ? 0.0 : std::max((y(l) - hi_other) / g, 0.0);
    ac.D_tilde(l) = std::min(pow_pos(lower, p1), pow_pos(lower, p2));
    ac.active.push_back(static_cast<int>(l));
  }
  const auto& set = sets[static_cast<std::size_t>(n)];
  const double s_lo = std::max(set.energy.lo, 0.0);
  const double s_hi = std::max(set.energy.hi, 0.0);
  ac.Ds = std::min(pow_pos(s_lo, p1), pow_pos(s_lo, p2));
  ac.Us = std::max(pow_pos(s_hi, p1), pow_pos(s_hi, p2));
  const Mat& P = set.position.shape();
  const auto d = P.rows();
  const double lmax = std::max(max_eigenvalue(P), 0.0);
  const Mat reg = project_psd(P) + std::max(1e-12, 1e-9 * lmax) * Mat::Identity(d, d);
  ac.P_inv = reg.llt().solve(Mat::Identity(d, d));
  ac.P_inv = 0.5 * (ac.P_inv + ac.P_inv.transpose());
  return ac;
}

namespace detail {

// Adds -Xi(tau) at [offset, offset + d + 2) of lmi; returns the multipliers.
inline std::vector<int> add_alpha_multipliers(conic::SdpProblem& p, conic::AffineMatrix& lmi, const AlphaConstraints& ac,
                                  const SourceSet& set, std::span<const Sensor> sensors, int offset) {
  const auto d = set.position.dim();
  const auto k = d + 2;
  std::vector<int> taus;
  auto place = [&](const std::string& name, const Mat& phi) {
    const int var = p.add_scalar(name, true);
    taus.push_back(var);
    Mat coef = Mat::Zero(lmi.order(), lmi.order());
    coef.block(offset, offset, k, k) = -phi;
    lmi.add(var, coef);
  };
  lmi.constant()(offset, offset) -= 1.0;

  const Vec& c = set.position.center();
  Mat phi_rho = Mat::Zero(k, k);
  phi_rho(0, 0) = c.dot(ac.P_inv * c) - 1.0;
  phi_rho.block(0, 2, 1, d) = -(ac.P_inv * c).transpose();
  phi_rho.block(2, 0, d, 1) = -(ac.P_inv * c);
  phi_rho.block(2, 2, d, d) = ac.P_inv;
  place("tau_rho", phi_rho);

  Mat phi_s = Mat::Zero(k, k);
  phi_s(0, 0) = ac.Ds * ac.Us;
  phi_s(0, 1) = phi_s(1, 0) = -0.5 * (ac.Ds + ac.Us);
  phi_s(1, 1) = 1.0;
  place("tau_s", phi_s);

  for (int l : ac.active) {
    const Vec& r = sensors[static_cast<std::size_t>(l)].position;
    auto ring = [&](double inv) {
      Mat m = Mat::Zero(k, k);
      m(0, 0) = r.squaredNorm();
      m(0, 1) = m(1, 0) = -0.5 * inv;
      m.block(0, 2, 1, d) = -r.transpose();
      m.block(2, 0, d, 1) = -r;
      m.block(2, 2, d, d) = Mat::Identity(d, d);
      return m;
    };
    // w / U~ <= |rho - r|^2
    place("tau_u_" + std::to_string(l), -ring(1.0 / ac.U_tilde(l)));
    // |rho - r|^2 <= w / D~
    if (ac.D_tilde(l) > 0.0) place("tau_d_" + std::to_string(l), ring(1.0 / ac.D_tilde(l)));
  }
  return taus;
}

// The raw lifted vector z = [1, w, rho] mixes magnitudes (w ~ 1e2..1e3,
// |r|^2 ~ 1e3) badly enough to stall the interior-point solver. The
// congruence z = T z~ with z~ = [1, (w - w_c) / w_h, (rho - c) / R] recenters
// on the current set, and the top block is scaled by 1 / top. Feasibility is
// unchanged; multiplier terms are then normalized.
inline void condition_lifted(conic::AffineMatrix& lmi, const std::vector<int>& taus, const AlphaConstraints& ac,
                             const SourceSet& set, int offset, double top) {
  const auto d = set.position.dim();
  const double w_c = 0.5 * (ac.Ds + ac.Us);
  const double w_h = std::max(0.5 * (ac.Us - ac.Ds), 1e-6 * std::max(w_c, 1.0));
  const double R = std::max(std::sqrt(std::max(max_eigenvalue(set.position.shape()), 0.0)), 1e-6);
  Mat M = Mat::Identity(lmi.order(), lmi.order());
  M.topLeftCorner(offset, offset) /= top;
  M(offset + 1, offset) = w_c;
  M(offset + 1, offset + 1) = w_h;
  M.block(offset + 2, offset, d, 1) = set.position.center();
  M.block(offset + 2, offset + 2, d, d) *= R;
  lmi.congruence(M);
  for (int t : taus) lmi.normalize_term(t);
}

}  // namespace detail

struct AlphaPositionProblem {
  PositionUpdateProblem inner;
  AlphaConstraints constraints;
};

struct AlphaEnergyProblem {
  conic::SdpProblem sdp;
  int center = -1;    // s~ (transformed center)
  int width_sq = -1;  // S~ (squared transformed half-width)
  AlphaConstraints constraints;
};

/// min trace(P') s.t. [[-P', Psi], [Psi', -Xi]] <= 0, Psi = [-rho', 0, I].
inline AlphaPositionProblem build_rho_update_alpha(std::span<const SourceSet> sets, std::span<const Sensor> sensors,
                                                   const Vec& y, const EnergyIntervals& iv, const Box& noise,
                                                   const Decay& alpha, int n) {
  if (n < 0 || n >= static_cast<int>(sets.size())) throw ContractViolation("build_rho_update_alpha: bad index");
  AlphaPositionProblem out;
  out.constraints = alpha_constraints(sets, sensors, y, iv, noise, alpha, n);
  const auto& set = sets[static_cast<std::size_t>(n)];
  const int d = static_cast<int>(set.position.dim());
  auto& pr = out.inner;
  for (int i = 0; i < d; ++i) {
    pr.center.push_back(pr.sdp.add_scalar("rho_center_" + std::to_string(i), false, set.position.center()(i)));
  }
  pr.shape = pr.sdp.add_symmetric("P", d, set.position.shape());
  conic::AffineMatrix lmi(d + d + 2);
  lmi.add_matrix_var(pr.shape, 0, -1.0);
  for (int i = 0; i < d; ++i) {
    lmi.constant()(i, d + 2 + i) = lmi.constant()(d + 2 + i, i) = 1.0;
    lmi.add_entry(pr.center[static_cast<std::size_t>(i)], i, d, -1.0);
  }
  const auto taus = detail::add_alpha_multipliers(pr.sdp, lmi, out.constraints, set, sensors, d);
  detail::condition_lifted(lmi, taus, out.constraints, set, d,
                           std::max(std::sqrt(std::max(max_eigenvalue(set.position.shape()), 0.0)), 1e-6));
  pr.sdp.add_lmi(std::move(lmi));
  conic::LinearExpr obj;
  for (int i = 0; i < d; ++i) obj.add(pr.shape.at(i, i), 1.0);
  pr.sdp.minimize(obj);
  return out;
}

/// min S~ s.t. [[-S~, Psi], [Psi', -Xi]] <= 0, Psi = [-s~, 1, 0].
inline AlphaEnergyProblem build_s_update_alpha(std::span<const SourceSet> sets, std::span<const Sensor> sensors,
                                               const Vec& y, const EnergyIntervals& iv, const Box& noise,
                                               const Decay& alpha, int n) {
  if (n < 0 || n >= static_cast<int>(sets.size())) throw ContractViolation("build_s_update_alpha: bad index");
  AlphaEnergyProblem out;
  out.constraints = alpha_constraints(sets, sensors, y, iv, noise, alpha, n);
  const auto& set = sets[static_cast<std::size_t>(n)];
  const int d = static_cast<int>(set.position.dim());
  const double mid = 0.5 * (out.constraints.Ds + out.constraints.Us);
  const double half = 0.5 * (out.constraints.Us - out.constraints.Ds);
  out.center = out.sdp.add_scalar("s_tilde", false, mid);
  out.width_sq = out.sdp.add_scalar("S_tilde", true, half * half);
  conic::AffineMatrix lmi(1 + d + 2);
  lmi.add_entry(out.width_sq, 0, 0, -1.0);
  lmi.constant()(0, 2) = lmi.constant()(2, 0) = 1.0;
  lmi.add_entry(out.center, 0, 1, -1.0);
  const auto taus = detail::add_alpha_multipliers(out.sdp, lmi, out.constraints, set, sensors, 1);
  detail::condition_lifted(lmi, taus, out.constraints, set, 1, std::max(half, 1e-6));
  out.sdp.add_lmi(std::move(lmi));
  conic::LinearExpr obj;
  obj.add(out.width_sq, 1.0);
  out.sdp.minimize(obj);
  return out;
}

/// Back-transforms [s~ - sqrt(S~), s~ + sqrt(S~)] through w -> w^(alpha/2)
/// over the decay interval, intersects with the previous interval and
/// adopts the result only if it is no wider.
inline std::pair<Interval, UpdateOutcome> apply_update(const AlphaEnergyProblem& prob, const conic::SdpSolution& sol,
                                                      const Interval& previous, const Decay& alpha,
                                                      UpdateEvents* events = nullptr) {
  auto finish = [&](Interval iv, UpdateOutcome o) {
    if (events) events->record(o, sol.status);
    return std::pair{iv, o};
  };
  if (!conic::usable(sol.status)) return finish(previous, UpdateOutcome::SolverFailure);
  const double h = std::sqrt(std::max(sol.value(prob.width_sq), 0.0));
  const double c = sol.value(prob.center);
  double wlo = c - h;
  if (wlo < 0.0) {
    wlo = 0.0;
    if (events) ++events->clipped;
  }
  const double whi = std::max(c + h, 0.0);
  const double q1 = alpha.lo / 2.0, q2 = alpha.hi / 2.0;
  const double Ds = std::min(pow_pos(wlo, q1), pow_pos(wlo, q2));
  const double Us = std::max(pow_pos(whi, q1), pow_pos(whi, q2));
  const double lo = std::max(Ds, previous.lo);
  const double hi = std::min(Us, previous.hi);
  if (!(lo <= hi)) return finish(previous, UpdateOutcome::SolverFailure);
  if (hi - lo > previous.hi - previous.lo) return finish(previous, UpdateOutcome::NotImproved);
  return finish(Interval(lo, hi), UpdateOutcome::Adopted);
}

}  // namespace smloc
