#pragma once

// Outer bounds on the first-order Taylor remainder of each source's energy
// contribution over its current bounding set.
//
// Analytical bounds work on interval x ball sets in reduced coordinates:
// t = |rho - rho_hat| in [0, R], k = cosine of the angle between rho - rho_hat
// and rho_hat - r, ds = s - s_hat. The remainder is then
//
//   H(k, ds, t) = g ( (s_hat + ds) / (t^2 + tau^2 + 2 t tau k)^(alpha/2)
//                     + alpha s_hat t k / tau^(alpha+1) - (s_hat + ds) / tau^alpha ),
//
// linear in ds and convex in k, so extremes sit at ds = +-S and at a short
// list of stationary points.

#include "smloc/geometry.hpp"
#include "smloc/model.hpp"

#include <numbers>
#include <random>
#include <span>
#include <utility>
#include <vector>

namespace smloc {

struct SensorPartition {
  std::vector<int> finite;    // U^f_l < inf
  std::vector<int> infinite;  // U^f_l = inf
};

/// H(k, ds, t) from the header comment.
inline double reduced_remainder(double k, double ds, double t, double s_hat, double tau, double gain,
                                double alpha) {
  const double dist2 = t * t + tau * tau + 2.0 * t * tau * k;
  const double num = s_hat + ds;
  double first;
  if (num == 0.0) {
    first = 0.0;
  } else if (dist2 <= 0.0) {
    first = num > 0.0 ? kInf : -kInf;
  } else {
    first = num / std::pow(dist2, 0.5 * alpha);
  }
  return gain * (first + alpha * s_hat * t * k / std::pow(tau, alpha + 1.0) - num / std::pow(tau, alpha));
}

namespace detail {

inline double clamp_unit(double k) { return std::max(-1.0, std::min(k, 1.0)); }

// Minimizer in k of H(., ds, t) before clamping.
inline double stationary_cosine(double ratio, double t, double tau, double alpha) {
  return ((std::pow(ratio, 1.0 / (0.5 * alpha + 1.0)) - 1.0) * tau * tau - t * t) / (2.0 * t * tau);
}

// Remainder interval for energy offsets ds in [-s_minus, s_plus] and t in
// [0, R]. Requires s_minus <= s_hat.
inline Interval analytic_bound(double s_hat, double s_minus, double s_plus, double R, double tau, double gain,
                               double alpha) {
  if (!(s_hat > 0.0)) throw ContractViolation("bound_analytic: energy center must be positive");
  if (s_minus < 0.0 || s_plus < 0.0 || R < 0.0) throw ContractViolation("bound_analytic: negative size");
  if (s_minus > s_hat) throw ContractViolation("bound_analytic: S exceeds s_hat");
  if (!(tau >= kMinDistance)) throw SingularityError("bound_analytic: sensor at the ball center");
  if (R == 0.0) return {0.0, 0.0};

  auto H = [&](double k, double ds, double t) { return reduced_remainder(k, ds, t, s_hat, tau, gain, alpha); };
  const double lower_ratio = 1.0 - s_minus / s_hat;
  const double upper_ratio = 1.0 + s_plus / s_hat;
  const double t1 = tau * (1.0 - std::pow(lower_ratio, 1.0 / (alpha + 1.0)));
  const double t2 = tau * (std::pow(upper_ratio, 1.0 / (alpha + 1.0)) - 1.0);
  const double k1 = clamp_unit(stationary_cosine(lower_ratio, R, tau, alpha));
  const double k2 = clamp_unit(stationary_cosine(upper_ratio, R, tau, alpha));

  const double lo = std::min({H(-1.0, -s_minus, std::min(t1, R)), H(1.0, s_plus, std::min(t2, R)),
                              H(k1, -s_minus, R), H(k2, s_plus, R), 0.0});
  if (R >= tau) return {lo, kInf};
  const double hi = std::max({H(1.0, -s_minus, R), H(-1.0, s_plus, R), H(-1.0, -s_minus, R), 0.0});
  return {lo, hi};
}

}  // namespace detail

/// Remainder interval for a sensor strictly outside the ball (R < tau).
inline Interval bound_analytic(double s_hat, double S, const Ball& ball, const Sensor& sensor, double alpha) {
  const double tau = detail::checked_distance(ball.center, sensor.position);
  if (ball.radius >= tau) throw ContractViolation("bound_analytic: sensor inside the ball");
  return detail::analytic_bound(s_hat, S, S, ball.radius, tau, sensor.gain, alpha);
}

/// Remainder interval for a sensor inside the ball (R > tau); hi is +inf.
inline Interval bound_analytic_inside(double s_hat, double S, const Ball& ball, const Sensor& sensor,
                                      double alpha) {
  const double tau = detail::checked_distance(ball.center, sensor.position);
  if (ball.radius < tau) throw ContractViolation("bound_analytic_inside: sensor outside the ball");
  return detail::analytic_bound(s_hat, S, S, ball.radius, tau, sensor.gain, alpha);
}

/// Analytical per-source box over the enclosing ball of the position set.
/// The energy lower offset is capped at s_hat (energies are positive), so an
/// interval reaching below zero still yields a sound bound.
inline Box bound_analytic_source(const SourceSet& set, std::span<const Sensor> sensors, double alpha) {
  const Ball ball = enclosing_ball(set.position);
  const double s_hat = set.energy.center();
  const double S = set.energy.half_width();
  const auto L = static_cast<Eigen::Index>(sensors.size());
  Box out = Box::zero(L);
  for (Eigen::Index l = 0; l < L; ++l) {
    const auto& sen = sensors[static_cast<std::size_t>(l)];
    const double tau = detail::checked_distance(ball.center, sen.position);
    const Interval iv = detail::analytic_bound(s_hat, std::min(S, s_hat), S, ball.radius, tau, sen.gain, alpha);
    out.lo(l) = iv.lo;
    out.hi(l) = iv.hi;
  }
  return out;
}

struct SamplingSettings {
  int samples = 400;        // boundary samples of the position set
  double inflation = 1.1;   // sampling is done on inflation * (current set)
};

/// Boundary-sampling remainder box for one source. The remainder is linear in
/// s, so only the two inflated energy endpoints are visited; for each of them
/// the position ellipsoid boundary is sampled and the unique interior critical
/// point (on the ray from the sensor through rho_hat) is added when it lies in
/// the inflated ellipsoid. A sensor inside the inflated ellipsoid gets hi = +inf.
template <class Rng>
Box bound_by_sampling(const SourceSet& set, std::span<const Sensor> sensors, double alpha,
                      const SamplingSettings& cfg, Rng& rng) {
  if (cfg.samples < 1) throw ContractViolation("bound_by_sampling: sample count must be positive");
  if (!(cfg.inflation >= 1.0)) throw ContractViolation("bound_by_sampling: inflation must be >= 1");
  const auto d = set.position.dim();
  const SourceState center{set.energy.center(), set.position.center()};
  const Ellipsoid inflated = set.position.scaled(cfg.inflation);
  const Mat E = cholesky(inflated.shape());
  const double S = cfg.inflation * set.energy.half_width();
  const double energies[2] = {std::max(center.energy - S, 0.0), center.energy + S};

  // boundary directions
  std::vector<Vec> dirs;
  dirs.reserve(static_cast<std::size_t>(cfg.samples));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  if (d == 2) {
    const double phase = 2.0 * std::numbers::pi * unit(rng);
    for (int k = 0; k < cfg.samples; ++k) {
      const double a = phase + 2.0 * std::numbers::pi * k / cfg.samples;
      Vec u(2);
      u << std::cos(a), std::sin(a);
      dirs.push_back(u);
    }
  } else {
    for (int k = 0; k < cfg.samples; ++k) {
      Vec u(d);
      for (Eigen::Index i = 0; i < d; ++i) u(i) = normal(rng);
      const double nu = u.norm();
      if (nu > 0.0) dirs.push_back(u / nu);
    }
  }

  const auto L = static_cast<Eigen::Index>(sensors.size());
  Box out = Box::zero(L);  // the expansion point contributes 0
  for (Eigen::Index l = 0; l < L; ++l) {
    const auto& sen = sensors[static_cast<std::size_t>(l)];
    const std::span<const Sensor> one(&sen, 1);
    const bool inside = contains(inflated, sen.position, 0.0);
    double lo = 0.0, hi = 0.0;
    auto visit = [&](double s, const Vec& rho) {
      if ((rho - sen.position).norm() < kMinDistance) return;
      const double v = source_remainder({s, rho}, center, one, alpha)(0);
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    };
    const double tau = (center.position - sen.position).norm();
    for (double s : energies) {
      for (const auto& u : dirs) visit(s, center.position + E * u);
      if (tau >= kMinDistance && center.energy > 0.0 && s > 0.0) {
        const double dstar = tau * std::pow(s / center.energy, 1.0 / (alpha + 1.0));
        const Vec rho = sen.position + (dstar / tau) * (center.position - sen.position);
        if (contains(inflated, rho, 0.0)) visit(s, rho);
      }
    }
    out.lo(l) = lo;
    out.hi(l) = inside ? kInf : hi;
  }
  return out;
}

/// Minkowski sum of the per-source boxes and the finite/infinite split.
inline std::pair<Box, SensorPartition> aggregate(std::span<const Box> per_source) {
  Box total = minkowski_sum(per_source);
  SensorPartition part;
  for (Eigen::Index l = 0; l < total.dim(); ++l) {
    (std::isinf(total.hi(l)) ? part.infinite : part.finite).push_back(static_cast<int>(l));
  }
  return {std::move(total), std::move(part)};
}

}  // namespace smloc
