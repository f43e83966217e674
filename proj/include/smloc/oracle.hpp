#pragma once

// Brute-force reference computations used to validate the closed-form and
// conic results. Everything here evaluates the model directly at geometric
// points; none of it calls the bounding code it is meant to check.

#include "smloc/geometry.hpp"
#include "smloc/model.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>

namespace smloc::oracle {

namespace detail {

// Dense grid over a box, then repeated zooms (small grids) around the best
// node. f is maximized; pass a negated function for minima.
inline double grid_max(const std::function<double(double, double)>& f, double a0, double a1, double b0, double b1,
                       int na, int nb, int zooms = 40) {
  double best = -kInf, ba = a0, bb = b0;
  auto scan = [&](double lo_a, double hi_a, double lo_b, double hi_b, int ma, int mb) {
    for (int i = 0; i < ma; ++i) {
      const double a = ma == 1 ? lo_a : lo_a + (hi_a - lo_a) * i / (ma - 1);
      for (int j = 0; j < mb; ++j) {
        const double b = mb == 1 ? lo_b : lo_b + (hi_b - lo_b) * j / (mb - 1);
        const double v = f(a, b);
        if (v > best) best = v, ba = a, bb = b;
      }
    }
  };
  scan(a0, a1, b0, b1, na, nb);
  double wa = (a1 - a0) / std::max(na - 1, 1), wb = (b1 - b0) / std::max(nb - 1, 1);
  constexpr int m = 9;
  for (int z = 0; z < zooms; ++z) {
    scan(std::max(a0, ba - wa), std::min(a1, ba + wa), std::max(b0, bb - wb), std::min(b1, bb + wb), na == 1 ? 1 : m,
         nb == 1 ? 1 : m);
    wa *= 0.5;
    wb *= 0.5;
  }
  return best;
}

}  // namespace detail

/// Extremes of the first-order remainder of one sensor term over
/// s in {s_hat - S, s_hat + S} (the remainder is affine in s) and the disc of
/// radius R whose center is tau away from the sensor. The disc is swept by
/// (k, t): t = distance from the center, k = cosine between the offset and
/// the sensor-to-center direction; by symmetry the planar case covers any
/// dimension. If the sensor lies inside the disc the maximum is +inf.
inline Interval remainder_extremes(double s_hat, double S, double R, double tau, double gain, double alpha,
                                   int nk = 400, int nt = 400) {
  // sensor at the origin, center at (tau, 0)
  const double slope = alpha * s_hat / std::pow(tau, alpha + 1.0);
  auto value = [&](double ds, double k, double t) {
    const double x = tau + t * k, y = t * std::sqrt(std::max(0.0, 1.0 - k * k));
    const double dist = std::hypot(x, y);
    if (dist < kMinDistance) return s_hat + ds > 0.0 ? kInf : -kInf;
    const double f = (s_hat + ds) / std::pow(dist, alpha);
    const double lin = (s_hat + ds) / std::pow(tau, alpha) - slope * (x - tau);
    return gain * (f - lin);
  };
  double lo = kInf, hi = -kInf;
  for (double ds : {-S, S}) {
    lo = std::min(lo, -detail::grid_max([&](double k, double t) { return -value(ds, k, t); }, -1.0, 1.0, 0.0, R, nk,
                                        nt));
    hi = R >= tau ? kInf
                  : std::max(hi, detail::grid_max([&](double k, double t) { return value(ds, k, t); }, -1.0, 1.0, 0.0,
                                                  R, nk, nt));
  }
  return {lo, hi};
}

/// Min/max distance from r to the solid ellipsoid e by a boundary grid with
/// zoom refinement; min = 0 when r is inside.
inline Interval distance_extremes(const Ellipsoid& e, const Vec& r, int n = 2000) {
  const Mat F = cholesky(e.shape());
  const auto d = e.dim();
  auto dist = [&](double a, double b) {
    Vec u(d);
    if (d == 2) {
      u << std::cos(a), std::sin(a);
    } else {
      u << std::sin(b) * std::cos(a), std::sin(b) * std::sin(a), std::cos(b);
    }
    return (e.center() + F * u - r).norm();
  };
  const int na = d == 2 ? n : std::max(2, n / 2);
  const int nb = d == 2 ? 1 : std::max(2, n / 4);
  const double pi = std::numbers::pi;
  const double b1 = d == 2 ? 0.0 : pi;
  const double hi = detail::grid_max(dist, -pi, pi, 0.0, b1, na, nb);
  const double lo = contains(e, r, 0.0)
                        ? 0.0
                        : -detail::grid_max([&](double a, double b) { return -dist(a, b); }, -pi, pi, 0.0, b1, na, nb);
  return {lo, hi};
}

}  // namespace smloc::oracle
