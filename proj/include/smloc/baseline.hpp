#pragma once

// Point-estimate comparator: damped Gauss-Newton (Levenberg-Marquardt with
// Marquardt diagonal scaling) on sum_l (y_l - f_l(x))^2.

#include "smloc/model.hpp"

#include <span>
#include <vector>

namespace smloc {

struct PointEstimate {
  std::vector<SourceState> sources;
  double cost = 0.0;  // sum of squared residuals
  int iterations = 0;
  bool diverged = false;  // stopped after repeated rejected steps
};

struct NlsSettings {
  int max_iterations = 200;
  double step_tol = 1e-8;  // relative step norm
  int max_rejections = 10;
  double initial_damping = 1e-3;
};

namespace detail {

inline Vec pack(std::span<const SourceState> xs) {
  const auto d1 = xs.front().position.size() + 1;
  Vec v(d1 * static_cast<Eigen::Index>(xs.size()));
  for (std::size_t n = 0; n < xs.size(); ++n) {
    const auto o = static_cast<Eigen::Index>(n) * d1;
    v(o) = xs[n].energy;
    v.segment(o + 1, d1 - 1) = xs[n].position;
  }
  return v;
}

inline std::vector<SourceState> unpack(const Vec& v, Eigen::Index d) {
  std::vector<SourceState> xs;
  for (Eigen::Index o = 0; o < v.size(); o += d + 1) xs.push_back({v(o), v.segment(o + 1, d)});
  return xs;
}

}  // namespace detail

inline PointEstimate nls_estimate(std::span<const Sensor> sensors, const Vec& y, std::span<const SourceState> guess,
                                  double alpha, const NlsSettings& cfg = {}) {
  if (guess.empty()) throw ContractViolation("nls_estimate: empty initial guess");
  if (y.size() != static_cast<Eigen::Index>(sensors.size())) throw ContractViolation("nls_estimate: length mismatch");
  const auto d = guess.front().position.size();
  Vec theta = detail::pack(guess);
  auto cost_of = [&](const Vec& th, Vec* resid) {
    const auto xs = detail::unpack(th, d);
    const Vec r = y - measure(xs, sensors, alpha);
    if (resid) *resid = r;
    return r.squaredNorm();
  };
  Vec r;
  double cost = cost_of(theta, &r);  // throws on a singular guess
  double lambda = cfg.initial_damping;
  int rejections = 0;
  PointEstimate out;
  for (int it = 0; it < cfg.max_iterations && cost > 0.0; ++it) {
    out.iterations = it + 1;
    const Mat J = jacobian(detail::unpack(theta, d), sensors, alpha);
    const Mat JtJ = J.transpose() * J;
    const Vec g = J.transpose() * r;
    Mat A = JtJ;
    A.diagonal() += lambda * JtJ.diagonal().cwiseMax(1e-12 * std::max(JtJ.diagonal().maxCoeff(), 1.0));
    const Vec step = A.ldlt().solve(g);
    const Vec trial = theta + step;
    Vec r_trial;
    double c_trial = kInf;
    try {
      c_trial = cost_of(trial, &r_trial);
    } catch (const SingularityError&) {
      c_trial = kInf;
    }
    if (std::isfinite(c_trial) && c_trial <= cost) {
      theta = trial;
      r = r_trial;
      cost = c_trial;
      lambda = std::max(lambda / 3.0, 1e-12);
      rejections = 0;
      if (step.norm() <= cfg.step_tol * (theta.norm() + cfg.step_tol)) break;
    } else {
      lambda *= 4.0;
      if (++rejections >= cfg.max_rejections) {
        out.diverged = true;
        break;
      }
    }
  }
  out.sources = detail::unpack(theta, d);
  out.cost = cost;
  return out;
}

}  // namespace smloc
