#pragma once

// Acoustic energy attenuation model: y_l = sum_n g_l s_n / |rho_n - r_l|^alpha + eps_l.
// Source states are ordered energy first: x_n = [s_n, rho_n].

#include "smloc/geometry.hpp"

#include <random>
#include <span>
#include <stdexcept>
#include <vector>

namespace smloc {

/// Raised when a source coincides with a sensor.
class SingularityError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

inline constexpr double kMinDistance = 1e-6;

struct Sensor {
  Vec position;
  double gain = 1.0;
};

struct SourceState {
  double energy = 0.0;
  Vec position;
};

/// Decay factor, either known (lo == hi) or an interval inside [2, 4].
struct Decay {
  double lo = 2.0;
  double hi = 2.0;

  static Decay known(double a) { return {a, a}; }
  bool is_known() const { return lo == hi; }
  double nominal() const { return 0.5 * (lo + hi); }
};

enum class NoiseKind { TruncatedGaussianMixture, Uniform };

/// Per-sensor noise of side length width_l, supported on [-width_l/2, width_l/2].
struct NoiseModel {
  NoiseKind kind = NoiseKind::TruncatedGaussianMixture;
  Vec width;

  Box box() const { return {-0.5 * width, 0.5 * width}; }
};

/// Per-source bound: energy interval x position ellipsoid.
struct SourceSet {
  Interval energy;
  Ellipsoid position;
};

inline bool contains(const SourceSet& set, const SourceState& x, double tol = 1e-9) {
  const double scale = std::max(1.0, std::abs(set.energy.center()));
  return set.energy.contains(x.energy, tol * scale) && contains(set.position, x.position, tol);
}

struct Scenario {
  int dim = 2;
  std::vector<Sensor> sensors;
  Decay alpha;
  Box noise_box;
  std::vector<SourceState> true_sources;

  std::size_t num_sensors() const { return sensors.size(); }

  void validate() const {
    if (dim != 2 && dim != 3) throw ContractViolation("Scenario: dimension must be 2 or 3");
    if (sensors.empty()) throw ContractViolation("Scenario: at least one sensor is required");
    for (const auto& s : sensors) {
      if (s.position.size() != dim) throw ContractViolation("Scenario: sensor dimension mismatch");
      if (!(s.gain > 0.0)) throw ContractViolation("Scenario: sensor gain must be positive");
    }
    if (!(alpha.lo > 0.0) || alpha.lo > alpha.hi) throw ContractViolation("Scenario: invalid decay factor");
    if (!alpha.is_known() && (alpha.lo < 2.0 || alpha.hi > 4.0)) {
      throw ContractViolation("Scenario: decay interval must lie within [2, 4]");
    }
    if (noise_box.dim() != static_cast<Eigen::Index>(sensors.size())) {
      throw ContractViolation("Scenario: noise box dimension must equal the sensor count");
    }
    for (const auto& x : true_sources) {
      if (x.position.size() != dim) throw ContractViolation("Scenario: source dimension mismatch");
      if (!(x.energy > 0.0)) throw ContractViolation("Scenario: source energy must be positive");
    }
  }
};

namespace detail {

inline double checked_distance(const Vec& rho, const Vec& r) {
  if (rho.size() != r.size()) throw ContractViolation("model: dimension mismatch");
  const double dist = (rho - r).norm();
  if (!(dist >= kMinDistance)) throw SingularityError("model: source coincides with a sensor");
  return dist;
}

}  // namespace detail

/// g * s / |rho - r|^alpha
inline double energy_term(const SourceState& x, const Sensor& sensor, double alpha) {
  const double dist = detail::checked_distance(x.position, sensor.position);
  return sensor.gain * x.energy / std::pow(dist, alpha);
}

/// Contribution of one source to every sensor.
inline Vec source_terms(const SourceState& x, std::span<const Sensor> sensors, double alpha) {
  Vec out(static_cast<Eigen::Index>(sensors.size()));
  for (std::size_t l = 0; l < sensors.size(); ++l) {
    out(static_cast<Eigen::Index>(l)) = energy_term(x, sensors[l], alpha);
  }
  return out;
}

inline Vec measure(std::span<const SourceState> states, std::span<const Sensor> sensors, double alpha) {
  Vec y = Vec::Zero(static_cast<Eigen::Index>(sensors.size()));
  for (const auto& x : states) y += source_terms(x, sensors, alpha);
  return y;
}

inline Vec measure(std::span<const SourceState> states, const Scenario& sc, double alpha) {
  return measure(states, std::span<const Sensor>(sc.sensors), alpha);
}

/// L x (d+1) block d f_{n,.} / d x_n, columns [s, rho].
inline Mat source_jacobian(const SourceState& x, std::span<const Sensor> sensors, double alpha) {
  const auto d = x.position.size();
  Mat J(static_cast<Eigen::Index>(sensors.size()), d + 1);
  for (std::size_t l = 0; l < sensors.size(); ++l) {
    const auto& sen = sensors[l];
    const double dist = detail::checked_distance(x.position, sen.position);
    const auto row = static_cast<Eigen::Index>(l);
    J(row, 0) = sen.gain / std::pow(dist, alpha);
    J.block(row, 1, 1, d) = (-alpha * sen.gain * x.energy / std::pow(dist, alpha + 2.0)) *
                            (x.position - sen.position).transpose();
  }
  return J;
}

/// Full L x (d+1)N Jacobian at the linearization point.
inline Mat jacobian(std::span<const SourceState> at, std::span<const Sensor> sensors, double alpha) {
  if (at.empty()) throw ContractViolation("jacobian: no sources");
  const auto d1 = at.front().position.size() + 1;
  Mat J(static_cast<Eigen::Index>(sensors.size()), d1 * static_cast<Eigen::Index>(at.size()));
  for (std::size_t n = 0; n < at.size(); ++n) {
    J.middleCols(static_cast<Eigen::Index>(n) * d1, d1) = source_jacobian(at[n], sensors, alpha);
  }
  return J;
}

/// Taylor remainder of one source's contribution: f(x) - f(xh) - J(xh)(x - xh).
inline Vec source_remainder(const SourceState& x, const SourceState& xh, std::span<const Sensor> sensors,
                            double alpha) {
  const auto d = x.position.size();
  Vec dx(d + 1);
  dx(0) = x.energy - xh.energy;
  dx.tail(d) = x.position - xh.position;
  return source_terms(x, sensors, alpha) - source_terms(xh, sensors, alpha) -
         source_jacobian(xh, sensors, alpha) * dx;
}

inline Vec remainder(std::span<const SourceState> x, std::span<const SourceState> xh,
                     std::span<const Sensor> sensors, double alpha) {
  if (x.size() != xh.size()) throw ContractViolation("remainder: state count mismatch");
  Vec out = Vec::Zero(static_cast<Eigen::Index>(sensors.size()));
  for (std::size_t n = 0; n < x.size(); ++n) out += source_remainder(x[n], xh[n], sensors, alpha);
  return out;
}

/// Draws one noise vector. The mixture is two equally weighted Gaussians at
/// +-width/2 with sigma = width/6, truncated to the box by rejection.
template <class Rng>
Vec sample_noise(const NoiseModel& model, Rng& rng) {
  const auto L = model.width.size();
  Vec out = Vec::Zero(L);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (Eigen::Index l = 0; l < L; ++l) {
    const double b = model.width(l);
    if (b < 0.0) throw ContractViolation("sample_noise: negative width");
    if (b == 0.0) continue;
    const double half = 0.5 * b;
    if (model.kind == NoiseKind::Uniform) {
      out(l) = -half + b * unit(rng);
      continue;
    }
    for (;;) {
      const double mu = unit(rng) < 0.5 ? half : -half;
      const double v = mu + (b / 6.0) * normal(rng);
      if (v >= -half && v <= half) {
        out(l) = v;
        break;
      }
    }
  }
  return out;
}

}  // namespace smloc
