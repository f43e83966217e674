#pragma once

#include "smloc/model.hpp"

#include <random>
#include <vector>

namespace testing_support {

using smloc::Mat;
using smloc::Vec;

inline Vec v2(double a, double b) {
  Vec v(2);
  v << a, b;
  return v;
}

/// Two-source layout used throughout: 3x3 grid on {-40, 0, 40}^2, sources at
/// (-20, 0) and (20, 32) with energies 6000 and 6500, alpha = 2, unit gains.
inline std::vector<smloc::Sensor> grid_sensors() {
  std::vector<smloc::Sensor> s;
  for (double y : {-40.0, 0.0, 40.0})
    for (double x : {-40.0, 0.0, 40.0}) s.push_back({v2(x, y), 1.0});
  return s;
}

inline std::vector<smloc::SourceState> two_sources() { return {{6000.0, v2(-20, 0)}, {6500.0, v2(20, 32)}}; }

inline smloc::Scenario two_source_scenario(double noise_width) {
  smloc::Scenario sc;
  sc.dim = 2;
  sc.sensors = grid_sensors();
  sc.alpha = smloc::Decay::known(2.0);
  sc.noise_box = smloc::Box(Vec::Constant(9, -0.5 * noise_width), Vec::Constant(9, 0.5 * noise_width));
  sc.true_sources = two_sources();
  return sc;
}

inline Mat random_psd(int d, std::mt19937_64& rng, double scale = 10.0) {
  std::normal_distribution<double> n(0.0, 1.0);
  Mat A(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) A(i, j) = n(rng);
  return scale * A * A.transpose() + 0.1 * Mat::Identity(d, d);
}

inline Vec unit_vector(int d, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Vec u(d);
  for (int i = 0; i < d; ++i) u(i) = n(rng);
  return u.normalized();
}

/// Uniform point in the unit ball.
inline Vec unit_ball_point(int d, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  return unit_vector(d, rng) * std::pow(u(rng), 1.0 / d);
}

}  // namespace testing_support
