#pragma once

// Scenario configuration files: one `key = value` per line, `#` starts a
// comment. Values are JSON (numbers, arrays, quoted strings); a bare word is
// read as a string. See README.md for the key list and defaults.

#include "smloc/model.hpp"

#include <json.hpp>

#include <cstdint>
#include <fstream>
#include <istream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace smloc::harness {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ScenarioConfig {
  // model
  int dim = 2;
  Decay alpha = Decay::known(2.0);
  double true_alpha = 2.0;  // decay used to simulate measurements
  Vec field = Vec::Constant(2, 100.0);

  // sensors
  std::string layout = "grid";  // grid | random | explicit
  int grid_per_side = 3;
  double grid_span = 80.0;      // grid covers [-span/2, span/2] per axis
  int sensor_count = 9;         // random layout
  std::uint64_t layout_seed = 1;
  double source_clearance = 5.0;  // random layout keeps this distance from true sources
  std::vector<Vec> sensor_positions;  // explicit layout
  std::vector<double> gains;          // empty => all 1

  // sources
  std::vector<SourceState> sources;

  // noise
  NoiseKind noise_kind = NoiseKind::TruncatedGaussianMixture;
  double noise_width = 0.3;  // side length of the noise box

  // initial sets
  double initial_energy_half_width = 100.0;
  double initial_radius = 7.0;

  // experiment
  std::vector<std::string> algorithms{"alg1", "alg2", "nls"};
  std::string sweep = "noise_width";  // noise_width | sensor_count | source_spacing | iterations
  std::vector<double> sweep_values{0.1, 0.2, 0.3, 0.4, 0.5};
  int runs = 200;
  std::uint64_t seed = 1;
  double delta = 1e-2;
  int max_iterations = 50;
  int samples = 400;
  double inflation = 1.1;
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline nlohmann::json parse_value(const std::string& text) {
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error&) {
    return text;  // bare word
  }
}

inline Vec to_vec(const nlohmann::json& j) {
  if (!j.is_array()) throw std::invalid_argument("expected an array of numbers");
  Vec v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  return v;
}

}  // namespace detail

/// Parses a configuration stream; name is used in error messages.
inline ScenarioConfig parse_config(std::istream& in, const std::string& name = "<config>") {
  ScenarioConfig cfg;
  bool true_alpha_set = false;
  std::vector<Vec> source_pos;
  std::vector<double> energies;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    auto fail = [&](const std::string& key, const std::string& msg) -> void {
      throw ConfigError(name + ":" + std::to_string(lineno) + ": " + (key.empty() ? "" : "'" + key + "': ") + msg);
    };
    if (eq == std::string::npos) fail("", "expected 'key = value'");
    const std::string key = detail::trim(line.substr(0, eq));
    const auto v = detail::parse_value(detail::trim(line.substr(eq + 1)));
    try {
      if (key == "dim") {
        cfg.dim = v.get<int>();
      } else if (key == "alpha") {
        if (v.is_array()) {
          if (v.size() != 2) fail(key, "interval needs two values");
          cfg.alpha = {v[0].get<double>(), v[1].get<double>()};
        } else {
          cfg.alpha = Decay::known(v.get<double>());
        }
      } else if (key == "true_alpha") {
        cfg.true_alpha = v.get<double>();
        true_alpha_set = true;
      } else if (key == "field") {
        cfg.field = detail::to_vec(v);
      } else if (key == "layout") {
        cfg.layout = v.get<std::string>();
        if (cfg.layout != "grid" && cfg.layout != "random" && cfg.layout != "explicit") {
          fail(key, "expected grid, random or explicit");
        }
      } else if (key == "grid_per_side") {
        cfg.grid_per_side = v.get<int>();
      } else if (key == "grid_span") {
        cfg.grid_span = v.get<double>();
      } else if (key == "sensor_count") {
        cfg.sensor_count = v.get<int>();
      } else if (key == "layout_seed") {
        cfg.layout_seed = v.get<std::uint64_t>();
      } else if (key == "source_clearance") {
        cfg.source_clearance = v.get<double>();
      } else if (key == "sensors") {
        cfg.sensor_positions.clear();
        for (const auto& p : v) cfg.sensor_positions.push_back(detail::to_vec(p));
      } else if (key == "gains") {
        cfg.gains = v.get<std::vector<double>>();
      } else if (key == "sources") {
        source_pos.clear();
        for (const auto& p : v) source_pos.push_back(detail::to_vec(p));
      } else if (key == "energies") {
        energies = v.get<std::vector<double>>();
      } else if (key == "noise") {
        const auto kind = v.get<std::string>();
        if (kind == "mixture") {
          cfg.noise_kind = NoiseKind::TruncatedGaussianMixture;
        } else if (kind == "uniform") {
          cfg.noise_kind = NoiseKind::Uniform;
        } else {
          fail(key, "expected mixture or uniform");
        }
      } else if (key == "noise_width") {
        cfg.noise_width = v.get<double>();
      } else if (key == "initial_energy_half_width") {
        cfg.initial_energy_half_width = v.get<double>();
      } else if (key == "initial_radius") {
        cfg.initial_radius = v.get<double>();
      } else if (key == "algorithms") {
        cfg.algorithms = v.get<std::vector<std::string>>();
      } else if (key == "sweep") {
        cfg.sweep = v.get<std::string>();
        if (cfg.sweep != "noise_width" && cfg.sweep != "sensor_count" && cfg.sweep != "source_spacing" &&
            cfg.sweep != "iterations") {
          fail(key, "expected noise_width, sensor_count, source_spacing or iterations");
        }
      } else if (key == "sweep_values") {
        cfg.sweep_values = v.get<std::vector<double>>();
      } else if (key == "runs") {
        cfg.runs = v.get<int>();
      } else if (key == "seed") {
        cfg.seed = v.get<std::uint64_t>();
      } else if (key == "delta") {
        cfg.delta = v.is_string() && v.get<std::string>() == "inf" ? kInf : v.get<double>();
      } else if (key == "max_iterations") {
        cfg.max_iterations = v.get<int>();
      } else if (key == "samples") {
        cfg.samples = v.get<int>();
      } else if (key == "inflation") {
        cfg.inflation = v.get<double>();
      } else {
        fail(key, "unknown key");
      }
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      fail(key, std::string("invalid value: ") + e.what());
    }
  }

  auto invalid = [&](const std::string& msg) { throw ConfigError(name + ": " + msg); };
  if (!source_pos.empty() || !energies.empty()) {
    if (source_pos.size() != energies.size()) invalid("'sources' and 'energies' differ in length");
    cfg.sources.clear();
    for (std::size_t i = 0; i < source_pos.size(); ++i) cfg.sources.push_back({energies[i], source_pos[i]});
  }
  if (!true_alpha_set) cfg.true_alpha = cfg.alpha.nominal();
  if (cfg.dim != 2 && cfg.dim != 3) invalid("'dim' must be 2 or 3");
  if (cfg.field.size() != cfg.dim) invalid("'field' must have dim entries");
  if (cfg.sources.empty()) invalid("no sources given");
  for (const auto& s : cfg.sources) {
    if (s.position.size() != cfg.dim) invalid("source dimension differs from 'dim'");
    if (!(s.energy > 0.0)) invalid("source energies must be positive");
  }
  if (cfg.layout == "explicit" && cfg.sensor_positions.empty()) invalid("sensor list is empty");
  if (cfg.layout == "grid" && cfg.grid_per_side < 1) invalid("'grid_per_side' must be >= 1");
  if (cfg.layout == "random" && cfg.sensor_count < 1) invalid("'sensor_count' must be >= 1");
  if (!(cfg.noise_width >= 0.0)) invalid("'noise_width' must be nonnegative");
  if (cfg.runs < 1) invalid("'runs' must be >= 1");
  if (cfg.sweep_values.empty()) invalid("'sweep_values' is empty");
  if (cfg.algorithms.empty()) invalid("'algorithms' is empty");
  return cfg;
}

inline ScenarioConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path + ": cannot open file");
  return parse_config(in, path);
}

/// Sensor layout for the configuration; count overrides the configured size
/// (grid: per-side count = round(sqrt(count)); random: number of sensors).
inline std::vector<Sensor> make_sensors(const ScenarioConfig& cfg, int count = -1) {
  std::vector<Vec> pos;
  const int d = cfg.dim;
  if (cfg.layout == "explicit") {
    pos = cfg.sensor_positions;
  } else if (cfg.layout == "grid") {
    const int n = count > 0 ? static_cast<int>(std::lround(std::sqrt(static_cast<double>(count)))) : cfg.grid_per_side;
    const int total = static_cast<int>(std::pow(n, d));
    for (int idx = 0; idx < total; ++idx) {
      Vec p(d);
      int rest = idx;
      for (int a = 0; a < d; ++a) {
        const int k = rest % n;
        rest /= n;
        p(a) = n == 1 ? 0.0 : -0.5 * cfg.grid_span + cfg.grid_span * k / (n - 1);
      }
      pos.push_back(p);
    }
  } else {
    // Nested: the first k sensors are the same for every k.
    const int n = count > 0 ? count : cfg.sensor_count;
    std::mt19937_64 rng(cfg.layout_seed);
    std::uniform_real_distribution<double> unit(-0.5, 0.5);
    while (static_cast<int>(pos.size()) < n) {
      Vec p(d);
      for (int a = 0; a < d; ++a) p(a) = cfg.field(a) * unit(rng);
      bool clear = true;
      for (const auto& s : cfg.sources) clear = clear && (p - s.position).norm() >= cfg.source_clearance;
      if (clear) pos.push_back(p);
    }
  }
  std::vector<Sensor> out;
  for (std::size_t i = 0; i < pos.size(); ++i) {
    const double g = cfg.gains.empty() ? 1.0 : cfg.gains.at(i);
    if (pos[i].size() != d) throw ConfigError("sensor dimension differs from 'dim'");
    out.push_back({pos[i], g});
  }
  if (out.empty()) throw ConfigError("sensor list is empty");
  return out;
}

/// Scenario for a given noise width and sensor count (defaults from cfg).
inline Scenario build_scenario(const ScenarioConfig& cfg, double noise_width = -1.0, int sensor_count = -1) {
  Scenario sc;
  sc.dim = cfg.dim;
  sc.sensors = make_sensors(cfg, sensor_count);
  sc.alpha = cfg.alpha;
  const double b = noise_width >= 0.0 ? noise_width : cfg.noise_width;
  const auto L = static_cast<Eigen::Index>(sc.sensors.size());
  sc.noise_box = Box(Vec::Constant(L, -0.5 * b), Vec::Constant(L, 0.5 * b));
  sc.true_sources = cfg.sources;
  sc.validate();
  return sc;
}

inline Scenario load_scenario(const std::string& path) { return build_scenario(load_config(path)); }

}  // namespace smloc::harness
