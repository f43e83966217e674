#pragma once

// Monte Carlo runner. For every sweep value and run, one noise draw and one
// set of initial bounds are shared by all algorithms (matched comparisons).
// Streams are seeded from (seed, sweep index, run), so results do not
// depend on thread scheduling.

#include "smloc/baseline.hpp"
#include "smloc/harness/scenario_io.hpp"
#include "smloc/solver.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

namespace smloc::harness {

/// Initial bounds whose centers are drawn so that the truth is interior:
/// energy center uniform within half_width, position center uniform in the
/// ball of the given radius around the truth.
template <class Rng>
std::vector<SourceSet> random_initial_sets(std::span<const SourceState> truth, double half_width, double radius,
                                           Rng& rng) {
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<SourceSet> sets;
  for (const auto& x : truth) {
    const double c = x.energy + half_width * unit(rng);
    Vec dir(x.position.size());
    for (Eigen::Index i = 0; i < dir.size(); ++i) dir(i) = normal(rng);
    const double r = radius * std::pow(0.5 * (unit(rng) + 1.0), 1.0 / static_cast<double>(dir.size()));
    const Vec center = x.position + r * dir.normalized();
    sets.push_back({Interval{c - half_width, c + half_width}, Ellipsoid::ball(center, radius)});
  }
  return sets;
}

/// Mean over sources of the squared center error, minimized over source
/// labelings.
inline double center_sq_error(std::span<const Vec> est, std::span<const SourceState> truth) {
  if (est.size() != truth.size()) throw ContractViolation("center_sq_error: size mismatch");
  std::vector<std::size_t> perm(est.size());
  std::iota(perm.begin(), perm.end(), 0);
  double best = kInf;
  do {
    double e = 0.0;
    for (std::size_t n = 0; n < perm.size(); ++n) e += (est[perm[n]] - truth[n].position).squaredNorm();
    best = std::min(best, e);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best / static_cast<double>(est.size());
}

inline std::vector<Vec> centers(std::span<const SourceSet> sets) {
  std::vector<Vec> c;
  for (const auto& s : sets) c.push_back(s.position.center());
  return c;
}

struct TrialOutcome {
  bool failed = false;
  double sq_error = 0.0;         // position
  double energy_sq_error = 0.0;  // by source label
  double final_g = std::numeric_limits<double>::quiet_NaN();
  bool contained = false;
  int iterations = 0;
  int fallbacks = 0;
  double seconds = 0.0;
  std::vector<double> sq_error_by_iteration;  // set methods only, index = iteration
};

struct ResultRow {
  std::string sweep;
  double value = 0.0;
  std::string algorithm;
  int runs = 0;      // successful runs
  int failures = 0;  // runs that threw
  double mse = 0.0;
  double energy_mse = 0.0;
  double mean_final_g = std::numeric_limits<double>::quiet_NaN();
  double containment = std::numeric_limits<double>::quiet_NaN();  // NaN for point estimates
  double mean_iterations = 0.0;
  double mean_fallbacks = 0.0;
  double mean_seconds = 0.0;  // written to the timing file only
};

struct ExperimentOptions {
  std::string algorithm_override;  // non-empty: run only this algorithm
  int runs = -1;                   // > 0 overrides the config
  std::uint64_t seed = 0;
  bool seed_set = false;
  double delta = -1.0;  // > 0 overrides the config
  unsigned threads = 0;  // 0 = hardware concurrency
};

namespace detail {

inline double spacing_scale(const ScenarioConfig& cfg, double spacing) {
  if (cfg.sources.size() < 2) throw ConfigError("source_spacing sweep needs at least two sources");
  const double d0 = (cfg.sources[1].position - cfg.sources[0].position).norm();
  return spacing / d0;
}

/// Configuration for one sweep value (noise width, sensor count, spacing).
inline std::pair<Scenario, std::vector<SourceState>> cell_scenario(const ScenarioConfig& cfg, double value) {
  ScenarioConfig c = cfg;
  double noise = cfg.noise_width;
  int count = -1;
  if (cfg.sweep == "noise_width") {
    noise = value;
  } else if (cfg.sweep == "sensor_count") {
    count = static_cast<int>(std::lround(value));
  } else if (cfg.sweep == "source_spacing") {
    const double k = spacing_scale(cfg, value);
    Vec centroid = Vec::Zero(cfg.dim);
    for (const auto& s : cfg.sources) centroid += s.position;
    centroid /= static_cast<double>(cfg.sources.size());
    for (auto& s : c.sources) s.position = centroid + k * (s.position - centroid);
  }
  Scenario sc = build_scenario(c, noise, count);
  return {sc, c.sources};
}

}  // namespace detail

/// One run of one algorithm ("alg1", "alg2", "alg3", "nls").
inline TrialOutcome run_trial(const Scenario& sc, std::span<const SourceState> truth, const Vec& y,
                              const std::vector<SourceSet>& init, const std::string& algorithm,
                              const SolverConfig& base) {
  TrialOutcome out;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    if (algorithm == "nls") {
      std::vector<SourceState> guess;
      for (const auto& s : init) guess.push_back({s.energy.center(), s.position.center()});
      const auto est = nls_estimate(sc.sensors, y, guess, sc.alpha.nominal());
      std::vector<Vec> c;
      for (const auto& x : est.sources) c.push_back(x.position);
      out.sq_error = center_sq_error(c, truth);
      for (std::size_t n = 0; n < truth.size(); ++n) {
        out.energy_sq_error += std::pow(est.sources[n].energy - truth[n].energy, 2) / truth.size();
      }
      out.iterations = est.iterations;
    } else {
      SolverConfig cfg = base;
      cfg.algorithm = parse_algorithm(algorithm);
      const auto res = localize(sc, y, init, cfg, truth);
      out.sq_error = center_sq_error(centers(res.sets), truth);
      for (std::size_t n = 0; n < truth.size(); ++n) {
        out.energy_sq_error += std::pow(res.sets[n].energy.center() - truth[n].energy, 2) / truth.size();
      }
      out.final_g = objective(res.sets);
      out.contained = true;
      for (std::size_t n = 0; n < truth.size(); ++n) out.contained = out.contained && contains(res.sets[n], truth[n]);
      out.iterations = static_cast<int>(res.trace.records.size()) - 1;
      out.fallbacks = res.trace.events.fallbacks();
      for (const auto& r : res.trace.records) out.sq_error_by_iteration.push_back(center_sq_error(centers(r.sets), truth));
    }
  } catch (const std::exception&) {
    out.failed = true;
  }
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

/// Shared inputs of one Monte Carlo run.
struct TrialInputs {
  Vec y;
  std::vector<SourceSet> init;
  std::uint64_t sampling_seed = 0;
};

inline TrialInputs make_trial_inputs(const ScenarioConfig& cfg, const Scenario& sc, std::span<const SourceState> truth,
                                     std::uint64_t seed, std::size_t cell, int run) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(cell), static_cast<std::uint32_t>(run)};
  std::mt19937_64 rng(seq);
  TrialInputs in;
  NoiseModel noise{cfg.noise_kind, sc.noise_box.hi - sc.noise_box.lo};
  in.y = measure(truth, sc.sensors, cfg.true_alpha) + sample_noise(noise, rng);
  in.init = random_initial_sets(truth, cfg.initial_energy_half_width, cfg.initial_radius, rng);
  in.sampling_seed = rng();
  return in;
}

struct ExperimentResult {
  std::vector<ResultRow> rows;
};

/// Runs the configured sweep. Rows are ordered by sweep value, then by the
/// algorithm order of the configuration.
inline ExperimentResult run_experiment(const ScenarioConfig& cfg, const ExperimentOptions& opt = {}) {
  const int runs = opt.runs > 0 ? opt.runs : cfg.runs;
  const std::uint64_t seed = opt.seed_set ? opt.seed : cfg.seed;
  std::vector<std::string> algs = cfg.algorithms;
  if (!opt.algorithm_override.empty()) algs = {opt.algorithm_override};
  for (const auto& a : algs) {
    if (a != "nls") (void)parse_algorithm(a);
  }
  SolverConfig base;
  base.delta = opt.delta > 0.0 ? opt.delta : cfg.delta;
  base.max_iterations = cfg.max_iterations;
  base.sampling.samples = cfg.samples;
  base.sampling.inflation = cfg.inflation;

  const bool by_iteration = cfg.sweep == "iterations";
  std::vector<double> cells = by_iteration ? std::vector<double>{0.0} : cfg.sweep_values;
  if (by_iteration) {
    const double top = *std::max_element(cfg.sweep_values.begin(), cfg.sweep_values.end());
    base.max_iterations = std::max(1, static_cast<int>(std::lround(top)));
  }

  ExperimentResult result;
  const unsigned threads = opt.threads > 0 ? opt.threads : std::max(1u, std::thread::hardware_concurrency());
  for (std::size_t ci = 0; ci < cells.size(); ++ci) {
    const auto [sc, truth] = detail::cell_scenario(cfg, cells[ci]);
    // outcomes[a][run]
    std::vector<std::vector<TrialOutcome>> outcomes(algs.size(), std::vector<TrialOutcome>(static_cast<std::size_t>(runs)));
    auto work = [&](unsigned tid) {
      for (int run = static_cast<int>(tid); run < runs; run += static_cast<int>(threads)) {
        const auto in = make_trial_inputs(cfg, sc, truth, seed, ci, run);
        SolverConfig sc_cfg = base;
        sc_cfg.seed = in.sampling_seed;
        for (std::size_t a = 0; a < algs.size(); ++a) {
          outcomes[a][static_cast<std::size_t>(run)] = run_trial(sc, truth, in.y, in.init, algs[a], sc_cfg);
        }
      }
    };
    if (threads == 1) {
      work(0);
    } else {
      std::vector<std::jthread> pool;
      for (unsigned t = 0; t < threads; ++t) pool.emplace_back(work, t);
    }

    auto summarize = [&](std::size_t a, double value, auto&& error_of) {
      ResultRow row;
      row.sweep = cfg.sweep;
      row.value = value;
      row.algorithm = algs[a];
      double contained = 0.0;
      double g = 0.0;
      for (const auto& o : outcomes[a]) {
        if (o.failed) {
          ++row.failures;
          continue;
        }
        ++row.runs;
        row.mse += error_of(o);
        row.energy_mse += o.energy_sq_error;
        row.mean_iterations += o.iterations;
        row.mean_fallbacks += o.fallbacks;
        row.mean_seconds += o.seconds;
        contained += o.contained ? 1.0 : 0.0;
        g += o.final_g;
      }
      if (row.runs > 0) {
        const double k = row.runs;
        row.mse /= k;
        row.energy_mse /= k;
        row.mean_iterations /= k;
        row.mean_fallbacks /= k;
        row.mean_seconds /= k;
        if (algs[a] != "nls") {
          row.containment = contained / k;
          row.mean_final_g = g / k;
        }
      } else {
        row.mse = row.energy_mse = std::numeric_limits<double>::quiet_NaN();
      }
      result.rows.push_back(row);
    };

    if (by_iteration) {
      for (double v : cfg.sweep_values) {
        const auto it = static_cast<std::size_t>(std::max(0L, std::lround(v)));
        for (std::size_t a = 0; a < algs.size(); ++a) {
          summarize(a, v, [&](const TrialOutcome& o) {
            if (o.sq_error_by_iteration.empty()) return o.sq_error;  // point estimate: iteration-free
            return o.sq_error_by_iteration[std::min(it, o.sq_error_by_iteration.size() - 1)];
          });
        }
      }
    } else {
      for (std::size_t a = 0; a < algs.size(); ++a) summarize(a, cells[ci], [](const TrialOutcome& o) { return o.sq_error; });
    }
  }
  return result;
}

// --- CSV ---------------------------------------------------------------------

namespace detail {

inline std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

inline double parse_num(const std::string& s) {
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  if (s == "inf") return kInf;
  if (s == "-inf") return -kInf;
  std::size_t pos = 0;
  const double v = std::stod(s, &pos);
  if (pos != s.size()) throw std::invalid_argument("bad number '" + s + "'");
  return v;
}

inline std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string f;
  while (std::getline(ss, f, ',')) out.push_back(f);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace detail

inline constexpr const char* kResultsHeader =
    "sweep,value,algorithm,runs,failures,mse,energy_mse,mean_final_g,containment,mean_iterations,mean_fallbacks";
inline constexpr const char* kTimingHeader = "sweep,value,algorithm,runs,mean_seconds";

/// Deterministic for a fixed seed: contains no timing.
inline void write_results_csv(std::ostream& os, std::span<const ResultRow> rows) {
  os << kResultsHeader << '\n';
  for (const auto& r : rows) {
    os << r.sweep << ',' << detail::fmt(r.value) << ',' << r.algorithm << ',' << r.runs << ',' << r.failures << ','
       << detail::fmt(r.mse) << ',' << detail::fmt(r.energy_mse) << ',' << detail::fmt(r.mean_final_g) << ','
       << detail::fmt(r.containment) << ',' << detail::fmt(r.mean_iterations) << ',' << detail::fmt(r.mean_fallbacks)
       << '\n';
  }
}

inline void write_timing_csv(std::ostream& os, std::span<const ResultRow> rows) {
  os << kTimingHeader << '\n';
  for (const auto& r : rows) {
    os << r.sweep << ',' << detail::fmt(r.value) << ',' << r.algorithm << ',' << r.runs << ','
       << detail::fmt(r.mean_seconds) << '\n';
  }
}

inline std::vector<ResultRow> read_results_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != kResultsHeader) throw std::runtime_error("results csv: unexpected header");
  std::vector<ResultRow> rows;
  int lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto f = detail::split(line);
    if (f.size() != 11) throw std::runtime_error("results csv: line " + std::to_string(lineno) + ": expected 11 fields");
    ResultRow r;
    try {
      r.sweep = f[0];
      r.value = detail::parse_num(f[1]);
      r.algorithm = f[2];
      r.runs = std::stoi(f[3]);
      r.failures = std::stoi(f[4]);
      r.mse = detail::parse_num(f[5]);
      r.energy_mse = detail::parse_num(f[6]);
      r.mean_final_g = detail::parse_num(f[7]);
      r.containment = detail::parse_num(f[8]);
      r.mean_iterations = detail::parse_num(f[9]);
      r.mean_fallbacks = detail::parse_num(f[10]);
    } catch (const std::exception& e) {
      throw std::runtime_error("results csv: line " + std::to_string(lineno) + ": " + e.what());
    }
    rows.push_back(r);
  }
  return rows;
}

}  // namespace smloc::harness
