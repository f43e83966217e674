#pragma once

// Alternating (block-coordinate) drivers. Each outer iteration visits the
// sources in order; for source n the position ellipsoid and the energy
// interval are re-solved against the current bounds of all sources, then
// that source's remainder box (alg1/alg2) is refreshed before moving on.

#include "smloc/alpha_interval.hpp"
#include "smloc/conic.hpp"
#include "smloc/model.hpp"
#include "smloc/remainder.hpp"
#include "smloc/update.hpp"

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace smloc {

enum class Algorithm { Alg1, Alg2, Alg3 };

inline const char* to_string(Algorithm a) {
  switch (a) {
    case Algorithm::Alg1: return "alg1";
    case Algorithm::Alg2: return "alg2";
    case Algorithm::Alg3: return "alg3";
  }
  return "unknown";
}

inline Algorithm parse_algorithm(const std::string& s) {
  if (s == "alg1") return Algorithm::Alg1;
  if (s == "alg2") return Algorithm::Alg2;
  if (s == "alg3") return Algorithm::Alg3;
  throw ContractViolation("unknown algorithm '" + s + "' (expected alg1, alg2 or alg3)");
}

struct SolverConfig {
  Algorithm algorithm = Algorithm::Alg2;
  double delta = 1e-2;
  int max_iterations = 50;
  SamplingSettings sampling;  // alg1 only
  std::uint64_t seed = 0;     // alg1 sampling stream

  void validate() const {
    if (!(delta > 0.0)) throw ContractViolation("SolverConfig: delta must be positive");
    if (max_iterations < 1) throw ContractViolation("SolverConfig: max_iterations must be >= 1");
  }
};

/// Sum of position-shape traces and squared energy half-widths.
inline double objective(std::span<const SourceSet> sets) {
  double g = 0.0;
  for (const auto& s : sets) g += s.position.trace() + s.energy.half_width() * s.energy.half_width();
  return g;
}

struct IterationRecord {
  int iteration = 0;
  double g = 0.0;
  std::vector<SourceSet> sets;
  std::vector<double> center_error;  // |rho_hat_n - rho_n| when the truth is known
  int fallbacks = 0;                 // cumulative
};

struct IterationTrace {
  std::vector<IterationRecord> records;  // records[0] is the initial set
  UpdateEvents events;
  bool converged = false;  // stopped by delta rather than the iteration cap
};

struct LocalizationResult {
  std::vector<SourceSet> sets;
  IterationTrace trace;
};

namespace detail {

inline bool frozen(const SourceSet& s) { return max_eigenvalue(s.position.shape()) < 1e-12; }

// Builds and solves; unless the first solve is certified optimal, relaxes
// nearly vacuous rows further and keeps the usable solution with the lowest
// objective (every relaxation is valid, so any of them may be adopted).
template <class Build>
auto solve_relaxing(Build build) {
  auto best = build(kSkipLadder[0]);
  if (best.degenerate) return std::pair{std::move(best), conic::SdpSolution{}};
  conic::SdpSolution best_sol = conic::solve(best.sdp);
  int last_skipped = best.skipped_sensors;
  for (std::size_t i = 1; i < std::size(kSkipLadder) && best_sol.status != conic::SolveStatus::Optimal; ++i) {
    auto prob = build(kSkipLadder[i]);
    if (prob.degenerate || prob.skipped_sensors == last_skipped) continue;  // nothing new to try
    last_skipped = prob.skipped_sensors;
    auto sol = conic::solve(prob.sdp);
    if (!conic::usable(sol.status)) continue;
    if (!conic::usable(best_sol.status) || sol.objective < best_sol.objective) {
      best = std::move(prob);
      best_sol = std::move(sol);
    }
  }
  return std::pair{std::move(best), std::move(best_sol)};
}

template <class Rng>
Box remainder_box(Algorithm alg, const SourceSet& set, std::span<const Sensor> sensors, double alpha,
                  const SamplingSettings& cfg, Rng& rng) {
  return alg == Algorithm::Alg1 ? bound_by_sampling(set, sensors, alpha, cfg, rng)
                                : bound_analytic_source(set, sensors, alpha);
}

}  // namespace detail

/// Runs the configured algorithm from the initial sets. truth, if given,
/// fills the per-iteration center errors.
inline LocalizationResult localize(const Scenario& sc, const Vec& y, std::vector<SourceSet> sets,
                                   const SolverConfig& cfg, std::span<const SourceState> truth = {}) {
  cfg.validate();
  sc.validate();
  if (sets.empty()) throw ContractViolation("localize: no initial sets");
  if (y.size() != static_cast<Eigen::Index>(sc.sensors.size())) {
    throw ContractViolation("localize: measurement length differs from the sensor count");
  }
  const bool alpha_interval = cfg.algorithm == Algorithm::Alg3;
  if (!alpha_interval && !sc.alpha.is_known()) {
    throw ContractViolation("localize: alg1/alg2 need a known decay factor");
  }
  const std::span<const Sensor> sensors(sc.sensors);
  const double alpha = sc.alpha.nominal();
  const int N = static_cast<int>(sets.size());
  std::mt19937_64 rng(cfg.seed);

  LocalizationResult res;
  auto& tr = res.trace;
  auto record = [&](int it) {
    IterationRecord r;
    r.iteration = it;
    r.g = objective(sets);
    r.sets = sets;
    for (std::size_t n = 0; n < truth.size() && n < sets.size(); ++n) {
      r.center_error.push_back((sets[n].position.center() - truth[n].position).norm());
    }
    r.fallbacks = tr.events.fallbacks();
    tr.records.push_back(std::move(r));
  };
  record(0);

  std::vector<Box> rem;
  if (!alpha_interval) {
    for (const auto& s : sets) rem.push_back(detail::remainder_box(cfg.algorithm, s, sensors, alpha, cfg.sampling, rng));
  }

  for (int it = 1; it <= cfg.max_iterations; ++it) {
    const double g_prev = objective(sets);
    EnergyIntervals iv;
    if (alpha_interval) iv = energy_intervals(sets, sensors, sc.alpha);
    for (int n = 0; n < N; ++n) {
      auto& cur = sets[static_cast<std::size_t>(n)];
      if (detail::frozen(cur)) continue;
      try {
        if (alpha_interval) {
          const auto pr = build_rho_update_alpha(sets, sensors, y, iv, sc.noise_box, sc.alpha, n);
          const auto ps = build_s_update_alpha(sets, sensors, y, iv, sc.noise_box, sc.alpha, n);
          tr.events.dropped_sensors += static_cast<int>(pr.constraints.dropped.size());
          auto [e, o1] = apply_update(pr.inner, conic::solve(pr.inner.sdp), cur.position, &tr.events);
          auto [s, o2] = apply_update(ps, conic::solve(ps.sdp), cur.energy, sc.alpha, &tr.events);
          cur.position = std::move(e);
          cur.energy = s;
        } else {
          const auto in = make_update_inputs(sets, sensors, alpha, y, sc.noise_box, rem);
          const auto [pr, pr_sol] = detail::solve_relaxing([&](double t) { return build_rho_update(sets, in, n, t); });
          const auto [ps, ps_sol] = detail::solve_relaxing([&](double t) { return build_s_update(sets, in, n, t); });
          tr.events.dropped_sensors += pr.skipped_sensors;
          auto [e, o1] = apply_update(pr, pr_sol, cur.position, &tr.events);
          auto [s, o2] = apply_update(ps, ps_sol, cur.energy, &tr.events);
          cur.position = std::move(e);
          cur.energy = s;
          rem[static_cast<std::size_t>(n)] =
              detail::remainder_box(cfg.algorithm, cur, sensors, alpha, cfg.sampling, rng);
        }
      } catch (const SingularityError&) {
        // a center sits on a sensor: the linearization is undefined, keep the set
        tr.events.record(UpdateOutcome::SolverFailure);
      }
    }
    record(it);
    if (g_prev - objective(sets) <= cfg.delta) {
      tr.converged = true;
      break;
    }
  }
  res.sets = std::move(sets);
  return res;
}

inline LocalizationResult run_alg1(const Scenario& sc, const Vec& y, std::vector<SourceSet> init, SolverConfig cfg,
                                   std::span<const SourceState> truth = {}) {
  cfg.algorithm = Algorithm::Alg1;
  return localize(sc, y, std::move(init), cfg, truth);
}

inline LocalizationResult run_alg2(const Scenario& sc, const Vec& y, std::vector<SourceSet> init, SolverConfig cfg,
                                   std::span<const SourceState> truth = {}) {
  cfg.algorithm = Algorithm::Alg2;
  return localize(sc, y, std::move(init), cfg, truth);
}

inline LocalizationResult run_alg3(const Scenario& sc, const Vec& y, std::vector<SourceSet> init, SolverConfig cfg,
                                   std::span<const SourceState> truth = {}) {
  cfg.algorithm = Algorithm::Alg3;
  return localize(sc, y, std::move(init), cfg, truth);
}

}  // namespace smloc
