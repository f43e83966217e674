// Command-line front end: simulate one measurement draw, localize from it,
// run Monte Carlo sweeps, or run the brute-force oracle checks.

#include "smloc/harness/experiment.hpp"
#include "smloc/oracle.hpp"
#include "smloc/remainder.hpp"
#include "smloc/smloc.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <random>
#include <sstream>

namespace {

using json = nlohmann::json;
using namespace smloc;

json to_json(const Vec& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Vec vec_from(const json& j) {
  Vec v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  return v;
}

json to_json(const SourceSet& s) {
  json rows = json::array();
  const Mat& P = s.position.shape();
  for (Eigen::Index r = 0; r < P.rows(); ++r) rows.push_back(to_json(Vec(P.row(r).transpose())));
  return {{"energy", {s.energy.lo, s.energy.hi}}, {"center", to_json(s.position.center())}, {"shape", rows}};
}

SourceSet set_from(const json& j) {
  const auto& rows = j.at("shape");
  Mat P(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) P.row(static_cast<Eigen::Index>(r)) = vec_from(rows[r]).transpose();
  return {Interval{j.at("energy")[0].get<double>(), j.at("energy")[1].get<double>()},
          Ellipsoid(vec_from(j.at("center")), P)};
}

void write_json(const json& j, const std::string& path) {
  if (path.empty() || path == "-") {
    std::cout << j.dump(2) << '\n';
    return;
  }
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path);
  os << j.dump(2) << '\n';
}

struct Draw {
  Vec y;
  std::vector<SourceSet> init;
};

Draw simulate(const harness::ScenarioConfig& cfg, const Scenario& sc, std::uint64_t seed) {
  const auto in = harness::make_trial_inputs(cfg, sc, cfg.sources, seed, 0, 0);
  return {in.y, in.init};
}

int cmd_simulate(const std::string& scenario, std::uint64_t seed, const std::string& out) {
  const auto cfg = harness::load_config(scenario);
  const auto sc = harness::build_scenario(cfg);
  const auto d = simulate(cfg, sc, seed);
  json sets = json::array();
  for (const auto& s : d.init) sets.push_back(to_json(s));
  write_json({{"scenario", scenario}, {"seed", seed}, {"y", to_json(d.y)}, {"initial_sets", sets}}, out);
  return 0;
}

int cmd_localize(const std::string& scenario, const std::string& input, const std::string& algorithm, double delta,
                 std::uint64_t seed, const std::string& out, const std::string& dump) {
  const auto cfg = harness::load_config(scenario);
  const auto sc = harness::build_scenario(cfg);
  Draw d;
  if (!input.empty()) {
    std::ifstream is(input);
    if (!is) throw std::runtime_error("cannot open " + input);
    const auto j = json::parse(is);
    d.y = vec_from(j.at("y"));
    for (const auto& s : j.at("initial_sets")) d.init.push_back(set_from(s));
  } else {
    d = simulate(cfg, sc, seed);
  }
  SolverConfig sc_cfg;
  sc_cfg.algorithm = parse_algorithm(algorithm);
  sc_cfg.delta = delta > 0.0 ? delta : cfg.delta;
  sc_cfg.max_iterations = cfg.max_iterations;
  sc_cfg.sampling = {cfg.samples, cfg.inflation};
  sc_cfg.seed = seed;

  if (!dump.empty()) {
    if (sc_cfg.algorithm == Algorithm::Alg3) throw std::runtime_error("--dump-sdp supports alg1/alg2 only");
    std::vector<Box> rem;
    for (const auto& s : d.init) rem.push_back(bound_analytic_source(s, sc.sensors, sc.alpha.nominal()));
    const auto in = make_update_inputs(d.init, sc.sensors, sc.alpha.nominal(), d.y, sc.noise_box, rem);
    std::ofstream os(dump);
    if (!os) throw std::runtime_error("cannot write " + dump);
    conic::write_problem(os, build_rho_update(d.init, in, 0).sdp);
  }

  const auto res = localize(sc, d.y, d.init, sc_cfg, cfg.sources);
  json iters = json::array();
  for (const auto& r : res.trace.records) {
    json sets = json::array();
    for (const auto& s : r.sets) sets.push_back(to_json(s));
    iters.push_back({{"iteration", r.iteration}, {"g", r.g}, {"center_error", r.center_error}, {"sets", sets}});
    std::cerr << "iteration " << r.iteration << "  g = " << r.g << '\n';
  }
  std::cout << "source,center,energy_lo,energy_hi,shape_eigenvalues\n";
  for (std::size_t n = 0; n < res.sets.size(); ++n) {
    const auto& s = res.sets[n];
    Eigen::SelfAdjointEigenSolver<Mat> es(s.position.shape());
    auto join = [](const Vec& v) {
      std::ostringstream os;
      os << std::setprecision(10);
      for (Eigen::Index i = 0; i < v.size(); ++i) os << (i ? " " : "") << v(i);
      return os.str();
    };
    std::cout << std::setprecision(10) << n << ',' << join(s.position.center()) << ',' << s.energy.lo << ','
              << s.energy.hi << ',' << join(es.eigenvalues()) << '\n';
  }
  if (out.empty()) return 0;
  const auto& ev = res.trace.events;
  write_json({{"algorithm", algorithm},
              {"converged", res.trace.converged},
              {"iterations", iters},
              {"events",
               {{"solver_failures", ev.solver_failures},
                {"not_improved", ev.not_improved},
                {"degenerate", ev.degenerate},
                {"clipped", ev.clipped},
                {"dropped_sensors", ev.dropped_sensors},
                {"uncertified", ev.uncertified}}}},
             out);
  return 0;
}

int cmd_sweep(const std::string& scenario, const std::string& algorithm, int runs, std::uint64_t seed, bool seed_set,
              double delta, const std::string& out) {
  const auto cfg = harness::load_config(scenario);
  harness::ExperimentOptions opt;
  opt.algorithm_override = algorithm;
  opt.runs = runs;
  opt.seed = seed;
  opt.seed_set = seed_set;
  opt.delta = delta;
  const auto res = harness::run_experiment(cfg, opt);
  if (out.empty()) {
    harness::write_results_csv(std::cout, res.rows);
    return 0;
  }
  std::filesystem::create_directories(out);
  std::ofstream r(std::filesystem::path(out) / "results.csv");
  std::ofstream t(std::filesystem::path(out) / "timing.csv");
  if (!r || !t) throw std::runtime_error("cannot write into " + out);
  harness::write_results_csv(r, res.rows);
  harness::write_timing_csv(t, res.rows);
  std::cerr << "wrote " << (std::filesystem::path(out) / "results.csv").string() << " and timing.csv\n";
  return 0;
}

// Random remainder instances against the grid oracle, sensor outside and
// inside the ball.
int cmd_oracle(int runs, std::uint64_t seed, const std::string& out) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst_out = 0.0, worst_in = 0.0;
  int unbounded_ok = 0;
  json rows = json::array();
  for (int i = 0; i < runs; ++i) {
    const double s_hat = 1000.0 + 9000.0 * u(rng), S = 0.5 * s_hat * u(rng), R = 0.5 + 9.5 * u(rng);
    const double alpha = 2.0 + 2.0 * u(rng), gain = 0.5 + 1.5 * u(rng);
    const double tau_out = R * (1.05 + 5.0 * u(rng)), tau_in = R * (0.05 + 0.9 * u(rng));
    const Ball ball{Vec::Zero(2), R};
    Vec a(2), b(2);
    a << tau_out, 0.0;
    b << tau_in, 0.0;
    const auto an = bound_analytic(s_hat, S, ball, {a, gain}, alpha);
    const auto orc = oracle::remainder_extremes(s_hat, S, R, tau_out, gain, alpha);
    const auto an_in = bound_analytic_inside(s_hat, S, ball, {b, gain}, alpha);
    const auto orc_in = oracle::remainder_extremes(s_hat, S, R, tau_in, gain, alpha);
    const double e_out = std::max(std::abs(an.lo - orc.lo), std::abs(an.hi - orc.hi));
    const double e_in = std::abs(an_in.lo - orc_in.lo);
    worst_out = std::max(worst_out, e_out);
    worst_in = std::max(worst_in, e_in);
    unbounded_ok += std::isinf(an_in.hi) ? 1 : 0;
    rows.push_back({{"s_hat", s_hat}, {"S", S}, {"R", R}, {"tau", tau_out}, {"alpha", alpha}, {"gain", gain},
                    {"analytic", {an.lo, an.hi}}, {"oracle", {orc.lo, orc.hi}}, {"error", e_out}});
  }
  std::cout << "outside: worst |analytic - oracle| = " << worst_out << " over " << runs << " instances\n"
            << "inside:  worst lower-bound error = " << worst_in << ", upper bound +inf in " << unbounded_ok << "/"
            << runs << '\n';
  if (!out.empty()) write_json(rows, out);
  return worst_out <= 1e-6 && worst_in <= 1e-5 && unbounded_ok == runs ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Set-membership localization of acoustic sources"};
  app.require_subcommand(1);

  std::string scenario, input, algorithm = "alg2", out, dump;
  double delta = -1.0;
  std::uint64_t seed = 1;
  int runs = -1;

  auto* sim = app.add_subcommand("simulate", "draw one noisy measurement vector and initial sets");
  sim->add_option("scenario", scenario, "scenario file")->required()->check(CLI::ExistingFile);
  sim->add_option("--seed", seed, "random seed");
  sim->add_option("--out", out, "output JSON (default stdout)");

  auto* loc = app.add_subcommand("localize", "run one algorithm on one draw");
  loc->add_option("scenario", scenario, "scenario file")->required()->check(CLI::ExistingFile);
  loc->add_option("--input", input, "JSON written by 'simulate' (default: simulate with --seed)")
      ->check(CLI::ExistingFile);
  loc->add_option("--algorithm", algorithm, "alg1 | alg2 | alg3")->check(CLI::IsMember({"alg1", "alg2", "alg3"}));
  loc->add_option("--delta", delta, "termination threshold on the objective decrease");
  loc->add_option("--seed", seed, "random seed");
  loc->add_option("--out", out, "also write the per-iteration trace as JSON");
  loc->add_option("--dump-sdp", dump, "write the first position-update SDP in text form");

  auto* sweep = app.add_subcommand("sweep", "Monte Carlo sweep; writes results.csv and timing.csv");
  sweep->add_option("scenario", scenario, "scenario file")->required()->check(CLI::ExistingFile);
  auto* alg_opt = sweep->add_option("--algorithm", algorithm, "run only this algorithm (alg1 | alg2 | alg3 | nls)")
                      ->check(CLI::IsMember({"alg1", "alg2", "alg3", "nls"}));
  auto* seed_opt = sweep->add_option("--seed", seed, "random seed (default from scenario)");
  sweep->add_option("--runs", runs, "runs per sweep value (default from scenario)")->check(CLI::PositiveNumber);
  sweep->add_option("--delta", delta, "termination threshold on the objective decrease");
  sweep->add_option("--out", out, "output directory (default: results.csv to stdout)");

  auto* orc = app.add_subcommand("oracle", "check the analytical remainder bound against a dense grid");
  int oracle_runs = 100;
  orc->add_option("--runs", oracle_runs, "random instances")->check(CLI::PositiveNumber);
  orc->add_option("--seed", seed, "random seed");
  orc->add_option("--out", out, "per-instance JSON report");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*sim) return cmd_simulate(scenario, seed, out);
    if (*loc) return cmd_localize(scenario, input, algorithm, delta, seed, out, dump);
    if (*sweep) {
      return cmd_sweep(scenario, alg_opt->count() ? algorithm : "", runs, seed, seed_opt->count() > 0, delta, out);
    }
    if (*orc) return cmd_oracle(oracle_runs, seed, out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
