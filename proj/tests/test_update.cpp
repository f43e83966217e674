#include "smloc/update.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace smloc;
using namespace testing_support;

namespace {

struct OneStep {
  std::vector<SourceSet> before;
  std::vector<Interval> energy;
  std::vector<Ellipsoid> position;
  UpdateEvents events;
};

// One analytic-remainder update of every source from the same inputs.
OneStep update_all(const std::vector<SourceSet>& sets, std::span<const Sensor> sensors, const Vec& y, double width,
                   double alpha = 2.0) {
  OneStep out;
  out.before = sets;
  std::vector<Box> rem;
  for (const auto& s : sets) rem.push_back(bound_analytic_source(s, sensors, alpha));
  const auto L = static_cast<Eigen::Index>(sensors.size());
  const Box noise(Vec::Constant(L, -0.5 * width), Vec::Constant(L, 0.5 * width));
  const auto in = make_update_inputs(sets, sensors, alpha, y, noise, rem);
  for (int n = 0; n < static_cast<int>(sets.size()); ++n) {
    const auto pr = build_rho_update(sets, in, n);
    const auto ps = build_s_update(sets, in, n);
    out.position.push_back(
        apply_update(pr, conic::solve(pr.sdp), sets[static_cast<std::size_t>(n)].position, &out.events).first);
    out.energy.push_back(
        apply_update(ps, conic::solve(ps.sdp), sets[static_cast<std::size_t>(n)].energy, &out.events).first);
  }
  return out;
}

std::vector<SourceSet> sets_around(std::span<const SourceState> truth, double half_width, double radius) {
  std::vector<SourceSet> sets;
  for (const auto& x : truth) {
    sets.push_back({Interval(x.energy - half_width, x.energy + half_width), Ellipsoid::ball(x.position, radius)});
  }
  return sets;
}

}  // namespace

TEST(NullSpace, FullRankHasEmptyKernel) {
  EXPECT_EQ(null_space(Mat::Identity(3, 3)).cols(), 0);
}

TEST(NullSpace, ZeroMatrixGivesIdentity) {
  EXPECT_TRUE(null_space(Mat::Zero(2, 4)).isApprox(Mat::Identity(4, 4)));
}

TEST(NullSpace, RandomRankDeficient) {
  std::mt19937_64 rng(31);
  std::normal_distribution<double> g(0.0, 1.0);
  Mat A(3, 6);
  for (Eigen::Index i = 0; i < A.size(); ++i) A.data()[i] = g(rng);
  A.row(2) = A.row(0) + 2.0 * A.row(1);
  const Mat N = null_space(A);
  EXPECT_EQ(N.cols(), 4);
  EXPECT_LE((A * N).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LE((N.transpose() * N - Mat::Identity(4, 4)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Linearize, ShapeFactorsOnDiagonal) {
  const auto sensors = grid_sensors();
  const auto sets = sets_around(two_sources(), 100.0, 7.0);
  const auto lin = linearize(sets, sensors, 2.0);
  EXPECT_EQ(lin.E_hat.rows(), 6);
  EXPECT_DOUBLE_EQ(lin.E_hat(0, 0), 100.0);
  EXPECT_NEAR(lin.E_hat(1, 1), 7.0, 1e-12);
  EXPECT_NEAR(lin.E_hat(5, 5), 7.0, 1e-12);
  EXPECT_EQ(lin.E_hat(0, 3), 0.0);
}

TEST(MakeUpdateInputs, RejectsLengthMismatch) {
  const auto sensors = grid_sensors();
  const auto sets = sets_around(two_sources(), 100.0, 7.0);
  std::vector<Box> rem(2, Box::zero(9));
  EXPECT_THROW(make_update_inputs(sets, sensors, 2.0, Vec::Zero(8), Box::zero(9), rem), ContractViolation);
  rem.pop_back();
  EXPECT_THROW(make_update_inputs(sets, sensors, 2.0, Vec::Zero(9), Box::zero(9), rem), ContractViolation);
}

TEST(Update, NoiselessUpdateContractsAndKeepsTruth) {
  const auto sensors = grid_sensors();
  const auto truth = two_sources();
  const auto sets = sets_around(truth, 100.0, 7.0);
  const Vec y = measure(truth, sensors, 2.0);
  const auto step = update_all(sets, sensors, y, 0.0);
  // with 7 m of position uncertainty the energy bound cannot tighten yet, so
  // "not improved" outcomes are expected; solver failures are not
  EXPECT_EQ(step.events.solver_failures, 0);
  EXPECT_EQ(step.events.degenerate, 0);
  for (std::size_t n = 0; n < truth.size(); ++n) {
    EXPECT_LT(step.position[n].trace(), 0.5 * sets[n].position.trace()) << "source " << n;
    EXPECT_LE(step.energy[n].half_width(), sets[n].energy.half_width());
    EXPECT_TRUE(contains(step.position[n], truth[n].position, 1e-6));
    EXPECT_TRUE(step.energy[n].contains(truth[n].energy, 1e-6));
  }
}

TEST(Update, WidthAndTraceNeverIncrease) {
  std::mt19937_64 rng(32);
  const auto sensors = grid_sensors();
  const auto truth = two_sources();
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<SourceSet> sets;
    for (const auto& x : truth) {
      const Vec c = x.position + 3.0 * unit_ball_point(2, rng);
      sets.push_back({Interval(x.energy - 150.0, x.energy + 80.0), Ellipsoid(c, random_psd(2, rng, 6.0))});
    }
    Vec y = measure(truth, sensors, 2.0);
    for (Eigen::Index l = 0; l < y.size(); ++l) y(l) += 0.25 * (2.0 * unit_ball_point(1, rng)(0));
    const auto step = update_all(sets, sensors, y, 1.0);
    for (std::size_t n = 0; n < truth.size(); ++n) {
      EXPECT_LE(step.position[n].trace(), sets[n].position.trace() * (1.0 + 1e-9));
      EXPECT_LE(step.energy[n].half_width(), sets[n].energy.half_width() * (1.0 + 1e-9));
    }
  }
}

TEST(Update, SymmetricLayoutGivesCenteredRoundSet) {
  // single source at the origin, four sensors on the axes
  std::vector<Sensor> sensors{{v2(40, 0), 1.0}, {v2(-40, 0), 1.0}, {v2(0, 40), 1.0}, {v2(0, -40), 1.0}};
  const std::vector<SourceState> truth{{6000.0, v2(0, 0)}};
  const auto sets = sets_around(truth, 100.0, 7.0);
  const Vec y = measure(truth, sensors, 2.0);
  const auto step = update_all(sets, sensors, y, 0.5);
  const auto& e = step.position[0];
  EXPECT_LE(e.center().norm(), 1e-4);
  EXPECT_NEAR(e.shape()(0, 0), e.shape()(1, 1), 1e-4 * e.shape()(0, 0));
  EXPECT_LE(std::abs(e.shape()(0, 1)), 1e-4 * e.shape()(0, 0));
  EXPECT_NEAR(step.energy[0].center(), 6000.0, 1e-3);
}

TEST(Update, ContainsEveryConsistentGridPoint) {
  // Single source, so the feasible set is computable by brute force: every
  // (s, rho) in the initial set whose prediction matches y within the noise
  // box must remain inside the updated set.
  const auto sensors = grid_sensors();
  const std::vector<SourceState> truth{{6000.0, v2(-20, 0)}};
  const auto sets = sets_around(truth, 100.0, 7.0);
  const double width = 2.0;
  std::mt19937_64 rng(33);
  std::uniform_real_distribution<double> u(-0.5 * width, 0.5 * width);
  Vec y = measure(truth, sensors, 2.0);
  for (Eigen::Index l = 0; l < y.size(); ++l) y(l) += u(rng);
  const auto step = update_all(sets, sensors, y, width);

  int consistent = 0;
  const int n = 120;
  for (int i = 0; i <= n; ++i) {
    for (int j = 0; j <= n; ++j) {
      const Vec p = truth[0].position + v2(-7.0 + 14.0 * i / n, -7.0 + 14.0 * j / n);
      if ((p - truth[0].position).norm() > 7.0) continue;
      for (int k = 0; k <= 40; ++k) {
        const double s = 5900.0 + 200.0 * k / 40;
        const SourceState x[] = {{s, p}};
        const Vec r = y - measure(x, sensors, 2.0);
        if (r.cwiseAbs().maxCoeff() > 0.5 * width) continue;
        ++consistent;
        ASSERT_TRUE(contains(step.position[0], p, 1e-6)) << p.transpose();
        ASSERT_TRUE(step.energy[0].contains(s, 1e-6)) << s;
      }
    }
  }
  EXPECT_GT(consistent, 0);
}

TEST(ApplyUpdate, DegenerateKeepsPrevious) {
  EnergyUpdateProblem prob;
  prob.degenerate = true;
  UpdateEvents ev;
  const Interval prev(1.0, 3.0);
  const auto [iv, o] = apply_update(prob, conic::SdpSolution{}, prev, &ev);
  EXPECT_EQ(o, UpdateOutcome::Degenerate);
  EXPECT_EQ(iv.lo, 1.0);
  EXPECT_EQ(ev.degenerate, 1);
}

TEST(ApplyUpdate, SolverFailureKeepsPrevious) {
  PositionUpdateProblem prob;
  prob.center = {0, 1};
  prob.shape.order = 2;
  prob.shape.upper = {2, 3, 4};
  UpdateEvents ev;
  const Ellipsoid prev = Ellipsoid::ball(v2(1, 1), 2.0);
  const auto [e, o] = apply_update(prob, conic::SdpSolution{}, prev, &ev);
  EXPECT_EQ(o, UpdateOutcome::SolverFailure);
  EXPECT_EQ(e.center(), prev.center());
  EXPECT_EQ(ev.solver_failures, 1);
  EXPECT_EQ(ev.fallbacks(), 1);
}

TEST(ApplyUpdate, LargerTraceIsRejected) {
  PositionUpdateProblem prob;
  prob.center = {0, 1};
  prob.shape.order = 2;
  prob.shape.upper = {2, 3, 4};
  conic::SdpSolution sol;
  sol.status = conic::SolveStatus::Optimal;
  sol.values.resize(5);
  sol.values << 0.0, 0.0, 5.0, 0.0, 5.0;
  UpdateEvents ev;
  const auto [e, o] = apply_update(prob, sol, Ellipsoid::ball(v2(0, 0), 2.0), &ev);
  EXPECT_EQ(o, UpdateOutcome::NotImproved);
  EXPECT_NEAR(e.trace(), 8.0, 1e-12);
}

TEST(ApplyUpdate, ClipsNegativeEigenvalue) {
  PositionUpdateProblem prob;
  prob.center = {0, 1};
  prob.shape.order = 2;
  prob.shape.upper = {2, 3, 4};
  conic::SdpSolution sol;
  sol.status = conic::SolveStatus::Optimal;
  sol.values.resize(5);
  sol.values << 0.5, -0.5, 1.0, 0.0, -1e-10;
  UpdateEvents ev;
  const auto [e, o] = apply_update(prob, sol, Ellipsoid::ball(v2(0, 0), 2.0), &ev);
  EXPECT_EQ(o, UpdateOutcome::Adopted);
  EXPECT_EQ(ev.clipped, 1);
  EXPECT_GE(min_eigenvalue(e.shape()), 0.0);
}

TEST(ApplyUpdate, IntervalIntersectedWithPrevious) {
  EnergyUpdateProblem prob;
  prob.center = 0;
  prob.width_sq = 1;
  conic::SdpSolution sol;
  sol.status = conic::SolveStatus::Optimal;
  sol.values.resize(2);
  sol.values << 2.5, 1.0;  // [1.5, 3.5]
  const auto [iv, o] = apply_update(prob, sol, Interval(1.0, 3.0));
  EXPECT_EQ(o, UpdateOutcome::Adopted);
  EXPECT_DOUBLE_EQ(iv.lo, 1.5);
  EXPECT_DOUBLE_EQ(iv.hi, 3.0);
}

TEST(Lift, VacuousRowIsSkipped) {
  const auto sensors = grid_sensors();
  const auto truth = two_sources();
  const auto sets = sets_around(truth, 100.0, 7.0);
  const Vec y = measure(truth, sensors, 2.0);
  std::vector<Box> rem;
  for (const auto& s : sets) rem.push_back(bound_analytic_source(s, sensors, 2.0));
  rem[0].lo(4) = -1e9;  // sensor 4 can no longer say anything
  rem[0].hi(4) = 1e9;
  const Box noise = Box::zero(9);
  const auto in = make_update_inputs(sets, sensors, 2.0, y, noise, rem);
  const auto ls = lift(in, 2, 2);
  EXPECT_EQ(ls.skipped, 1);
  EXPECT_EQ(ls.psi_plus.rows(), 8);
  EXPECT_EQ(lift(in, 2, 2, 0.0).skipped, 1);  // fully vacuous: dropped even at zero tolerance
  EXPECT_EQ(lift(in, 2, 2, -1.0).skipped, 0);
}

TEST(Lift, LargerToleranceSkipsMore) {
  std::mt19937_64 rng(34);
  const auto sensors = grid_sensors();
  const auto truth = two_sources();
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<SourceSet> sets;
    for (const auto& x : truth) {
      sets.push_back({Interval(x.energy - 100.0, x.energy + 100.0), Ellipsoid::ball(x.position + 5.0 * unit_ball_point(2, rng), 7.0)});
    }
    std::vector<Box> rem;
    for (const auto& s : sets) rem.push_back(bound_analytic_source(s, sensors, 2.0));
    const auto in = make_update_inputs(sets, sensors, 2.0, measure(truth, sensors, 2.0), Box::zero(9), rem);
    int prev = -1;
    for (double t : kSkipLadder) {
      const int k = lift(in, 2, 2, t).skipped;
      EXPECT_GE(k, prev);
      prev = k;
    }
  }
}

TEST(Update, SkippedRowsKeepTruthInside) {
  // Relaxing rows away can only loosen the sets: truth stays inside at every
  // tolerance and the optimum does not get smaller.
  const auto sensors = grid_sensors();
  const std::vector<SourceState> truth{{6000.0, v2(-4, 2)}};  // next to the centre sensor
  const std::vector<SourceSet> sets{{Interval(5900.0, 6100.0), Ellipsoid::ball(v2(-1, 0), 7.0)}};
  const Vec y = measure(truth, sensors, 2.0);
  std::vector<Box> rem{bound_analytic_source(sets[0], sensors, 2.0)};
  const auto in = make_update_inputs(sets, sensors, 2.0, y, Box::zero(9), rem);
  double prev = 0.0;
  for (double t : {0.0, 1e-2, 1e-1, 0.5}) {
    const auto pr = build_rho_update(sets, in, 0, t);
    ASSERT_FALSE(pr.degenerate);
    const auto sol = conic::solve(pr.sdp);
    ASSERT_TRUE(conic::usable(sol.status)) << t;
    const auto [e, o] = apply_update(pr, sol, sets[0].position);
    EXPECT_TRUE(contains(e, truth[0].position, 1e-6)) << t;
    EXPECT_GE(sol.objective, prev - 1e-6 * (1.0 + prev)) << t;
    prev = sol.objective;
  }
}
