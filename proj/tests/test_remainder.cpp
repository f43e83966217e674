#include "smloc/oracle.hpp"
#include "smloc/remainder.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace smloc;
using namespace testing_support;

namespace {

// Remainder of one sensor term, evaluated from the model at geometric points.
double point_remainder(const SourceState& x, const SourceState& xh, const Sensor& s, double alpha) {
  return source_remainder(x, xh, std::span<const Sensor>(&s, 1), alpha)(0);
}

}  // namespace

TEST(BoundAnalytic, ZeroSizeBound) {
  const auto iv = bound_analytic(6000.0, 0.0, Ball(v2(0, 0), 0.0), {v2(20, 0), 1.0}, 2.0);
  EXPECT_EQ(iv.lo, 0.0);
  EXPECT_EQ(iv.hi, 0.0);
}

TEST(BoundAnalytic, MatchesGridOracleOnReferenceInstance) {
  const auto iv = bound_analytic(6000.0, 100.0, Ball(v2(0, 0), 5.0), {v2(20, 0), 1.0}, 2.0);
  const auto orc = oracle::remainder_extremes(6000.0, 100.0, 5.0, 20.0, 1.0, 2.0);
  EXPECT_NEAR(iv.lo, orc.lo, 1e-6);
  EXPECT_NEAR(iv.hi, orc.hi, 1e-6);
}

TEST(BoundAnalytic, MatchesGridOracleOnRandomInstances) {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int k = 0; k < 25; ++k) {
    const double s_hat = 1000.0 + 9000.0 * u(rng), S = 0.5 * s_hat * u(rng), R = 0.5 + 9.5 * u(rng);
    const double tau = R * (1.05 + 5.0 * u(rng)), alpha = 2.0 + 2.0 * u(rng), g = 0.5 + 1.5 * u(rng);
    const auto iv = bound_analytic(s_hat, S, Ball(v2(0, 0), R), {v2(tau, 0), g}, alpha);
    const auto orc = oracle::remainder_extremes(s_hat, S, R, tau, g, alpha);
    EXPECT_NEAR(iv.lo, orc.lo, 1e-6) << "instance " << k;
    EXPECT_NEAR(iv.hi, orc.hi, 1e-6) << "instance " << k;
  }
}

TEST(BoundAnalytic, BracketsRandomEvaluations) {
  std::mt19937_64 rng(22);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const Vec c = v2(-20, 0);
  const SourceState xh{6000.0, c};
  const Sensor s{v2(0, 0), 1.0};
  const double S = 100.0, R = 7.0;
  const auto iv = bound_analytic(xh.energy, S, Ball(c, R), s, 2.0);
  for (int k = 0; k < 10000; ++k) {
    const SourceState x{xh.energy + S * u(rng), c + R * unit_ball_point(2, rng)};
    const double v = point_remainder(x, xh, s, 2.0);
    ASSERT_GE(v, iv.lo - 1e-9);
    ASSERT_LE(v, iv.hi + 1e-9);
  }
}

TEST(BoundAnalytic, SensorInsideBallIsRejected) {
  EXPECT_THROW(bound_analytic(6000.0, 10.0, Ball(v2(0, 0), 5.0), {v2(3, 0), 1.0}, 2.0), ContractViolation);
}

TEST(BoundAnalyticInside, UpperIsInfinite) {
  const auto iv = bound_analytic_inside(6000.0, 10.0, Ball(v2(0, 0), 5.0), {v2(3, 0), 1.0}, 2.0);
  EXPECT_TRUE(std::isinf(iv.hi));
  EXPECT_LE(iv.lo, 0.0);
}

TEST(BoundAnalyticInside, LowerMatchesGridOracle) {
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int k = 0; k < 25; ++k) {
    const double s_hat = 1000.0 + 9000.0 * u(rng), S = 0.5 * s_hat * u(rng), R = 0.5 + 9.5 * u(rng);
    const double tau = R * (0.05 + 0.9 * u(rng)), alpha = 2.0 + 2.0 * u(rng);
    const auto iv = bound_analytic_inside(s_hat, S, Ball(v2(0, 0), R), {v2(tau, 0), 1.0}, alpha);
    const auto orc = oracle::remainder_extremes(s_hat, S, R, tau, 1.0, alpha);
    EXPECT_LE(iv.lo, 0.0);
    EXPECT_NEAR(iv.lo, orc.lo, 1e-5) << "instance " << k;
  }
}

TEST(BoundAnalyticSource, DegenerateSetGivesZeroBox) {
  const SourceSet set{Interval(6000.0, 6000.0), Ellipsoid(v2(-20, 0), Mat::Zero(2, 2))};
  const auto sensors = grid_sensors();
  const Box b = bound_analytic_source(set, sensors, 2.0);
  EXPECT_TRUE(b.lo.isZero());
  EXPECT_TRUE(b.hi.isZero());
}

TEST(BoundAnalyticSource, EllipsoidUsesEnclosingBall) {
  Mat P = Mat::Zero(2, 2);
  P.diagonal() << 25.0, 1.0;
  const SourceSet set{Interval(5900.0, 6100.0), Ellipsoid(v2(-20, 0), P)};
  const auto sensors = grid_sensors();
  const Box b = bound_analytic_source(set, sensors, 2.0);
  for (std::size_t l = 0; l < sensors.size(); ++l) {
    const auto iv = bound_analytic(6000.0, 100.0, Ball(v2(-20, 0), 5.0), sensors[l], 2.0);
    EXPECT_DOUBLE_EQ(b.lo(static_cast<Eigen::Index>(l)), iv.lo);
    EXPECT_DOUBLE_EQ(b.hi(static_cast<Eigen::Index>(l)), iv.hi);
  }
}

TEST(BoundBySampling, DegenerateSetGivesZeroBox) {
  std::mt19937_64 rng(24);
  const SourceSet set{Interval(6000.0, 6000.0), Ellipsoid(v2(-20, 0), Mat::Zero(2, 2))};
  const auto sensors = grid_sensors();
  const Box b = bound_by_sampling(set, sensors, 2.0, {400, 1.1}, rng);
  EXPECT_LE(b.lo.cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LE(b.hi.cwiseAbs().maxCoeff(), 1e-12);
}

TEST(BoundBySampling, ContainsInteriorRemainders) {
  std::mt19937_64 rng(25);
  const auto sensors = grid_sensors();
  for (int trial = 0; trial < 5; ++trial) {
    const Mat P = random_psd(2, rng, 4.0);
    const SourceSet set{Interval(5900.0, 6100.0), Ellipsoid(v2(-20, 3), P)};
    const Box b = bound_by_sampling(set, sensors, 2.0, {400, 1.1}, rng);
    const SourceState xh{6000.0, set.position.center()};
    const Mat E = cholesky(P);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int k = 0; k < 1000; ++k) {
      const SourceState x{6000.0 + 100.0 * u(rng), set.position.center() + E * unit_ball_point(2, rng)};
      for (std::size_t l = 0; l < sensors.size(); ++l) {
        const double v = point_remainder(x, xh, sensors[l], 2.0);
        ASSERT_GE(v, b.lo(static_cast<Eigen::Index>(l)) - 1e-9);
        ASSERT_LE(v, b.hi(static_cast<Eigen::Index>(l)) + 1e-9);
      }
    }
  }
}

TEST(BoundBySampling, BallInputCloseToAnalytic) {
  std::mt19937_64 rng(26);
  const auto sensors = grid_sensors();
  const SourceSet set{Interval(5900.0, 6100.0), Ellipsoid::ball(v2(-20, 3), 5.0)};
  const Box a = bound_analytic_source(set, sensors, 2.0);
  // without inflation sampling explores a subset of the analytic domain
  const Box exact = bound_by_sampling(set, sensors, 2.0, {400, 1.0}, rng);
  for (Eigen::Index l = 0; l < a.dim(); ++l) {
    EXPECT_GE(exact.lo(l), a.lo(l) - 1e-9);
    EXPECT_LE(exact.hi(l), a.hi(l) + 1e-9);
    EXPECT_NEAR(exact.lo(l), a.lo(l), 0.05 * std::abs(a.lo(l)) + 1e-9);
    EXPECT_NEAR(exact.hi(l), a.hi(l), 0.05 * std::abs(a.hi(l)) + 1e-9);
  }
}

TEST(BoundBySampling, SensorInsideGivesInfiniteUpper) {
  std::mt19937_64 rng(27);
  const auto sensors = grid_sensors();
  const SourceSet set{Interval(5900.0, 6100.0), Ellipsoid::ball(v2(-2, 1), 5.0)};  // covers (0, 0)
  const Box b = bound_by_sampling(set, sensors, 2.0, {400, 1.1}, rng);
  EXPECT_TRUE(std::isinf(b.hi(4)));
  EXPECT_TRUE(std::isfinite(b.hi(0)));
}

TEST(BoundBySampling, RejectsBadSettings) {
  std::mt19937_64 rng(28);
  const auto sensors = grid_sensors();
  const SourceSet set{Interval(5900.0, 6100.0), Ellipsoid::ball(v2(-20, 3), 5.0)};
  EXPECT_THROW(bound_by_sampling(set, sensors, 2.0, {0, 1.1}, rng), ContractViolation);
  EXPECT_THROW(bound_by_sampling(set, sensors, 2.0, {10, 0.9}, rng), ContractViolation);
}

TEST(Aggregate, SingleSourceIsIdentity) {
  const Box a(v2(-1, -2), v2(3, 4));
  const Box boxes[] = {a};
  const auto [sum, part] = aggregate(boxes);
  EXPECT_EQ(sum.lo, a.lo);
  EXPECT_EQ(sum.hi, a.hi);
  EXPECT_EQ(part.finite.size(), 2u);
}

TEST(Aggregate, InfiniteSensorGoesToSecondSet) {
  Vec hi = Vec::Ones(5);
  hi(3) = kInf;
  const Box a(Vec::Zero(5), hi), b(-Vec::Ones(5), Vec::Ones(5));
  const Box boxes[] = {a, b};
  const auto [sum, part] = aggregate(boxes);
  ASSERT_EQ(part.infinite.size(), 1u);
  EXPECT_EQ(part.infinite[0], 3);
  EXPECT_EQ(part.finite.size(), 4u);
  EXPECT_DOUBLE_EQ(sum.hi(0), 2.0);
  EXPECT_DOUBLE_EQ(sum.lo(0), -1.0);
}
