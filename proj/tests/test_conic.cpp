#include "smloc/conic.hpp"

#include <gtest/gtest.h>

#include <random>
#include <sstream>

using namespace smloc;
using namespace smloc::conic;

namespace {

// Dense eigenvalue check, independent of the solver's own residual report.
double worst_lmi_eigenvalue(const SdpProblem& p, const Vec& x) {
  double worst = -kInf;
  for (const auto& m : p.lmis()) {
    Eigen::SelfAdjointEigenSolver<Mat> es(m.evaluate(x));
    worst = std::max(worst, es.eigenvalues().maxCoeff());
  }
  return worst;
}

Mat random_sym(int n, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  Mat A(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) A(i, j) = g(rng);
  return 0.5 * (A + A.transpose());
}

}  // namespace

TEST(Conic, ScalarNonnegativity) {
  SdpProblem p;
  const int x = p.add_scalar("x");
  AffineMatrix m(1);
  m.add_entry(x, 0, 0, -1.0);
  p.add_lmi(m);
  LinearExpr obj;
  obj.add(x, 1.0);
  p.minimize(obj);
  const auto sol = solve(p);
  ASSERT_EQ(sol.status, SolveStatus::Optimal);
  EXPECT_NEAR(sol.value(x), 0.0, 1e-7);
}

TEST(Conic, TraceAboveIdentity) {
  SdpProblem p;
  const auto P = p.add_symmetric("P", 2);
  AffineMatrix m(2);
  m.constant() = Mat::Identity(2, 2);
  m.add_matrix_var(P, 0, -1.0);
  p.add_lmi(m);
  LinearExpr obj;
  obj.add(P.at(0, 0), 1.0);
  obj.add(P.at(1, 1), 1.0);
  p.minimize(obj);
  const auto sol = solve(p);
  ASSERT_EQ(sol.status, SolveStatus::Optimal);
  EXPECT_NEAR(sol.objective, 2.0, 1e-6);
  EXPECT_LE((sol.matrix(P) - Mat::Identity(2, 2)).cwiseAbs().maxCoeff(), 1e-5);
}

TEST(Conic, RandomFeasibleProblemsSatisfyLmisByEigenOracle) {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> g(0.0, 1.0);
  for (int trial = 0; trial < 10; ++trial) {
    const int n = 4, k = 3;
    SdpProblem p;
    std::vector<int> x;
    Vec xstar(k);
    for (int i = 0; i < k; ++i) {
      x.push_back(p.add_scalar("x" + std::to_string(i)));
      xstar(i) = g(rng);
    }
    AffineMatrix m(n);
    Mat c0 = -Mat::Identity(n, n);
    for (int i = 0; i < k; ++i) {
      const Mat Ai = random_sym(n, rng);
      m.add(x[static_cast<std::size_t>(i)], Ai);
      c0 -= xstar(i) * Ai;
    }
    m.constant() = c0;  // strictly feasible at xstar
    p.add_lmi(m);
    LinearExpr obj;
    for (int i = 0; i < k; ++i) {
      obj.add(x[static_cast<std::size_t>(i)], g(rng));
      // keep the problem bounded: |x_i| <= 10
      LinearExpr up, dn;
      up.add(x[static_cast<std::size_t>(i)], 1.0);
      up.constant = -10.0;
      dn.add(x[static_cast<std::size_t>(i)], -1.0);
      dn.constant = -10.0;
      p.add_inequality(up);
      p.add_inequality(dn);
    }
    p.minimize(obj);
    const auto sol = solve(p);
    ASSERT_EQ(sol.status, SolveStatus::Optimal) << "trial " << trial;
    EXPECT_LE(worst_lmi_eigenvalue(p, sol.values), 1e-7);
    EXPECT_LE(sol.objective, p.objective_value(xstar) + 1e-6);
  }
}

TEST(Conic, EqualityConstraintsHold) {
  SdpProblem p;
  const int a = p.add_scalar("a", true), b = p.add_scalar("b", true);
  LinearExpr eq;
  eq.add(a, 1.0);
  eq.add(b, 1.0);
  eq.constant = -1.0;
  p.add_equality(eq);
  LinearExpr obj;
  obj.add(a, 1.0);
  obj.add(b, 2.0);
  p.minimize(obj);
  const auto sol = solve(p);
  ASSERT_EQ(sol.status, SolveStatus::Optimal);
  EXPECT_NEAR(sol.value(a), 1.0, 1e-6);
  EXPECT_NEAR(sol.value(b), 0.0, 1e-6);
}

TEST(Conic, DetectsInfeasibility) {
  // x >= 1 and x <= -1
  SdpProblem p;
  const int x = p.add_scalar("x");
  AffineMatrix lo(1), hi(1);
  lo.constant()(0, 0) = 1.0;
  lo.add_entry(x, 0, 0, -1.0);
  hi.constant()(0, 0) = 1.0;
  hi.add_entry(x, 0, 0, 1.0);
  p.add_lmi(lo);
  p.add_lmi(hi);
  LinearExpr obj;
  obj.add(x, 1.0);
  p.minimize(obj);
  EXPECT_FALSE(usable(solve(p).status));
}

TEST(Conic, RejectsUndeclaredVariable) {
  SdpProblem p;
  AffineMatrix m(1);
  m.add_entry(3, 0, 0, 1.0);
  EXPECT_THROW(p.add_lmi(m), ContractViolation);
}

TEST(Conic, RejectsAsymmetricTerm) {
  SdpProblem p;
  const int x = p.add_scalar("x");
  AffineMatrix m(2);
  Mat A = Mat::Zero(2, 2);
  A(0, 1) = 1.0;
  m.add(x, A);
  EXPECT_THROW(p.add_lmi(m), ContractViolation);
}

TEST(Conic, MaxViolationReportsLmiEigenvalue) {
  SdpProblem p;
  const int x = p.add_scalar("x");
  AffineMatrix m(1);
  m.add_entry(x, 0, 0, 1.0);  // x <= 0
  p.add_lmi(m);
  Vec v(1);
  v << 0.5;
  EXPECT_NEAR(max_violation(p, v), 0.5, 1e-15);
}

TEST(Conic, TextDumpListsVariablesAndBlocks) {
  SdpProblem p;
  const int x = p.add_scalar("x", true);
  AffineMatrix m(1);
  m.add_entry(x, 0, 0, -1.0);
  p.add_lmi(m);
  LinearExpr obj;
  obj.add(x, 1.0);
  p.minimize(obj);
  std::ostringstream os;
  write_problem(os, p);
  const auto s = os.str();
  EXPECT_NE(s.find("sdp 1 variables"), std::string::npos);
  EXPECT_NE(s.find("var 0 x nonneg"), std::string::npos);
  EXPECT_NE(s.find("lmi 0 order 1"), std::string::npos);
}
