#pragma once

// Small dense semidefinite programs.
//
// A problem is stated over named scalar variables (symmetric matrix variables
// are expanded into their upper-triangle entries):
//
//     minimize    c^T x + c0
//     subject to  F_k(x) = F_k0 + sum_i x_i F_ki  <=  0      (LMI, each k)
//                 a_j^T x + b_j <= 0,  x_i >= 0 where flagged
//                 e_j^T x + f_j  = 0
//
// solve() maps this onto the standard dual form  max b^T y, C - A^*(y) >= 0
// and runs an infeasible primal-dual path-following method (HKM direction,
// Mehrotra predictor-corrector). Equalities are eliminated up front, the data
// are equilibrated by diagonal congruences, and every solution reported as
// optimal is re-checked against the original LMIs with a dense
// eigendecomposition.

#include "smloc/geometry.hpp"

#include <Eigen/QR>
#include <Eigen/SVD>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <iomanip>
#include <map>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

namespace smloc::conic {

// Feasible: the LMIs hold to tolerance but optimality is not certified; the
// point is still usable wherever any feasible point gives a valid bound.
enum class SolveStatus { Optimal, Feasible, Infeasible, NumericalFailure };

inline const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::Optimal: return "optimal";
    case SolveStatus::Feasible: return "feasible";
    case SolveStatus::Infeasible: return "infeasible";
    case SolveStatus::NumericalFailure: return "numerical_failure";
  }
  return "unknown";
}

inline bool usable(SolveStatus s) { return s == SolveStatus::Optimal || s == SolveStatus::Feasible; }

/// Sparse linear form sum coef_i x_i + constant.
struct LinearExpr {
  std::map<int, double> coef;
  double constant = 0.0;

  LinearExpr& add(int var, double c) {
    coef[var] += c;
    return *this;
  }
};

/// Handle to a symmetric matrix variable: entries (r, c) with r <= c map to
/// scalar variable indices.
struct MatrixVar {
  int order = 0;
  std::vector<int> upper;  // row-major over r <= c

  int at(int r, int c) const {
    if (r > c) std::swap(r, c);
    // offset of row r in packed upper storage
    const int off = r * order - r * (r - 1) / 2;
    return upper[static_cast<std::size_t>(off + (c - r))];
  }
};

/// Symmetric affine matrix expression F0 + sum_i x_i F_i.
class AffineMatrix {
 public:
  explicit AffineMatrix(int order) : constant_(Mat::Zero(order, order)) {}

  int order() const { return static_cast<int>(constant_.rows()); }
  const Mat& constant() const { return constant_; }
  const std::map<int, Mat>& terms() const { return terms_; }

  Mat& constant() { return constant_; }

  /// Adds coefficient matrix for variable var (accumulates).
  void add(int var, const Mat& coef) {
    auto it = terms_.find(var);
    if (it == terms_.end()) {
      terms_.emplace(var, coef);
    } else {
      it->second += coef;
    }
  }

  /// Adds scale * (E_rc + E_cr) / (1 + [r == c]) for var, i.e. places var
  /// symmetrically at (r, c).
  void add_entry(int var, int r, int c, double scale) {
    Mat m = Mat::Zero(order(), order());
    m(r, c) += scale;
    if (r != c) m(c, r) += scale;
    add(var, m);
  }

  /// Places scale * P at the diagonal block starting at offset.
  void add_matrix_var(const MatrixVar& p, int offset, double scale) {
    for (int r = 0; r < p.order; ++r) {
      for (int c = r; c < p.order; ++c) add_entry(p.at(r, c), offset + r, offset + c, scale);
    }
  }

  /// Places the column coef (times var) at rows [row0, row0+len) of column
  /// col, mirrored to the symmetric position.
  void add_column(int var, int row0, int col, const Vec& coef) {
    Mat m = Mat::Zero(order(), order());
    for (Eigen::Index i = 0; i < coef.size(); ++i) {
      m(row0 + i, col) += coef(i);
      m(col, row0 + i) += coef(i);
    }
    add(var, m);
  }

  /// F -> M' F M for the constant and every term. A congruence with an
  /// invertible M leaves the set where the expression is <= 0 unchanged.
  void congruence(const Mat& M) {
    if (M.rows() != order() || M.cols() != order()) throw ContractViolation("congruence: order mismatch");
    constant_ = M.transpose() * constant_ * M;
    for (auto& [var, m] : terms_) m = M.transpose() * m * M;
  }

  /// Divides the coefficient of var by its Frobenius norm; for a
  /// nonnegative multiplier this only rescales the variable.
  void normalize_term(int var) {
    auto it = terms_.find(var);
    if (it == terms_.end()) return;
    const double n = it->second.norm();
    if (n > 0.0) it->second /= n;
  }

  Mat evaluate(const Vec& x) const {
    Mat out = constant_;
    for (const auto& [var, m] : terms_) out += x(var) * m;
    return out;
  }

 private:
  Mat constant_;
  std::map<int, Mat> terms_;
};

struct VariableInfo {
  std::string name;
  bool nonnegative = false;
  double hint = 0.0;  // expected magnitude/location, used to shift the solver origin
};

class SdpProblem {
 public:
  int add_scalar(std::string name, bool nonnegative = false, double hint = 0.0) {
    vars_.push_back({std::move(name), nonnegative, hint});
    return static_cast<int>(vars_.size()) - 1;
  }

  MatrixVar add_symmetric(const std::string& name, int order, const Mat& hint = Mat()) {
    MatrixVar p;
    p.order = order;
    for (int r = 0; r < order; ++r) {
      for (int c = r; c < order; ++c) {
        const double h = hint.size() ? hint(r, c) : 0.0;
        p.upper.push_back(add_scalar(name + "[" + std::to_string(r) + "," + std::to_string(c) + "]",
                                     false, h));
      }
    }
    return p;
  }

  void minimize(LinearExpr objective) { objective_ = std::move(objective); }

  /// Requires expr <= 0 (negative semidefinite).
  void add_lmi(AffineMatrix expr) {
    detail::require_symmetric(expr.constant(), "add_lmi");
    for (const auto& [var, m] : expr.terms()) {
      check_var(var);
      detail::require_symmetric(m, "add_lmi");
      if (m.rows() != expr.order()) throw ContractViolation("add_lmi: term order mismatch");
    }
    lmis_.push_back(std::move(expr));
  }

  /// Requires expr <= 0.
  void add_inequality(LinearExpr expr) {
    for (const auto& kv : expr.coef) check_var(kv.first);
    inequalities_.push_back(std::move(expr));
  }

  /// Requires expr == 0.
  void add_equality(LinearExpr expr) {
    for (const auto& kv : expr.coef) check_var(kv.first);
    equalities_.push_back(std::move(expr));
  }

  int num_variables() const { return static_cast<int>(vars_.size()); }
  const std::vector<VariableInfo>& variables() const { return vars_; }
  const LinearExpr& objective() const { return objective_; }
  const std::vector<AffineMatrix>& lmis() const { return lmis_; }
  const std::vector<LinearExpr>& inequalities() const { return inequalities_; }
  const std::vector<LinearExpr>& equalities() const { return equalities_; }

  double objective_value(const Vec& x) const {
    double v = objective_.constant;
    for (const auto& [i, c] : objective_.coef) v += c * x(i);
    return v;
  }

 private:
  void check_var(int var) const {
    if (var < 0 || var >= num_variables()) {
      throw ContractViolation("SdpProblem: constraint references an undeclared variable");
    }
  }

  std::vector<VariableInfo> vars_;
  LinearExpr objective_;
  std::vector<AffineMatrix> lmis_;
  std::vector<LinearExpr> inequalities_;
  std::vector<LinearExpr> equalities_;
};

struct SolverSettings {
  double gap_tol = 1e-9;
  double infeas_tol = 1e-9;
  double acceptable_tol = 1e-5;   // best iterate accepted at this gap/residual if the strict targets stall
  double feasibility_tol = 1e-7;  // absolute bound on max eigenvalue of each LMI
  int max_iterations = 100;
  double step_fraction = 0.95;
};

struct SdpSolution {
  SolveStatus status = SolveStatus::NumericalFailure;
  Vec values;
  double objective = 0.0;
  int iterations = 0;
  double max_violation = 0.0;

  double value(int var) const { return values(var); }

  Mat matrix(const MatrixVar& p) const {
    Mat m(p.order, p.order);
    for (int r = 0; r < p.order; ++r) {
      for (int c = r; c < p.order; ++c) m(r, c) = m(c, r) = values(p.at(r, c));
    }
    return m;
  }
};

/// Largest constraint violation of x: max eigenvalue over LMIs, positive
/// part of inequalities and nonnegativity, absolute equality residuals.
inline double max_violation(const SdpProblem& p, const Vec& x) {
  double worst = 0.0;
  for (const auto& lmi : p.lmis()) {
    const Mat f = lmi.evaluate(x);
    worst = std::max(worst, max_eigenvalue(0.5 * (f + f.transpose())));
  }
  auto lin = [&](const LinearExpr& e) {
    double v = e.constant;
    for (const auto& [i, c] : e.coef) v += c * x(i);
    return v;
  };
  for (const auto& e : p.inequalities()) worst = std::max(worst, lin(e));
  for (const auto& e : p.equalities()) worst = std::max(worst, std::abs(lin(e)));
  for (int i = 0; i < p.num_variables(); ++i) {
    if (p.variables()[static_cast<std::size_t>(i)].nonnegative) worst = std::max(worst, -x(i));
  }
  return worst;
}

namespace detail {

// Standard dual form: max b^T y  s.t.  Z_k = C_k - sum_j y_j A_kj >= 0 (dense
// blocks) and z = c - A y >= 0 (diagonal block).
struct StandardForm {
  std::vector<Mat> C;
  std::vector<std::vector<std::pair<int, Mat>>> A;  // per block: (j, A_kj), zero terms omitted
  Vec c_lp;
  Mat A_lp;  // n_lp x m
  Vec b;
  int m = 0;
};

inline double frob_dot(const Mat& a, const Mat& b) { return (a.array() * b.array()).sum(); }

// Step length to the boundary of the PSD cone: max alpha with X + alpha dX >= 0.
inline double max_step(const Eigen::LLT<Mat>& chol, const Mat& dx) {
  const Mat& L = chol.matrixLLT();
  Mat w = L.triangularView<Eigen::Lower>().solve(dx);
  w = L.triangularView<Eigen::Lower>().solve(w.transpose()).transpose();
  w = 0.5 * (w + w.transpose());
  const double lmin = min_eigenvalue(w);
  return lmin >= 0.0 ? kInf : -1.0 / lmin;
}

inline double max_step_lp(const Vec& x, const Vec& dx) {
  double a = kInf;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if (dx(i) < 0.0) a = std::min(a, -x(i) / dx(i));
  }
  return a;
}

struct IpmResult {
  Vec y;
  bool converged = false;
  bool infeasible = false;
  int iterations = 0;
};

inline IpmResult run_ipm(const StandardForm& sf, const SolverSettings& st) {
  const int m = sf.m;
  const std::size_t nb = sf.C.size();
  const Eigen::Index nlp = sf.c_lp.size();
  IpmResult res;
  res.y = Vec::Zero(m);
  if (m == 0) {
    res.converged = true;
    return res;
  }

  int ntot = static_cast<int>(nlp);
  for (const auto& c : sf.C) ntot += static_cast<int>(c.rows());

  const double bnorm = sf.b.norm();
  double cnorm2 = sf.c_lp.squaredNorm();
  for (const auto& c : sf.C) cnorm2 += c.squaredNorm();
  const double cnorm = std::sqrt(cnorm2);

  // Initial point in the spirit of SDPT3's default.
  std::vector<Mat> X(nb), Z(nb);
  for (std::size_t k = 0; k < nb; ++k) {
    const auto n = sf.C[k].rows();
    double xi = std::max(10.0, std::sqrt(static_cast<double>(n)));
    double eta = std::max({10.0, std::sqrt(static_cast<double>(n)), sf.C[k].norm()});
    for (const auto& [j, a] : sf.A[k]) {
      const double an = a.norm();
      xi = std::max(xi, static_cast<double>(n) * (1.0 + std::abs(sf.b(j))) / (1.0 + an));
      eta = std::max(eta, an);
    }
    X[k] = xi * Mat::Identity(n, n);
    Z[k] = eta * Mat::Identity(n, n);
  }
  Vec xl = Vec::Constant(nlp, 10.0), zl = Vec::Constant(nlp, 10.0);
  for (Eigen::Index i = 0; i < nlp; ++i) {
    const double an = sf.A_lp.row(i).norm();
    xl(i) = std::max(10.0, (1.0 + bnorm) / (1.0 + an));
    zl(i) = std::max({10.0, std::abs(sf.c_lp(i)), an});
  }
  Vec& y = res.y;
  Vec best_y;
  double best_score = kInf;
  double best_dinf = kInf;
  int stale = 0;
  auto finish_with_best = [&]() {
    if (best_y.size() == res.y.size()) res.y = best_y;
    res.converged = best_score <= st.acceptable_tol;
    return res;
  };

  for (int iter = 0; iter < st.max_iterations; ++iter) {
    res.iterations = iter + 1;
    // residuals
    Vec Ax = sf.A_lp.transpose() * xl;
    for (std::size_t k = 0; k < nb; ++k) {
      for (const auto& [j, a] : sf.A[k]) Ax(j) += frob_dot(a, X[k]);
    }
    const Vec rp = sf.b - Ax;
    std::vector<Mat> Rd(nb);
    double rd2 = 0.0;
    double gap = xl.dot(zl);
    double pobj = sf.c_lp.dot(xl);
    for (std::size_t k = 0; k < nb; ++k) {
      Rd[k] = sf.C[k] - Z[k];
      for (const auto& [j, a] : sf.A[k]) Rd[k] -= y(j) * a;
      rd2 += Rd[k].squaredNorm();
      gap += frob_dot(X[k], Z[k]);
      pobj += frob_dot(sf.C[k], X[k]);
    }
    const Vec rdl = sf.c_lp - zl - sf.A_lp * y;
    rd2 += rdl.squaredNorm();
    const double dobj = sf.b.dot(y);
    const double pinf = rp.norm() / (1.0 + bnorm);
    const double dinf = std::sqrt(rd2) / (1.0 + cnorm);
    const double relgap = std::abs(pobj - dobj) / (1.0 + std::abs(pobj) + std::abs(dobj));
    const double mu = gap / ntot;

    if (std::getenv("SMLOC_IPM_TRACE")) std::fprintf(stderr, "it %d pinf %.3e dinf %.3e gap %.3e pobj %.6e dobj %.6e mu %.3e\n", iter, pinf, dinf, relgap, pobj, dobj, mu);
    if (pinf < st.infeas_tol && dinf < st.infeas_tol && relgap < st.gap_tol) {
      res.converged = true;
      return res;
    }
    // Among acceptable iterates prefer the most feasible one: the LMIs carry
    // the guarantees, pinf only bounds the suboptimality.
    const double score = std::max({pinf, dinf, relgap});
    bool improved = false;
    if (score <= st.acceptable_tol && dinf < best_dinf) {
      best_dinf = dinf;
      best_score = std::min(best_score, score);
      best_y = y;
      improved = true;
    } else if (best_dinf == kInf && score < best_score) {
      best_score = score;
      best_y = y;
      improved = true;
    }
    if (improved) {
      stale = 0;
    } else if (best_score <= st.acceptable_tol && ++stale >= 5) {
      return finish_with_best();  // accuracy is drifting away, not improving
    }
    // Primal ray with negative cost certifies an empty dual feasible set.
    double xnorm = xl.norm();
    for (const auto& x : X) xnorm = std::max(xnorm, x.norm());
    if (pobj < 0.0 && xnorm > 1e10 && rp.norm() / std::abs(pobj) < 1e-8 * (1.0 + bnorm)) {
      if (best_y.size() == res.y.size()) res.y = best_y;  // checked by the caller
      res.infeasible = true;
      return res;
    }

    // Schur complement
    std::vector<Eigen::LLT<Mat>> zchol(nb), xchol(nb);
    std::vector<Mat> Zinv(nb);
    for (std::size_t k = 0; k < nb; ++k) {
      zchol[k].compute(Z[k]);
      xchol[k].compute(X[k]);
      if (zchol[k].info() != Eigen::Success || xchol[k].info() != Eigen::Success) return finish_with_best();
      Zinv[k] = zchol[k].solve(Mat::Identity(Z[k].rows(), Z[k].cols()));
      Zinv[k] = 0.5 * (Zinv[k] + Zinv[k].transpose());
    }
    Mat M = sf.A_lp.transpose() * (xl.cwiseQuotient(zl)).asDiagonal() * sf.A_lp;
    std::vector<std::vector<Mat>> G(nb);  // X A_j Z^{-1}
    for (std::size_t k = 0; k < nb; ++k) {
      const auto& terms = sf.A[k];
      G[k].resize(terms.size());
      for (std::size_t a = 0; a < terms.size(); ++a) G[k][a] = X[k] * terms[a].second * Zinv[k];
      for (std::size_t a = 0; a < terms.size(); ++a) {
        for (std::size_t b2 = a; b2 < terms.size(); ++b2) {
          const double v = frob_dot(terms[a].second, G[k][b2]);
          const int i = terms[a].first, j = terms[b2].first;
          M(i, j) += v;
          if (a != b2) M(j, i) += v;
        }
      }
    }
    M = 0.5 * (M + M.transpose());
    const double mscale = std::max(M.diagonal().cwiseAbs().maxCoeff(), 1e-300);
    Eigen::LDLT<Mat> mfac(M + 1e-14 * mscale * Mat::Identity(m, m));
    if (mfac.info() != Eigen::Success) return finish_with_best();

    // Direction for complementarity target Rc (dense) / rcl (lp).
    struct Dir {
      std::vector<Mat> dX, dZ;
      Vec dxl, dzl, dy;
    };
    auto direction = [&](const std::vector<Mat>& Rc, const Vec& rcl) {
      Dir d;
      Vec rhs = rp;
      // lp: dx = (rc - x dz)/z, dz = rd - A dy
      const Vec xz = xl.cwiseQuotient(zl);
      rhs -= sf.A_lp.transpose() * (rcl.cwiseQuotient(zl) - xz.cwiseProduct(rdl));
      std::vector<Mat> T(nb);
      for (std::size_t k = 0; k < nb; ++k) {
        T[k] = (Rc[k] - X[k] * Rd[k]) * Zinv[k];
        for (const auto& [j, a] : sf.A[k]) rhs(j) -= frob_dot(a, T[k]);
      }
      d.dy = mfac.solve(rhs);
      for (int r = 0; r < 3; ++r) d.dy += mfac.solve(rhs - M * d.dy);  // refine against the unshifted M
      d.dzl = rdl - sf.A_lp * d.dy;
      d.dxl = (rcl - xl.cwiseProduct(d.dzl)).cwiseQuotient(zl);
      d.dX.resize(nb);
      d.dZ.resize(nb);
      for (std::size_t k = 0; k < nb; ++k) {
        d.dZ[k] = Rd[k];
        for (const auto& [j, a] : sf.A[k]) d.dZ[k] -= d.dy(j) * a;
        d.dZ[k] = 0.5 * (d.dZ[k] + d.dZ[k].transpose());
        Mat dx = (Rc[k] - X[k] * d.dZ[k]) * Zinv[k];
        d.dX[k] = 0.5 * (dx + dx.transpose());
      }
      return d;
    };
    auto steps = [&](const Dir& d) {
      double ap = max_step_lp(xl, d.dxl), ad = max_step_lp(zl, d.dzl);
      for (std::size_t k = 0; k < nb; ++k) {
        ap = std::min(ap, max_step(xchol[k], d.dX[k]));
        ad = std::min(ad, max_step(zchol[k], d.dZ[k]));
      }
      return std::pair{std::min(1.0, st.step_fraction * ap), std::min(1.0, st.step_fraction * ad)};
    };

    // predictor
    std::vector<Mat> Rc(nb);
    for (std::size_t k = 0; k < nb; ++k) Rc[k] = -X[k] * Z[k];
    Vec rcl = -xl.cwiseProduct(zl);
    const Dir aff = direction(Rc, rcl);
    const auto [ap_aff, ad_aff] = steps(aff);
    double gap_aff = (xl + ap_aff * aff.dxl).dot(zl + ad_aff * aff.dzl);
    for (std::size_t k = 0; k < nb; ++k) {
      gap_aff += frob_dot(X[k] + ap_aff * aff.dX[k], Z[k] + ad_aff * aff.dZ[k]);
    }
    const double ratio = std::clamp(gap_aff / gap, 0.0, 1.0);
    const double sigma = std::clamp(ratio * ratio * ratio, 0.0, 1.0);

    // corrector
    for (std::size_t k = 0; k < nb; ++k) {
      const auto n = X[k].rows();
      Rc[k] = sigma * mu * Mat::Identity(n, n) - X[k] * Z[k] - aff.dX[k] * aff.dZ[k];
    }
    rcl = Vec::Constant(nlp, sigma * mu) - xl.cwiseProduct(zl) - aff.dxl.cwiseProduct(aff.dzl);
    const Dir d = direction(Rc, rcl);
    const auto [ap, ad] = steps(d);

    xl += ap * d.dxl;
    zl += ad * d.dzl;
    y += ad * d.dy;
    for (std::size_t k = 0; k < nb; ++k) {
      X[k] += ap * d.dX[k];
      Z[k] += ad * d.dZ[k];
      X[k] = 0.5 * (X[k] + X[k].transpose());
      Z[k] = 0.5 * (Z[k] + Z[k].transpose());
    }
    if (!y.allFinite()) return finish_with_best();
    if (std::max(ap, ad) < 1e-10) break;  // stalled
  }
  return finish_with_best();
}

}  // namespace detail

inline SdpSolution solve(const SdpProblem& p, const SolverSettings& st = {}) {
  SdpSolution out;
  const int n = p.num_variables();
  Vec hint(n);
  for (int i = 0; i < n; ++i) hint(i) = p.variables()[static_cast<std::size_t>(i)].hint;

  // x = x0 + N w over the equality-feasible affine set, x0 nearest the hint.
  Vec x0 = hint;
  Mat N = Mat::Identity(n, n);
  if (!p.equalities().empty()) {
    const auto ne = static_cast<Eigen::Index>(p.equalities().size());
    Mat E = Mat::Zero(ne, n);
    Vec f(ne);
    for (Eigen::Index r = 0; r < ne; ++r) {
      const auto& e = p.equalities()[static_cast<std::size_t>(r)];
      for (const auto& [i, c] : e.coef) E(r, i) += c;
      f(r) = -e.constant;
    }
    Eigen::JacobiSVD<Mat> svd(E, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const Vec& sv = svd.singularValues();
    const double cut = 1e-12 * std::max(sv.size() ? sv(0) : 0.0, 1e-300);
    Eigen::Index rank = 0;
    while (rank < sv.size() && sv(rank) > cut) ++rank;
    const Vec resid = f - E * hint;
    Vec corr = Vec::Zero(n);
    for (Eigen::Index i = 0; i < rank; ++i) {
      corr += svd.matrixV().col(i) * (svd.matrixU().col(i).dot(resid) / sv(i));
    }
    x0 = hint + corr;
    if ((E * x0 - f).norm() > 1e-8 * (1.0 + f.norm())) {
      out.status = SolveStatus::Infeasible;
      return out;
    }
    N = svd.matrixV().rightCols(n - rank);
  }
  const int m = static_cast<int>(N.cols());

  // Assemble dense blocks G_k(w) = G_k0 + sum_j w_j G_kj (constraint G <= 0).
  detail::StandardForm sf;
  sf.m = m;
  std::vector<Mat> G0;
  std::vector<std::vector<std::pair<int, Mat>>> Gt;
  for (const auto& lmi : p.lmis()) {
    Mat g0 = lmi.evaluate(x0);
    std::vector<Mat> gj(static_cast<std::size_t>(m), Mat::Zero(lmi.order(), lmi.order()));
    std::vector<bool> nz(static_cast<std::size_t>(m), false);
    for (const auto& [var, coef] : lmi.terms()) {
      for (int j = 0; j < m; ++j) {
        if (N(var, j) != 0.0) {
          gj[static_cast<std::size_t>(j)] += N(var, j) * coef;
          nz[static_cast<std::size_t>(j)] = true;
        }
      }
    }
    std::vector<std::pair<int, Mat>> terms;
    for (int j = 0; j < m; ++j) {
      if (nz[static_cast<std::size_t>(j)] && gj[static_cast<std::size_t>(j)].cwiseAbs().maxCoeff() > 0.0) {
        terms.emplace_back(j, std::move(gj[static_cast<std::size_t>(j)]));
      }
    }
    G0.push_back(std::move(g0));
    Gt.push_back(std::move(terms));
  }
  // Scalar rows g0 + g^T w <= 0.
  std::vector<std::pair<double, Vec>> rows;
  for (const auto& e : p.inequalities()) {
    Vec a = Vec::Zero(n);
    for (const auto& [i, c] : e.coef) a(i) += c;
    rows.emplace_back(e.constant + a.dot(x0), N.transpose() * a);
  }
  for (int i = 0; i < n; ++i) {
    if (p.variables()[static_cast<std::size_t>(i)].nonnegative) {
      rows.emplace_back(-x0(i), -N.row(i).transpose());
    }
  }
  Vec cvec = Vec::Zero(n);
  for (const auto& [i, c] : p.objective().coef) cvec(i) += c;
  Vec bw = -(N.transpose() * cvec);

  // Equilibration: congruence D_k on each block, row scaling on scalar rows,
  // column scaling on variables.
  Vec colscale = Vec::Ones(m);
  std::vector<Vec> D(G0.size());
  for (std::size_t k = 0; k < G0.size(); ++k) D[k] = Vec::Ones(G0[k].rows());
  for (int round = 0; round < 4; ++round) {
    for (std::size_t k = 0; k < G0.size(); ++k) {
      const auto nk = G0[k].rows();
      Vec rmax = G0[k].cwiseAbs().rowwise().maxCoeff();
      for (const auto& [j, g] : Gt[k]) rmax = rmax.cwiseMax(g.cwiseAbs().rowwise().maxCoeff());
      Vec s(nk);
      for (Eigen::Index r = 0; r < nk; ++r) s(r) = rmax(r) > 0.0 ? 1.0 / std::sqrt(rmax(r)) : 1.0;
      D[k] = D[k].cwiseProduct(s);
      G0[k] = s.asDiagonal() * G0[k] * s.asDiagonal();
      for (auto& [j, g] : Gt[k]) g = s.asDiagonal() * g * s.asDiagonal();
    }
    for (auto& [g0, a] : rows) {
      const double s = std::max(std::abs(g0), a.cwiseAbs().maxCoeff());
      if (s > 0.0) {
        g0 /= s;
        a /= s;
      }
    }
    Vec cmax = Vec::Zero(m);
    for (std::size_t k = 0; k < G0.size(); ++k) {
      for (const auto& [j, g] : Gt[k]) cmax(j) = std::max(cmax(j), g.cwiseAbs().maxCoeff());
    }
    for (const auto& [g0, a] : rows) cmax = cmax.cwiseMax(a.cwiseAbs());
    for (int j = 0; j < m; ++j) {
      const double s = cmax(j) > 0.0 ? 1.0 / std::sqrt(cmax(j)) : 1.0;
      colscale(j) *= s;
      bw(j) *= s;
      for (auto& rowp : rows) rowp.second(j) *= s;
      for (std::size_t k = 0; k < G0.size(); ++k) {
        for (auto& [jj, g] : Gt[k]) {
          if (jj == j) g *= s;
        }
      }
    }
  }
  const double bmax = bw.size() ? bw.cwiseAbs().maxCoeff() : 0.0;
  const double bscale = bmax > 0.0 ? 1.0 / bmax : 1.0;

  for (std::size_t k = 0; k < G0.size(); ++k) {
    sf.C.push_back(-G0[k]);
    sf.A.push_back(std::move(Gt[k]));
  }
  const auto nlp = static_cast<Eigen::Index>(rows.size());
  sf.c_lp.resize(nlp);
  sf.A_lp = Mat::Zero(nlp, m);
  for (Eigen::Index r = 0; r < nlp; ++r) {
    sf.c_lp(r) = -rows[static_cast<std::size_t>(r)].first;
    sf.A_lp.row(r) = rows[static_cast<std::size_t>(r)].second.transpose();
  }
  sf.b = bw * bscale;

  const auto ipm = detail::run_ipm(sf, st);
  out.iterations = ipm.iterations;
  const Vec x = x0 + N * colscale.cwiseProduct(ipm.y);
  out.values = x;
  out.objective = p.objective_value(x);
  out.max_violation = max_violation(p, x);
  // A verified point overrides an infeasibility claim made under numerical trouble.
  if (!x.allFinite()) {
    out.status = ipm.infeasible ? SolveStatus::Infeasible : SolveStatus::NumericalFailure;
  } else if (out.max_violation <= st.feasibility_tol) {
    out.status = ipm.converged && !ipm.infeasible ? SolveStatus::Optimal : SolveStatus::Feasible;
  } else {
    out.status = ipm.infeasible ? SolveStatus::Infeasible : SolveStatus::NumericalFailure;
  }
  return out;
}

/// Plain-text dump: header, variables, objective, then each LMI as a list of
/// dense symmetric blocks ("const" followed by one block per variable term).
inline void write_problem(std::ostream& os, const SdpProblem& p) {
  os << std::setprecision(17);
  os << "sdp " << p.num_variables() << " variables\n";
  for (int i = 0; i < p.num_variables(); ++i) {
    const auto& v = p.variables()[static_cast<std::size_t>(i)];
    os << "var " << i << ' ' << v.name << ' ' << (v.nonnegative ? "nonneg" : "free") << '\n';
  }
  os << "objective " << p.objective().constant;
  for (const auto& [i, c] : p.objective().coef) os << ' ' << i << ':' << c;
  os << '\n';
  auto dump = [&](const Mat& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) os << (c ? " " : "  ") << m(r, c);
      os << '\n';
    }
  };
  for (std::size_t k = 0; k < p.lmis().size(); ++k) {
    const auto& lmi = p.lmis()[k];
    os << "lmi " << k << " order " << lmi.order() << " terms " << lmi.terms().size() << '\n';
    os << " const\n";
    dump(lmi.constant());
    for (const auto& [var, m] : lmi.terms()) {
      os << " var " << var << '\n';
      dump(m);
    }
  }
  auto dump_lin = [&](const char* tag, const LinearExpr& e) {
    os << tag << ' ' << e.constant;
    for (const auto& [i, c] : e.coef) os << ' ' << i << ':' << c;
    os << '\n';
  };
  for (const auto& e : p.inequalities()) dump_lin("leq0", e);
  for (const auto& e : p.equalities()) dump_lin("eq0", e);
}

}  // namespace smloc::conic
