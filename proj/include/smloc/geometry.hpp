#pragma once

// Ellipsoids, intervals, boxes and balls: the bounding-set vocabulary used by
// every stage of the localization engine.

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>

namespace smloc {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Raised when a caller breaks a documented precondition.
class ContractViolation : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

namespace detail {

inline double max_abs(const Mat& m) { return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff(); }

inline void require_square(const Mat& m, const char* what) {
  if (m.rows() != m.cols()) {
    throw ContractViolation(std::string(what) + ": matrix is not square");
  }
}

inline void require_symmetric(const Mat& m, const char* what, double rel_tol = 1e-12) {
  require_square(m, what);
  const double scale = std::max(max_abs(m), 1e-300);
  if (max_abs(m - m.transpose()) > rel_tol * scale) {
    throw ContractViolation(std::string(what) + ": matrix is not symmetric");
  }
}

}  // namespace detail

/// Largest eigenvalue of a symmetric matrix (0 for an empty matrix).
inline double max_eigenvalue(const Mat& sym) {
  if (sym.size() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<Mat> es(sym, Eigen::EigenvaluesOnly);
  return es.eigenvalues().maxCoeff();
}

inline double min_eigenvalue(const Mat& sym) {
  if (sym.size() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<Mat> es(sym, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

/// Nearest PSD matrix in Frobenius norm (negative eigenvalues clipped to 0).
inline Mat project_psd(const Mat& sym, double* min_eig_before = nullptr) {
  const Mat s = 0.5 * (sym + sym.transpose());
  Eigen::SelfAdjointEigenSolver<Mat> es(s);
  if (min_eig_before) *min_eig_before = es.eigenvalues().minCoeff();
  const Vec clipped = es.eigenvalues().cwiseMax(0.0);
  Mat out = es.eigenvectors() * clipped.asDiagonal() * es.eigenvectors().transpose();
  return 0.5 * (out + out.transpose());
}

/// Closed interval [lo, hi]; hi may be +inf.
struct Interval {
  double lo = 0.0;
  double hi = 0.0;

  Interval() = default;
  Interval(double lo_, double hi_) : lo(lo_), hi(hi_) {
    if (std::isnan(lo) || std::isnan(hi) || lo > hi) {
      throw ContractViolation("Interval: lo must not exceed hi");
    }
  }

  static Interval centered(double center, double half_width) {
    return {center - half_width, center + half_width};
  }

  double center() const { return 0.5 * (lo + hi); }
  double half_width() const { return 0.5 * (hi - lo); }
  bool bounded() const { return std::isfinite(lo) && std::isfinite(hi); }
  bool contains(double x, double tol = 0.0) const { return x >= lo - tol && x <= hi + tol; }
};

/// Axis-aligned box; components of hi may be +inf.
struct Box {
  Vec lo;
  Vec hi;

  Box() = default;
  Box(Vec lo_, Vec hi_) : lo(std::move(lo_)), hi(std::move(hi_)) {
    if (lo.size() != hi.size()) throw ContractViolation("Box: dimension mismatch");
    for (Eigen::Index i = 0; i < lo.size(); ++i) {
      if (std::isnan(lo(i)) || std::isnan(hi(i)) || lo(i) > hi(i)) {
        throw ContractViolation("Box: lo must not exceed hi componentwise");
      }
    }
  }

  static Box zero(Eigen::Index dim) { return {Vec::Zero(dim), Vec::Zero(dim)}; }

  Eigen::Index dim() const { return lo.size(); }
  Interval component(Eigen::Index i) const { return {lo(i), hi(i)}; }
  Vec center() const { return 0.5 * (lo + hi); }
  Vec width() const { return hi - lo; }
};

struct Ball {
  Vec center;
  double radius = 0.0;

  Ball() = default;
  Ball(Vec c, double r) : center(std::move(c)), radius(r) {
    if (!(r >= 0.0)) throw ContractViolation("Ball: radius must be nonnegative");
  }
};

/// {x : (x - c)^T shape^+ (x - c) <= 1}, with the shape allowed to be singular.
///
/// The shape is symmetrized on construction and eigenvalues in
/// [-1e-10 * lambda_max, 0) are clipped to zero; anything more negative is
/// rejected.
class Ellipsoid {
 public:
  Ellipsoid() = default;

  Ellipsoid(Vec center, Mat shape) : center_(std::move(center)) {
    detail::require_square(shape, "Ellipsoid");
    if (shape.rows() != center_.size()) {
      throw ContractViolation("Ellipsoid: center and shape dimensions differ");
    }
    detail::require_symmetric(shape, "Ellipsoid");
    shape = 0.5 * (shape + shape.transpose());
    Eigen::SelfAdjointEigenSolver<Mat> es(shape, Eigen::EigenvaluesOnly);
    const double lmax = es.eigenvalues().maxCoeff();
    const double lmin = es.eigenvalues().minCoeff();
    if (lmin < -1e-10 * std::max(lmax, 0.0) && lmin < -1e-300) {
      throw ContractViolation("Ellipsoid: shape matrix is not positive semidefinite");
    }
    shape_ = lmin < 0.0 ? project_psd(shape) : shape;
  }

  static Ellipsoid ball(const Vec& center, double radius) {
    const auto d = center.size();
    return {center, Mat::Identity(d, d) * radius * radius};
  }

  const Vec& center() const { return center_; }
  const Mat& shape() const { return shape_; }
  Eigen::Index dim() const { return center_.size(); }
  double trace() const { return shape_.trace(); }

  /// Same center, shape scaled by factor^2 (semi-axes scaled by factor).
  Ellipsoid scaled(double factor) const { return {center_, shape_ * factor * factor}; }

 private:
  Vec center_;
  Mat shape_;
};

/// Lower-triangular E with E E^T = shape.
///
/// Semidefinite input is regularized by 1e-12 * lambda_max * I before
/// factoring; the zero matrix factors to zero.
inline Mat cholesky(const Mat& shape) {
  detail::require_symmetric(shape, "cholesky");
  const auto n = shape.rows();
  if (n == 0) return Mat(0, 0);
  const Mat sym = 0.5 * (shape + shape.transpose());
  Eigen::LLT<Mat> llt(sym);
  if (llt.info() == Eigen::Success && llt.matrixL().toDenseMatrix().diagonal().minCoeff() > 0.0) {
    return llt.matrixL();
  }
  const double lmax = max_eigenvalue(sym);
  if (lmax <= 0.0) return Mat::Zero(n, n);
  const Mat psd = project_psd(sym);
  Eigen::LLT<Mat> reg(psd + 1e-12 * lmax * Mat::Identity(n, n));
  if (reg.info() != Eigen::Success) {
    throw ContractViolation("cholesky: matrix is not positive semidefinite");
  }
  return reg.matrixL();
}

/// Smallest ball centered at e.center() that contains e.
inline Ball enclosing_ball(const Ellipsoid& e) {
  return {e.center(), std::sqrt(std::max(max_eigenvalue(e.shape()), 0.0))};
}

inline Box minkowski_sum(std::span<const Box> boxes) {
  if (boxes.empty()) throw ContractViolation("minkowski_sum: no boxes");
  const auto dim = boxes.front().dim();
  Vec lo = Vec::Zero(dim);
  Vec hi = Vec::Zero(dim);
  for (const auto& b : boxes) {
    if (b.dim() != dim) throw ContractViolation("minkowski_sum: dimension mismatch");
    lo += b.lo;
    for (Eigen::Index i = 0; i < dim; ++i) {
      // +inf absorbs; lower bounds are finite by construction here
      hi(i) = (std::isinf(hi(i)) || std::isinf(b.hi(i))) ? kInf : hi(i) + b.hi(i);
    }
  }
  return {lo, hi};
}

/// Membership test with relative tolerance on the quadratic form. Singular
/// shapes use the pseudo-inverse and require p - c to lie in the range.
inline bool contains(const Ellipsoid& e, const Vec& p, double tol = 1e-9) {
  if (p.size() != e.dim()) throw ContractViolation("contains: dimension mismatch");
  const Vec v = p - e.center();
  Eigen::SelfAdjointEigenSolver<Mat> es(e.shape());
  const double lmax = std::max(es.eigenvalues().maxCoeff(), 0.0);
  const double cutoff = std::max(1e-12 * lmax, 1e-300);
  const Vec w = es.eigenvectors().transpose() * v;
  const double vnorm = v.norm();
  double q = 0.0;
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    const double lam = es.eigenvalues()(i);
    if (lam > cutoff) {
      q += w(i) * w(i) / lam;
    } else if (std::abs(w(i)) > 1e-9 * std::max(vnorm, 1.0) * std::max(1.0, std::sqrt(lmax))) {
      return false;  // outside the range of a collapsed direction
    }
  }
  return q <= 1.0 + tol;
}

/// Point c + E u for a unit (or sub-unit) vector u, E the Cholesky factor.
inline Vec map_from_unit(const Ellipsoid& e, const Mat& factor, const Vec& u) {
  return e.center() + factor * u;
}

}  // namespace smloc
