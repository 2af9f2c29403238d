#pragma once

// Dense kernels for codebook statistics and the closed-form Gaussian
// Wasserstein distance. Everything here runs in double regardless of the
// scalar type of the inputs.

#include <cmath>
#include <limits>
#include <string>

#include <Eigen/Core>
#include <Eigen/Eigenvalues>

#include "vaevq/error.hpp"
#include "vaevq/types.hpp"

namespace vaevq {

/// Eigenvalues of a PSD input may dip this far below zero from round-off;
/// anything lower is rejected.
inline constexpr double kPsdTolerance = 1e-10;

/// Square symmetric matrix in double precision. Construction symmetrizes
/// the input as (A + A^T) / 2 so entries(i, j) == entries(j, i) exactly.
class SymmetricMatrix {
public:
  SymmetricMatrix() = default;

  template <typename Derived>
  explicit SymmetricMatrix(const Eigen::MatrixBase<Derived>& a) {
    require(a.rows() == a.cols(), ErrorKind::DimensionMismatch,
            "symmetric matrix must be square");
    require(a.rows() >= 1, ErrorKind::EmptyInput, "symmetric matrix must be non-empty");
    const MatrixXd m = a.template cast<double>();
    entries_ = 0.5 * (m + m.transpose());
  }

  static SymmetricMatrix identity(Eigen::Index dim) {
    return SymmetricMatrix(MatrixXd::Identity(dim, dim));
  }

  Eigen::Index dim() const { return entries_.rows(); }
  const MatrixXd& matrix() const { return entries_; }
  double operator()(Eigen::Index i, Eigen::Index j) const { return entries_(i, j); }
  double trace() const { return entries_.trace(); }

private:
  MatrixXd entries_;
};

/// Component-wise mean of the rows of `points` (K x d).
template <typename Derived>
VectorXd mean_vector(const Eigen::MatrixBase<Derived>& points) {
  require(points.rows() >= 1, ErrorKind::EmptyInput, "mean_vector: no rows");
  return points.template cast<double>().colwise().mean().transpose();
}

/// Unbiased sample covariance (denominator K - 1) of the rows of `points`.
template <typename Derived>
SymmetricMatrix sample_covariance(const Eigen::MatrixBase<Derived>& points) {
  require(points.rows() >= 2, ErrorKind::InsufficientSamples,
          "sample_covariance: need at least 2 rows, got " + std::to_string(points.rows()));
  const MatrixXd x = points.template cast<double>();
  const RowVector<double> mu = x.colwise().mean();
  const MatrixXd centered = x.rowwise() - mu;
  return SymmetricMatrix((centered.transpose() * centered) / double(x.rows() - 1));
}

namespace detail {

inline Eigen::SelfAdjointEigenSolver<MatrixXd> checked_eigen(const SymmetricMatrix& s) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> solver(s.matrix());
  require(solver.info() == Eigen::Success, ErrorKind::NotPsd,
          "symmetric eigendecomposition did not converge");
  const double lowest = solver.eigenvalues().minCoeff();
  require(std::isfinite(lowest), ErrorKind::NonFinite, "non-finite eigenvalue");
  require(lowest >= -kPsdTolerance, ErrorKind::NotPsd,
          "matrix is not positive semi-definite (eigenvalue " + std::to_string(lowest) + ")");
  return solver;
}

}  // namespace detail

/// Unique PSD square root via symmetric eigendecomposition. Eigenvalues at
/// or below the round-off level dim * eps * max|lambda| are treated as zero,
/// so the root of a rank-deficient matrix carries no sqrt(eps) noise.
inline SymmetricMatrix sym_sqrt(const SymmetricMatrix& s) {
  const auto solver = detail::checked_eigen(s);
  const VectorXd& lambda = solver.eigenvalues();
  const double cutoff =
      double(s.dim()) * std::numeric_limits<double>::epsilon() * lambda.cwiseAbs().maxCoeff();
  const VectorXd root = (lambda.array() > cutoff).select(lambda.cwiseMax(0.0).cwiseSqrt(), 0.0);
  const MatrixXd& v = solver.eigenvectors();
  return SymmetricMatrix(v * root.asDiagonal() * v.transpose());
}

/// Inverse square root of (s + ridge * I).
inline SymmetricMatrix sym_inv_sqrt(const SymmetricMatrix& s, double ridge) {
  const MatrixXd ridged = s.matrix() + ridge * MatrixXd::Identity(s.dim(), s.dim());
  const auto solver = detail::checked_eigen(SymmetricMatrix(ridged));
  const VectorXd lambda = solver.eigenvalues();
  require(lambda.minCoeff() > 0.0, ErrorKind::NotPsd,
          "ridged covariance is singular");
  const VectorXd inv_root = lambda.cwiseSqrt().cwiseInverse();
  const MatrixXd& v = solver.eigenvectors();
  return SymmetricMatrix(v * inv_root.asDiagonal() * v.transpose());
}

/// Squared 2-Wasserstein distance between N(mu1, s1) and N(mu2, s2):
/// |mu1 - mu2|^2 + Tr(s1 + s2) - 2 Tr((s1^1/2 s2 s1^1/2)^1/2).
inline double gaussian_w2_squared(const VectorXd& mu1, const SymmetricMatrix& s1,
                                  const VectorXd& mu2, const SymmetricMatrix& s2) {
  require(mu1.size() == mu2.size() && s1.dim() == s2.dim() && s1.dim() == mu1.size(),
          ErrorKind::DimensionMismatch, "gaussian_w2_squared: dimension mismatch");
  const SymmetricMatrix root1 = sym_sqrt(s1);
  const SymmetricMatrix cross(root1.matrix() * s2.matrix() * root1.matrix());
  const double cross_trace = sym_sqrt(cross).trace();
  const double value = (mu1 - mu2).squaredNorm() + s1.trace() + s2.trace() - 2.0 * cross_trace;
  return value < 0.0 ? 0.0 : value;
}

/// Central-difference gradient of a scalar function. Non-finite function
/// values propagate into the corresponding component.
template <typename F>
VectorXd finite_difference_gradient(F&& f, const VectorXd& x, double h) {
  require(h > 0.0, ErrorKind::InvalidArgument, "finite difference step must be positive");
  VectorXd grad(x.size());
  VectorXd probe = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    probe(i) = x(i) + h;
    const double up = f(probe);
    probe(i) = x(i) - h;
    const double down = f(probe);
    probe(i) = x(i);
    grad(i) = (up - down) / (2.0 * h);
  }
  return grad;
}

}  // namespace vaevq
