#pragma once

#include <cmath>
#include <limits>
#include <utility>
#include <vector>

#include <Eigen/Eigenvalues>

#include "renkit/common.hpp"
#include "renkit/rng.hpp"

namespace renkit {

/// Outcome of a positive-definiteness test on a symmetrized matrix.
struct SymCheckReport {
  bool feasible = false;      // min_eigenvalue > margin_used
  double min_eigenvalue = 0.0;
  double margin_used = 0.0;
  Index dimension = 0;
};

/// Relative default margin: 1e-8 * (1 + max |entry|).
inline double default_margin(const Matrix& m) {
  const double scale = m.size() > 0 ? m.cwiseAbs().maxCoeff() : 0.0;
  return 1e-8 * (1.0 + scale);
}

/// Symmetrizes M as (M + M^T)/2 and reports whether its smallest
/// eigenvalue clears the margin. Asymmetric input is accepted: the
/// certificates this backs are quadratic forms, so only the symmetric
/// part matters.
inline SymCheckReport is_positive_definite(const Matrix& m, double margin) {
  require(m.rows() == m.cols(), "is_positive_definite: matrix must be square");
  require(all_finite(m), "is_positive_definite: non-finite entries");
  require(std::isfinite(margin), "is_positive_definite: margin must be finite");

  SymCheckReport report;
  report.dimension = m.rows();
  report.margin_used = margin;
  if (m.rows() == 0) {
    // Empty quadratic form holds vacuously.
    report.min_eigenvalue = std::numeric_limits<double>::infinity();
    report.feasible = true;
    return report;
  }
  const Matrix sym = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> eig(sym, Eigen::EigenvaluesOnly);
  if (eig.info() != Eigen::Success)
    throw NumericalError("is_positive_definite: eigensolver failed");
  report.min_eigenvalue = eig.eigenvalues().minCoeff();
  report.feasible = report.min_eigenvalue > margin;
  return report;
}

inline SymCheckReport is_positive_definite(const Matrix& m) {
  return is_positive_definite(m, default_margin(m));
}

/// Largest eigenvalue magnitude over the (possibly complex) spectrum.
inline double spectral_radius(const Matrix& a) {
  require(a.rows() == a.cols(), "spectral_radius: matrix must be square");
  require(all_finite(a), "spectral_radius: non-finite entries");
  if (a.rows() == 0) return 0.0;
  Eigen::EigenSolver<Matrix> eig(a, /*computeEigenvectors=*/false);
  if (eig.info() != Eigen::Success)
    throw NumericalError("spectral_radius: eigensolver failed");
  return eig.eigenvalues().cwiseAbs().maxCoeff();
}

/// Free parameters (V, S, eps) behind every direct parameterization:
/// V is unconstrained, S is skew-symmetric, and H = V V^T + eps I is
/// positive definite by construction. Exact skewness is enforced by
/// storing only the strict lower triangle of S.
class DirectFactor {
 public:
  /// `skew_seed` contributes only its strict lower triangle; passing a
  /// skew-symmetric S reproduces it exactly.
  DirectFactor(Matrix v, const Matrix& skew_seed, double eps)
      : v_(std::move(v)), skew_lower_(Matrix::Zero(v_.rows(), v_.cols())), eps_(eps) {
    require(v_.rows() == v_.cols(), "DirectFactor: V must be square");
    require(skew_seed.rows() == v_.rows() && skew_seed.cols() == v_.cols(),
            "DirectFactor: skew seed dimension mismatch");
    require(all_finite(v_) && all_finite(skew_seed), "DirectFactor: non-finite entries");
    require(eps_ > 0.0, "DirectFactor: eps must be > 0");
    for (Index i = 1; i < v_.rows(); ++i)
      for (Index j = 0; j < i; ++j) skew_lower_(i, j) = skew_seed(i, j);
  }

  DirectFactor(Matrix v, double eps) : DirectFactor(std::move(v), Matrix::Zero(v.rows(), v.cols()), eps) {}

  static DirectFactor random(Index dim, double eps, Rng& rng, double v_scale = -1.0,
                             double skew_scale = 0.3) {
    if (v_scale < 0.0) v_scale = dim > 0 ? 1.0 / std::sqrt(static_cast<double>(dim)) : 1.0;
    return DirectFactor(rng.gaussian(dim, dim, v_scale), rng.gaussian(dim, dim, skew_scale), eps);
  }

  const Matrix& V() const { return v_; }
  double eps() const { return eps_; }
  Index dim() const { return v_.rows(); }

  /// S = L - L^T, skew-symmetric to the bit.
  Matrix skew() const { return skew_lower_ - skew_lower_.transpose(); }

 private:
  Matrix v_;
  Matrix skew_lower_;
  double eps_;
};

/// H = V V^T + eps I; smallest eigenvalue is at least eps.
inline Matrix factor_to_pd(const DirectFactor& f) {
  return f.V() * f.V().transpose() + f.eps() * Matrix::Identity(f.dim(), f.dim());
}

/// Splits H into the block grid induced by `sizes` (row-major order).
/// Concatenating the blocks reproduces H bit-exactly.
inline std::vector<std::vector<Matrix>> partition_blocks(const Matrix& h,
                                                         const std::vector<Index>& sizes) {
  require(h.rows() == h.cols(), "partition_blocks: matrix must be square");
  Index total = 0;
  for (Index s : sizes) {
    require(s > 0, "partition_blocks: block sizes must be positive");
    total += s;
  }
  require(total == h.rows(), "partition_blocks: sizes must sum to matrix dimension");

  std::vector<std::vector<Matrix>> grid(sizes.size());
  Index row = 0;
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    Index col = 0;
    grid[i].reserve(sizes.size());
    for (std::size_t j = 0; j < sizes.size(); ++j) {
      grid[i].push_back(h.block(row, col, sizes[i], sizes[j]));
      col += sizes[j];
    }
    row += sizes[i];
  }
  return grid;
}

}  // namespace renkit
