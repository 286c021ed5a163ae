#pragma once

#include <utility>

#include <Eigen/LU>

#include "renkit/certkit.hpp"
#include "renkit/common.hpp"

namespace renkit {

/// Standard state-space form x+ = A x + B u, y = C x + D u.
struct ExplicitLti {
  Matrix A, B, C, D;

  Index n() const { return A.rows(); }
  Index m() const { return B.cols(); }
  Index p() const { return C.rows(); }

  void validate_dims() const {
    require(A.rows() == A.cols(), "ExplicitLti: A must be square");
    require(B.rows() == A.rows(), "ExplicitLti: B row mismatch");
    require(C.cols() == A.rows(), "ExplicitLti: C column mismatch");
    require(D.rows() == C.rows() && D.cols() == B.cols(), "ExplicitLti: D shape mismatch");
  }
};

/// Implicit (redundant) form E x+ = F x + K u, y = C x + D u, carrying
/// the contraction metric P. E + E^T > 0 makes E invertible, so the
/// model stays equivalent to an explicit one while the stable set
/// becomes convex in (E, F, P).
struct ImplicitLti {
  Matrix E, F, K, C, D;
  Matrix P;

  Index n() const { return E.rows(); }
  Index m() const { return K.cols(); }
  Index p() const { return C.rows(); }

  void validate_dims() const {
    const Index nn = E.rows();
    require(E.cols() == nn && F.rows() == nn && F.cols() == nn, "ImplicitLti: E/F must be n x n");
    require(K.rows() == nn, "ImplicitLti: K row mismatch");
    require(C.cols() == nn, "ImplicitLti: C column mismatch");
    require(D.rows() == C.rows() && D.cols() == K.cols(), "ImplicitLti: D shape mismatch");
    require(P.rows() == nn && P.cols() == nn, "ImplicitLti: P must be n x n");
  }
};

/// Stability LMI matrix for the implicit form:
///   [ E + E^T - P   -F ]
///   [ -F^T           P ].
inline Matrix stable_lmi_matrix(const ImplicitLti& m) {
  m.validate_dims();
  const Index n = m.n();
  Matrix lmi(2 * n, 2 * n);
  lmi.topLeftCorner(n, n) = m.E + m.E.transpose() - m.P;
  lmi.topRightCorner(n, n) = -m.F;
  lmi.bottomLeftCorner(n, n) = -m.F.transpose();
  lmi.bottomRightCorner(n, n) = m.P;
  return lmi;
}

inline SymCheckReport check_stable_lmi(const ImplicitLti& m, double margin) {
  return is_positive_definite(stable_lmi_matrix(m), margin);
}

/// Maps free parameters to a model that satisfies the stability LMI by
/// construction: with H = V V^T + eps I partitioned into n x n blocks,
///   P = H22, F = -H12, E = (H11 + H22 + S)/2,
/// the assembled LMI matrix equals H itself. Only the top-left n x n
/// skew block of the factor enters E. K, C, D pass through untouched
/// (the LMI does not involve them).
inline ImplicitLti direct_parameterize_lti(const DirectFactor& f, Matrix K, Matrix C, Matrix D) {
  require(f.dim() % 2 == 0, "direct_parameterize_lti: factor dimension must be even (2n)");
  const Index n = f.dim() / 2;
  require(K.rows() == n, "direct_parameterize_lti: K row mismatch");
  require(C.cols() == n, "direct_parameterize_lti: C column mismatch");
  require(D.rows() == C.rows() && D.cols() == K.cols(),
          "direct_parameterize_lti: D shape mismatch");

  const Matrix h = factor_to_pd(f);
  const auto blocks = partition_blocks(h, {n, n});
  const Matrix s = f.skew().topLeftCorner(n, n);

  ImplicitLti model;
  model.P = blocks[1][1];
  model.F = -blocks[0][1];
  model.E = 0.5 * (blocks[0][0] + blocks[1][1] + s);
  model.K = std::move(K);
  model.C = std::move(C);
  model.D = std::move(D);
  return model;
}

/// Reciprocal-condition cutoff below which E is treated as singular.
/// Unreachable for models with E + E^T > 0, so tripping it means the
/// input is corrupted.
inline constexpr double kSingularRcond = 1e-12;

namespace detail {
inline Eigen::PartialPivLU<Matrix> lu_or_throw(const Matrix& e, const char* who) {
  require(e.rows() == e.cols(), std::string(who) + ": E must be square");
  Eigen::PartialPivLU<Matrix> lu(e);
  const double rcond = lu.rcond();
  if (!(rcond > kSingularRcond))
    throw NumericalError(std::string(who) + ": E numerically singular (rcond too small)");
  return lu;
}
}  // namespace detail

/// A = E^{-1} F, B = E^{-1} K via linear solves.
inline ExplicitLti to_explicit(const ImplicitLti& m) {
  m.validate_dims();
  const auto lu = detail::lu_or_throw(m.E, "to_explicit");
  ExplicitLti out;
  out.A = lu.solve(m.F);
  out.B = lu.solve(m.K);
  out.C = m.C;
  out.D = m.D;
  return out;
}

/// Classical discrete Lyapunov test: P - A^T P A > 0.
inline SymCheckReport check_lyapunov_explicit(const Matrix& a, const Matrix& p, double margin) {
  require(a.rows() == a.cols(), "check_lyapunov_explicit: A must be square");
  require(p.rows() == a.rows() && p.cols() == a.cols(),
          "check_lyapunov_explicit: P dimension mismatch");
  return is_positive_definite(p - a.transpose() * p * a, margin);
}

/// Solves P = A^T P A + Q by the Kronecker vectorization
/// (I - A^T (x) A^T) vec(P) = vec(Q); unique when rho(A) < 1.
inline Matrix solve_discrete_lyapunov(const Matrix& a, const Matrix& q) {
  require(a.rows() == a.cols(), "solve_discrete_lyapunov: A must be square");
  require(q.rows() == a.rows() && q.cols() == a.cols(),
          "solve_discrete_lyapunov: Q dimension mismatch");
  const Index n = a.rows();
  Matrix at = a.transpose();
  Matrix big = Matrix::Identity(n * n, n * n);
  // vec(A^T P A) = (A^T (x) A^T) vec(P) for column-major vec.
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j)
      big.block(i * n, j * n, n, n) -= at(i, j) * at;
  Eigen::PartialPivLU<Matrix> lu(big);
  if (!(lu.rcond() > kSingularRcond))
    throw NumericalError("solve_discrete_lyapunov: system singular (is rho(A) < 1?)");
  Vector vec_q(n * n);
  for (Index j = 0; j < n; ++j) vec_q.segment(j * n, n) = q.col(j);
  const Vector vec_p = lu.solve(vec_q);
  Matrix p(n, n);
  for (Index j = 0; j < n; ++j) p.col(j) = vec_p.segment(j * n, n);
  // Symmetrize away roundoff; the exact solution is symmetric for symmetric Q.
  return 0.5 * (p + p.transpose());
}

/// The two stable matrices whose average is unstable, with their
/// spectral radii (0.5, 0.5, 1.25): the set of Schur-stable A is not
/// convex, which is what the implicit parameterization works around.
struct NonconvexityDemo {
  Matrix A_a, A_b, A_c;
  double rho_a, rho_b, rho_c;
};

inline NonconvexityDemo nonconvexity_demo() {
  NonconvexityDemo demo;
  demo.A_a = (Matrix(2, 2) << 0.5, 2.0, 0.0, 0.0).finished();
  demo.A_b = (Matrix(2, 2) << 0.0, 0.0, 2.0, 0.5).finished();
  demo.A_c = 0.5 * (demo.A_a + demo.A_b);
  demo.rho_a = spectral_radius(demo.A_a);
  demo.rho_b = spectral_radius(demo.A_b);
  demo.rho_c = spectral_radius(demo.A_c);
  return demo;
}

}  // namespace renkit
