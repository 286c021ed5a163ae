#pragma once

#include <optional>
#include <utility>

#include "renkit/activation.hpp"
#include "renkit/certkit.hpp"
#include "renkit/common.hpp"
#include "renkit/lti.hpp"

namespace renkit {

/// Recurrent network with an implicit linear block and a single
/// slope-restricted nonlinearity:
///   E x+ = F x + B1 w + B2 u,   v = C1 x + D12 u,   w = sigma(v),
///   y = C2 x + D21 w + D22 u.
/// The sector multiplier is absorbed into the model: Ctilde = Lambda C1
/// with Lambda diagonal positive, so C1 = Lambda^{-1} Ctilde.
struct RobustRnn {
  Matrix E, F, B1, B2;
  Matrix Ctilde;   // Lambda * C1
  Vector Lambda;   // diagonal entries, all > 0
  Matrix C2, D12, D21, D22;
  Matrix P;
  Activation act = Activation::tanh;
  std::optional<double> gamma;  // declared Lipschitz bound, if any

  Index n() const { return E.rows(); }
  Index q() const { return Lambda.size(); }
  Index m() const { return B2.cols(); }
  Index p() const { return C2.rows(); }

  Matrix C1() const {
    require((Lambda.array() > 0.0).all(), "RobustRnn: Lambda entries must be positive");
    return Lambda.cwiseInverse().asDiagonal() * Ctilde;
  }

  void validate_dims() const {
    const Index nn = E.rows(), qq = Lambda.size();
    require(E.cols() == nn && F.rows() == nn && F.cols() == nn, "RobustRnn: E/F must be n x n");
    require(B1.rows() == nn && B1.cols() == qq, "RobustRnn: B1 must be n x q");
    require(B2.rows() == nn, "RobustRnn: B2 row mismatch");
    require(Ctilde.rows() == qq && Ctilde.cols() == nn, "RobustRnn: Ctilde must be q x n");
    require(C2.cols() == nn, "RobustRnn: C2 column mismatch");
    require(D12.rows() == qq && D12.cols() == B2.cols(), "RobustRnn: D12 must be q x m");
    require(D21.rows() == C2.rows() && D21.cols() == qq, "RobustRnn: D21 must be p x q");
    require(D22.rows() == C2.rows() && D22.cols() == B2.cols(), "RobustRnn: D22 must be p x m");
    require(P.rows() == nn && P.cols() == nn, "RobustRnn: P must be n x n");
  }
};

/// One step: v = C1 x + D12 u, w = sigma(v), solve E x+ = F x + B1 w + B2 u.
inline std::pair<Vector, Vector> rnn_step(const RobustRnn& m, const Vector& x, const Vector& u) {
  m.validate_dims();
  require(x.size() == m.n(), "rnn_step: state dimension mismatch");
  require(u.size() == m.m(), "rnn_step: input dimension mismatch");
  const Vector v = m.C1() * x + m.D12 * u;
  const Vector w = activate(m.act, v);
  const auto lu = detail::lu_or_throw(m.E, "rnn_step");
  Vector x_next = lu.solve(m.F * x + m.B1 * w + m.B2 * u);
  Vector y = m.C2 * x + m.D21 * w + m.D22 * u;
  return {std::move(x_next), std::move(y)};
}

namespace detail {

/// Shared contraction-LMI layout in zeta = (dx+, dx, dw); `d11tilde` is
/// zero for the plain RNN and Lambda*D11 for RENs.
inline Matrix contraction_quadratic_form(const Matrix& E, const Matrix& F, const Matrix& B1,
                                         const Matrix& Ctilde, const Matrix& d11tilde,
                                         const Vector& Lambda, const Matrix& P) {
  const Index n = E.rows(), q = Lambda.size();
  Matrix lmi = Matrix::Zero(2 * n + q, 2 * n + q);
  lmi.block(0, 0, n, n) = E + E.transpose() - P;
  lmi.block(0, n, n, n) = -F;
  lmi.block(0, 2 * n, n, q) = -B1;
  lmi.block(n, 0, n, n) = -F.transpose();
  lmi.block(n, n, n, n) = P;
  lmi.block(n, 2 * n, n, q) = -Ctilde.transpose();
  lmi.block(2 * n, 0, q, n) = -B1.transpose();
  lmi.block(2 * n, n, q, n) = -Ctilde;
  lmi.block(2 * n, 2 * n, q, q) =
      2.0 * Matrix(Lambda.asDiagonal()) - d11tilde - d11tilde.transpose();
  return lmi;
}

}  // namespace detail

/// Contraction LMI matrix for the RNN class:
///   [ E + E^T - P   -F        -B1      ]
///   [ -F^T           P        -Ctilde^T]
///   [ -B1^T         -Ctilde    2 Lambda].
/// With B1 = Ctilde = 0 this reduces to the stable-LTI LMI, so every
/// stable linear model embeds in this set.
inline Matrix contraction_lmi_matrix(const RobustRnn& m) {
  m.validate_dims();
  require((m.Lambda.array() > 0.0).all(), "check_contraction_rnn: Lambda entries must be positive");
  return detail::contraction_quadratic_form(m.E, m.F, m.B1, m.Ctilde,
                                            Matrix::Zero(m.q(), m.q()), m.Lambda, m.P);
}

inline SymCheckReport check_contraction_rnn(const RobustRnn& m, double margin) {
  return is_positive_definite(contraction_lmi_matrix(m), margin);
}

namespace detail {

/// Shared assembly for the incremental l2-gain quadratic form in the
/// variable order zeta = (dx+, dx, dw, du). `d11tilde` is zero for the
/// plain RNN and Lambda*D11 for RENs; both certify
///   sum |dy|^2 <= gamma^2 sum |du|^2  from identical initial states.
inline Matrix lipschitz_quadratic_form(const Matrix& E, const Matrix& F, const Matrix& B1,
                                       const Matrix& B2, const Matrix& Ctilde,
                                       const Matrix& d11tilde, const Matrix& d12tilde,
                                       const Vector& Lambda, const Matrix& C2, const Matrix& D21,
                                       const Matrix& D22, const Matrix& P, double gamma) {
  const Index n = E.rows(), q = Lambda.size(), mm = B2.cols();
  const Index dim = 2 * n + q + mm;
  Matrix big = Matrix::Zero(dim, dim);
  const Index ix = n, iw = 2 * n, iu = 2 * n + q;
  big.block(0, 0, n, n) = E + E.transpose() - P;
  big.block(0, ix, n, n) = -F;
  big.block(0, iw, n, q) = -B1;
  big.block(0, iu, n, mm) = -B2;
  big.block(ix, 0, n, n) = -F.transpose();
  big.block(ix, ix, n, n) = P - C2.transpose() * C2;
  big.block(ix, iw, n, q) = -Ctilde.transpose() - C2.transpose() * D21;
  big.block(ix, iu, n, mm) = -C2.transpose() * D22;
  big.block(iw, 0, q, n) = -B1.transpose();
  big.block(iw, ix, q, n) = -Ctilde - D21.transpose() * C2;
  big.block(iw, iw, q, q) = 2.0 * Matrix(Lambda.asDiagonal()) - d11tilde - d11tilde.transpose() -
                            D21.transpose() * D21;
  big.block(iw, iu, q, mm) = -d12tilde - D21.transpose() * D22;
  big.block(iu, 0, mm, n) = -B2.transpose();
  big.block(iu, ix, mm, n) = -D22.transpose() * C2;
  big.block(iu, iw, mm, q) = -d12tilde.transpose() - D22.transpose() * D21;
  big.block(iu, iu, mm, mm) =
      gamma * gamma * Matrix::Identity(mm, mm) - D22.transpose() * D22;
  return big;
}

}  // namespace detail

/// Quadratic form in (dx+, dx, dw, du) whose positive definiteness
/// certifies an incremental l2 gain of gamma.
inline Matrix lipschitz_lmi_matrix(const RobustRnn& m, double gamma) {
  m.validate_dims();
  require(gamma > 0.0, "check_lipschitz_rnn: gamma must be > 0");
  require((m.Lambda.array() > 0.0).all(), "check_lipschitz_rnn: Lambda entries must be positive");
  const Matrix d12tilde = m.Lambda.asDiagonal() * m.D12;
  return detail::lipschitz_quadratic_form(m.E, m.F, m.B1, m.B2, m.Ctilde,
                                          Matrix::Zero(m.q(), m.q()), d12tilde, m.Lambda, m.C2,
                                          m.D21, m.D22, m.P, gamma);
}

inline SymCheckReport check_lipschitz_rnn(const RobustRnn& m, double gamma, double margin) {
  return is_positive_definite(lipschitz_lmi_matrix(m, gamma), margin);
}

}  // namespace renkit
