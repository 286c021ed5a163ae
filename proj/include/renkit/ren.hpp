#pragma once

#include <optional>
#include <utility>

#include "renkit/activation.hpp"
#include "renkit/certkit.hpp"
#include "renkit/common.hpp"
#include "renkit/eqnet.hpp"
#include "renkit/lti.hpp"
#include "renkit/rnn.hpp"

namespace renkit {

/// Recurrent equilibrium network: the RNN structure with an implicit
/// static layer, v = C1 x + D11 w + D12 u + b_v, w = sigma(v). Both the
/// sector multiplier and the equilibrium weight are absorbed:
/// Ctilde = Lambda C1, D11tilde = Lambda D11. Contraction certificates
/// automatically imply the inner layer is well-posed.
struct Ren {
  Matrix E, F, B1, B2;
  Matrix Ctilde;    // Lambda * C1
  Matrix D11tilde;  // Lambda * D11
  Matrix D12, C2, D21, D22;
  Vector Lambda;    // diagonal entries, all > 0
  Matrix P;
  Vector b_x, b_v, b_y;
  Activation act = Activation::tanh;
  std::optional<double> gamma;

  Index n() const { return E.rows(); }
  Index q() const { return Lambda.size(); }
  Index m() const { return B2.cols(); }
  Index p() const { return C2.rows(); }

  Matrix C1() const {
    require((Lambda.array() > 0.0).all(), "Ren: Lambda entries must be positive");
    return Lambda.cwiseInverse().asDiagonal() * Ctilde;
  }
  Matrix D11() const {
    require((Lambda.array() > 0.0).all(), "Ren: Lambda entries must be positive");
    return Lambda.cwiseInverse().asDiagonal() * D11tilde;
  }

  void validate_dims() const {
    const Index nn = E.rows(), qq = Lambda.size();
    require(E.cols() == nn && F.rows() == nn && F.cols() == nn, "Ren: E/F must be n x n");
    require(B1.rows() == nn && B1.cols() == qq, "Ren: B1 must be n x q");
    require(B2.rows() == nn, "Ren: B2 row mismatch");
    require(Ctilde.rows() == qq && Ctilde.cols() == nn, "Ren: Ctilde must be q x n");
    require(D11tilde.rows() == qq && D11tilde.cols() == qq, "Ren: D11tilde must be q x q");
    require(D12.rows() == qq && D12.cols() == B2.cols(), "Ren: D12 must be q x m");
    require(C2.cols() == nn, "Ren: C2 column mismatch");
    require(D21.rows() == C2.rows() && D21.cols() == qq, "Ren: D21 must be p x q");
    require(D22.rows() == C2.rows() && D22.cols() == B2.cols(), "Ren: D22 must be p x m");
    require(P.rows() == nn && P.cols() == nn, "Ren: P must be n x n");
    require(b_x.size() == nn && b_v.size() == qq && b_y.size() == C2.rows(),
            "Ren: bias size mismatch");
  }
};

struct RenStepResult {
  Vector x_next, y;
  double residual = 0.0;
  int iterations = 0;
};

/// One step: solve the inner equilibrium for w, then
/// E x+ = F x + B1 w + B2 u + b_x and y = C2 x + D21 w + D22 u + b_y.
inline RenStepResult ren_step(const Ren& m, const Vector& x, const Vector& u,
                              double tol = kEqDefaultTol, int max_iter = kEqDefaultMaxIter) {
  m.validate_dims();
  require(x.size() == m.n(), "ren_step: state dimension mismatch");
  require(u.size() == m.m(), "ren_step: input dimension mismatch");

  EquilibriumSolution sol{Vector(0), 0.0, 0};
  if (m.q() > 0) {
    const Vector c = m.C1() * x + m.D12 * u + m.b_v;
    sol = detail::damped_fixed_point(m.D11(), c, m.act, tol, max_iter, Vector::Zero(m.q()));
  }
  RenStepResult out;
  if (m.n() > 0) {
    const auto lu = detail::lu_or_throw(m.E, "ren_step");
    out.x_next = lu.solve(m.F * x + m.B1 * sol.w + m.B2 * u + m.b_x);
  } else {
    out.x_next = Vector(0);
  }
  out.y = m.C2 * x + m.D21 * sol.w + m.D22 * u + m.b_y;
  out.residual = sol.residual;
  out.iterations = sol.iterations;
  return out;
}

/// Contracting-REN LMI matrix; same as the RNN one except the
/// lower-right block relaxes from 2 Lambda to
/// 2 Lambda - D11tilde - D11tilde^T, which is exactly the equilibrium
/// well-posedness matrix.
inline Matrix contraction_lmi_matrix(const Ren& m) {
  m.validate_dims();
  require((m.Lambda.array() > 0.0).all(), "check_contracting_ren: Lambda entries must be positive");
  return detail::contraction_quadratic_form(m.E, m.F, m.B1, m.Ctilde, m.D11tilde, m.Lambda, m.P);
}

inline SymCheckReport check_contracting_ren(const Ren& m, double margin) {
  return is_positive_definite(contraction_lmi_matrix(m), margin);
}

/// Incremental l2-gain certificate matrix for RENs; reduces to the RNN
/// one when D11tilde = 0.
inline Matrix lipschitz_lmi_matrix(const Ren& m, double gamma) {
  m.validate_dims();
  require(gamma > 0.0, "check_lipschitz_ren: gamma must be > 0");
  require((m.Lambda.array() > 0.0).all(), "check_lipschitz_ren: Lambda entries must be positive");
  const Matrix d12tilde = m.Lambda.asDiagonal() * m.D12;
  return detail::lipschitz_quadratic_form(m.E, m.F, m.B1, m.B2, m.Ctilde, m.D11tilde, d12tilde,
                                          m.Lambda, m.C2, m.D21, m.D22, m.P, gamma);
}

inline SymCheckReport check_lipschitz_ren(const Ren& m, double gamma, double margin) {
  return is_positive_definite(lipschitz_lmi_matrix(m, gamma), margin);
}

/// Free parameters for a contracting REN.
struct RenDirectParams {
  Matrix V;             // (2n + q) x (2n + q), unconstrained
  Matrix skew_e_seed;   // n x n, strict lower triangle used
  Matrix skew_w_seed;   // q x q, strict lower triangle used
  Vector lambda_log;    // q
  double eps = 1e-3;
  Matrix B2, D12, C2, D21, D22;
  Vector b_x, b_v, b_y;
  Activation act = Activation::tanh;

  Index q() const { return lambda_log.size(); }
  Index n() const { return skew_e_seed.rows(); }
};

namespace detail {
inline Matrix strict_lower_skew(const Matrix& seed) {
  Matrix l = Matrix::Zero(seed.rows(), seed.cols());
  for (Index i = 1; i < seed.rows(); ++i)
    for (Index j = 0; j < i; ++j) l(i, j) = seed(i, j);
  return l - l.transpose();
}
}  // namespace detail

/// Direct parameterization of contracting RENs: partition
/// H = V V^T + eps I with block sizes (n, n, q) and extract
///   P = H22, F = -H12, B1 = -H13, Ctilde = -H32,
///   E = (H11 + H22 + S_E)/2, D11tilde = Lambda - H33/2 + S_w.
/// The assembled contraction LMI then equals H itself, so every draw is
/// feasible at margin 0. With q = 0 this is exactly the stable-LTI map.
inline Ren direct_parameterize_ren(const RenDirectParams& params) {
  const Index n = params.n(), q = params.q();
  require(params.V.rows() == 2 * n + q && params.V.cols() == 2 * n + q,
          "direct_parameterize_ren: V must be (2n+q) x (2n+q)");
  require(params.skew_e_seed.cols() == n, "direct_parameterize_ren: skew_e_seed must be n x n");
  require(params.skew_w_seed.rows() == q && params.skew_w_seed.cols() == q,
          "direct_parameterize_ren: skew_w_seed must be q x q");
  require(params.eps > 0.0, "direct_parameterize_ren: eps must be > 0");

  const Matrix h = params.V * params.V.transpose() +
                   params.eps * Matrix::Identity(2 * n + q, 2 * n + q);
  const Vector lambda = params.lambda_log.array().exp();

  Ren m;
  m.P = h.block(n, n, n, n);
  m.F = -h.block(0, n, n, n);
  m.B1 = -h.block(0, 2 * n, n, q);
  m.Ctilde = -h.block(2 * n, n, q, n);
  m.E = 0.5 * (h.block(0, 0, n, n) + h.block(n, n, n, n) +
               detail::strict_lower_skew(params.skew_e_seed));
  m.D11tilde = Matrix(lambda.asDiagonal()) - 0.5 * h.block(2 * n, 2 * n, q, q) +
               detail::strict_lower_skew(params.skew_w_seed);
  m.Lambda = lambda;
  m.B2 = params.B2;
  m.D12 = params.D12;
  m.C2 = params.C2;
  m.D21 = params.D21;
  m.D22 = params.D22;
  m.b_x = params.b_x;
  m.b_v = params.b_v;
  m.b_y = params.b_y;
  m.act = params.act;
  m.validate_dims();
  return m;
}

/// q = 0 embedding: an implicit LTI is a REN with no nonlinear channel.
inline Ren ren_from_lti(const ImplicitLti& lti) {
  lti.validate_dims();
  const Index n = lti.n(), mm = lti.m(), pp = lti.p();
  Ren m;
  m.E = lti.E;
  m.F = lti.F;
  m.B1 = Matrix::Zero(n, 0);
  m.B2 = lti.K;
  m.Ctilde = Matrix::Zero(0, n);
  m.D11tilde = Matrix::Zero(0, 0);
  m.D12 = Matrix::Zero(0, mm);
  m.C2 = lti.C;
  m.D21 = Matrix::Zero(pp, 0);
  m.D22 = lti.D;
  m.Lambda = Vector(0);
  m.P = lti.P;
  m.b_x = Vector::Zero(n);
  m.b_v = Vector(0);
  m.b_y = Vector::Zero(pp);
  m.act = Activation::identity;
  return m;
}

/// D11tilde = 0 embedding: a robust RNN is a REN whose inner layer has
/// no equilibrium feedback.
inline Ren ren_from_rnn(const RobustRnn& rnn) {
  rnn.validate_dims();
  Ren m;
  m.E = rnn.E;
  m.F = rnn.F;
  m.B1 = rnn.B1;
  m.B2 = rnn.B2;
  m.Ctilde = rnn.Ctilde;
  m.D11tilde = Matrix::Zero(rnn.q(), rnn.q());
  m.D12 = rnn.D12;
  m.C2 = rnn.C2;
  m.D21 = rnn.D21;
  m.D22 = rnn.D22;
  m.Lambda = rnn.Lambda;
  m.P = rnn.P;
  m.b_x = Vector::Zero(rnn.n());
  m.b_v = Vector::Zero(rnn.q());
  m.b_y = Vector::Zero(rnn.p());
  m.act = rnn.act;
  m.gamma = rnn.gamma;
  return m;
}

/// n = q = 0 slice: a static gain y = D u, useful for oracle checks.
inline Ren ren_static_gain(const Matrix& d) {
  Ren m;
  const Index pp = d.rows(), mm = d.cols();
  m.E = Matrix::Zero(0, 0);
  m.F = Matrix::Zero(0, 0);
  m.B1 = Matrix::Zero(0, 0);
  m.B2 = Matrix::Zero(0, mm);
  m.Ctilde = Matrix::Zero(0, 0);
  m.D11tilde = Matrix::Zero(0, 0);
  m.D12 = Matrix::Zero(0, mm);
  m.C2 = Matrix::Zero(pp, 0);
  m.D21 = Matrix::Zero(pp, 0);
  m.D22 = d;
  m.Lambda = Vector(0);
  m.P = Matrix::Zero(0, 0);
  m.b_x = Vector(0);
  m.b_v = Vector(0);
  m.b_y = Vector::Zero(pp);
  m.act = Activation::identity;
  return m;
}

/// The inner static layer of a REN as a standalone equilibrium network
/// (inputs are ignored; used to cross-check that contraction implies
/// well-posedness of the inner layer).
inline EquilibriumNetwork inner_equilibrium(const Ren& m) {
  EquilibriumNetwork net;
  net.D11 = m.D11();
  net.D12 = Matrix::Zero(m.q(), m.m());
  net.D21 = Matrix::Zero(m.p(), m.q());
  net.b_w = Vector::Zero(m.q());
  net.b_y = Vector::Zero(m.p());
  net.Lambda = m.Lambda;
  net.act = m.act;
  return net;
}

}  // namespace renkit
