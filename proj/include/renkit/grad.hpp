#pragma once

// Reverse-mode gradients for REN rollouts. The forward pass records a
// tape (states, equilibria, activation slopes); the backward pass walks
// it in reverse, treating the inner equilibrium through the
// implicit-function relation at the converged point rather than
// differentiating solver iterations. A second stage maps matrix-level
// adjoints back through the direct parameterization so that training
// happens in unconstrained coordinates.

#include <cmath>
#include <utility>

#include <Eigen/LU>

#include "renkit/common.hpp"
#include "renkit/eqnet.hpp"
#include "renkit/ren.hpp"

namespace renkit {

/// Inner-solve tolerance used on gradient paths. Much tighter than the
/// user-facing default so that solver truncation stays far below
/// finite-difference resolution.
inline constexpr double kGradSolveTol = 1e-13;
inline constexpr int kGradSolveMaxIter = 100000;

namespace detail {

/// Newton iteration on G(w) = sigma(D11 w + c) - w with damped-Picard
/// fallback whenever a Newton step fails to reduce the residual. The
/// Jacobian I - J D11 is nonsingular for every certified model.
inline EquilibriumSolution newton_fixed_point(const Matrix& d11, const Vector& c, Activation act,
                                              double tol, int max_iter, Vector w0) {
  const Index q = d11.rows();
  const double alpha = 1.0 / (1.0 + d11.cwiseAbs().rowwise().sum().maxCoeff());
  Vector w = std::move(w0);
  double best_res = std::numeric_limits<double>::infinity();
  int updates = 0;
  while (true) {
    const Vector v = d11 * w + c;
    const Vector sig = activate(act, v);
    const double res = (sig - w).cwiseAbs().maxCoeff();
    best_res = std::min(best_res, res);
    if (res <= tol) return {std::move(w), res, updates};
    if (updates >= max_iter)
      throw SolveError("newton_fixed_point: no convergence (best residual " +
                           std::to_string(best_res) + ")",
                       best_res, updates);
    bool stepped = false;
    const Vector slope = activation_slope(act, v);
    Eigen::PartialPivLU<Matrix> lu(Matrix::Identity(q, q) -
                                   Matrix(slope.asDiagonal()) * d11);
    if (lu.rcond() > 1e-14) {
      Vector w_new = w + lu.solve(sig - w);
      const double res_new =
          (activate(act, d11 * w_new + c) - w_new).cwiseAbs().maxCoeff();
      if (res_new < res) {
        w = std::move(w_new);
        stepped = true;
      }
    }
    if (!stepped) w = (1.0 - alpha) * w + alpha * sig;
    ++updates;
  }
}

}  // namespace detail

/// Rollout record sufficient for the reverse pass.
struct RenRolloutTape {
  Matrix x;      // (T+1) x n, states including x_T
  Matrix w;      // T x q, solved equilibria
  Matrix slope;  // T x q, sigma'(v_t)
  Matrix y;      // T x p, outputs
};

/// Forward rollout with tight inner solves (warm-started on the
/// previous step's equilibrium).
inline RenRolloutTape ren_rollout(const Ren& m, const Matrix& u, const Vector& x0,
                                  double tol = kGradSolveTol,
                                  int max_iter = kGradSolveMaxIter) {
  m.validate_dims();
  const Index T = u.rows(), n = m.n(), q = m.q(), p = m.p();
  require(u.cols() == m.m(), "ren_rollout: input dimension mismatch");
  require(x0.size() == n, "ren_rollout: x0 dimension mismatch");

  const Matrix c1 = m.C1();
  const Matrix d11 = m.D11();
  Eigen::PartialPivLU<Matrix> lu_e;
  if (n > 0) {
    lu_e.compute(m.E);
    if (!(lu_e.rcond() > kSingularRcond))
      throw NumericalError("ren_rollout: E numerically singular");
  }

  RenRolloutTape tape;
  tape.x.resize(T + 1, n);
  tape.w.resize(T, q);
  tape.slope.resize(T, q);
  tape.y.resize(T, p);

  Vector x = x0;
  Vector w_warm = Vector::Zero(q);
  tape.x.row(0) = x.transpose();
  for (Index t = 0; t < T; ++t) {
    const Vector ut = u.row(t).transpose();
    Vector w(q);
    if (q > 0) {
      const Vector c = c1 * x + m.D12 * ut + m.b_v;
      auto sol = detail::newton_fixed_point(d11, c, m.act, tol, max_iter, w_warm);
      w = std::move(sol.w);
      tape.slope.row(t) = activation_slope(m.act, Vector(d11 * w + c)).transpose();
      w_warm = w;
    }
    tape.w.row(t) = w.transpose();
    tape.y.row(t) = (m.C2 * x + m.D21 * w + m.D22 * ut + m.b_y).transpose();
    if (n > 0) x = lu_e.solve(m.F * x + m.B1 * w + m.B2 * ut + m.b_x);
    tape.x.row(t + 1) = x.transpose();
  }
  return tape;
}

/// Adjoints of the rollout with respect to the model matrices. The
/// recovered matrices C1 and D11 carry the rollout-route adjoints;
/// Ctilde/D11tilde/P/Lambda only pick up contributions from certificate
/// penalties.
struct RenAdjoints {
  Matrix E, F, B1, B2, C1, D11, D12, C2, D21, D22;
  Matrix Ctilde, D11tilde, P;
  Vector Lambda;
  Vector b_x, b_v, b_y;
  Vector x0;

  static RenAdjoints zeros(Index n, Index q, Index m, Index p) {
    RenAdjoints a;
    a.E = Matrix::Zero(n, n);
    a.F = Matrix::Zero(n, n);
    a.B1 = Matrix::Zero(n, q);
    a.B2 = Matrix::Zero(n, m);
    a.C1 = Matrix::Zero(q, n);
    a.D11 = Matrix::Zero(q, q);
    a.D12 = Matrix::Zero(q, m);
    a.C2 = Matrix::Zero(p, n);
    a.D21 = Matrix::Zero(p, q);
    a.D22 = Matrix::Zero(p, m);
    a.Ctilde = Matrix::Zero(q, n);
    a.D11tilde = Matrix::Zero(q, q);
    a.P = Matrix::Zero(n, n);
    a.Lambda = Vector::Zero(q);
    a.b_x = Vector::Zero(n);
    a.b_v = Vector::Zero(q);
    a.b_y = Vector::Zero(p);
    a.x0 = Vector::Zero(n);
    return a;
  }
};

/// Backpropagates dL/dy through the rollout. Accumulates into `adj`;
/// when `ubar` is non-null it also accumulates dL/du (same shape as u).
inline void ren_rollout_backward(const Ren& m, const Matrix& u, const RenRolloutTape& tape,
                                 const Matrix& ybar, RenAdjoints& adj, Matrix* ubar = nullptr) {
  const Index T = u.rows(), n = m.n(), q = m.q();
  require(ybar.rows() == T && ybar.cols() == m.p(), "ren_rollout_backward: ybar shape mismatch");

  const Matrix c1 = m.C1();
  const Matrix d11 = m.D11();
  Eigen::PartialPivLU<Matrix> lu_et;
  if (n > 0) lu_et.compute(Matrix(m.E.transpose()));

  Vector xbar = Vector::Zero(n);  // adjoint of x_{t+1}
  for (Index t = T - 1; t >= 0; --t) {
    const Vector xt = tape.x.row(t).transpose();
    const Vector xt1 = tape.x.row(t + 1).transpose();
    const Vector wt = tape.w.row(t).transpose();
    const Vector ut = u.row(t).transpose();
    const Vector yb = ybar.row(t).transpose();

    adj.C2 += yb * xt.transpose();
    adj.D21 += yb * wt.transpose();
    adj.D22 += yb * ut.transpose();
    adj.b_y += yb;
    Vector wbar = m.D21.transpose() * yb;
    Vector xacc = m.C2.transpose() * yb;
    Vector rho = Vector::Zero(n);
    if (n > 0) {
      rho = lu_et.solve(xbar);
      adj.E -= rho * xt1.transpose();
      adj.F += rho * xt.transpose();
      adj.B1 += rho * wt.transpose();
      adj.B2 += rho * ut.transpose();
      adj.b_x += rho;
      xacc += m.F.transpose() * rho;
      wbar += m.B1.transpose() * rho;
    }
    Vector vbar = Vector::Zero(q);
    if (q > 0) {
      const Vector slope = tape.slope.row(t).transpose();
      Eigen::PartialPivLU<Matrix> lu_iw(
          Matrix((Matrix::Identity(q, q) - Matrix(slope.asDiagonal()) * d11).transpose()));
      const Vector s = lu_iw.solve(wbar);
      vbar = slope.cwiseProduct(s);
      adj.C1 += vbar * xt.transpose();
      adj.D11 += vbar * wt.transpose();
      adj.D12 += vbar * ut.transpose();
      adj.b_v += vbar;
      xacc += c1.transpose() * vbar;
    }
    if (ubar)
      ubar->row(t) += (m.D22.transpose() * yb + m.B2.transpose() * rho +
                       m.D12.transpose() * vbar)
                          .transpose();
    xbar = xacc;
  }
  adj.x0 += xbar;
}

/// Gradients in the unconstrained coordinates of RenDirectParams.
struct RenParamGrads {
  Matrix V;
  Matrix skew_e_seed;  // strict lower triangle populated
  Matrix skew_w_seed;
  Vector lambda_log;
  Matrix B2, D12, C2, D21, D22;
  Vector b_x, b_v, b_y;
  Vector x0;
};

/// Maps matrix-level adjoints back through direct_parameterize_ren.
inline RenParamGrads direct_param_backward(const RenDirectParams& params, const Ren& m,
                                           const RenAdjoints& adj) {
  const Index n = params.n(), q = params.q();
  const Vector lambda = m.Lambda;
  const Vector inv_lambda = lambda.cwiseInverse();
  const Matrix c1 = m.C1();
  const Matrix d11 = m.D11();

  // Recovered-matrix routes: C1 = Lambda^{-1} Ctilde, D11 = Lambda^{-1} D11tilde.
  Matrix ctilde_bar = inv_lambda.asDiagonal() * adj.C1 + adj.Ctilde;
  Matrix d11tilde_bar = inv_lambda.asDiagonal() * adj.D11 + adj.D11tilde;
  Vector ell_bar = adj.Lambda;
  for (Index i = 0; i < q; ++i) {
    ell_bar(i) -= inv_lambda(i) * adj.C1.row(i).dot(c1.row(i));
    ell_bar(i) -= inv_lambda(i) * adj.D11.row(i).dot(d11.row(i));
  }

  // D11tilde = Lambda - H33/2 + S_w.
  ell_bar += d11tilde_bar.diagonal();

  // Assemble the adjoint of H = V V^T + eps I from the block extraction.
  Matrix hbar = Matrix::Zero(2 * n + q, 2 * n + q);
  hbar.block(n, n, n, n) += adj.P;                       // P = H22
  hbar.block(0, n, n, n) -= adj.F;                       // F = -H12
  hbar.block(0, 2 * n, n, q) -= adj.B1;                  // B1 = -H13
  hbar.block(2 * n, n, q, n) -= ctilde_bar;              // Ctilde = -H32
  hbar.block(0, 0, n, n) += 0.5 * adj.E;                 // E = (H11 + H22 + S_E)/2
  hbar.block(n, n, n, n) += 0.5 * adj.E;
  hbar.block(2 * n, 2 * n, q, q) -= 0.5 * d11tilde_bar;  // D11tilde has -H33/2

  RenParamGrads g;
  g.V = (hbar + hbar.transpose()) * params.V;
  g.skew_e_seed = Matrix::Zero(n, n);
  {
    const Matrix l = 0.5 * (adj.E - adj.E.transpose());
    for (Index i = 1; i < n; ++i)
      for (Index j = 0; j < i; ++j) g.skew_e_seed(i, j) = l(i, j);
  }
  g.skew_w_seed = Matrix::Zero(q, q);
  {
    const Matrix l = d11tilde_bar - d11tilde_bar.transpose();
    for (Index i = 1; i < q; ++i)
      for (Index j = 0; j < i; ++j) g.skew_w_seed(i, j) = l(i, j);
  }
  g.lambda_log = lambda.cwiseProduct(ell_bar);
  g.B2 = adj.B2;
  g.D12 = adj.D12;
  g.C2 = adj.C2;
  g.D21 = adj.D21;
  g.D22 = adj.D22;
  g.b_x = adj.b_x;
  g.b_v = adj.b_v;
  g.b_y = adj.b_y;
  g.x0 = adj.x0;
  return g;
}

/// Adjoint of the Lipschitz certificate matrix: given the symmetric
/// matrix adjoint `mbar` of lipschitz_lmi_matrix(m, gamma), scatter its
/// blocks onto the model matrices. Used by the certificate-margin
/// penalty during robust training.
inline void lipschitz_matrix_backward(const Ren& m, double gamma, const Matrix& mbar,
                                      RenAdjoints& adj) {
  const Index n = m.n(), q = m.q(), mm = m.m();
  const Index ix = n, iw = 2 * n, iu = 2 * n + q;
  const Matrix m11 = mbar.block(0, 0, n, n);
  const Matrix m22 = mbar.block(ix, ix, n, n);
  const Matrix m33 = mbar.block(iw, iw, q, q);
  const Matrix m44 = mbar.block(iu, iu, mm, mm);
  // Off-diagonal blocks appear twice (the matrix and its transpose), so
  // the effective adjoint of the (i, j) content is 2 * mbar_ij for a
  // symmetric mbar.
  const Matrix g12 = 2.0 * mbar.block(0, ix, n, n);
  const Matrix g13 = 2.0 * mbar.block(0, iw, n, q);
  const Matrix g14 = 2.0 * mbar.block(0, iu, n, mm);
  const Matrix g23 = 2.0 * mbar.block(ix, iw, n, q);
  const Matrix g24 = 2.0 * mbar.block(ix, iu, n, mm);
  const Matrix g34 = 2.0 * mbar.block(iw, iu, q, mm);

  adj.E += m11 + m11.transpose();
  adj.P += m22 - m11;
  adj.F -= g12;
  adj.B1 -= g13;
  adj.B2 -= g14;
  // M22 = P - C2^T C2.
  adj.C2 -= m.C2 * (m22 + m22.transpose());
  // M23 = -Ctilde^T - C2^T D21.
  adj.Ctilde -= g23.transpose();
  adj.C2 -= m.D21 * g23.transpose();
  adj.D21 -= m.C2 * g23;
  // M24 = -C2^T D22.
  adj.C2 -= m.D22 * g24.transpose();
  adj.D22 -= m.C2 * g24;
  // M33 = 2 Lambda - D11tilde - D11tilde^T - D21^T D21.
  adj.Lambda += 2.0 * m33.diagonal();
  adj.D11tilde -= m33 + m33.transpose();
  adj.D21 -= m.D21 * (m33 + m33.transpose());
  // M34 = -D12tilde - D21^T D22, with D12tilde = Lambda D12.
  const Matrix d12tilde_bar = -g34;
  adj.D12 += m.Lambda.asDiagonal() * d12tilde_bar;
  adj.Lambda += (d12tilde_bar.cwiseProduct(m.D12)).rowwise().sum();
  adj.D21 -= m.D22 * g34.transpose();
  adj.D22 -= m.D21 * g34;
  // M44 = gamma^2 I - D22^T D22.
  adj.D22 -= m.D22 * (m44 + m44.transpose());
  (void)gamma;
}

}  // namespace renkit
