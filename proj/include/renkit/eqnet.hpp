#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/LU>

#include "renkit/activation.hpp"
#include "renkit/certkit.hpp"
#include "renkit/common.hpp"

namespace renkit {

inline constexpr double kEqDefaultTol = 1e-8;
inline constexpr int kEqDefaultMaxIter = 10000;

/// Static implicit network ("implicit depth"):
///   w = sigma(D11 w + D12 u + b_w),   y = D21 w + b_y.
struct EquilibriumNetwork {
  Matrix D11, D12, D21;
  Vector b_w, b_y;
  Vector Lambda;  // diagonal multiplier, all entries > 0
  Activation act = Activation::relu;
  std::optional<double> gamma;

  Index q() const { return D11.rows(); }
  Index m() const { return D12.cols(); }
  Index p() const { return D21.rows(); }

  void validate_dims() const {
    const Index qq = D11.rows();
    require(D11.cols() == qq, "EquilibriumNetwork: D11 must be square");
    require(D12.rows() == qq, "EquilibriumNetwork: D12 row mismatch");
    require(D21.cols() == qq, "EquilibriumNetwork: D21 column mismatch");
    require(b_w.size() == qq, "EquilibriumNetwork: b_w size mismatch");
    require(b_y.size() == D21.rows(), "EquilibriumNetwork: b_y size mismatch");
    require(Lambda.size() == qq, "EquilibriumNetwork: Lambda size mismatch");
  }
};

struct EquilibriumSolution {
  Vector w;
  double residual = 0.0;  // inf-norm of w - sigma(D11 w + D12 u + b_w)
  int iterations = 0;
};

namespace detail {

/// Damped Picard iteration on w = sigma(D11 w + c) with
/// alpha = 1/(1 + |D11|_inf). `iterations` counts updates applied;
/// the residual reported belongs to the returned iterate.
inline EquilibriumSolution damped_fixed_point(const Matrix& d11, const Vector& c, Activation act,
                                              double tol, int max_iter, const Vector& w0) {
  const double alpha = 1.0 / (1.0 + d11.cwiseAbs().rowwise().sum().maxCoeff());
  Vector w = w0;
  Vector best_w = w0;
  double best_res = std::numeric_limits<double>::infinity();
  int updates = 0;
  while (true) {
    const Vector sigma = activate(act, d11 * w + c);
    const double res = (w - sigma).cwiseAbs().maxCoeff();
    if (res < best_res) {
      best_res = res;
      best_w = w;
    }
    if (res <= tol) return {std::move(w), res, updates};
    if (updates == max_iter) break;
    w = (1.0 - alpha) * w + alpha * sigma;
    ++updates;
  }
  throw SolveError("equilibrium solve did not reach tol " + std::to_string(tol) +
                       " (best residual " + std::to_string(best_res) + ")",
                   best_res, updates);
}

}  // namespace detail

/// Solves the implicit layer for w. Certified well-posed networks have a
/// unique solution; on uncertified networks the solver may legitimately
/// fail, which surfaces as SolveError carrying the best residual.
inline EquilibriumSolution solve_equilibrium(const EquilibriumNetwork& net, const Vector& u,
                                             double tol = kEqDefaultTol,
                                             int max_iter = kEqDefaultMaxIter,
                                             const Vector* w0 = nullptr) {
  net.validate_dims();
  require(u.size() == net.m(), "solve_equilibrium: input dimension mismatch");
  require(tol > 0.0, "solve_equilibrium: tol must be > 0");
  require(max_iter >= 1, "solve_equilibrium: max_iter must be >= 1");
  const Vector c = net.D12 * u + net.b_w;
  const Vector start = w0 ? *w0 : Vector::Zero(net.q());
  require(start.size() == net.q(), "solve_equilibrium: w0 size mismatch");
  if (net.q() == 0) return {Vector(0), 0.0, 0};
  return detail::damped_fixed_point(net.D11, c, net.act, tol, max_iter, start);
}

/// y = D21 w + b_y at the solved equilibrium.
inline Vector forward(const EquilibriumNetwork& net, const Vector& u, double tol = kEqDefaultTol,
                      int max_iter = kEqDefaultMaxIter) {
  const EquilibriumSolution sol = solve_equilibrium(net, u, tol, max_iter);
  return net.D21 * sol.w + net.b_y;
}

/// Well-posedness certificate matrix 2 Lambda - Lambda D11 - D11^T Lambda.
inline Matrix wellposed_lmi_matrix(const EquilibriumNetwork& net) {
  net.validate_dims();
  require((net.Lambda.array() > 0.0).all(), "check_wellposed: Lambda entries must be positive");
  const Matrix lam_d11 = net.Lambda.asDiagonal() * net.D11;
  return 2.0 * Matrix(net.Lambda.asDiagonal()) - lam_d11 - lam_d11.transpose();
}

/// Positive definiteness of the above is sufficient for a unique
/// equilibrium, not necessary: block-triangular D11 is always solvable
/// by forward substitution even when this fails.
inline SymCheckReport check_wellposed(const EquilibriumNetwork& net, double margin) {
  return is_positive_definite(wellposed_lmi_matrix(net), margin);
}

/// Lipschitz certificate matrix for |dy| <= gamma |du|:
///   2 Lambda - Lambda D11 - D11^T Lambda
///     - (1/gamma) D21^T D21 - (1/gamma) Lambda D12 D12^T Lambda.
inline Matrix lipschitz_lmi_matrix(const EquilibriumNetwork& net, double gamma) {
  net.validate_dims();
  require(gamma > 0.0, "check_lipschitz_eqnet: gamma must be > 0");
  require((net.Lambda.array() > 0.0).all(),
          "check_lipschitz_eqnet: Lambda entries must be positive");
  const Matrix lam = net.Lambda.asDiagonal();
  const Matrix lam_d11 = lam * net.D11;
  const Matrix lam_d12 = lam * net.D12;
  return 2.0 * lam - lam_d11 - lam_d11.transpose() -
         (1.0 / gamma) * net.D21.transpose() * net.D21 -
         (1.0 / gamma) * lam_d12 * lam_d12.transpose();
}

/// Feasibility here implies the well-posedness certificate as well,
/// since the subtracted terms are positive semidefinite.
inline SymCheckReport check_lipschitz_eqnet(const EquilibriumNetwork& net, double gamma,
                                            double margin) {
  return is_positive_definite(lipschitz_lmi_matrix(net, gamma), margin);
}

struct FeedforwardLayer {
  Matrix W;
  Vector b;
};

/// L-layer feedforward net z^{l+1} = sigma(W^l z^l + b^l) with a final
/// linear readout (W^L, b^L). layers[0] consumes the input; the last
/// entry is the readout.
struct FeedforwardSpec {
  std::vector<FeedforwardLayer> layers;
  Activation act = Activation::relu;

  void validate_dims() const {
    require(layers.size() >= 2, "FeedforwardSpec: need at least one hidden layer plus readout");
    for (std::size_t l = 0; l < layers.size(); ++l) {
      require(layers[l].b.size() == layers[l].W.rows(),
              "FeedforwardSpec: bias size mismatch at layer " + std::to_string(l));
      if (l + 1 < layers.size())
        require(layers[l + 1].W.cols() == layers[l].W.rows(),
                "FeedforwardSpec: dimension chain broken at layer " + std::to_string(l + 1));
    }
  }
};

/// Rewrites a feedforward net as an equilibrium network over the stacked
/// hidden units z = col(z^1, ..., z^L): D11 carries W^1..W^{L-1} on its
/// block subdiagonal (strictly lower block triangular), D12 = col(W^0, 0, ...),
/// D21 = [0, ..., 0, W^L]. Lambda starts at ones.
inline EquilibriumNetwork from_feedforward(const FeedforwardSpec& spec) {
  spec.validate_dims();
  const std::size_t L = spec.layers.size() - 1;  // hidden activations z^1..z^L
  Index q = 0;
  for (std::size_t l = 0; l < L; ++l) q += spec.layers[l].W.rows();

  EquilibriumNetwork net;
  net.act = spec.act;
  net.D11 = Matrix::Zero(q, q);
  net.D12 = Matrix::Zero(q, spec.layers[0].W.cols());
  net.b_w = Vector::Zero(q);
  net.Lambda = Vector::Ones(q);

  Index row = 0;
  Index prev_row = 0;
  for (std::size_t l = 0; l < L; ++l) {
    const Matrix& w = spec.layers[l].W;
    if (l == 0) {
      net.D12.topRows(w.rows()) = w;
    } else {
      net.D11.block(row, prev_row, w.rows(), w.cols()) = w;
    }
    net.b_w.segment(row, w.rows()) = spec.layers[l].b;
    prev_row = row;
    row += w.rows();
  }
  const Matrix& wl = spec.layers[L].W;
  net.D21 = Matrix::Zero(wl.rows(), q);
  net.D21.rightCols(wl.cols()) = wl;
  net.b_y = spec.layers[L].b;
  return net;
}

/// Free parameters for a Lipschitz-bounded equilibrium network.
struct LbenDirectParams {
  DirectFactor factor;  // q x q: V, skew S_w, eps
  Vector lambda_log;    // Lambda = exp(lambda_log) elementwise
  Matrix D21;           // p x q, unconstrained
  Matrix D12tilde;      // q x m, equals Lambda D12
  Activation act = Activation::relu;
};

/// Direct parameterization that satisfies the Lipschitz certificate at
/// gamma by construction: with H = V V^T + eps I,
///   Lambda D11 = Lambda - (H + (1/gamma) D21^T D21
///                            + (1/gamma) D12tilde D12tilde^T)/2 + S_w,
/// which makes the certificate matrix equal H exactly.
inline EquilibriumNetwork direct_parameterize_lben(const LbenDirectParams& params, double gamma) {
  require(gamma > 0.0, "direct_parameterize_lben: gamma must be > 0");
  const Index q = params.factor.dim();
  require(params.lambda_log.size() == q, "direct_parameterize_lben: lambda_log size mismatch");
  require(params.D21.cols() == q, "direct_parameterize_lben: D21 column mismatch");
  require(params.D12tilde.rows() == q, "direct_parameterize_lben: D12tilde row mismatch");

  const Vector lambda = params.lambda_log.array().exp();
  const Matrix h = factor_to_pd(params.factor);
  const Matrix lam_d11 =
      Matrix(lambda.asDiagonal()) -
      0.5 * (h + (1.0 / gamma) * params.D21.transpose() * params.D21 +
             (1.0 / gamma) * params.D12tilde * params.D12tilde.transpose()) +
      params.factor.skew();

  EquilibriumNetwork net;
  net.Lambda = lambda;
  net.D11 = lambda.cwiseInverse().asDiagonal() * lam_d11;
  net.D12 = lambda.cwiseInverse().asDiagonal() * params.D12tilde;
  net.D21 = params.D21;
  net.b_w = Vector::Zero(q);
  net.b_y = Vector::Zero(params.D21.rows());
  net.act = params.act;
  net.gamma = gamma;
  return net;
}

}  // namespace renkit
