#pragma once

// Empirical falsification: contraction-rate estimation from trajectory
// pairs and adversarial lower bounds on Lipschitz constants. Every
// certificate in the toolkit has one of these pointed at it somewhere
// in the test suite.

#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <utility>
#include <vector>

#include "renkit/common.hpp"
#include "renkit/eqnet.hpp"
#include "renkit/grad.hpp"
#include "renkit/ren.hpp"
#include "renkit/rng.hpp"
#include "renkit/simfit.hpp"

namespace renkit {

/// Log-linear fit of the distance between two trajectories started from
/// different states under the same input: |x_a(t) - x_b(t)| ~ K_hat *
/// alpha_hat^t * |a - b|.
struct ContractionEstimate {
  double alpha_hat = 0.0;
  double K_hat = 1.0;
  std::vector<double> distance_trace;
};

/// Runs both trajectories and fits the decay rate on steps [1, t_cut],
/// where t_cut is the last step before distances sink under
/// 100 * machine-epsilon relative to the initial separation (fitting
/// into the numerical floor would flatten the slope).
template <typename Model>
ContractionEstimate contraction_probe(const Model& model, const Matrix& u, const Vector& a,
                                      const Vector& b, int steps) {
  require(steps >= 1, "contraction_probe: steps must be >= 1");
  require(u.rows() >= steps, "contraction_probe: input sequence shorter than steps");
  require((a - b).cwiseAbs().maxCoeff() > 0.0, "contraction_probe: a and b must differ");
  const Matrix u_used = u.topRows(steps);
  const auto sim_a = simulate(model, u_used, a);
  const auto sim_b = simulate(model, u_used, b);

  ContractionEstimate est;
  est.distance_trace.reserve(steps + 1);
  for (Index t = 0; t <= steps; ++t)
    est.distance_trace.push_back((sim_a.x.row(t) - sim_b.x.row(t)).norm());

  const double d0 = est.distance_trace[0];
  const double floor = 100.0 * std::numeric_limits<double>::epsilon() * d0;
  int t_cut = 0;
  for (int t = 1; t <= steps; ++t)
    if (est.distance_trace[t] > floor) t_cut = t;

  if (t_cut < 1) {  // collapsed immediately
    est.alpha_hat = 0.0;
    est.K_hat = 1.0;
    return est;
  }
  // Least squares of log d_t on t over [1, t_cut].
  double sum_t = 0.0, sum_tt = 0.0, sum_l = 0.0, sum_tl = 0.0;
  int count = 0;
  for (int t = 1; t <= t_cut; ++t) {
    const double d = est.distance_trace[t];
    if (!(d > 0.0)) continue;
    const double l = std::log(d);
    sum_t += t;
    sum_tt += static_cast<double>(t) * t;
    sum_l += l;
    sum_tl += t * l;
    ++count;
  }
  if (count < 2) {
    est.alpha_hat = count == 1 ? est.distance_trace[1] / d0 : 0.0;
    est.K_hat = 1.0;
    return est;
  }
  const double denom = count * sum_tt - sum_t * sum_t;
  const double slope = (count * sum_tl - sum_t * sum_l) / denom;
  const double intercept = (sum_l - slope * sum_t) / count;
  est.alpha_hat = std::exp(slope);
  est.K_hat = std::exp(intercept) / d0;
  return est;
}

struct AttackConfig {
  int restarts = 20;
  int steps = 500;
  double step_size = 0.01;            // relative to the input scale
  std::optional<double> budget;       // fixed ||du||_T mode
  double init_scale = 0.1;            // initial perturbation, relative to input scale
  std::uint64_t seed = 0;

  void validate() const {
    require(restarts >= 1, "AttackConfig: restarts must be >= 1");
    require(steps >= 1, "AttackConfig: steps must be >= 1");
    require(step_size > 0.0, "AttackConfig: step_size must be > 0");
    if (budget) require(*budget > 0.0, "AttackConfig: budget must be > 0");
  }
};

/// Best perturbation found by local search. gamma_lb equals
/// ||dy||_T / ||du||_T recomputed at `perturbation`, so it is a valid
/// lower bound on the incremental l2 gain by construction.
struct AttackResult {
  double gamma_lb = 0.0;
  Matrix perturbation;
  Matrix base_input;
  long iterations = 0;
};

using AttackTraceFn = std::function<void(int restart, int iteration, double ratio)>;

namespace detail {

/// Hill climb on the gain ratio with backtracking steps and random
/// restarts. `evaluate` returns (ratio, dy); `gradient` returns the
/// ascent direction for the current perturbation.
inline AttackResult ratio_ascent(
    const Matrix& base_u, const AttackConfig& cfg,
    const std::function<std::pair<double, Matrix>(const Matrix&)>& evaluate,
    const std::function<Matrix(const Matrix&, const Matrix&, double)>& gradient,
    const AttackTraceFn& trace) {
  cfg.validate();
  const Index T = base_u.rows(), m = base_u.cols();
  double scale = std::sqrt(base_u.squaredNorm() / static_cast<double>(base_u.size()));
  if (!(scale > 1e-12)) scale = 1.0;

  Rng rng(cfg.seed);
  AttackResult best;
  best.gamma_lb = -1.0;
  best.base_input = base_u;
  long evals = 0;
  int degenerate_restarts = 0;

  for (int r = 0; r < cfg.restarts; ++r) {
    Matrix du = rng.gaussian(T, m, cfg.init_scale * scale);
    if (cfg.budget) {
      const double norm = du.norm();
      if (norm > 1e-12) du *= *cfg.budget / norm;
    }
    if (du.norm() < 1e-12) {
      ++degenerate_restarts;
      continue;
    }
    auto [ratio, dy] = evaluate(du);
    ++evals;
    if (trace) trace(r, 0, ratio);
    double step = cfg.step_size * scale;
    for (int k = 1; k <= cfg.steps; ++k) {
      const Matrix g = gradient(du, dy, ratio);
      const double gnorm = g.norm();
      if (!(gnorm > 1e-15)) break;
      Matrix cand = du + (step / gnorm) * g;
      if (cfg.budget) {
        const double cn = cand.norm();
        if (cn > 1e-12) cand *= *cfg.budget / cn;
      }
      if (cand.norm() < 1e-12) {
        step *= 0.5;
        continue;
      }
      auto [cand_ratio, cand_dy] = evaluate(cand);
      ++evals;
      if (cand_ratio > ratio) {
        du = std::move(cand);
        dy = std::move(cand_dy);
        ratio = cand_ratio;
        step *= 1.25;
        if (trace) trace(r, k, ratio);
      } else {
        step *= 0.5;
      }
      if (step < 1e-12 * scale) break;
    }
    if (ratio > best.gamma_lb) {
      best.gamma_lb = ratio;
      best.perturbation = du;
    }
  }
  best.iterations = evals;
  if (degenerate_restarts == cfg.restarts)
    throw NumericalError("lipschitz_lower_bound: all restarts degenerate");
  return best;
}

}  // namespace detail

/// Worst-case input search for a REN (both trajectories start from the
/// same zero initial state). Ascent directions come from the analytic
/// rollout gradient with respect to the input sequence.
inline AttackResult lipschitz_lower_bound(const Ren& model, const Matrix& base_u,
                                          const AttackConfig& cfg,
                                          const AttackTraceFn& trace = {}) {
  model.validate_dims();
  require(base_u.cols() == model.m(), "lipschitz_lower_bound: input dimension mismatch");
  const Vector x0 = Vector::Zero(model.n());
  const Matrix y_base = ren_rollout(model, base_u, x0).y;

  auto evaluate = [&](const Matrix& du) -> std::pair<double, Matrix> {
    const Matrix dy = ren_rollout(model, base_u + du, x0).y - y_base;
    return {dy.norm() / du.norm(), dy};
  };
  auto gradient = [&](const Matrix& du, const Matrix& dy, double ratio) -> Matrix {
    const double dy_norm = dy.norm();
    const double du_sq = du.squaredNorm();
    const Matrix u_pert = base_u + du;
    Matrix jt_dy = Matrix::Zero(du.rows(), du.cols());
    RenAdjoints adj = RenAdjoints::zeros(model.n(), model.q(), model.m(), model.p());
    const RenRolloutTape tape = ren_rollout(model, u_pert, x0);
    ren_rollout_backward(model, u_pert, tape, dy, adj, &jt_dy);
    if (cfg.budget) return jt_dy;  // ascend ||dy||^2 on the budget sphere
    if (!(dy_norm > 0.0)) return jt_dy;
    return jt_dy / (dy_norm * std::sqrt(du_sq)) - (ratio / du_sq) * du;
  };
  auto result = detail::ratio_ascent(base_u, cfg, evaluate, gradient, trace);
  if (result.gamma_lb < 0.0) result.gamma_lb = 0.0;
  return result;
}

/// Worst-case input search for a static equilibrium network; rows of
/// the base input are treated as independent samples.
inline AttackResult lipschitz_lower_bound(const EquilibriumNetwork& net, const Matrix& base_u,
                                          const AttackConfig& cfg,
                                          const AttackTraceFn& trace = {}) {
  net.validate_dims();
  require(base_u.cols() == net.m(), "lipschitz_lower_bound: input dimension mismatch");
  const Index T = base_u.rows();
  const Matrix d11 = net.D11;

  auto batch_forward = [&](const Matrix& u_batch, Matrix* w_out) -> Matrix {
    Matrix y(T, net.p());
    for (Index t = 0; t < T; ++t) {
      const Vector c = net.D12 * u_batch.row(t).transpose() + net.b_w;
      Vector w(net.q());
      if (net.q() > 0)
        w = detail::newton_fixed_point(d11, c, net.act, kGradSolveTol, kGradSolveMaxIter,
                                       Vector::Zero(net.q()))
                .w;
      if (w_out) w_out->row(t) = w.transpose();
      y.row(t) = (net.D21 * w + net.b_y).transpose();
    }
    return y;
  };
  const Matrix y_base = batch_forward(base_u, nullptr);

  auto evaluate = [&](const Matrix& du) -> std::pair<double, Matrix> {
    const Matrix dy = batch_forward(base_u + du, nullptr) - y_base;
    return {dy.norm() / du.norm(), dy};
  };
  auto gradient = [&](const Matrix& du, const Matrix& dy, double ratio) -> Matrix {
    // Per-sample implicit VJP: ubar = D12^T J (I - J D11)^{-T} D21^T ybar.
    const Matrix u_pert = base_u + du;
    Matrix w_all(T, net.q());
    batch_forward(u_pert, &w_all);
    Matrix jt_dy(T, net.m());
    for (Index t = 0; t < T; ++t) {
      const Vector ybar = dy.row(t).transpose();
      if (net.q() == 0) {
        jt_dy.row(t).setZero();
        continue;
      }
      const Vector w = w_all.row(t).transpose();
      const Vector v = d11 * w + net.D12 * u_pert.row(t).transpose() + net.b_w;
      const Vector slope = activation_slope(net.act, v);
      Eigen::PartialPivLU<Matrix> lu(
          Matrix((Matrix::Identity(net.q(), net.q()) - Matrix(slope.asDiagonal()) * d11)
                     .transpose()));
      const Vector s = lu.solve(Vector(net.D21.transpose() * ybar));
      jt_dy.row(t) = (net.D12.transpose() * Vector(slope.cwiseProduct(s))).transpose();
    }
    const double dy_norm = dy.norm();
    const double du_sq = du.squaredNorm();
    if (cfg.budget) return jt_dy;
    if (!(dy_norm > 0.0)) return jt_dy;
    return jt_dy / (dy_norm * std::sqrt(du_sq)) - (ratio / du_sq) * du;
  };
  auto result = detail::ratio_ascent(base_u, cfg, evaluate, gradient, trace);
  if (result.gamma_lb < 0.0) result.gamma_lb = 0.0;
  return result;
}

/// Convenience adapters so probes run on any model family.
inline AttackResult lipschitz_lower_bound(const ImplicitLti& model, const Matrix& base_u,
                                          const AttackConfig& cfg,
                                          const AttackTraceFn& trace = {}) {
  return lipschitz_lower_bound(ren_from_lti(model), base_u, cfg, trace);
}

inline AttackResult lipschitz_lower_bound(const RobustRnn& model, const Matrix& base_u,
                                          const AttackConfig& cfg,
                                          const AttackTraceFn& trace = {}) {
  return lipschitz_lower_bound(ren_from_rnn(model), base_u, cfg, trace);
}

}  // namespace renkit
