#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <utility>
#include <variant>
#include <vector>

#include "renkit/common.hpp"
#include "renkit/grad.hpp"
#include "renkit/lti.hpp"
#include "renkit/ren.hpp"
#include "renkit/rng.hpp"
#include "renkit/rnn.hpp"

namespace renkit {

/// Input/output sequences, rows indexed by time. The initial state is
/// optional: when absent it becomes a trainable parameter during fits.
struct TimeSeriesDataset {
  Matrix u;  // T x m
  Matrix y;  // T x p
  std::optional<Vector> x0;

  Index T() const { return u.rows(); }

  void validate() const {
    require(u.rows() == y.rows(), "TimeSeriesDataset: u and y must have equal length");
    require(u.rows() >= 1, "TimeSeriesDataset: need at least one sample");
    require(all_finite(u) && all_finite(y), "TimeSeriesDataset: non-finite entries");
  }
};

struct SimResult {
  Matrix y;  // T x p
  Matrix x;  // (T+1) x n
};

inline SimResult simulate(const ExplicitLti& m, const Matrix& u, const Vector& x0) {
  m.validate_dims();
  require(u.cols() == m.m(), "simulate: input dimension mismatch");
  require(x0.size() == m.n(), "simulate: x0 dimension mismatch");
  const Index T = u.rows();
  SimResult out;
  out.y.resize(T, m.p());
  out.x.resize(T + 1, m.n());
  Vector x = x0;
  out.x.row(0) = x.transpose();
  for (Index t = 0; t < T; ++t) {
    const Vector ut = u.row(t).transpose();
    out.y.row(t) = (m.C * x + m.D * ut).transpose();
    x = m.A * x + m.B * ut;
    out.x.row(t + 1) = x.transpose();
  }
  return out;
}

inline SimResult simulate(const ImplicitLti& m, const Matrix& u, const Vector& x0) {
  m.validate_dims();
  require(u.cols() == m.m(), "simulate: input dimension mismatch");
  require(x0.size() == m.n(), "simulate: x0 dimension mismatch");
  const auto lu = detail::lu_or_throw(m.E, "simulate");
  const Index T = u.rows();
  SimResult out;
  out.y.resize(T, m.p());
  out.x.resize(T + 1, m.n());
  Vector x = x0;
  out.x.row(0) = x.transpose();
  for (Index t = 0; t < T; ++t) {
    const Vector ut = u.row(t).transpose();
    out.y.row(t) = (m.C * x + m.D * ut).transpose();
    x = lu.solve(m.F * x + m.K * ut);
    out.x.row(t + 1) = x.transpose();
  }
  return out;
}

inline SimResult simulate(const RobustRnn& m, const Matrix& u, const Vector& x0) {
  m.validate_dims();
  require(u.cols() == m.m(), "simulate: input dimension mismatch");
  require(x0.size() == m.n(), "simulate: x0 dimension mismatch");
  const Index T = u.rows();
  SimResult out;
  out.y.resize(T, m.p());
  out.x.resize(T + 1, m.n());
  Vector x = x0;
  out.x.row(0) = x.transpose();
  for (Index t = 0; t < T; ++t) {
    auto [x_next, y] = rnn_step(m, x, u.row(t).transpose());
    out.y.row(t) = y.transpose();
    x = std::move(x_next);
    out.x.row(t + 1) = x.transpose();
  }
  return out;
}

inline SimResult simulate(const Ren& m, const Matrix& u, const Vector& x0,
                          double tol = kEqDefaultTol, int max_iter = kEqDefaultMaxIter) {
  m.validate_dims();
  require(u.cols() == m.m(), "simulate: input dimension mismatch");
  require(x0.size() == m.n(), "simulate: x0 dimension mismatch");
  const Index T = u.rows();
  SimResult out;
  out.y.resize(T, m.p());
  out.x.resize(T + 1, m.n());
  Vector x = x0;
  out.x.row(0) = x.transpose();
  for (Index t = 0; t < T; ++t) {
    auto step = ren_step(m, x, u.row(t).transpose(), tol, max_iter);
    out.y.row(t) = step.y.transpose();
    x = std::move(step.x_next);
    out.x.row(t + 1) = x.transpose();
  }
  return out;
}

/// Squared sequence norm of the output mismatch: sum_t |y_t - yref_t|^2.
inline double simulation_error(const Matrix& y, const Matrix& y_ref) {
  require(y.rows() == y_ref.rows() && y.cols() == y_ref.cols(),
          "simulation_error: shape mismatch");
  return (y - y_ref).squaredNorm();
}

/// sqrt(error / sum_t |yref_t - mean(yref)|^2); NaN (0/0) when the
/// reference is constant and matched exactly.
inline double nrmse(const Matrix& y, const Matrix& y_ref) {
  const double err = simulation_error(y, y_ref);
  const Eigen::RowVectorXd mean = y_ref.colwise().mean();
  const double denom = (y_ref.rowwise() - mean).squaredNorm();
  return std::sqrt(err / denom);
}

enum class FitFamily { stable_lti, contracting_ren };
enum class Optimizer { gradient_descent, adam_like };
enum class GradMode { analytic_unrolled, finite_difference };

struct FitConfig {
  double learning_rate = 0.02;
  int iterations = 1000;
  Optimizer optimizer = Optimizer::adam_like;
  GradMode grad_mode = GradMode::analytic_unrolled;
  double fd_step = 1e-5;
  std::uint64_t seed = 0;

  void validate() const {
    require(learning_rate > 0.0, "FitConfig: learning_rate must be > 0");
    require(iterations >= 1, "FitConfig: iterations must be >= 1");
    require(fd_step >= 1e-8 && fd_step <= 1e-3, "FitConfig: fd_step must be in [1e-8, 1e-3]");
  }
};

/// Optional robust-training term: weight * max(0, target_margin - mu)^2
/// where mu is the smallest eigenvalue of the Lipschitz certificate
/// matrix at `gamma`. Drives fits toward gamma-certifiable models.
struct LipschitzPenalty {
  double gamma = 1.0;
  double weight = 1.0;
  double target_margin = 0.0;
};

/// Flattening of the unconstrained parameter vector for one model
/// family. Order: vec(V), strict-lower skew seeds, lambda_log, B2, D12,
/// C2, D21, D22, biases (REN only), x0 (when trainable).
struct ParamLayout {
  FitFamily family = FitFamily::contracting_ren;
  Index n = 1, m = 1, p = 1, q = 0;
  Activation act = Activation::tanh;
  double eps = 1e-3;
  bool train_biases = true;
  bool train_x0 = true;

  static ParamLayout make(FitFamily family, Index n, Index q, const TimeSeriesDataset& data,
                          Activation act = Activation::tanh, double eps = 1e-3) {
    ParamLayout layout;
    layout.family = family;
    layout.n = n;
    layout.q = family == FitFamily::stable_lti ? 0 : q;
    layout.m = data.u.cols();
    layout.p = data.y.cols();
    layout.act = family == FitFamily::stable_lti ? Activation::identity : act;
    layout.eps = eps;
    layout.train_biases = family == FitFamily::contracting_ren;
    layout.train_x0 = !data.x0.has_value();
    if (data.x0) require(data.x0->size() == n, "ParamLayout: dataset x0 size mismatch");
    return layout;
  }

  Index d() const { return 2 * n + q; }
  Index size() const {
    Index s = d() * d();                     // V
    s += n * (n - 1) / 2 + q * (q - 1) / 2;  // skew seeds
    s += q;                                  // lambda_log
    s += n * m + q * m + p * n + p * q + p * m;
    if (train_biases) s += n + q + p;
    if (train_x0) s += n;
    return s;
  }

  /// theta -> (RenDirectParams, x0). x0 defaults to zero when not trained.
  std::pair<RenDirectParams, Vector> unpack(const Vector& theta) const {
    require(theta.size() == size(), "ParamLayout: theta size mismatch");
    RenDirectParams params;
    Index off = 0;
    auto take_matrix = [&](Index rows, Index cols) {
      Matrix out(rows, cols);
      for (Index j = 0; j < cols; ++j)
        for (Index i = 0; i < rows; ++i) out(i, j) = theta(off++);
      return out;
    };
    auto take_strict_lower = [&](Index dim) {
      Matrix out = Matrix::Zero(dim, dim);
      for (Index i = 1; i < dim; ++i)
        for (Index j = 0; j < i; ++j) out(i, j) = theta(off++);
      return out;
    };
    auto take_vector = [&](Index size_) {
      Vector out(size_);
      for (Index i = 0; i < size_; ++i) out(i) = theta(off++);
      return out;
    };
    params.V = take_matrix(d(), d());
    params.skew_e_seed = take_strict_lower(n);
    params.skew_w_seed = take_strict_lower(q);
    params.lambda_log = take_vector(q);
    params.eps = eps;
    params.B2 = take_matrix(n, m);
    params.D12 = take_matrix(q, m);
    params.C2 = take_matrix(p, n);
    params.D21 = take_matrix(p, q);
    params.D22 = take_matrix(p, m);
    if (train_biases) {
      params.b_x = take_vector(n);
      params.b_v = take_vector(q);
      params.b_y = take_vector(p);
    } else {
      params.b_x = Vector::Zero(n);
      params.b_v = Vector::Zero(q);
      params.b_y = Vector::Zero(p);
    }
    Vector x0 = train_x0 ? take_vector(n) : Vector::Zero(n);
    params.act = act;
    return {std::move(params), std::move(x0)};
  }

  Vector pack(const RenDirectParams& params, const Vector& x0) const {
    Vector theta(size());
    Index off = 0;
    auto put_matrix = [&](const Matrix& mat) {
      for (Index j = 0; j < mat.cols(); ++j)
        for (Index i = 0; i < mat.rows(); ++i) theta(off++) = mat(i, j);
    };
    auto put_strict_lower = [&](const Matrix& mat) {
      for (Index i = 1; i < mat.rows(); ++i)
        for (Index j = 0; j < i; ++j) theta(off++) = mat(i, j);
    };
    auto put_vector = [&](const Vector& v) {
      for (Index i = 0; i < v.size(); ++i) theta(off++) = v(i);
    };
    put_matrix(params.V);
    put_strict_lower(params.skew_e_seed);
    put_strict_lower(params.skew_w_seed);
    put_vector(params.lambda_log);
    put_matrix(params.B2);
    put_matrix(params.D12);
    put_matrix(params.C2);
    put_matrix(params.D21);
    put_matrix(params.D22);
    if (train_biases) {
      put_vector(params.b_x);
      put_vector(params.b_v);
      put_vector(params.b_y);
    }
    if (train_x0) put_vector(x0);
    require(off == size(), "ParamLayout: pack size mismatch");
    return theta;
  }

  Vector pack_grads(const RenParamGrads& g) const {
    RenDirectParams as_params;
    as_params.V = g.V;
    as_params.skew_e_seed = g.skew_e_seed;
    as_params.skew_w_seed = g.skew_w_seed;
    as_params.lambda_log = g.lambda_log;
    as_params.B2 = g.B2;
    as_params.D12 = g.D12;
    as_params.C2 = g.C2;
    as_params.D21 = g.D21;
    as_params.D22 = g.D22;
    as_params.b_x = g.b_x;
    as_params.b_v = g.b_v;
    as_params.b_y = g.b_y;
    return pack(as_params, g.x0);
  }

  /// Random initialization in unconstrained coordinates.
  Vector random_init(Rng& rng) const {
    RenDirectParams params;
    const double v_scale = d() > 0 ? 1.0 / std::sqrt(static_cast<double>(d())) : 1.0;
    params.V = rng.gaussian(d(), d(), v_scale);
    params.skew_e_seed = rng.gaussian(n, n, 0.1);
    params.skew_w_seed = rng.gaussian(q, q, 0.1);
    params.lambda_log = rng.gaussian_vector(q, 0.01);
    params.eps = eps;
    params.B2 = rng.gaussian(n, m, 0.3);
    params.D12 = rng.gaussian(q, m, 0.3);
    params.C2 = rng.gaussian(p, n, 0.3);
    params.D21 = rng.gaussian(p, q, 0.3);
    params.D22 = rng.gaussian(p, m, 0.1);
    params.b_x = Vector::Zero(n);
    params.b_v = Vector::Zero(q);
    params.b_y = Vector::Zero(p);
    params.act = act;
    return pack(params, Vector::Zero(n));
  }
};

namespace detail {

struct Objective {
  double loss = 0.0;      // simulation error plus any penalty
  double sim_error = 0.0;
  double nrmse_value = 0.0;
};

inline Objective eval_objective(const Vector& theta, const ParamLayout& layout,
                                const TimeSeriesDataset& data,
                                const std::optional<LipschitzPenalty>& penalty,
                                RenRolloutTape* tape_out = nullptr, Ren* model_out = nullptr,
                                Vector* x0_out = nullptr) {
  if (!theta.allFinite()) {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    return {nan, nan, nan};
  }
  auto [params, x0] = layout.unpack(theta);
  if (!layout.train_x0) x0 = *data.x0;
  Ren model = direct_parameterize_ren(params);
  if (!(all_finite(model.E) && all_finite(model.F) && all_finite(model.P) &&
        all_finite(model.Ctilde) && all_finite(model.D11tilde))) {
    // Finite parameters can still overflow through V V^T.
    const double nan = std::numeric_limits<double>::quiet_NaN();
    return {nan, nan, nan};
  }
  RenRolloutTape tape = ren_rollout(model, data.u, x0);
  Objective obj;
  obj.sim_error = simulation_error(tape.y, data.y);
  obj.nrmse_value = nrmse(tape.y, data.y);
  obj.loss = obj.sim_error;
  if (penalty) {
    const Matrix cert = lipschitz_lmi_matrix(model, penalty->gamma);
    const double mu = is_positive_definite(cert, 0.0).min_eigenvalue;
    const double gap = penalty->target_margin - mu;
    if (gap > 0.0) obj.loss += penalty->weight * gap * gap;
  }
  if (tape_out) *tape_out = std::move(tape);
  if (model_out) *model_out = std::move(model);
  if (x0_out) *x0_out = std::move(x0);
  return obj;
}

}  // namespace detail

/// Gradient of the training objective with respect to the flat
/// unconstrained parameters. Analytic mode backpropagates through the
/// unrolled rollout (equilibria via the implicit-function relation);
/// finite-difference mode uses central differences with config.fd_step.
inline Vector loss_gradient(const Vector& theta, const ParamLayout& layout,
                            const TimeSeriesDataset& data, const FitConfig& config,
                            const std::optional<LipschitzPenalty>& penalty = std::nullopt) {
  data.validate();
  config.validate();
  require(theta.allFinite(), "loss_gradient: non-finite parameters");
  if (config.grad_mode == GradMode::finite_difference) {
    Vector grad(theta.size());
    Vector probe = theta;
    for (Index i = 0; i < theta.size(); ++i) {
      const double saved = probe(i);
      probe(i) = saved + config.fd_step;
      const double up = detail::eval_objective(probe, layout, data, penalty).loss;
      probe(i) = saved - config.fd_step;
      const double down = detail::eval_objective(probe, layout, data, penalty).loss;
      probe(i) = saved;
      grad(i) = (up - down) / (2.0 * config.fd_step);
    }
    return grad;
  }

  RenRolloutTape tape;
  Ren model;
  Vector x0;
  detail::eval_objective(theta, layout, data, penalty, &tape, &model, &x0);
  auto [params, unused_x0] = layout.unpack(theta);

  RenAdjoints adj = RenAdjoints::zeros(layout.n, layout.q, layout.m, layout.p);
  const Matrix ybar = 2.0 * (tape.y - data.y);
  ren_rollout_backward(model, data.u, tape, ybar, adj);
  if (penalty) {
    const Matrix cert = lipschitz_lmi_matrix(model, penalty->gamma);
    const Matrix sym = 0.5 * (cert + cert.transpose());
    Eigen::SelfAdjointEigenSolver<Matrix> eig(sym);
    if (eig.info() != Eigen::Success)
      throw NumericalError("loss_gradient: penalty eigensolver failed");
    const double mu = eig.eigenvalues().minCoeff();
    const double gap = penalty->target_margin - mu;
    if (gap > 0.0) {
      Index which = 0;
      eig.eigenvalues().minCoeff(&which);
      const Vector v = eig.eigenvectors().col(which);
      const Matrix mbar = (-2.0 * penalty->weight * gap) * (v * v.transpose());
      lipschitz_matrix_backward(model, penalty->gamma, mbar, adj);
    }
  }
  RenParamGrads grads = direct_param_backward(params, model, adj);
  if (!layout.train_x0) grads.x0.setZero();
  return layout.pack_grads(grads);
}

struct FitTracePoint {
  int iteration = 0;
  double loss = 0.0;
  double nrmse = 0.0;
};

struct FitResult {
  std::variant<ImplicitLti, Ren> model;
  std::vector<FitTracePoint> trace;
  Vector theta;
  ParamLayout layout;
  Vector x0;
};

struct NonFiniteLossError : NumericalError {
  explicit NonFiniteLossError(std::vector<FitTracePoint> trace_)
      : NumericalError("fit: non-finite loss encountered"), trace(std::move(trace_)) {}
  std::vector<FitTracePoint> trace;
};

struct FitSpec {
  FitFamily family = FitFamily::contracting_ren;
  Index n = 2, q = 4;
  Activation act = Activation::tanh;
  double eps = 1e-3;
  std::optional<LipschitzPenalty> penalty;
};

/// Invoked at every recorded iterate with the REN-form model (the LTI
/// family is its q = 0 slice).
using FitCallback = std::function<void(int iteration, const Ren& model)>;

/// First-order fit over the direct parameterization: every iterate is a
/// certified model by construction. Deterministic for a fixed seed.
inline FitResult fit(const FitSpec& spec, const TimeSeriesDataset& data, const FitConfig& config,
                     const FitCallback& per_iterate = {}) {
  data.validate();
  config.validate();
  const ParamLayout layout = ParamLayout::make(spec.family, spec.n, spec.q, data, spec.act,
                                               spec.eps);
  Rng rng(config.seed);
  Vector theta = layout.random_init(rng);

  Vector m1 = Vector::Zero(theta.size());
  Vector m2 = Vector::Zero(theta.size());
  const double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;

  std::vector<FitTracePoint> trace;
  trace.reserve(config.iterations + 1);
  auto record = [&](int iteration) {
    Ren model;
    const auto obj = detail::eval_objective(theta, layout, data, spec.penalty, nullptr, &model);
    if (!std::isfinite(obj.loss)) throw NonFiniteLossError(trace);
    trace.push_back({iteration, obj.loss, obj.nrmse_value});
    if (per_iterate) per_iterate(iteration, model);
    return obj;
  };

  for (int it = 0; it < config.iterations; ++it) {
    record(it);
    Vector grad = loss_gradient(theta, layout, data, config, spec.penalty);
    if (!grad.allFinite()) throw NonFiniteLossError(trace);
    if (config.optimizer == Optimizer::gradient_descent) {
      theta -= config.learning_rate * grad;
    } else {
      m1 = beta1 * m1 + (1.0 - beta1) * grad;
      m2 = beta2 * m2 + (1.0 - beta2) * grad.cwiseProduct(grad);
      const double c1 = 1.0 - std::pow(beta1, it + 1);
      const double c2 = 1.0 - std::pow(beta2, it + 1);
      theta -= (config.learning_rate / c1) *
               m1.cwiseQuotient(((m2 / c2).cwiseSqrt().array() + adam_eps).matrix());
    }
  }
  record(config.iterations);

  FitResult result;
  result.layout = layout;
  result.theta = theta;
  auto [params, x0] = layout.unpack(theta);
  result.x0 = layout.train_x0 ? x0 : *data.x0;
  const Ren ren = direct_parameterize_ren(params);
  if (spec.family == FitFamily::stable_lti) {
    ImplicitLti lti;
    lti.E = ren.E;
    lti.F = ren.F;
    lti.K = ren.B2;
    lti.C = ren.C2;
    lti.D = ren.D22;
    lti.P = ren.P;
    result.model = std::move(lti);
  } else {
    result.model = ren;
  }
  result.trace = std::move(trace);
  return result;
}

}  // namespace renkit
