#include "test_support.hpp"

#include "renkit/grad.hpp"
#include "renkit/simfit.hpp"

using namespace renkit;
using namespace testsupport;
using Catch::Approx;

TEST_CASE("simulate a scalar explicit model") {
  ExplicitLti m;
  m.A = 0.5 * Matrix::Identity(1, 1);
  m.B = Matrix::Zero(1, 1);
  m.C = Matrix::Identity(1, 1);
  m.D = Matrix::Zero(1, 1);
  Vector x0 = Vector::Ones(1);
  const auto sim = simulate(m, Matrix::Zero(10, 1), x0);
  for (Index t = 0; t <= 10; ++t) CHECK(sim.x(t, 0) == Approx(std::pow(0.5, t)).margin(0.0));
}

TEST_CASE("zero model produces zero output") {
  Rng rng(163);
  const auto m = direct_parameterize_ren(random_ren_params(2, 3, 1, 1, rng));
  Ren zeroed = m;
  zeroed.B2.setZero();
  zeroed.C2.setZero();
  zeroed.D21.setZero();
  zeroed.D22.setZero();
  zeroed.b_x.setZero();
  zeroed.b_v.setZero();
  zeroed.b_y.setZero();
  const auto sim = simulate(zeroed, rng.gaussian(20, 1), Vector::Zero(2));
  CHECK(sim.y.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("implicit and explicit LTI paths simulate identically") {
  Rng rng(167);
  for (int trial = 0; trial < 20; ++trial) {
    const auto m = random_stable_lti(3, 2, 2, rng);
    const auto exp = to_explicit(m);
    const Matrix u = rng.gaussian(50, 2);
    const Vector x0 = rng.gaussian_vector(3);
    const auto a = simulate(m, u, x0);
    const auto b = simulate(exp, u, x0);
    const double scale = 1.0 + a.y.cwiseAbs().maxCoeff();
    CHECK((a.y - b.y).cwiseAbs().maxCoeff() <= 1e-10 * scale);
  }
}

TEST_CASE("simulation error and NRMSE") {
  SECTION("exact match gives zero") {
    Rng rng(171);
    const Matrix y = rng.gaussian(7, 2);
    CHECK(simulation_error(y, y) == 0.0);
  }
  SECTION("constant offset of one accumulates T") {
    const Matrix y = Matrix::Zero(5, 1);
    const Matrix ref = Matrix::Ones(5, 1);
    CHECK(simulation_error(y, ref) == Approx(5.0));
  }
  SECTION("random pair matches the summation oracle to 1e-12") {
    Rng rng(173);
    const Matrix y = rng.gaussian(40, 3), ref = rng.gaussian(40, 3);
    double oracle = 0.0;
    for (Index t = 0; t < 40; ++t)
      for (Index j = 0; j < 3; ++j) oracle += (y(t, j) - ref(t, j)) * (y(t, j) - ref(t, j));
    CHECK(simulation_error(y, ref) == Approx(oracle).epsilon(1e-12));
  }
  SECTION("length mismatch throws") {
    CHECK_THROWS_AS(simulation_error(Matrix::Zero(3, 1), Matrix::Zero(4, 1)), InvariantError);
  }
  SECTION("NRMSE of the reference mean") {
    Matrix ref(4, 1);
    ref << 1.0, 3.0, 1.0, 3.0;
    const Matrix y = 2.0 * Matrix::Ones(4, 1);  // predicting the mean
    CHECK(nrmse(y, ref) == Approx(1.0));
    CHECK(std::isnan(nrmse(Matrix::Zero(4, 1), Matrix::Zero(4, 1))));  // 0/0 sentinel
  }
}

TEST_CASE("analytic gradients match central finite differences") {
  Rng rng(179);
  TimeSeriesDataset data;
  FitConfig fd_config;
  fd_config.grad_mode = GradMode::finite_difference;
  fd_config.fd_step = 1e-5;
  FitConfig an_config;
  an_config.grad_mode = GradMode::analytic_unrolled;

  auto compare = [&](const ParamLayout& layout, const TimeSeriesDataset& ds,
                     const std::optional<LipschitzPenalty>& penalty, Rng& r) {
    const Vector theta = layout.random_init(r);
    const Vector g_an = loss_gradient(theta, layout, ds, an_config, penalty);
    const Vector g_fd = loss_gradient(theta, layout, ds, fd_config, penalty);
    double worst = 0.0;
    for (Index i = 0; i < theta.size(); ++i) {
      if (std::abs(g_fd(i)) <= 1e-6) continue;
      worst = std::max(worst, std::abs(g_an(i) - g_fd(i)) / std::abs(g_fd(i)));
    }
    CHECK(worst <= 1e-4);
  };

  SECTION("contracting REN family") {
    for (int trial = 0; trial < 5; ++trial) {
      data.u = rng.gaussian(15, 2);
      data.y = rng.gaussian(15, 1);
      const auto layout = ParamLayout::make(FitFamily::contracting_ren, 3, 4, data);
      compare(layout, data, std::nullopt, rng);
    }
  }
  SECTION("stable LTI family") {
    for (int trial = 0; trial < 5; ++trial) {
      data.u = rng.gaussian(15, 1);
      data.y = rng.gaussian(15, 2);
      const auto layout = ParamLayout::make(FitFamily::stable_lti, 3, 0, data);
      compare(layout, data, std::nullopt, rng);
    }
  }
  SECTION("dataset-supplied x0 disables its gradient block") {
    data.u = rng.gaussian(10, 1);
    data.y = rng.gaussian(10, 1);
    data.x0 = rng.gaussian_vector(2);
    const auto layout = ParamLayout::make(FitFamily::contracting_ren, 2, 2, data);
    CHECK_FALSE(layout.train_x0);
    compare(layout, data, std::nullopt, rng);
    data.x0.reset();
  }
  SECTION("Lipschitz-margin penalty") {
    for (int trial = 0; trial < 3; ++trial) {
      data.u = rng.gaussian(12, 1);
      data.y = rng.gaussian(12, 1);
      const auto layout = ParamLayout::make(FitFamily::contracting_ren, 2, 3, data);
      // Large target margin so the hinge is active at the random point.
      LipschitzPenalty penalty{1.5, 2.0, 0.5};
      compare(layout, data, penalty, rng);
    }
  }
}

TEST_CASE("gradient entries for parameters with no effect are exactly zero") {
  Rng rng(181);
  TimeSeriesDataset data;
  data.u = Matrix::Zero(10, 2);  // u identically zero
  data.y = rng.gaussian(10, 1);
  const auto layout = ParamLayout::make(FitFamily::contracting_ren, 2, 2, data);
  const Vector theta = layout.random_init(rng);
  FitConfig config;
  const Vector g = loss_gradient(theta, layout, data, config);
  // Locate the D22 block in the flat layout and check it is untouched.
  const auto [params, x0] = layout.unpack(theta);
  Vector probe = theta;
  RenParamGrads zero{};
  (void)zero;
  // D22 sits right before the biases; reconstruct its offset.
  Index off = layout.d() * layout.d() + layout.n * (layout.n - 1) / 2 +
              layout.q * (layout.q - 1) / 2 + layout.q + layout.n * layout.m +
              layout.q * layout.m + layout.p * layout.n + layout.p * layout.q;
  for (Index k = 0; k < layout.p * layout.m; ++k) CHECK(g(off + k) == 0.0);
}

TEST_CASE("gradient at a self-generated fit is zero") {
  Rng rng(191);
  TimeSeriesDataset data;
  data.u = rng.gaussian(25, 1);
  data.y = Matrix::Zero(25, 1);  // placeholder, replaced below
  const auto layout = ParamLayout::make(FitFamily::contracting_ren, 2, 3, data);
  const Vector theta = layout.random_init(rng);
  const auto [params, x0] = layout.unpack(theta);
  const Ren model = direct_parameterize_ren(params);
  data.y = ren_rollout(model, data.u, x0).y;
  FitConfig config;
  const Vector g = loss_gradient(theta, layout, data, config);
  CHECK(g.cwiseAbs().maxCoeff() <= 1e-6);
}

TEST_CASE("short fits descend and stay certified") {
  Rng rng(193);
  const auto gen = random_stable_lti(2, 1, 1, rng);
  TimeSeriesDataset data;
  data.u = rng.gaussian(60, 1);
  data.y = simulate(gen, data.u, Vector::Zero(2)).y;

  FitSpec spec;
  spec.family = FitFamily::contracting_ren;
  spec.n = 2;
  spec.q = 2;
  FitConfig config;
  config.iterations = 25;
  config.learning_rate = 0.02;
  config.seed = 7;

  int checked = 0;
  const auto result = fit(spec, data, config, [&](int, const Ren& m) {
    CHECK(check_contracting_ren(m, 0.0).feasible);
    ++checked;
  });
  CHECK(checked == config.iterations + 1);
  REQUIRE(result.trace.size() == static_cast<std::size_t>(config.iterations) + 1);
  for (const auto& point : result.trace) CHECK(std::isfinite(point.loss));
  CHECK(result.trace.back().loss <= result.trace.front().loss);
  CHECK(std::holds_alternative<Ren>(result.model));
}

TEST_CASE("stable LTI fits return certified implicit models") {
  Rng rng(197);
  const auto gen = random_stable_lti(2, 1, 1, rng);
  TimeSeriesDataset data;
  data.u = rng.gaussian(50, 1);
  data.y = simulate(gen, data.u, Vector::Zero(2)).y;

  FitSpec spec;
  spec.family = FitFamily::stable_lti;
  spec.n = 2;
  FitConfig config;
  config.iterations = 40;
  config.seed = 3;
  const auto result = fit(spec, data, config);
  REQUIRE(std::holds_alternative<ImplicitLti>(result.model));
  const auto& lti = std::get<ImplicitLti>(result.model);
  CHECK(check_stable_lmi(lti, 0.0).feasible);
  CHECK(result.trace.back().loss <= result.trace.front().loss);
}

TEST_CASE("fits are bit-deterministic in the seed") {
  Rng rng(199);
  TimeSeriesDataset data;
  data.u = rng.gaussian(30, 1);
  data.y = rng.gaussian(30, 1);
  FitSpec spec;
  spec.family = FitFamily::contracting_ren;
  spec.n = 2;
  spec.q = 2;
  FitConfig config;
  config.iterations = 10;
  config.seed = 12345;
  const auto a = fit(spec, data, config);
  const auto b = fit(spec, data, config);
  REQUIRE(a.trace.size() == b.trace.size());
  for (std::size_t i = 0; i < a.trace.size(); ++i) {
    CHECK(a.trace[i].loss == b.trace[i].loss);
    CHECK(a.trace[i].nrmse == b.trace[i].nrmse);
  }
  CHECK((a.theta - b.theta).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("non-finite loss aborts with the trace preserved") {
  Rng rng(211);
  TimeSeriesDataset data;
  data.u = rng.gaussian(10, 1);
  data.y = rng.gaussian(10, 1);
  FitSpec spec;
  spec.family = FitFamily::stable_lti;
  spec.n = 2;
  FitConfig config;
  config.iterations = 3;
  config.optimizer = Optimizer::gradient_descent;
  config.learning_rate = 1e200;  // drives V to overflow
  try {
    fit(spec, data, config);
    FAIL("expected NonFiniteLossError");
  } catch (const NonFiniteLossError& err) {
    CHECK(err.trace.size() >= 1);
  }
}
