#include "test_support.hpp"

using namespace renkit;
using namespace testsupport;
using Catch::Approx;

namespace {

ImplicitLti simple_lti(const Matrix& e, const Matrix& f, const Matrix& p) {
  const Index n = e.rows();
  ImplicitLti m;
  m.E = e;
  m.F = f;
  m.P = p;
  m.K = Matrix::Zero(n, 1);
  m.C = Matrix::Zero(1, n);
  m.D = Matrix::Zero(1, 1);
  return m;
}

}  // namespace

TEST_CASE("stable LMI on hand-built models") {
  const Matrix i2 = Matrix::Identity(2, 2);
  SECTION("E=I, F=0, P=I is feasible") {
    const auto report = check_stable_lmi(simple_lti(i2, Matrix::Zero(2, 2), i2), 0.0);
    CHECK(report.feasible);
    CHECK(report.min_eigenvalue == Approx(1.0).margin(1e-12));
  }
  SECTION("E=I, F=I, P=I sits on the boundary") {
    const auto report = check_stable_lmi(simple_lti(i2, i2, i2), 0.0);
    CHECK_FALSE(report.feasible);  // min eigenvalue 0 never clears the margin
    CHECK(report.min_eigenvalue == Approx(0.0).margin(1e-12));
    CHECK_FALSE(check_stable_lmi(simple_lti(i2, i2, i2), 1e-9).feasible);
  }
}

TEST_CASE("direct parameterization of stable LTI models") {
  SECTION("V=0, S=0, eps=0.1, n=1") {
    DirectFactor f(Matrix::Zero(2, 2), 0.1);
    const auto m = direct_parameterize_lti(f, Matrix::Zero(1, 1), Matrix::Zero(1, 1),
                                           Matrix::Zero(1, 1));
    CHECK(m.P(0, 0) == Approx(0.1));
    CHECK(m.F(0, 0) == 0.0);
    CHECK(m.E(0, 0) == Approx(0.1));
    CHECK(check_stable_lmi(m, 0.0).feasible);
  }
  SECTION("odd factor dimension is rejected") {
    DirectFactor f(Matrix::Zero(3, 3), 0.1);
    CHECK_THROWS_AS(
        direct_parameterize_lti(f, Matrix::Zero(1, 1), Matrix::Zero(1, 1), Matrix::Zero(1, 1)),
        InvariantError);
  }
  SECTION("1000 random draws are feasible and Schur stable") {
    Rng rng(21);
    for (int trial = 0; trial < 1000; ++trial) {
      const Index n = 1 + trial % 4;
      const auto m = random_stable_lti(n, 2, 2, rng, trial % 2 ? 0.05 : 1e-3);
      CHECK(check_stable_lmi(m, 0.0).feasible);
      const auto exp = to_explicit(m);
      CHECK(spectral_radius(exp.A) < 1.0);
      CHECK(testsupport::min_eig_oracle(m.E + m.E.transpose()) > 0.0);
      CHECK(testsupport::min_eig_oracle(m.P) > 0.0);
    }
  }
}

TEST_CASE("to_explicit") {
  SECTION("E=2I halves F") {
    ImplicitLti m = simple_lti(2.0 * Matrix::Identity(2, 2), Matrix::Identity(2, 2),
                               Matrix::Identity(2, 2));
    const auto exp = to_explicit(m);
    CHECK((exp.A - 0.5 * Matrix::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-15);
    CHECK((exp.B).cwiseAbs().maxCoeff() == 0.0);
  }
  SECTION("singular E is rejected") {
    ImplicitLti m = simple_lti(Matrix::Zero(2, 2), Matrix::Identity(2, 2),
                               Matrix::Identity(2, 2));
    CHECK_THROWS_AS(to_explicit(m), NumericalError);
  }
}

TEST_CASE("explicit Lyapunov check") {
  const Matrix i2 = Matrix::Identity(2, 2);
  SECTION("A = 0.5 I with P = I") {
    const auto report = check_lyapunov_explicit(0.5 * i2, i2, 0.0);
    CHECK(report.feasible);
    CHECK(report.min_eigenvalue == Approx(0.75).margin(1e-12));
  }
  SECTION("A = 0 with P = I") {
    const auto report = check_lyapunov_explicit(Matrix::Zero(2, 2), i2, 0.0);
    CHECK(report.feasible);
    CHECK(report.min_eigenvalue == Approx(1.0).margin(1e-12));
  }
  SECTION("Example-1 average matrix fails for P = I") {
    Matrix a_c(2, 2);
    a_c << 0.25, 1.0, 1.0, 0.25;
    // Oracle: I - A_c^T A_c has min eigenvalue 1 - 1.25^2 < 0.
    CHECK(min_eig_oracle(i2 - a_c.transpose() * a_c) < 0.0);
    CHECK_FALSE(check_lyapunov_explicit(a_c, i2, 0.0).feasible);
  }
}

TEST_CASE("nonconvexity demo reproduces the Example-1 radii") {
  const auto demo = nonconvexity_demo();
  CHECK(demo.rho_a == Approx(0.5).margin(1e-12));
  CHECK(demo.rho_b == Approx(0.5).margin(1e-12));
  CHECK(demo.rho_c == Approx(1.25).margin(1e-12));
  CHECK((demo.A_c - 0.5 * (demo.A_a + demo.A_b)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("discrete Lyapunov solver") {
  Rng rng(31);
  for (int trial = 0; trial < 50; ++trial) {
    const Index n = 2 + trial % 3;
    const Matrix a = random_schur_stable(n, 0.9, rng);
    const Matrix p = solve_discrete_lyapunov(a, Matrix::Identity(n, n));
    const Matrix resid = p - a.transpose() * p * a - Matrix::Identity(n, n);
    CHECK(resid.cwiseAbs().maxCoeff() < 1e-10 * (1.0 + p.cwiseAbs().maxCoeff()));
    CHECK((p - p.transpose()).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("every Schur-stable A admits a feasible implicit representation") {
  // Witness construction: P solves P = A^T P A + I, then E = P, F = P A.
  Rng rng(37);
  for (int trial = 0; trial < 200; ++trial) {
    const Index n = 1 + trial % 5;
    const Matrix a = random_schur_stable(n, 0.95 * rng.uniform(), rng);
    const Matrix p = solve_discrete_lyapunov(a, Matrix::Identity(n, n));
    ImplicitLti m = simple_lti(p, p * a, p);
    CHECK(check_stable_lmi(m, 0.0).feasible);
    // Round trip: the witness reproduces A.
    const auto exp = to_explicit(m);
    CHECK((exp.A - a).cwiseAbs().maxCoeff() < 1e-8);
  }
}

TEST_CASE("incremental equals absolute for linear models") {
  // State differences follow dx+ = A dx exactly, independent of input.
  Rng rng(41);
  const auto m = random_stable_lti(3, 2, 1, rng);
  const auto exp = to_explicit(m);
  Vector xa = rng.gaussian_vector(3);
  Vector xb = rng.gaussian_vector(3);
  Vector diff = xa - xb;
  for (int t = 0; t < 20; ++t) {
    const Vector u = rng.gaussian_vector(2);
    xa = exp.A * xa + exp.B * u;
    xb = exp.A * xb + exp.B * u;
    diff = exp.A * diff;
    CHECK((xa - xb - diff).cwiseAbs().maxCoeff() <=
          1e-10 * (1.0 + diff.cwiseAbs().maxCoeff()));
  }
}
