#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace renkit {

inline constexpr const char* kVersion = "0.1.0";

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// Contract violation on caller-supplied data (shapes, signs, enum values).
struct InvariantError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Numerical failure inside an otherwise valid call (singular solve, ...).
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Fixed-point solver gave up before reaching the requested residual.
struct SolveError : NumericalError {
  SolveError(const std::string& msg, double best_residual, int iterations)
      : NumericalError(msg), best_residual(best_residual), iterations(iterations) {}
  double best_residual;
  int iterations;
};

/// File-format or schema problem in dataio.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw InvariantError(msg);
}

inline bool all_finite(const Matrix& m) { return m.allFinite(); }

}  // namespace renkit
