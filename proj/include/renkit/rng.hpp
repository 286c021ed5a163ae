#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

#include "renkit/common.hpp"

namespace renkit {

/// Seeded generator with explicit uniform/normal transforms.
///
/// std::mt19937_64 output is fully specified by the standard, and the
/// transforms below avoid std::*_distribution (whose streams are
/// implementation-defined), so every draw is bit-reproducible across
/// compilers and platforms. All randomness in the toolkit funnels
/// through this class.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  /// Uniform on [0, 1) with 53 bits of mantissa.
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  /// Standard normal via Box-Muller (two uniforms per draw, no cached spare).
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  std::uint64_t raw() { return gen_(); }

  Matrix gaussian(Index rows, Index cols, double scale = 1.0) {
    Matrix m(rows, cols);
    for (Index i = 0; i < rows; ++i)
      for (Index j = 0; j < cols; ++j) m(i, j) = scale * normal();
    return m;
  }

  Vector gaussian_vector(Index n, double scale = 1.0) {
    Vector v(n);
    for (Index i = 0; i < n; ++i) v(i) = scale * normal();
    return v;
  }

 private:
  std::mt19937_64 gen_;
};

}  // namespace renkit
