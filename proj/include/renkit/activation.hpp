#pragma once

#include <cmath>
#include <string>

#include "renkit/common.hpp"

namespace renkit {

/// Scalar nonlinearities with difference quotients in [0, 1]. The
/// rescaled sigmoid is 4*sigmoid(x) so its maximal slope is exactly 1.
enum class Activation { relu, tanh, sigmoid_rescaled, identity };

inline double activate(Activation act, double x) {
  switch (act) {
    case Activation::relu: return x > 0.0 ? x : 0.0;
    case Activation::tanh: return std::tanh(x);
    case Activation::sigmoid_rescaled: return 4.0 / (1.0 + std::exp(-x));
    case Activation::identity: return x;
  }
  throw InvariantError("activate: unknown activation");
}

/// Pointwise derivative; relu uses the subgradient 0 at the kink.
inline double activation_slope(Activation act, double x) {
  switch (act) {
    case Activation::relu: return x > 0.0 ? 1.0 : 0.0;
    case Activation::tanh: {
      const double t = std::tanh(x);
      return 1.0 - t * t;
    }
    case Activation::sigmoid_rescaled: {
      const double s = 1.0 / (1.0 + std::exp(-x));
      return 4.0 * s * (1.0 - s);
    }
    case Activation::identity: return 1.0;
  }
  throw InvariantError("activation_slope: unknown activation");
}

inline Vector activate(Activation act, const Vector& v) {
  Vector out(v.size());
  for (Index i = 0; i < v.size(); ++i) out(i) = activate(act, v(i));
  return out;
}

inline Vector activation_slope(Activation act, const Vector& v) {
  Vector out(v.size());
  for (Index i = 0; i < v.size(); ++i) out(i) = activation_slope(act, v(i));
  return out;
}

inline std::string activation_name(Activation act) {
  switch (act) {
    case Activation::relu: return "relu";
    case Activation::tanh: return "tanh";
    case Activation::sigmoid_rescaled: return "sigmoid_rescaled";
    case Activation::identity: return "identity";
  }
  throw InvariantError("activation_name: unknown activation");
}

inline Activation activation_from_name(const std::string& name) {
  if (name == "relu") return Activation::relu;
  if (name == "tanh") return Activation::tanh;
  if (name == "sigmoid_rescaled") return Activation::sigmoid_rescaled;
  if (name == "identity") return Activation::identity;
  throw InvariantError("activation_from_name: unknown activation '" + name + "'");
}

}  // namespace renkit
