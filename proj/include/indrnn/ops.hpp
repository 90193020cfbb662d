#pragma once

#include <cmath>
#include <string>

#include "indrnn/types.hpp"

namespace indrnn {

enum class Activation { Relu, Tanh, Linear };

inline const char* activation_name(Activation a) {
  switch (a) {
    case Activation::Relu: return "relu";
    case Activation::Tanh: return "tanh";
    case Activation::Linear: return "linear";
  }
  return "?";
}

inline double activate(Activation a, double x) {
  switch (a) {
    case Activation::Relu: return x > 0 ? x : 0.0;
    case Activation::Tanh: return std::tanh(x);
    case Activation::Linear: return x;
  }
  return x;
}

// Derivative expressed through the activation value, which every supported
// activation admits: relu'(x) = [y > 0], tanh'(x) = 1 - y^2, linear' = 1.
// At the relu kink (x == 0) the derivative is taken as 0.
inline double activate_grad_from_value(Activation a, double y) {
  switch (a) {
    case Activation::Relu: return y > 0 ? 1.0 : 0.0;
    case Activation::Tanh: return 1.0 - y * y;
    case Activation::Linear: return 1.0;
  }
  return 1.0;
}

inline Vec matvec(const Mat& a, const Vec& x) {
  require_shape(a.cols() == x.size(),
                "matvec: matrix has " + std::to_string(a.cols()) +
                    " columns but vector has " + std::to_string(x.size()) + " entries");
  return a * x;
}

inline Vec hadamard(const Vec& a, const Vec& b) {
  require_shape(a.size() == b.size(),
                "hadamard: size mismatch " + std::to_string(a.size()) + " vs " +
                    std::to_string(b.size()));
  return a.cwiseProduct(b);
}

// out(i, :) *= s, i.e. scale each column j of m by s(j).
inline void scale_cols_inplace(Mat& m, const Vec& s) {
  require_shape(m.cols() == s.size(), "scale_cols: width mismatch");
  m.array().rowwise() *= s.transpose().array();
}

}  // namespace indrnn
