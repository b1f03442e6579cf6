#include "brnn/matrix.hpp"

#include <algorithm>
#include <cmath>

namespace brnn {

std::string shape_string(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: left operand " + shape_string(a) + " incompatible with right operand " +
                     shape_string(b));
  }
  Matrix out(a.rows(), b.cols(), 0.0);
  // i-k-j order: every out(i, j) still accumulates k = 0..K-1 in sequence.
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto out_row = out.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      auto b_row = b.row(k);
      for (std::size_t j = 0; j < b.cols(); ++j) out_row[j] += aik * b_row[j];
    }
  }
  return out;
}

Matrix identity_matrix(std::size_t n) {
  Matrix m(n, n, 0.0);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Activation parse_activation(std::string_view name) {
  if (name == "tanh") return Activation::tanh;
  if (name == "sigmoid") return Activation::sigmoid;
  if (name == "relu") return Activation::relu;
  if (name == "identity") return Activation::identity;
  throw ConfigError("unknown activation '" + std::string(name) + "'");
}

std::string_view activation_name(Activation kind) {
  switch (kind) {
    case Activation::tanh: return "tanh";
    case Activation::sigmoid: return "sigmoid";
    case Activation::relu: return "relu";
    case Activation::identity: return "identity";
  }
  return "identity";
}

double activate(Activation kind, double x) noexcept {
  switch (kind) {
    case Activation::tanh: return std::tanh(x);
    case Activation::sigmoid: return 1.0 / (1.0 + std::exp(-x));
    case Activation::relu: return x > 0.0 ? x : 0.0;
    case Activation::identity: return x;
  }
  return x;
}

double activation_slope_from_output(Activation kind, double y) noexcept {
  switch (kind) {
    case Activation::tanh: return 1.0 - y * y;
    case Activation::sigmoid: return y * (1.0 - y);
    case Activation::relu: return y > 0.0 ? 1.0 : 0.0;
    case Activation::identity: return 1.0;
  }
  return 1.0;
}

Matrix apply_activation(const Matrix& m, Activation kind) {
  if (kind == Activation::identity) return m;
  Matrix out = m;
  for (double& v : out.values()) v = activate(kind, v);
  return out;
}

Matrix apply_activation(const Matrix& m, std::string_view kind) {
  return apply_activation(m, parse_activation(kind));
}

bool all_finite(std::span<const double> v) noexcept {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

}  // namespace brnn
