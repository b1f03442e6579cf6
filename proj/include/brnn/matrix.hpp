#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "brnn/error.hpp"

namespace brnn {

// Row-major dense grid. Matrix (double) carries activations and weights;
// BoolMatrix carries trainability masks.
template <class T>
class Grid {
 public:
  Grid() = default;
  Grid(std::size_t rows, std::size_t cols, T fill = T{})
      : rows_(rows), cols_(cols), values_(rows * cols, fill) {}
  Grid(std::size_t rows, std::size_t cols, std::vector<T> values)
      : rows_(rows), cols_(cols), values_(std::move(values)) {
    if (values_.size() != rows_ * cols_) {
      throw ShapeError("grid value count " + std::to_string(values_.size()) + " does not match " +
                       std::to_string(rows_) + "x" + std::to_string(cols_));
    }
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }

  T& operator()(std::size_t r, std::size_t c) noexcept { return values_[r * cols_ + c]; }
  const T& operator()(std::size_t r, std::size_t c) const noexcept { return values_[r * cols_ + c]; }

  std::span<T> row(std::size_t r) noexcept { return {values_.data() + r * cols_, cols_}; }
  std::span<const T> row(std::size_t r) const noexcept { return {values_.data() + r * cols_, cols_}; }

  std::span<T> values() noexcept { return values_; }
  std::span<const T> values() const noexcept { return values_; }
  T* data() noexcept { return values_.data(); }
  const T* data() const noexcept { return values_.data(); }

  void fill(T v) { std::fill(values_.begin(), values_.end(), v); }

  bool same_shape(const Grid& o) const noexcept { return rows_ == o.rows_ && cols_ == o.cols_; }

  friend bool operator==(const Grid&, const Grid&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> values_;
};

using Matrix = Grid<double>;
using BoolMatrix = Grid<std::uint8_t>;

std::string shape_string(const Matrix& m);

// Standard product; each output entry sums the inner dimension left to right from 0.0.
Matrix matmul(const Matrix& a, const Matrix& b);

Matrix identity_matrix(std::size_t n);

enum class Activation { tanh, sigmoid, relu, identity };

Activation parse_activation(std::string_view name);
std::string_view activation_name(Activation kind);

double activate(Activation kind, double x) noexcept;
// Derivative expressed through the activation's output value.
double activation_slope_from_output(Activation kind, double y) noexcept;

Matrix apply_activation(const Matrix& m, Activation kind);
Matrix apply_activation(const Matrix& m, std::string_view kind);

bool all_finite(std::span<const double> v) noexcept;

}  // namespace brnn
