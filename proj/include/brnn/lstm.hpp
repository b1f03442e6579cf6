#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "brnn/matrix.hpp"
#include "brnn/optim.hpp"
#include "brnn/rng.hpp"
#include "brnn/rnn.hpp"

namespace brnn {

// Single-layer LSTM baseline with a linear read-out per step. Gate rows are
// stacked [input; forget; cell; output], each hidden_dim tall.
struct LstmWeights {
  std::size_t input_dim = 0;
  std::size_t hidden_dim = 0;
  std::size_t output_dim = 0;
  Matrix w;                 // 4h x |x|
  Matrix u;                 // 4h x h
  std::vector<double> b;    // 4h
  Matrix w_y;               // |y| x h
  std::vector<double> b_y;  // |y|

  static LstmWeights zeros(std::size_t input_dim, std::size_t hidden_dim, std::size_t output_dim);
  std::size_t parameter_count() const noexcept;
  std::vector<ParamGroup> param_groups(const LstmWeights& grads);

  friend bool operator==(const LstmWeights&, const LstmWeights&) = default;
};

// 4 (h|x| + h^2 + h) + |y| h + |y|
std::size_t lstm_param_count(std::size_t hidden, std::size_t input_dim, std::size_t output_dim) noexcept;

// Largest h whose parameter count fits the budget; ConfigError if h = 1 does not.
std::size_t lstm_hidden_for_budget(double budget, std::size_t input_dim, std::size_t output_dim);

// Uniform(-1/sqrt(h), 1/sqrt(h)) weights and biases.
LstmWeights lstm_init(std::size_t input_dim, std::size_t hidden_dim, std::size_t output_dim, RngStream& rng);

// Per-step outputs (|y| x n) from zero hidden and cell state.
std::vector<Matrix> lstm_outputs(const LstmWeights& w, const std::vector<Matrix>& seq);

struct LstmTrace {
  std::vector<Matrix> h;
  std::vector<Matrix> c;
};
LstmTrace lstm_trace(const LstmWeights& w, const std::vector<Matrix>& seq);

// Overwrites `grads`; nullopt when the loss or any gradient is non-finite.
std::optional<double> lstm_backward_into(const LstmWeights& w, const std::vector<Matrix>& seq, const Targets& targets,
                                         LossKind kind, LstmWeights& grads);

}  // namespace brnn
