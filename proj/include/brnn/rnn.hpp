#pragma once

#include <cstddef>
#include <optional>
#include <string_view>
#include <vector>

#include "brnn/block_spec.hpp"
#include "brnn/matrix.hpp"

namespace brnn {

// Hidden and output feedback for a batch of n columns.
struct RnnState {
  Matrix h;  // |h| x n
  Matrix y;  // |y| x n

  static RnnState zeros(const WeightSpace& ws, std::size_t batch);
};

// H' = act(Whx x + Whh H + Why Y + bh), Y' = Wyx x + Wyh H + Wyy Y + by.
// The output row is linear; masked-off weights contribute nothing.
RnnState forward_step(const WeightSpace& ws, const Matrix& x, const RnnState& state);

// States for t = 1..T from the all-zero initial state.
std::vector<RnnState> run_sequence(const WeightSpace& ws, const std::vector<Matrix>& seq);

enum class LossKind { cross_entropy_final, mse_all_steps };

LossKind parse_loss_kind(std::string_view name);
std::string_view loss_kind_name(LossKind k) noexcept;

// Class labels (one per batch column) for cross_entropy_final, or per-step
// |y| x n targets for mse_all_steps.
struct Targets {
  std::vector<std::size_t> classes;
  std::vector<Matrix> steps;
};

// Cross-entropy reads only the final output and averages over the batch;
// mse averages over steps, output dims and the batch.
double loss(const std::vector<Matrix>& outputs, const Targets& targets, LossKind kind);

// dLoss/dOutput for each step (zeros where the loss does not look).
std::vector<Matrix> loss_gradient(const std::vector<Matrix>& outputs, const Targets& targets, LossKind kind);

struct GradientResult {
  WeightSpace grads;  // shares the masks of the source weight space
  double loss = 0.0;
  bool diverged = false;  // set when any intermediate was non-finite; grads are zeroed
};

// Backpropagation through time. Gradients are exactly zero outside the masks.
GradientResult backward(const WeightSpace& ws, const std::vector<Matrix>& seq, const Targets& targets, LossKind kind);

// Accumulating variant used by the training loop; `grads` must come from
// ws.zeros_like() and is overwritten. Returns the loss, or nullopt on divergence.
std::optional<double> backward_into(const WeightSpace& ws, const std::vector<Matrix>& seq, const Targets& targets,
                                    LossKind kind, WeightSpace& grads);

namespace kernels {

// out(i, :) += sum over trainable j of W(i, j) * in(j, :), j ascending.
void accumulate_product(const MaskedMatrix& w, const Matrix& in, Matrix& out);
// d_in(j, :) += W(i, j) * d_out(i, :) over trainable entries.
void accumulate_transposed_product(const MaskedMatrix& w, const Matrix& d_out, Matrix& d_in);
// grad(i, j) += <d_out(i, :), in(j, :)> over trainable entries only.
void accumulate_weight_gradient(const Matrix& d_out, const Matrix& in, MaskedMatrix& grad);

}  // namespace kernels

}  // namespace brnn
