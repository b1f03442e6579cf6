#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "brnn/block_spec.hpp"

namespace brnn {

// One contiguous parameter tensor and its gradient. With a pattern, only the
// pattern's flat positions are trainable; otherwise every entry is.
struct ParamGroup {
  std::span<double> values;
  std::span<const double> grads;
  const SparsityPattern* pattern = nullptr;

  std::size_t trainable() const noexcept { return pattern ? pattern->count() : values.size(); }
};

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::optional<double> clip_norm = 1.0;  // global L2 norm over all gradients

  void validate() const;
};

struct AdamState {
  std::uint64_t step = 0;
  std::vector<double> m;
  std::vector<double> v;

  friend bool operator==(const AdamState&, const AdamState&) = default;
};

struct AdamStepInfo {
  double grad_norm = 0.0;
  double clip_scale = 1.0;  // factor applied to the gradient before the moment update
};

double global_grad_norm(std::span<const ParamGroup> groups);

// Factor that brings `norm` down to `max_norm` (1 when already within).
double clip_factor(double norm, std::optional<double> max_norm) noexcept;

AdamStepInfo adam_update(std::span<const ParamGroup> groups, AdamState& state, const AdamConfig& cfg);

std::vector<ParamGroup> param_groups(WeightSpace& ws, const WeightSpace& grads);

// Bias-corrected Adam on mask-true entries and biases; masked entries stay exactly 0.
AdamStepInfo adam_step(WeightSpace& ws, const WeightSpace& grads, AdamState& state, const AdamConfig& cfg);

// Scales `grads` in place so its global norm is at most max_norm; returns the factor used.
double clip_global_norm(WeightSpace& grads, double max_norm);

}  // namespace brnn
