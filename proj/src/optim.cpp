#include "brnn/optim.hpp"

#include <cmath>

namespace brnn {

void AdamConfig::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) throw ConfigError("adam: learning rate must be >= 0");
  if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0)) throw ConfigError("adam: betas must lie in (0, 1)");
  if (!(epsilon > 0.0)) throw ConfigError("adam: epsilon must be > 0");
  if (clip_norm && !(*clip_norm > 0.0)) throw ConfigError("adam: clip norm must be > 0");
}

namespace {

template <class F>
void for_each_trainable(const ParamGroup& g, F&& f) {
  if (g.pattern) {
    for (std::uint32_t idx : g.pattern->flat()) f(static_cast<std::size_t>(idx));
  } else {
    for (std::size_t i = 0; i < g.values.size(); ++i) f(i);
  }
}

}  // namespace

double global_grad_norm(std::span<const ParamGroup> groups) {
  double sq = 0.0;
  for (const auto& g : groups) {
    for_each_trainable(g, [&](std::size_t i) { sq += g.grads[i] * g.grads[i]; });
  }
  return std::sqrt(sq);
}

double clip_factor(double norm, std::optional<double> max_norm) noexcept {
  if (!max_norm || !(norm > *max_norm)) return 1.0;
  return *max_norm / norm;
}

AdamStepInfo adam_update(std::span<const ParamGroup> groups, AdamState& state, const AdamConfig& cfg) {
  std::size_t total = 0;
  for (const auto& g : groups) total += g.trainable();
  if (state.m.empty() && state.v.empty()) {
    state.m.assign(total, 0.0);
    state.v.assign(total, 0.0);
  }
  if (state.m.size() != total || state.v.size() != total) throw ShapeError("adam: optimizer state does not match parameters");

  AdamStepInfo info;
  info.grad_norm = global_grad_norm(groups);
  info.clip_scale = clip_factor(info.grad_norm, cfg.clip_norm);

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(cfg.beta1, t);
  const double correction2 = 1.0 - std::pow(cfg.beta2, t);
  std::size_t k = 0;
  for (const auto& g : groups) {
    for_each_trainable(g, [&](std::size_t i) {
      const double grad = g.grads[i] * info.clip_scale;
      double& m = state.m[k];
      double& v = state.v[k];
      m = cfg.beta1 * m + (1.0 - cfg.beta1) * grad;
      v = cfg.beta2 * v + (1.0 - cfg.beta2) * grad * grad;
      const double m_hat = m / correction1;
      const double v_hat = v / correction2;
      g.values[i] -= cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
      ++k;
    });
  }
  return info;
}

std::vector<ParamGroup> param_groups(WeightSpace& ws, const WeightSpace& grads) {
  std::vector<ParamGroup> groups;
  groups.reserve(kBlockCount + 2);
  for (BlockId b : kAllBlocks) {
    auto& w = ws.block(b);
    const auto& g = grads.block(b);
    if (!w.values().same_shape(g.values())) throw ShapeError("adam: gradient shape mismatch in block " + std::string(block_name(b)));
    groups.push_back({w.mutable_values().values(), g.values().values(), &w.pattern()});
  }
  if (grads.bias_h.size() != ws.bias_h.size() || grads.bias_y.size() != ws.bias_y.size()) {
    throw ShapeError("adam: bias gradient length mismatch");
  }
  groups.push_back({ws.bias_h, grads.bias_h, nullptr});
  groups.push_back({ws.bias_y, grads.bias_y, nullptr});
  return groups;
}

AdamStepInfo adam_step(WeightSpace& ws, const WeightSpace& grads, AdamState& state, const AdamConfig& cfg) {
  const auto groups = param_groups(ws, grads);
  return adam_update(groups, state, cfg);
}

double clip_global_norm(WeightSpace& grads, double max_norm) {
  double sq = 0.0;
  for (const auto& b : grads.blocks) {
    for (double v : b.values().values()) sq += v * v;
  }
  for (double v : grads.bias_h) sq += v * v;
  for (double v : grads.bias_y) sq += v * v;
  const double factor = clip_factor(std::sqrt(sq), max_norm);
  if (factor != 1.0) {
    for (auto& b : grads.blocks) {
      for (double& v : b.mutable_values().values()) v *= factor;
    }
    for (double& v : grads.bias_h) v *= factor;
    for (double& v : grads.bias_y) v *= factor;
  }
  return factor;
}

}  // namespace brnn
