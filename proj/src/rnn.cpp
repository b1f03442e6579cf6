#include "brnn/rnn.hpp"

#include <cmath>
#include <limits>

namespace brnn {

namespace kernels {

void accumulate_product(const MaskedMatrix& w, const Matrix& in, Matrix& out) {
  const auto& pat = w.pattern();
  const auto cols = pat.columns();
  const std::size_t n = in.cols();
  const double* wv = w.values().data();
  for (std::size_t i = 0; i < pat.rows(); ++i) {
    double* o = out.row(i).data();
    const std::size_t end = pat.row_begin(i + 1);
    for (std::size_t k = pat.row_begin(i); k < end; ++k) {
      const std::size_t j = cols[k];
      const double wij = wv[i * pat.cols() + j];
      const double* src = in.row(j).data();
      for (std::size_t b = 0; b < n; ++b) o[b] += wij * src[b];
    }
  }
}

void accumulate_transposed_product(const MaskedMatrix& w, const Matrix& d_out, Matrix& d_in) {
  const auto& pat = w.pattern();
  const auto cols = pat.columns();
  const std::size_t n = d_out.cols();
  const double* wv = w.values().data();
  for (std::size_t i = 0; i < pat.rows(); ++i) {
    const double* g = d_out.row(i).data();
    const std::size_t end = pat.row_begin(i + 1);
    for (std::size_t k = pat.row_begin(i); k < end; ++k) {
      const std::size_t j = cols[k];
      const double wij = wv[i * pat.cols() + j];
      double* dst = d_in.row(j).data();
      for (std::size_t b = 0; b < n; ++b) dst[b] += wij * g[b];
    }
  }
}

void accumulate_weight_gradient(const Matrix& d_out, const Matrix& in, MaskedMatrix& grad) {
  const auto& pat = grad.pattern();
  const auto cols = pat.columns();
  const std::size_t n = d_out.cols();
  double* gv = grad.mutable_values().data();
  for (std::size_t i = 0; i < pat.rows(); ++i) {
    const double* g = d_out.row(i).data();
    const std::size_t end = pat.row_begin(i + 1);
    for (std::size_t k = pat.row_begin(i); k < end; ++k) {
      const std::size_t j = cols[k];
      const double* src = in.row(j).data();
      double acc = 0.0;
      for (std::size_t b = 0; b < n; ++b) acc += g[b] * src[b];
      gv[i * pat.cols() + j] += acc;
    }
  }
}

}  // namespace kernels

namespace {

void add_row_bias(Matrix& m, const std::vector<double>& bias) {
  for (std::size_t i = 0; i < m.rows(); ++i) {
    const double b = bias[i];
    for (double& v : m.row(i)) v += b;
  }
}

void accumulate_bias_gradient(const Matrix& d, std::vector<double>& grad) {
  for (std::size_t i = 0; i < d.rows(); ++i) {
    double acc = 0.0;
    for (double v : d.row(i)) acc += v;
    grad[i] += acc;
  }
}

void check_step_shapes(const WeightSpace& ws, const Matrix& x, const RnnState& state) {
  if (x.rows() != ws.input_dim) {
    throw ShapeError("forward_step: input has " + std::to_string(x.rows()) + " rows, expected " +
                     std::to_string(ws.input_dim));
  }
  const std::size_t n = x.cols();
  if (state.h.rows() != ws.hidden_dim || state.h.cols() != n || state.y.rows() != ws.output_dim ||
      state.y.cols() != n) {
    throw ShapeError("forward_step: state shapes " + shape_string(state.h) + " / " + shape_string(state.y) +
                     " do not match weight space and batch width " + std::to_string(n));
  }
}

}  // namespace

RnnState RnnState::zeros(const WeightSpace& ws, std::size_t batch) {
  return RnnState{Matrix(ws.hidden_dim, batch, 0.0), Matrix(ws.output_dim, batch, 0.0)};
}

RnnState forward_step(const WeightSpace& ws, const Matrix& x, const RnnState& state) {
  check_step_shapes(ws, x, state);
  const std::size_t n = x.cols();
  RnnState next{Matrix(ws.hidden_dim, n, 0.0), Matrix(ws.output_dim, n, 0.0)};
  kernels::accumulate_product(ws.block(BlockId::hx), x, next.h);
  kernels::accumulate_product(ws.block(BlockId::hh), state.h, next.h);
  kernels::accumulate_product(ws.block(BlockId::hy), state.y, next.h);
  add_row_bias(next.h, ws.bias_h);
  if (ws.activation != Activation::identity) {
    for (double& v : next.h.values()) v = activate(ws.activation, v);
  }
  kernels::accumulate_product(ws.block(BlockId::yx), x, next.y);
  kernels::accumulate_product(ws.block(BlockId::yh), state.h, next.y);
  kernels::accumulate_product(ws.block(BlockId::yy), state.y, next.y);
  add_row_bias(next.y, ws.bias_y);
  return next;
}

std::vector<RnnState> run_sequence(const WeightSpace& ws, const std::vector<Matrix>& seq) {
  if (seq.empty()) throw InputError("run_sequence: empty sequence");
  const std::size_t n = seq.front().cols();
  std::vector<RnnState> states;
  states.reserve(seq.size());
  RnnState state = RnnState::zeros(ws, n);
  for (const auto& x : seq) {
    if (x.cols() != n) throw InputError("run_sequence: batch width changes within the sequence");
    state = forward_step(ws, x, state);
    states.push_back(state);
  }
  return states;
}

LossKind parse_loss_kind(std::string_view name) {
  if (name == "cross_entropy_final") return LossKind::cross_entropy_final;
  if (name == "mse_all_steps") return LossKind::mse_all_steps;
  throw ConfigError("unknown loss kind '" + std::string(name) + "'");
}

std::string_view loss_kind_name(LossKind k) noexcept {
  return k == LossKind::cross_entropy_final ? "cross_entropy_final" : "mse_all_steps";
}

namespace {

void check_targets(const std::vector<Matrix>& outputs, const Targets& targets, LossKind kind) {
  if (outputs.empty()) throw InputError("loss: no outputs");
  const Matrix& last = outputs.back();
  if (kind == LossKind::cross_entropy_final) {
    if (targets.classes.size() != last.cols()) throw InputError("loss: label count does not match batch width");
    for (std::size_t c : targets.classes) {
      if (c >= last.rows()) {
        throw InputError("loss: class index " + std::to_string(c) + " out of range for " + std::to_string(last.rows()) +
                         " outputs");
      }
    }
  } else {
    if (targets.steps.size() != outputs.size()) throw InputError("loss: target sequence length mismatch");
    for (std::size_t t = 0; t < outputs.size(); ++t) {
      if (!targets.steps[t].same_shape(outputs[t])) throw InputError("loss: target shape mismatch at step " + std::to_string(t));
    }
  }
}

// log(sum(exp(column))) with the max shifted out.
double log_sum_exp_column(const Matrix& m, std::size_t col, double& max_out) {
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t r = 0; r < m.rows(); ++r) mx = std::max(mx, m(r, col));
  double sum = 0.0;
  for (std::size_t r = 0; r < m.rows(); ++r) sum += std::exp(m(r, col) - mx);
  max_out = mx;
  return mx + std::log(sum);
}

}  // namespace

double loss(const std::vector<Matrix>& outputs, const Targets& targets, LossKind kind) {
  check_targets(outputs, targets, kind);
  if (kind == LossKind::cross_entropy_final) {
    const Matrix& y = outputs.back();
    double total = 0.0;
    for (std::size_t b = 0; b < y.cols(); ++b) {
      double mx = 0.0;
      const double lse = log_sum_exp_column(y, b, mx);
      total += lse - y(targets.classes[b], b);
    }
    return total / static_cast<double>(y.cols());
  }
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t t = 0; t < outputs.size(); ++t) {
    auto o = outputs[t].values();
    auto g = targets.steps[t].values();
    for (std::size_t i = 0; i < o.size(); ++i) {
      const double d = o[i] - g[i];
      total += d * d;
    }
    count += o.size();
  }
  return total / static_cast<double>(count);
}

std::vector<Matrix> loss_gradient(const std::vector<Matrix>& outputs, const Targets& targets, LossKind kind) {
  check_targets(outputs, targets, kind);
  std::vector<Matrix> grads;
  grads.reserve(outputs.size());
  for (const auto& o : outputs) grads.emplace_back(o.rows(), o.cols(), 0.0);
  if (kind == LossKind::cross_entropy_final) {
    const Matrix& y = outputs.back();
    Matrix& g = grads.back();
    const double inv_n = 1.0 / static_cast<double>(y.cols());
    for (std::size_t b = 0; b < y.cols(); ++b) {
      double mx = 0.0;
      const double lse = log_sum_exp_column(y, b, mx);
      for (std::size_t r = 0; r < y.rows(); ++r) g(r, b) = std::exp(y(r, b) - lse) * inv_n;
      g(targets.classes[b], b) -= inv_n;
    }
    return grads;
  }
  std::size_t count = 0;
  for (const auto& o : outputs) count += o.size();
  const double scale = 2.0 / static_cast<double>(count);
  for (std::size_t t = 0; t < outputs.size(); ++t) {
    auto o = outputs[t].values();
    auto tg = targets.steps[t].values();
    auto g = grads[t].values();
    for (std::size_t i = 0; i < o.size(); ++i) g[i] = scale * (o[i] - tg[i]);
  }
  return grads;
}

std::optional<double> backward_into(const WeightSpace& ws, const std::vector<Matrix>& seq, const Targets& targets,
                                    LossKind kind, WeightSpace& grads) {
  for (auto& b : grads.blocks) b.mutable_values().fill(0.0);
  std::fill(grads.bias_h.begin(), grads.bias_h.end(), 0.0);
  std::fill(grads.bias_y.begin(), grads.bias_y.end(), 0.0);

  const auto states = run_sequence(ws, seq);
  std::vector<Matrix> outputs;
  outputs.reserve(states.size());
  for (const auto& s : states) outputs.push_back(s.y);
  const double value = loss(outputs, targets, kind);
  if (!std::isfinite(value)) return std::nullopt;
  for (const auto& s : states) {
    if (!all_finite(s.h.values()) || !all_finite(s.y.values())) return std::nullopt;
  }
  const auto d_outputs = loss_gradient(outputs, targets, kind);

  const std::size_t T = seq.size();
  const std::size_t n = seq.front().cols();
  const Matrix zero_h(ws.hidden_dim, n, 0.0);
  const Matrix zero_y(ws.output_dim, n, 0.0);
  Matrix d_pre_next(ws.hidden_dim, n, 0.0);  // dL/dA_{t+1}
  Matrix d_y_next(ws.output_dim, n, 0.0);    // dL/dY_{t+1} (total)

  for (std::size_t step = T; step-- > 0;) {
    const Matrix& h_prev = step == 0 ? zero_h : states[step - 1].h;
    const Matrix& y_prev = step == 0 ? zero_y : states[step - 1].y;

    // Total gradient reaching Y_t and H_t from the loss and from step t+1.
    Matrix d_y = d_outputs[step];
    Matrix d_h(ws.hidden_dim, n, 0.0);
    if (step + 1 < T) {
      kernels::accumulate_transposed_product(ws.block(BlockId::hy), d_pre_next, d_y);
      kernels::accumulate_transposed_product(ws.block(BlockId::yy), d_y_next, d_y);
      kernels::accumulate_transposed_product(ws.block(BlockId::hh), d_pre_next, d_h);
      kernels::accumulate_transposed_product(ws.block(BlockId::yh), d_y_next, d_h);
    }
    // Through the hidden activation.
    const Matrix& h_t = states[step].h;
    Matrix d_pre(ws.hidden_dim, n, 0.0);
    {
      auto dh = d_h.values();
      auto hv = h_t.values();
      auto dp = d_pre.values();
      for (std::size_t i = 0; i < dp.size(); ++i) dp[i] = dh[i] * activation_slope_from_output(ws.activation, hv[i]);
    }

    const Matrix& x_t = seq[step];
    kernels::accumulate_weight_gradient(d_pre, x_t, grads.block(BlockId::hx));
    kernels::accumulate_weight_gradient(d_pre, h_prev, grads.block(BlockId::hh));
    kernels::accumulate_weight_gradient(d_pre, y_prev, grads.block(BlockId::hy));
    kernels::accumulate_weight_gradient(d_y, x_t, grads.block(BlockId::yx));
    kernels::accumulate_weight_gradient(d_y, h_prev, grads.block(BlockId::yh));
    kernels::accumulate_weight_gradient(d_y, y_prev, grads.block(BlockId::yy));
    accumulate_bias_gradient(d_pre, grads.bias_h);
    accumulate_bias_gradient(d_y, grads.bias_y);

    d_pre_next = std::move(d_pre);
    d_y_next = std::move(d_y);
  }

  bool finite = all_finite(grads.bias_h) && all_finite(grads.bias_y);
  for (const auto& b : grads.blocks) finite = finite && all_finite(b.values().values());
  if (!finite) {
    for (auto& b : grads.blocks) b.mutable_values().fill(0.0);
    std::fill(grads.bias_h.begin(), grads.bias_h.end(), 0.0);
    std::fill(grads.bias_y.begin(), grads.bias_y.end(), 0.0);
    return std::nullopt;
  }
  return value;
}

GradientResult backward(const WeightSpace& ws, const std::vector<Matrix>& seq, const Targets& targets, LossKind kind) {
  GradientResult result{ws.zeros_like(), 0.0, false};
  const auto value = backward_into(ws, seq, targets, kind, result.grads);
  if (value) {
    result.loss = *value;
  } else {
    result.diverged = true;
    result.loss = std::numeric_limits<double>::quiet_NaN();
    for (auto& b : result.grads.blocks) b.mutable_values().fill(0.0);
    std::fill(result.grads.bias_h.begin(), result.grads.bias_h.end(), 0.0);
    std::fill(result.grads.bias_y.begin(), result.grads.bias_y.end(), 0.0);
  }
  return result;
}

}  // namespace brnn
