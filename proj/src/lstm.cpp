#include "brnn/lstm.hpp"

#include <cmath>

namespace brnn {

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// out += m * in   (m: r x k dense, in: k x n)
void gemm_acc(const Matrix& m, const Matrix& in, Matrix& out) {
  for (std::size_t i = 0; i < m.rows(); ++i) {
    double* o = out.row(i).data();
    for (std::size_t k = 0; k < m.cols(); ++k) {
      const double a = m(i, k);
      const double* src = in.row(k).data();
      for (std::size_t b = 0; b < in.cols(); ++b) o[b] += a * src[b];
    }
  }
}

// out += m^T * d
void gemm_t_acc(const Matrix& m, const Matrix& d, Matrix& out) {
  for (std::size_t i = 0; i < m.rows(); ++i) {
    const double* g = d.row(i).data();
    for (std::size_t k = 0; k < m.cols(); ++k) {
      const double a = m(i, k);
      double* dst = out.row(k).data();
      for (std::size_t b = 0; b < d.cols(); ++b) dst[b] += a * g[b];
    }
  }
}

// grad += d * in^T
void outer_acc(const Matrix& d, const Matrix& in, Matrix& grad) {
  for (std::size_t i = 0; i < d.rows(); ++i) {
    const double* g = d.row(i).data();
    for (std::size_t k = 0; k < in.rows(); ++k) {
      const double* src = in.row(k).data();
      double acc = 0.0;
      for (std::size_t b = 0; b < d.cols(); ++b) acc += g[b] * src[b];
      grad(i, k) += acc;
    }
  }
}

struct StepCache {
  Matrix gates;  // activated gates, 4h x n
  Matrix c;
  Matrix tanh_c;
  Matrix h;
};

std::vector<StepCache> run_cached(const LstmWeights& w, const std::vector<Matrix>& seq) {
  if (seq.empty()) throw InputError("lstm: empty sequence");
  const std::size_t h = w.hidden_dim;
  const std::size_t n = seq.front().cols();
  Matrix h_prev(h, n, 0.0);
  Matrix c_prev(h, n, 0.0);
  std::vector<StepCache> cache;
  cache.reserve(seq.size());
  for (const auto& x : seq) {
    if (x.rows() != w.input_dim || x.cols() != n) throw ShapeError("lstm: input shape " + shape_string(x) + " mismatch");
    StepCache s{Matrix(4 * h, n, 0.0), Matrix(h, n, 0.0), Matrix(h, n, 0.0), Matrix(h, n, 0.0)};
    gemm_acc(w.w, x, s.gates);
    gemm_acc(w.u, h_prev, s.gates);
    for (std::size_t r = 0; r < 4 * h; ++r) {
      const bool cell = r >= 2 * h && r < 3 * h;
      for (double& v : s.gates.row(r)) {
        v += w.b[r];
        v = cell ? std::tanh(v) : sigmoid(v);
      }
    }
    for (std::size_t r = 0; r < h; ++r) {
      for (std::size_t b = 0; b < n; ++b) {
        const double i = s.gates(r, b);
        const double f = s.gates(h + r, b);
        const double g = s.gates(2 * h + r, b);
        const double o = s.gates(3 * h + r, b);
        s.c(r, b) = f * c_prev(r, b) + i * g;
        s.tanh_c(r, b) = std::tanh(s.c(r, b));
        s.h(r, b) = o * s.tanh_c(r, b);
      }
    }
    h_prev = s.h;
    c_prev = s.c;
    cache.push_back(std::move(s));
  }
  return cache;
}

Matrix read_out(const LstmWeights& w, const Matrix& h) {
  Matrix y(w.output_dim, h.cols(), 0.0);
  gemm_acc(w.w_y, h, y);
  for (std::size_t r = 0; r < y.rows(); ++r) {
    for (double& v : y.row(r)) v += w.b_y[r];
  }
  return y;
}

}  // namespace

LstmWeights LstmWeights::zeros(std::size_t input_dim, std::size_t hidden_dim, std::size_t output_dim) {
  LstmWeights w;
  w.input_dim = input_dim;
  w.hidden_dim = hidden_dim;
  w.output_dim = output_dim;
  w.w = Matrix(4 * hidden_dim, input_dim, 0.0);
  w.u = Matrix(4 * hidden_dim, hidden_dim, 0.0);
  w.b.assign(4 * hidden_dim, 0.0);
  w.w_y = Matrix(output_dim, hidden_dim, 0.0);
  w.b_y.assign(output_dim, 0.0);
  return w;
}

std::size_t LstmWeights::parameter_count() const noexcept {
  return lstm_param_count(hidden_dim, input_dim, output_dim);
}

std::vector<ParamGroup> LstmWeights::param_groups(const LstmWeights& grads) {
  return {
      {w.values(), grads.w.values(), nullptr},
      {u.values(), grads.u.values(), nullptr},
      {b, grads.b, nullptr},
      {w_y.values(), grads.w_y.values(), nullptr},
      {b_y, grads.b_y, nullptr},
  };
}

std::size_t lstm_param_count(std::size_t hidden, std::size_t input_dim, std::size_t output_dim) noexcept {
  return 4 * (hidden * input_dim + hidden * hidden + hidden) + output_dim * hidden + output_dim;
}

std::size_t lstm_hidden_for_budget(double budget, std::size_t input_dim, std::size_t output_dim) {
  if (static_cast<double>(lstm_param_count(1, input_dim, output_dim)) > budget) {
    throw ConfigError("lstm: budget " + std::to_string(budget) + " cannot hold hidden size 1");
  }
  std::size_t h = 1;
  while (static_cast<double>(lstm_param_count(h + 1, input_dim, output_dim)) <= budget) ++h;
  return h;
}

LstmWeights lstm_init(std::size_t input_dim, std::size_t hidden_dim, std::size_t output_dim, RngStream& rng) {
  LstmWeights w = LstmWeights::zeros(input_dim, hidden_dim, output_dim);
  const double k = 1.0 / std::sqrt(static_cast<double>(hidden_dim));
  for (double& v : w.w.values()) v = rng.uniform(-k, k);
  for (double& v : w.u.values()) v = rng.uniform(-k, k);
  for (double& v : w.b) v = rng.uniform(-k, k);
  for (double& v : w.w_y.values()) v = rng.uniform(-k, k);
  for (double& v : w.b_y) v = rng.uniform(-k, k);
  return w;
}

LstmTrace lstm_trace(const LstmWeights& w, const std::vector<Matrix>& seq) {
  LstmTrace trace;
  for (auto& s : run_cached(w, seq)) {
    trace.h.push_back(std::move(s.h));
    trace.c.push_back(std::move(s.c));
  }
  return trace;
}

std::vector<Matrix> lstm_outputs(const LstmWeights& w, const std::vector<Matrix>& seq) {
  std::vector<Matrix> out;
  for (const auto& s : run_cached(w, seq)) out.push_back(read_out(w, s.h));
  return out;
}

std::optional<double> lstm_backward_into(const LstmWeights& w, const std::vector<Matrix>& seq, const Targets& targets,
                                         LossKind kind, LstmWeights& grads) {
  grads.w.fill(0.0);
  grads.u.fill(0.0);
  std::fill(grads.b.begin(), grads.b.end(), 0.0);
  grads.w_y.fill(0.0);
  std::fill(grads.b_y.begin(), grads.b_y.end(), 0.0);

  const auto cache = run_cached(w, seq);
  std::vector<Matrix> outputs;
  for (const auto& s : cache) outputs.push_back(read_out(w, s.h));
  const double value = loss(outputs, targets, kind);
  if (!std::isfinite(value)) return std::nullopt;
  const auto d_out = loss_gradient(outputs, targets, kind);

  const std::size_t h = w.hidden_dim;
  const std::size_t n = seq.front().cols();
  const Matrix zeros_h(h, n, 0.0);
  Matrix dh_next(h, n, 0.0);
  Matrix dc_next(h, n, 0.0);
  for (std::size_t t = seq.size(); t-- > 0;) {
    const auto& s = cache[t];
    const Matrix& h_prev = t == 0 ? zeros_h : cache[t - 1].h;
    const Matrix& c_prev = t == 0 ? zeros_h : cache[t - 1].c;

    outer_acc(d_out[t], s.h, grads.w_y);
    for (std::size_t r = 0; r < w.output_dim; ++r) {
      for (double v : d_out[t].row(r)) grads.b_y[r] += v;
    }
    Matrix dh = dh_next;
    gemm_t_acc(w.w_y, d_out[t], dh);

    Matrix d_pre(4 * h, n, 0.0);
    Matrix dc_prev(h, n, 0.0);
    for (std::size_t r = 0; r < h; ++r) {
      for (std::size_t b = 0; b < n; ++b) {
        const double i = s.gates(r, b);
        const double f = s.gates(h + r, b);
        const double g = s.gates(2 * h + r, b);
        const double o = s.gates(3 * h + r, b);
        const double tc = s.tanh_c(r, b);
        const double dc = dc_next(r, b) + dh(r, b) * o * (1.0 - tc * tc);
        d_pre(r, b) = dc * g * i * (1.0 - i);
        d_pre(h + r, b) = dc * c_prev(r, b) * f * (1.0 - f);
        d_pre(2 * h + r, b) = dc * i * (1.0 - g * g);
        d_pre(3 * h + r, b) = dh(r, b) * tc * o * (1.0 - o);
        dc_prev(r, b) = dc * f;
      }
    }
    outer_acc(d_pre, seq[t], grads.w);
    outer_acc(d_pre, h_prev, grads.u);
    for (std::size_t r = 0; r < 4 * h; ++r) {
      for (double v : d_pre.row(r)) grads.b[r] += v;
    }
    Matrix dh_prev(h, n, 0.0);
    gemm_t_acc(w.u, d_pre, dh_prev);
    dh_next = std::move(dh_prev);
    dc_next = std::move(dc_prev);
  }
  const bool finite = all_finite(grads.w.values()) && all_finite(grads.u.values()) && all_finite(grads.b) &&
                      all_finite(grads.w_y.values()) && all_finite(grads.b_y);
  if (!finite) return std::nullopt;
  return value;
}

}  // namespace brnn
