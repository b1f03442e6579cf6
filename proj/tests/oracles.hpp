#pragma once

// Reference computations shared by the unit tests and the acceptance runner.

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <optional>
#include <set>
#include <vector>

#include "brnn/block_spec.hpp"
#include "brnn/lstm.hpp"
#include "brnn/rnn.hpp"

namespace oracle {

using brnn::Matrix;

struct Worst {
  double rel = 0.0;
  std::size_t checked = 0;
};

// |a - n| / max(|a|, |n|, floor). The floor keeps entries whose true gradient is
// ~0 from being judged on roundoff alone.
inline double relative_error(double analytic, double numeric, double floor = 1e-6) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

// Central differences for one scalar parameter.
inline double central_difference(double& param, const std::function<double()>& f, double step) {
  const double saved = param;
  param = saved + step;
  const double up = f();
  param = saved - step;
  const double down = f();
  param = saved;
  return (up - down) / (2.0 * step);
}

inline double block_loss(const brnn::WeightSpace& ws, const std::vector<Matrix>& seq, const brnn::Targets& targets,
                         brnn::LossKind kind) {
  std::vector<Matrix> outs;
  for (auto& s : brnn::run_sequence(ws, seq)) outs.push_back(std::move(s.y));
  return brnn::loss(outs, targets, kind);
}

// Compares backward() with central differences on every trainable entry and bias.
inline Worst check_block_gradients(brnn::WeightSpace ws, const std::vector<Matrix>& seq, const brnn::Targets& targets,
                                   brnn::LossKind kind, double step = 1e-5) {
  const brnn::GradientResult g = brnn::backward(ws, seq, targets, kind);
  Worst w;
  auto f = [&] { return block_loss(ws, seq, targets, kind); };
  for (brnn::BlockId b : brnn::kAllBlocks) {
    auto& values = ws.block(b).mutable_values();
    const auto& grad = g.grads.block(b).values();
    for (std::uint32_t idx : ws.block(b).pattern().flat()) {
      const double numeric = central_difference(values.values()[idx], f, step);
      w.rel = std::max(w.rel, relative_error(grad.values()[idx], numeric));
      ++w.checked;
    }
  }
  for (std::size_t i = 0; i < ws.bias_h.size(); ++i) {
    w.rel = std::max(w.rel, relative_error(g.grads.bias_h[i], central_difference(ws.bias_h[i], f, step)));
    ++w.checked;
  }
  for (std::size_t i = 0; i < ws.bias_y.size(); ++i) {
    w.rel = std::max(w.rel, relative_error(g.grads.bias_y[i], central_difference(ws.bias_y[i], f, step)));
    ++w.checked;
  }
  return w;
}

inline Worst check_lstm_gradients(brnn::LstmWeights w, const std::vector<Matrix>& seq, const brnn::Targets& targets,
                                  brnn::LossKind kind, double step = 1e-5) {
  brnn::LstmWeights grads = brnn::LstmWeights::zeros(w.input_dim, w.hidden_dim, w.output_dim);
  brnn::lstm_backward_into(w, seq, targets, kind, grads);
  auto f = [&] { return brnn::loss(brnn::lstm_outputs(w, seq), targets, kind); };
  Worst out;
  auto sweep = [&](std::span<double> params, std::span<const double> analytic) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      out.rel = std::max(out.rel, relative_error(analytic[i], central_difference(params[i], f, step)));
      ++out.checked;
    }
  };
  sweep(w.w.values(), grads.w.values());
  sweep(w.u.values(), grads.u.values());
  sweep(w.b, grads.b);
  sweep(w.w_y.values(), grads.w_y.values());
  sweep(w.b_y, grads.b_y);
  return out;
}

// Textbook Elman network: h_t = tanh(Wxh x_t + Whh h_{t-1} + b), y_t = Why h_t + c.
struct ClassicRnn {
  Matrix w_xh, w_hh, w_hy;
  std::vector<double> b_h, b_y;

  struct Trace {
    std::vector<std::vector<double>> h;
    std::vector<std::vector<double>> y;
  };

  // One sequence, columns of `xs` ignored beyond `col`.
  Trace run(const std::vector<Matrix>& xs, std::size_t col) const {
    const std::size_t nh = w_hh.rows(), ny = w_hy.rows(), nx = w_xh.cols();
    std::vector<double> h(nh, 0.0);
    Trace tr;
    for (const Matrix& x : xs) {
      std::vector<double> next(nh);
      for (std::size_t i = 0; i < nh; ++i) {
        double a = b_h[i];
        for (std::size_t j = 0; j < nx; ++j) a += w_xh(i, j) * x(j, col);
        for (std::size_t j = 0; j < nh; ++j) a += w_hh(i, j) * h[j];
        next[i] = std::tanh(a);
      }
      h = next;
      std::vector<double> y(ny);
      for (std::size_t i = 0; i < ny; ++i) {
        double a = b_y[i];
        for (std::size_t j = 0; j < nh; ++j) a += w_hy(i, j) * h[j];
        y[i] = a;
      }
      tr.h.push_back(h);
      tr.y.push_back(y);
    }
    return tr;
  }
};

struct GridPoint {
  std::size_t h = 0;
  double s = 0.0;
  double hp = 0.0;
  double total = 0.0;
};

// Exhaustive search over h in [1, max_h] and s in {0.01, ..., 1.00}, written
// independently of the solver: one sparsified top-row block, the rest dense.
inline std::optional<GridPoint> grid_oracle(std::size_t x, std::size_t y, double budget, double target, std::size_t max_h) {
  const bool sparsify_input = x >= y;
  const double dx = double(x), dy = double(y);
  GridPoint best;
  bool have = false;
  for (int k = 1; k <= 100; ++k) {
    const double s = k / 100.0;
    for (std::size_t hi = 1; hi <= max_h; ++hi) {
      const double h = double(hi);
      const double top_in = sparsify_input ? s * h * dx : h * dx;
      const double top_out = sparsify_input ? h * dy : s * h * dy;
      const double total = top_in + h * h + top_out + dy * dx + dy * h + dy * dy + h + dy;
      if (total > budget) break;
      const double hp = h * h / (top_in + h * h + top_out);
      const GridPoint p{hi, s, hp, total};
      if (!have) {
        best = p;
        have = true;
        continue;
      }
      const double gp = std::abs(p.hp - target), gb = std::abs(best.hp - target);
      bool better;
      if (std::abs(gp - gb) > 1e-12) {
        better = gp < gb;
      } else if (p.total != best.total) {
        better = p.total > best.total;
      } else {
        better = p.h < best.h;
      }
      if (better) best = p;
    }
  }
  if (!have) return std::nullopt;
  return best;
}

// Independent recursive partition: at each node try every feature and every
// gap between distinct sorted values, keep the lowest summed squared error.
struct TreeOracle {
  const std::vector<std::vector<double>>& x;
  const std::vector<double>& y;
  std::size_t max_depth;
  std::size_t min_leaf;

  struct Node {
    int feature = -1;
    double threshold = 0;
    std::unique_ptr<Node> l, r;
    double value = 0;
  };

  static double sse(const std::vector<std::size_t>& idx, const std::vector<double>& y) {
    double m = 0;
    for (auto i : idx) m += y[i];
    m /= static_cast<double>(idx.size());
    double s = 0;
    for (auto i : idx) s += (y[i] - m) * (y[i] - m);
    return s;
  }

  std::unique_ptr<Node> build(std::vector<std::size_t> idx, std::size_t depth) {
    auto node = std::make_unique<Node>();
    double sum = 0;
    for (auto i : idx) sum += y[i];
    node->value = sum / static_cast<double>(idx.size());
    const double parent = sse(idx, y);
    if (depth >= max_depth || idx.size() < 2 * min_leaf || parent == 0.0) return node;
    double best = parent;
    int bf = -1;
    double bt = 0;
    for (std::size_t f = 0; f < x[0].size(); ++f) {
      std::set<double> values;
      for (auto i : idx) values.insert(x[i][f]);
      for (auto it = values.begin(); std::next(it) != values.end(); ++it) {
        const double t = *it + (*std::next(it) - *it) / 2.0;
        std::vector<std::size_t> l, r;
        for (auto i : idx) (x[i][f] <= t ? l : r).push_back(i);
        if (l.size() < min_leaf || r.size() < min_leaf) continue;
        const double s = sse(l, y) + sse(r, y);
        if (s < best - 1e-9) {
          best = s;
          bf = static_cast<int>(f);
          bt = t;
        }
      }
    }
    if (bf < 0) return node;
    node->feature = bf;
    node->threshold = bt;
    std::vector<std::size_t> l, r;
    for (auto i : idx) (x[i][static_cast<std::size_t>(bf)] <= bt ? l : r).push_back(i);
    node->l = build(l, depth + 1);
    node->r = build(r, depth + 1);
    return node;
  }

  static double predict(const Node* n, const std::vector<double>& v) {
    while (n->feature >= 0) n = v[static_cast<std::size_t>(n->feature)] <= n->threshold ? n->l.get() : n->r.get();
    return n->value;
  }
};

}  // namespace oracle
