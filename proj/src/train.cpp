#include "brnn/train.hpp"

#include <cmath>
#include <numeric>

namespace brnn {

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) throw ConfigError("train: learning rate must be >= 0");
  if (batch_size < 1) throw ConfigError("train: batch size must be >= 1");
  if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
  adam().validate();
}

AdamConfig TrainConfig::adam() const {
  return AdamConfig{learning_rate, beta1, beta2, epsilon, grad_clip_norm};
}

Batch make_batch(const std::vector<Sequence>& seqs, std::span<const std::size_t> indices, LossKind kind) {
  if (indices.empty()) throw InputError("make_batch: empty batch");
  const Sequence& first = seqs[indices.front()];
  const std::size_t T = first.length();
  const std::size_t n = indices.size();
  Batch batch;
  batch.inputs.assign(T, Matrix(first.inputs.cols(), n, 0.0));
  if (kind == LossKind::mse_all_steps) batch.targets.steps.assign(T, Matrix(first.targets.cols(), n, 0.0));
  for (std::size_t b = 0; b < n; ++b) {
    const Sequence& s = seqs[indices[b]];
    if (s.length() != T) throw InputError("make_batch: sequences in one batch must share a length");
    for (std::size_t t = 0; t < T; ++t) {
      auto row = s.inputs.row(t);
      Matrix& x = batch.inputs[t];
      for (std::size_t j = 0; j < row.size(); ++j) x(j, b) = row[j];
      if (kind == LossKind::mse_all_steps) {
        auto trow = s.targets.row(t);
        Matrix& y = batch.targets.steps[t];
        for (std::size_t j = 0; j < trow.size(); ++j) y(j, b) = trow[j];
      }
    }
    if (kind == LossKind::cross_entropy_final) batch.targets.classes.push_back(s.label);
  }
  return batch;
}

namespace {

constexpr std::size_t kEvalBatch = 256;

struct RnnModel {
  WeightSpace& weights;
  WeightSpace grads;

  explicit RnnModel(WeightSpace& ws) : weights(ws), grads(ws.zeros_like()) {}

  std::optional<double> gradient(const Batch& b, LossKind kind) {
    return backward_into(weights, b.inputs, b.targets, kind, grads);
  }
  std::vector<ParamGroup> groups() { return param_groups(weights, grads); }
  std::vector<Matrix> outputs(const std::vector<Matrix>& inputs) const {
    std::vector<Matrix> out;
    for (auto& s : run_sequence(weights, inputs)) out.push_back(std::move(s.y));
    return out;
  }
};

struct RnnView {
  const WeightSpace& weights;

  std::vector<Matrix> outputs(const std::vector<Matrix>& inputs) const {
    std::vector<Matrix> out;
    for (auto& s : run_sequence(weights, inputs)) out.push_back(std::move(s.y));
    return out;
  }
};

struct LstmModel {
  LstmWeights& weights;
  LstmWeights grads;

  explicit LstmModel(LstmWeights& w)
      : weights(w), grads(LstmWeights::zeros(w.input_dim, w.hidden_dim, w.output_dim)) {}

  std::optional<double> gradient(const Batch& b, LossKind kind) {
    return lstm_backward_into(weights, b.inputs, b.targets, kind, grads);
  }
  std::vector<ParamGroup> groups() { return weights.param_groups(grads); }
  std::vector<Matrix> outputs(const std::vector<Matrix>& inputs) const { return lstm_outputs(weights, inputs); }
};

template <class Model>
Evaluation evaluate_model(const Model& model, const std::vector<Sequence>& seqs, LossKind kind) {
  if (seqs.empty()) throw InputError("evaluate: no sequences");
  std::vector<std::size_t> idx(seqs.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  double loss_sum = 0.0;
  std::size_t correct = 0;
  for (std::size_t start = 0; start < idx.size(); start += kEvalBatch) {
    const std::size_t len = std::min(kEvalBatch, idx.size() - start);
    const auto span = std::span<const std::size_t>(idx).subspan(start, len);
    const Batch b = make_batch(seqs, span, kind);
    const auto outputs = model.outputs(b.inputs);
    loss_sum += loss(outputs, b.targets, kind) * static_cast<double>(len);
    if (kind == LossKind::cross_entropy_final) {
      const Matrix& y = outputs.back();
      for (std::size_t c = 0; c < len; ++c) {
        std::size_t arg = 0;
        for (std::size_t r = 1; r < y.rows(); ++r) {
          if (y(r, c) > y(arg, c)) arg = r;
        }
        if (arg == b.targets.classes[c]) ++correct;
      }
    }
  }
  Evaluation ev;
  ev.loss = loss_sum / static_cast<double>(seqs.size());
  if (kind == LossKind::cross_entropy_final) ev.accuracy = static_cast<double>(correct) / static_cast<double>(seqs.size());
  return ev;
}

template <class Model>
std::vector<EpochLog> train_loop(Model& model, const SequenceDataset& data, const TrainConfig& cfg, AdamState& opt) {
  if (data.train.empty() || data.validation.empty()) {
    throw InputError("train: dataset needs non-empty train and validation splits (got " + std::to_string(data.train.size()) +
                     " / " + std::to_string(data.validation.size()) + ")");
  }
  cfg.validate();
  const AdamConfig adam = cfg.adam();
  RngStream shuffle_rng(cfg.seed, 2);
  std::vector<std::size_t> order(data.train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  std::vector<EpochLog> logs;
  bool diverged = false;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    if (!diverged) {
      seeded_shuffle(order.begin(), order.end(), shuffle_rng);
      double loss_sum = 0.0;
      for (std::size_t start = 0; start < order.size() && !diverged; start += cfg.batch_size) {
        const std::size_t len = std::min(cfg.batch_size, order.size() - start);
        const Batch b = make_batch(data.train, std::span<const std::size_t>(order).subspan(start, len), cfg.loss);
        const auto value = model.gradient(b, cfg.loss);
        if (!value) {
          diverged = true;
          break;
        }
        loss_sum += *value * static_cast<double>(len);
        const auto groups = model.groups();
        adam_update(groups, opt, adam);
      }
      if (!diverged) {
        const Evaluation ev = evaluate_model(model, data.validation, cfg.loss);
        if (std::isfinite(ev.loss)) {
          logs.push_back({epoch, loss_sum / static_cast<double>(order.size()), ev.loss, ev.accuracy, true});
          continue;
        }
        diverged = true;
      }
    }
    logs.push_back({epoch, kDivergedLoss, kDivergedLoss, std::nullopt, false});
  }
  return logs;
}

}  // namespace

Evaluation evaluate(const WeightSpace& ws, const std::vector<Sequence>& seqs, LossKind kind) {
  return evaluate_model(RnnView{ws}, seqs, kind);
}

TrainResult train_weights(const BlockSpec& spec, WeightSpace weights, const SequenceDataset& data, const TrainConfig& cfg) {
  if (data.input_dim != weights.input_dim || data.output_dim != weights.output_dim) {
    throw InputError("train: dataset dims " + std::to_string(data.input_dim) + "->" + std::to_string(data.output_dim) +
                     " do not match the model's " + std::to_string(weights.input_dim) + "->" +
                     std::to_string(weights.output_dim));
  }
  TrainResult result;
  AdamState opt;
  {
    RnnModel model(weights);
    result.logs = train_loop(model, data, cfg, opt);
  }
  result.stable = std::all_of(result.logs.begin(), result.logs.end(), [](const EpochLog& l) { return l.stable; });
  result.checkpoint.spec = spec;
  result.checkpoint.weights = std::move(weights);
  result.checkpoint.seed = cfg.seed;
  if (opt.step > 0) result.checkpoint.optimizer = std::move(opt);
  return result;
}

TrainResult train(const BlockSpec& spec, const SequenceDataset& data, const TrainConfig& cfg) {
  if (data.train.empty() || data.validation.empty()) {
    throw InputError("train: dataset needs non-empty train and validation splits");
  }
  RngStream init_rng(cfg.seed, 1);
  return train_weights(spec, instantiate(spec, init_rng), data, cfg);
}

LstmTrainResult lstm_train(double budget, std::size_t input_dim, std::size_t output_dim, const SequenceDataset& data,
                           const TrainConfig& cfg) {
  if (data.input_dim != input_dim || data.output_dim != output_dim) throw InputError("lstm_train: dataset dims mismatch");
  const std::size_t h = lstm_hidden_for_budget(budget, input_dim, output_dim);
  RngStream init_rng(cfg.seed, 1);
  LstmTrainResult result;
  result.weights = lstm_init(input_dim, h, output_dim, init_rng);
  AdamState opt;
  LstmModel model(result.weights);
  result.logs = train_loop(model, data, cfg, opt);
  result.stable = std::all_of(result.logs.begin(), result.logs.end(), [](const EpochLog& l) { return l.stable; });
  return result;
}

}  // namespace brnn
