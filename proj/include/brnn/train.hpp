#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "brnn/block_spec.hpp"
#include "brnn/datasets.hpp"
#include "brnn/io.hpp"
#include "brnn/lstm.hpp"
#include "brnn/optim.hpp"
#include "brnn/rnn.hpp"

namespace brnn {

// Loss recorded for epochs at and after a divergence, keeping logs rectangular.
inline constexpr double kDivergedLoss = 1e9;

struct TrainConfig {
  double learning_rate = 1e-3;
  std::size_t batch_size = 32;
  std::size_t epochs = 25;
  std::optional<double> grad_clip_norm = 1.0;
  std::uint64_t seed = 0;
  LossKind loss = LossKind::cross_entropy_final;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void validate() const;
  AdamConfig adam() const;
};

struct EpochLog {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_loss = 0.0;
  std::optional<double> val_accuracy;  // classification tasks only
  bool stable = true;

  friend bool operator==(const EpochLog&, const EpochLog&) = default;
};

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<EpochLog> logs;
  bool stable = true;
};

// A mini-batch laid out for the recurrent kernels: one |x| x n matrix per step.
struct Batch {
  std::vector<Matrix> inputs;
  Targets targets;
};

Batch make_batch(const std::vector<Sequence>& seqs, std::span<const std::size_t> indices, LossKind kind);

struct Evaluation {
  double loss = 0.0;
  std::optional<double> accuracy;
};

Evaluation evaluate(const WeightSpace& ws, const std::vector<Sequence>& seqs, LossKind kind);

// Instantiates `spec` from stream (cfg.seed, 1), shuffles from (cfg.seed, 2), then
// runs cfg.epochs epochs of mini-batch BPTT + Adam with a validation pass after
// each. A non-finite loss stops training; the remaining epochs are logged with
// kDivergedLoss and stable = false.
TrainResult train(const BlockSpec& spec, const SequenceDataset& data, const TrainConfig& cfg);

// Same loop over a prepared weight space.
TrainResult train_weights(const BlockSpec& spec, WeightSpace weights, const SequenceDataset& data, const TrainConfig& cfg);

struct LstmTrainResult {
  LstmWeights weights;
  std::vector<EpochLog> logs;
  bool stable = true;
};

// Hidden size = largest h whose LSTM parameter count fits `budget`.
LstmTrainResult lstm_train(double budget, std::size_t input_dim, std::size_t output_dim, const SequenceDataset& data,
                           const TrainConfig& cfg);

}  // namespace brnn
