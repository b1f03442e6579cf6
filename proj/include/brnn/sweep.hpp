#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "brnn/block_spec.hpp"
#include "brnn/datasets.hpp"
#include "brnn/rng.hpp"
#include "brnn/train.hpp"

namespace brnn {

inline constexpr int kRegistrySchemaVersion = 1;
// 6 means, 6 stds, 6 sparsities, learning rate, hidden proportion.
inline constexpr std::size_t kFeatureCount = 20;

std::array<std::string, kFeatureCount> feature_names();

struct HparamRanges {
  double mean_lo = -0.1, mean_hi = 0.1;      // uniform
  double std_lo = 0.01, std_hi = 1.0;        // log-uniform
  double sparsity_lo = 0.01, sparsity_hi = 1.0;  // uniform
  double lr_lo = 1e-4, lr_hi = 1e-2;         // log-uniform

  void validate() const;
};

struct Hparams {
  std::array<BlockConfig, kBlockCount> blocks{};
  double learning_rate = 1e-3;
};

// Blocks in hx..yy order, each drawing mean, std, sparsity; then the learning rate.
// A collapsed range (lo == hi) yields that constant.
Hparams sample_hparams(RngStream& rng, const HparamRanges& ranges);

enum class BudgetMode { fixed, free };

std::string_view budget_mode_name(BudgetMode m) noexcept;
BudgetMode parse_budget_mode(std::string_view name);

struct SweepConfig {
  std::size_t runs = 200;
  double budget = 10000;
  std::size_t epochs = 25;
  std::size_t batch_size = 32;
  std::optional<double> grad_clip_norm = 1.0;
  HparamRanges ranges;
  std::uint64_t seed = 0;
  BudgetMode budget_mode = BudgetMode::fixed;
  // Upper bound on the solved hidden width; very sparse draws would otherwise
  // reach thousands of units at a fixed budget.
  std::size_t max_hidden = 512;
  // Free mode: hidden width drawn uniformly from [min_hidden, max_hidden].
  std::size_t min_hidden = 4;
  std::size_t threads = 1;

  void validate() const;
};

struct RunRecord {
  std::uint64_t run_id = 0;
  std::string task;
  std::uint64_t seed = 0;  // training seed; instantiate() draws from stream (seed, 1)
  BlockSpec spec;
  double hidden_proportion = 0.0;
  double model_sparsity = 0.0;
  std::size_t total_params = 0;
  std::vector<double> val_losses;
  std::vector<std::optional<double>> val_accuracy;
  double min_val_loss = 0.0;
  bool stable = true;
  double wall_seconds = 0.0;  // kept in the timing sidecar, not the registry

  std::array<double, kFeatureCount> features() const;
  friend bool operator==(const RunRecord& a, const RunRecord& b);
};

// One record per line, no wall-clock data, so identical sweeps give identical files.
std::string record_to_json_line(const RunRecord& r);
RunRecord record_from_json_line(std::string_view line);

std::vector<RunRecord> load_registry(const std::filesystem::path& path);

// Sidecar next to the registry holding per-run wall-clock seconds.
std::filesystem::path timing_path(const std::filesystem::path& registry);

struct SweepOutcome {
  std::vector<RunRecord> added;
  std::size_t skipped_existing = 0;
  std::vector<std::string> skipped_infeasible;
};

using SweepLog = std::function<void(const std::string&)>;

// Runs ids 0..cfg.runs-1 that are not yet in the registry, appending each
// finished record in run_id order. Every run owns stream (cfg.seed, run_id).
SweepOutcome run_sweep(const SweepConfig& cfg, const SequenceDataset& data, const std::filesystem::path& registry,
                       const SweepLog& log = {});

// The spec a run would train, before instantiation. nullopt when infeasible.
std::optional<BlockSpec> sweep_spec(const SweepConfig& cfg, const SequenceDataset& data, const Hparams& hp,
                                    RngStream& rng, std::string* reason = nullptr);

// ---------------------------------------------------------------------------
// Bin summaries
// ---------------------------------------------------------------------------

enum class BinMetric { hidden_proportion, model_sparsity };

std::string_view bin_metric_name(BinMetric m) noexcept;
BinMetric parse_bin_metric(std::string_view name);

inline constexpr std::array<double, 6> kBinEdges = {0.0, 0.2, 0.4, 0.6, 0.8, 1.0};

// Index into [0,.2), [.2,.4), ..., [.8,1.0]; values at 1.0 land in the last bin.
std::size_t bin_index(double v);
std::string bin_label(std::size_t bin);

struct BinRow {
  double lo = 0.0;
  double hi = 0.0;
  std::optional<double> mean_min_loss;  // over stable runs only
  std::size_t n = 0;
  std::size_t n_unstable = 0;
  bool uc = false;  // more than half the runs unstable
};

struct BinTable {
  BinMetric metric = BinMetric::hidden_proportion;
  std::array<BinRow, 5> bins{};
};

BinTable bin_summary(const std::vector<RunRecord>& records, BinMetric metric);

}  // namespace brnn
