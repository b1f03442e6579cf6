#include "brnn/sweep.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <fstream>
#include <mutex>
#include <set>
#include <thread>

#include <json.hpp>

#include "brnn/io.hpp"

namespace brnn {

using ojson = nlohmann::ordered_json;

std::array<std::string, kFeatureCount> feature_names() {
  std::array<std::string, kFeatureCount> names;
  std::size_t k = 0;
  for (const char* field : {"mean", "std", "sparsity"}) {
    for (BlockId b : kAllBlocks) names[k++] = std::string(field) + "_" + std::string(block_name(b));
  }
  names[k++] = "learning_rate";
  names[k++] = "hidden_proportion";
  return names;
}

void HparamRanges::validate() const {
  auto check = [](double lo, double hi, const char* what) {
    if (!std::isfinite(lo) || !std::isfinite(hi) || lo > hi) {
      throw ConfigError(std::string("sampling range for ") + what + " must satisfy lo <= hi (got " + format_double(lo) +
                        ", " + format_double(hi) + ")");
    }
  };
  check(mean_lo, mean_hi, "mean");
  check(std_lo, std_hi, "std");
  check(sparsity_lo, sparsity_hi, "sparsity");
  check(lr_lo, lr_hi, "learning rate");
  if (std_lo <= 0.0) throw ConfigError("log-uniform std range needs lo > 0");
  if (lr_lo <= 0.0) throw ConfigError("log-uniform learning-rate range needs lo > 0");
  if (sparsity_lo < 0.0 || sparsity_hi > 1.0) throw ConfigError("sparsity range must lie within [0, 1]");
}

namespace {

double draw_uniform(RngStream& rng, double lo, double hi) {
  const double u = rng.uniform();
  return lo == hi ? lo : lo + (hi - lo) * u;
}

double draw_log_uniform(RngStream& rng, double lo, double hi) {
  const double u = rng.uniform();
  if (lo == hi) return lo;
  return std::exp(std::log(lo) + (std::log(hi) - std::log(lo)) * u);
}

}  // namespace

Hparams sample_hparams(RngStream& rng, const HparamRanges& ranges) {
  ranges.validate();
  Hparams hp;
  for (auto& c : hp.blocks) {
    c.mean = draw_uniform(rng, ranges.mean_lo, ranges.mean_hi);
    c.std = draw_log_uniform(rng, ranges.std_lo, ranges.std_hi);
    c.sparsity = draw_uniform(rng, ranges.sparsity_lo, ranges.sparsity_hi);
  }
  hp.learning_rate = draw_log_uniform(rng, ranges.lr_lo, ranges.lr_hi);
  return hp;
}

std::string_view budget_mode_name(BudgetMode m) noexcept { return m == BudgetMode::fixed ? "fixed" : "free"; }

BudgetMode parse_budget_mode(std::string_view name) {
  if (name == "fixed") return BudgetMode::fixed;
  if (name == "free") return BudgetMode::free;
  throw ConfigError("unknown budget mode '" + std::string(name) + "' (expected fixed or free)");
}

void SweepConfig::validate() const {
  if (runs < 1) throw ConfigError("sweep: run count must be >= 1");
  if (epochs < 1) throw ConfigError("sweep: epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("sweep: batch size must be >= 1");
  if (!(budget > 0.0) || !std::isfinite(budget)) throw ConfigError("sweep: budget must be positive");
  if (max_hidden < 1 || min_hidden < 1 || min_hidden > max_hidden) {
    throw ConfigError("sweep: hidden bounds must satisfy 1 <= min_hidden <= max_hidden");
  }
  ranges.validate();
}

std::array<double, kFeatureCount> RunRecord::features() const {
  std::array<double, kFeatureCount> f{};
  for (std::size_t i = 0; i < kBlockCount; ++i) {
    f[i] = spec.blocks[i].mean;
    f[kBlockCount + i] = spec.blocks[i].std;
    f[2 * kBlockCount + i] = spec.blocks[i].sparsity;
  }
  f[18] = spec.learning_rate;
  f[19] = hidden_proportion;
  return f;
}

bool operator==(const RunRecord& a, const RunRecord& b) {
  return a.run_id == b.run_id && a.task == b.task && a.seed == b.seed && a.spec == b.spec &&
         a.hidden_proportion == b.hidden_proportion && a.model_sparsity == b.model_sparsity &&
         a.total_params == b.total_params && a.val_losses == b.val_losses && a.val_accuracy == b.val_accuracy &&
         a.min_val_loss == b.min_val_loss && a.stable == b.stable;
}

std::string record_to_json_line(const RunRecord& r) {
  ojson blocks = ojson::object();
  for (BlockId b : kAllBlocks) {
    const auto& c = r.spec.block(b);
    blocks[std::string(block_name(b))] = ojson{{"mean", c.mean}, {"std", c.std}, {"sparsity", c.sparsity}};
  }
  ojson acc = ojson::array();
  for (const auto& a : r.val_accuracy) acc.push_back(a ? ojson(*a) : ojson(nullptr));
  ojson j;
  j["schema_version"] = kRegistrySchemaVersion;
  j["run_id"] = r.run_id;
  j["task"] = r.task;
  j["seed"] = r.seed;
  j["spec"] = ojson{{"input_dim", r.spec.input_dim},
                    {"hidden_dim", r.spec.hidden_dim},
                    {"output_dim", r.spec.output_dim},
                    {"activation", std::string(activation_name(r.spec.activation))},
                    {"learning_rate", r.spec.learning_rate},
                    {"blocks", blocks}};
  j["hidden_proportion"] = r.hidden_proportion;
  j["model_sparsity"] = r.model_sparsity;
  j["total_params"] = r.total_params;
  j["val_losses"] = r.val_losses;
  j["val_accuracy"] = acc;
  j["min_val_loss"] = r.min_val_loss;
  j["stable"] = r.stable;
  return j.dump();
}

RunRecord record_from_json_line(std::string_view line) {
  ojson j;
  try {
    j = ojson::parse(line);
  } catch (const ojson::parse_error& e) {
    throw ParseError(std::string("registry: ") + e.what(), e.byte);
  }
  try {
    const int version = j.at("schema_version").get<int>();
    if (version != kRegistrySchemaVersion) {
      throw ParseError("registry: schema_version " + std::to_string(version) + " is not supported (expected " +
                           std::to_string(kRegistrySchemaVersion) + ")",
                       0);
    }
    RunRecord r;
    r.run_id = j.at("run_id").get<std::uint64_t>();
    r.task = j.at("task").get<std::string>();
    r.seed = j.at("seed").get<std::uint64_t>();
    const auto& s = j.at("spec");
    r.spec.input_dim = s.at("input_dim").get<std::size_t>();
    r.spec.hidden_dim = s.at("hidden_dim").get<std::size_t>();
    r.spec.output_dim = s.at("output_dim").get<std::size_t>();
    r.spec.activation = parse_activation(s.at("activation").get<std::string>());
    r.spec.learning_rate = s.at("learning_rate").get<double>();
    for (BlockId b : kAllBlocks) {
      const auto& c = s.at("blocks").at(std::string(block_name(b)));
      r.spec.block(b) = BlockConfig{c.at("mean").get<double>(), c.at("std").get<double>(), c.at("sparsity").get<double>()};
    }
    r.hidden_proportion = j.at("hidden_proportion").get<double>();
    r.model_sparsity = j.at("model_sparsity").get<double>();
    r.total_params = j.at("total_params").get<std::size_t>();
    r.val_losses = j.at("val_losses").get<std::vector<double>>();
    for (const auto& a : j.at("val_accuracy")) {
      r.val_accuracy.push_back(a.is_null() ? std::nullopt : std::optional<double>(a.get<double>()));
    }
    r.min_val_loss = j.at("min_val_loss").get<double>();
    r.stable = j.at("stable").get<bool>();
    r.spec.validate();
    return r;
  } catch (const ojson::exception& e) {
    throw ParseError(std::string("registry: malformed record: ") + e.what(), 0);
  }
}

std::vector<RunRecord> load_registry(const std::filesystem::path& path) {
  std::vector<RunRecord> out;
  if (!std::filesystem::exists(path)) return out;
  const std::string text = read_text_file(path);
  std::size_t pos = 0;
  std::size_t line_no = 0;
  while (pos < text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string::npos) nl = text.size();
    ++line_no;
    const std::string_view line(text.data() + pos, nl - pos);
    if (!line.empty()) {
      try {
        out.push_back(record_from_json_line(line));
      } catch (const ParseError& e) {
        throw ParseError(path.string() + " line " + std::to_string(line_no) + ": " + e.what(), pos + e.offset());
      }
    }
    pos = nl + 1;
  }
  return out;
}

std::filesystem::path timing_path(const std::filesystem::path& registry) {
  std::filesystem::path p = registry;
  p += ".timing.jsonl";
  return p;
}

std::optional<BlockSpec> sweep_spec(const SweepConfig& cfg, const SequenceDataset& data, const Hparams& hp,
                                    RngStream& rng, std::string* reason) {
  BlockSpec spec;
  spec.input_dim = data.input_dim;
  spec.output_dim = data.output_dim;
  spec.hidden_dim = 1;
  spec.blocks = hp.blocks;
  spec.learning_rate = hp.learning_rate;
  if (cfg.budget_mode == BudgetMode::free) {
    spec.hidden_dim = cfg.min_hidden + rng.uniform_index(cfg.max_hidden - cfg.min_hidden + 1);
    return spec;
  }
  try {
    spec.hidden_dim = solve_hidden_dim(spec, cfg.budget, cfg.max_hidden);
  } catch (const ConfigError& e) {
    if (reason) *reason = e.what();
    return std::nullopt;
  }
  return spec;
}

namespace {

struct RunSlot {
  bool done = false;
  std::optional<RunRecord> record;
  std::string skip_reason;
};

RunSlot execute_run(const SweepConfig& cfg, const SequenceDataset& data, std::uint64_t run_id) {
  const auto t0 = std::chrono::steady_clock::now();
  RngStream base(cfg.seed, run_id);
  RngStream hp_rng = base.split(1);
  RngStream hidden_rng = base.split(2);
  const Hparams hp = sample_hparams(hp_rng, cfg.ranges);
  RunSlot slot;
  slot.done = true;
  const auto spec = sweep_spec(cfg, data, hp, hidden_rng, &slot.skip_reason);
  if (!spec) return slot;

  TrainConfig tc;
  tc.learning_rate = hp.learning_rate;
  tc.batch_size = cfg.batch_size;
  tc.epochs = cfg.epochs;
  tc.grad_clip_norm = cfg.grad_clip_norm;
  tc.seed = base.split(3).next_u64();
  tc.loss = data.loss_kind;
  const TrainResult result = train(*spec, data, tc);

  RunRecord r;
  r.run_id = run_id;
  r.task = std::string(task_name(data.task));
  r.seed = tc.seed;
  r.spec = *spec;
  const CountReport counts = count_report(result.checkpoint.weights);
  r.hidden_proportion = counts.hidden_proportion.value_or(0.0);
  r.model_sparsity = counts.model_sparsity;
  r.total_params = counts.total;
  for (const auto& log : result.logs) {
    r.val_losses.push_back(log.val_loss);
    r.val_accuracy.push_back(log.val_accuracy);
  }
  r.min_val_loss = *std::min_element(r.val_losses.begin(), r.val_losses.end());
  r.stable = result.stable;
  r.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  slot.record = std::move(r);
  return slot;
}

}  // namespace

SweepOutcome run_sweep(const SweepConfig& cfg, const SequenceDataset& data, const std::filesystem::path& registry,
                       const SweepLog& log) {
  cfg.validate();
  if (data.train.empty() || data.validation.empty()) throw InputError("sweep: dataset needs train and validation splits");

  std::set<std::uint64_t> existing;
  for (const auto& r : load_registry(registry)) existing.insert(r.run_id);

  SweepOutcome outcome;
  std::vector<std::uint64_t> pending;
  for (std::uint64_t id = 0; id < cfg.runs; ++id) {
    if (existing.count(id)) {
      ++outcome.skipped_existing;
    } else {
      pending.push_back(id);
    }
  }
  if (pending.empty()) return outcome;

  if (registry.has_parent_path()) std::filesystem::create_directories(registry.parent_path());
  std::ofstream out(registry, std::ios::binary | std::ios::app);
  std::ofstream timing(timing_path(registry), std::ios::binary | std::ios::app);
  if (!out || !timing) throw InputError("sweep: cannot append to " + registry.string());

  std::vector<RunSlot> slots(pending.size());
  std::mutex mu;
  std::size_t next_write = 0;
  std::atomic<std::size_t> next_job{0};
  std::exception_ptr failure;

  // Completed runs are written strictly in run_id order, whatever order workers finish in.
  auto flush_ready = [&] {
    while (next_write < slots.size() && slots[next_write].done) {
      RunSlot& s = slots[next_write];
      const std::uint64_t id = pending[next_write];
      if (s.record) {
        out << record_to_json_line(*s.record) << '\n';
        out.flush();
        timing << ojson{{"run_id", id}, {"wall_seconds", s.record->wall_seconds}}.dump() << '\n';
        timing.flush();
        if (log) {
          log("run " + std::to_string(id) + ": h=" + std::to_string(s.record->spec.hidden_dim) +
              " hp=" + format_double(s.record->hidden_proportion) + " min_loss=" + format_double(s.record->min_val_loss) +
              (s.record->stable ? "" : " (unstable)"));
        }
        outcome.added.push_back(std::move(*s.record));
        s.record.reset();
      } else {
        const std::string msg = "run " + std::to_string(id) + " skipped: " + s.skip_reason;
        outcome.skipped_infeasible.push_back(msg);
        if (log) log(msg);
      }
      ++next_write;
    }
  };

  auto worker = [&] {
    for (;;) {
      const std::size_t job = next_job.fetch_add(1);
      if (job >= pending.size()) return;
      {
        std::lock_guard lock(mu);
        if (failure) return;
      }
      try {
        RunSlot s = execute_run(cfg, data, pending[job]);
        std::lock_guard lock(mu);
        slots[job] = std::move(s);
        flush_ready();
      } catch (...) {
        std::lock_guard lock(mu);
        if (!failure) failure = std::current_exception();
        return;
      }
    }
  };

  const std::size_t n_threads = std::clamp<std::size_t>(cfg.threads, 1, pending.size());
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t i = 0; i < n_threads; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);
  return outcome;
}

std::string_view bin_metric_name(BinMetric m) noexcept {
  return m == BinMetric::hidden_proportion ? "hidden_proportion" : "model_sparsity";
}

BinMetric parse_bin_metric(std::string_view name) {
  if (name == "hidden_proportion" || name == "hp") return BinMetric::hidden_proportion;
  if (name == "model_sparsity" || name == "sparsity") return BinMetric::model_sparsity;
  throw ConfigError("unknown bin metric '" + std::string(name) + "'");
}

std::size_t bin_index(double v) {
  if (!(v >= 0.0 && v <= 1.0)) throw InputError("bin value " + format_double(v) + " lies outside [0, 1]");
  std::size_t bin = 0;
  for (std::size_t i = 1; i + 1 < kBinEdges.size(); ++i) {
    if (v >= kBinEdges[i]) bin = i;
  }
  return bin;
}

std::string bin_label(std::size_t bin) { return format_double(kBinEdges[bin]) + "-" + format_double(kBinEdges[bin + 1]); }

BinTable bin_summary(const std::vector<RunRecord>& records, BinMetric metric) {
  if (records.empty()) throw InputError("bins: no records");
  BinTable table;
  table.metric = metric;
  std::array<double, 5> sums{};
  for (std::size_t i = 0; i < 5; ++i) {
    table.bins[i].lo = kBinEdges[i];
    table.bins[i].hi = kBinEdges[i + 1];
  }
  for (const auto& r : records) {
    const double v = metric == BinMetric::hidden_proportion ? r.hidden_proportion : r.model_sparsity;
    BinRow& row = table.bins[bin_index(v)];
    ++row.n;
    if (r.stable) {
      sums[bin_index(v)] += r.min_val_loss;
    } else {
      ++row.n_unstable;
    }
  }
  for (std::size_t i = 0; i < 5; ++i) {
    BinRow& row = table.bins[i];
    const std::size_t stable = row.n - row.n_unstable;
    if (stable > 0) row.mean_min_loss = sums[i] / static_cast<double>(stable);
    row.uc = row.n > 0 && 2 * row.n_unstable > row.n;
  }
  return table;
}

}  // namespace brnn
