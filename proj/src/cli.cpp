#include "brnn/cli.hpp"

#include <algorithm>
#include <cstdlib>
#include <ostream>
#include <set>
#include <sstream>

#include <CLI11.hpp>

#include "brnn/balancer.hpp"
#include "brnn/error.hpp"
#include "brnn/export.hpp"
#include "brnn/forest.hpp"
#include "brnn/io.hpp"
#include "brnn/sweep.hpp"
#include "brnn/train.hpp"

namespace brnn {

namespace {

struct Globals {
  std::uint64_t seed = 0;
  std::string out_dir = ".";
  std::size_t threads = 1;

  std::filesystem::path resolve(const std::string& p) const {
    const std::filesystem::path path(p);
    return path.is_absolute() ? path : std::filesystem::path(out_dir) / path;
  }
};

std::string opt_text(const std::optional<double>& v) { return v ? format_double(*v) : "undefined"; }

void write_output(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  write_text_file(path, text);
}

std::vector<RunRecord> existing_registry(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw InputError("registry " + path.string() + " does not exist");
  return load_registry(path);
}

void range_option(CLI::App* sub, const std::string& name, double& lo, double& hi, const std::string& help) {
  sub->add_option_function<std::vector<double>>(
         name,
         [&lo, &hi](const std::vector<double>& v) {
           lo = v[0];
           hi = v[1];
         },
         help)
      ->expected(2);
}

// ---- data ----------------------------------------------------------------

struct DataArgs {
  std::string task = "rad-lite";
  std::size_t count = 1000;
  std::size_t n = 5;
  std::size_t side = 10;
  double val_frac = 0.2;
  std::string mnist_dir;
  std::size_t input_dim = 8;
  std::size_t output_dim = 2;
  std::size_t length = 20;
  std::string out = "data.bin";
};

int run_data(const Globals& g, const DataArgs& a, std::ostream& out) {
  const TaskKind kind = parse_task(a.task);
  if (a.count < 2) throw ConfigError("data: --count must be >= 2");
  if (!(a.val_frac > 0.0 && a.val_frac < 1.0)) throw ConfigError("data: --val-frac must be in (0, 1)");
  RngStream gen(g.seed, 10), sp(g.seed, 11);
  SequenceDataset full;
  switch (kind) {
    case TaskKind::rad: {
      std::string dir = a.mnist_dir;
      if (dir.empty()) {
        const char* env = std::getenv("BRNN_DATA_DIR");
        if (!env) throw ConfigError("data: rad needs --mnist-dir or BRNN_DATA_DIR pointing at the MNIST IDX files");
        dir = env;
      }
      full = rad_generate(load_mnist(dir), a.count, a.n, gen);
      break;
    }
    case TaskKind::rad_lite:
      full = rad_lite_generate(a.count, a.n, a.side, gen);
      break;
    case TaskKind::bc:
      full = bc_generate(g.seed, a.input_dim, a.output_dim, a.count, a.length, gen);
      break;
  }
  const SequenceDataset ds = split(full, a.val_frac, sp);
  const auto path = g.resolve(a.out);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  save_dataset(ds, path);
  out << "wrote " << path.string() << ": task " << task_name(ds.task) << ", " << ds.train.size() << " train / "
      << ds.validation.size() << " validation, input_dim " << ds.input_dim << ", output_dim " << ds.output_dim << "\n";
  return kExitOk;
}

// ---- balance -------------------------------------------------------------

struct BalanceArgs {
  BalanceRequest req;
  std::string out = "spec.txt";
};

int run_balance(const Globals& g, const BalanceArgs& a, std::ostream& out) {
  a.req.validate();
  const BalanceResult r = balance(a.req);
  std::ostringstream header;
  header << "balanced for input_dim " << a.req.input_dim << ", output_dim " << a.req.output_dim << ", budget "
         << format_double(a.req.budget) << "\n"
         << "block " << block_name(r.sparsified_block) << " sparsity " << format_double(r.sparsity)
         << ", nominal hidden_proportion " << format_double(r.achieved_hp) << ", nominal total "
         << format_double(r.nominal_total);
  const auto path = g.resolve(a.out);
  write_output(path, spec_to_text(r.spec, header.str()));
  out << "hidden_dim = " << r.spec.hidden_dim << "\n"
      << "sparsified_block = " << block_name(r.sparsified_block) << "\n"
      << "sparsity = " << format_double(r.sparsity) << "\n"
      << "hidden_proportion = " << format_double(r.achieved_hp) << "\n"
      << "nominal_total = " << format_double(r.nominal_total) << "\n"
      << "wrote " << path.string() << "\n";
  return kExitOk;
}

// ---- train ---------------------------------------------------------------

struct TrainArgs {
  std::string data;
  std::string spec;
  std::string preset;
  double budget = 5000;
  std::optional<double> lr;
  std::size_t epochs = 25;
  std::size_t batch = 32;
  double clip = 1.0;
  bool lstm = false;
  std::string out = "model.ckpt";
  std::string log = "train_log.csv";
};

std::string epoch_log_csv(const std::vector<EpochLog>& logs) {
  std::ostringstream os;
  os << "epoch,train_loss,val_loss,val_acc,stable\n";
  for (const auto& l : logs) {
    os << l.epoch << ',' << format_double(l.train_loss) << ',' << format_double(l.val_loss) << ',';
    if (l.val_accuracy) os << format_double(*l.val_accuracy);
    os << ',' << (l.stable ? 1 : 0) << '\n';
  }
  return os.str();
}

int run_train(const Globals& g, const TrainArgs& a, std::ostream& out) {
  if (a.spec.empty() == a.preset.empty() && !a.lstm) throw ConfigError("train: give exactly one of --spec or --preset");
  if (a.clip < 0.0) throw ConfigError("train: --clip must be >= 0 (0 disables clipping)");
  if (!a.preset.empty()) (void)parse_preset(a.preset);
  const SequenceDataset ds = load_dataset(g.resolve(a.data));
  if (ds.train.empty() || ds.validation.empty()) throw InputError("train: dataset has an empty train or validation split");

  TrainConfig cfg;
  cfg.batch_size = a.batch;
  cfg.epochs = a.epochs;
  cfg.grad_clip_norm = a.clip > 0.0 ? std::optional<double>(a.clip) : std::nullopt;
  cfg.seed = g.seed;
  cfg.loss = ds.loss_kind;

  std::vector<EpochLog> logs;
  bool stable = true;
  if (a.lstm) {
    cfg.learning_rate = a.lr.value_or(1e-3);
    cfg.validate();
    const LstmTrainResult r = lstm_train(a.budget, ds.input_dim, ds.output_dim, ds, cfg);
    logs = r.logs;
    stable = r.stable;
    out << "lstm hidden " << r.weights.hidden_dim << "\n";
  } else {
    BlockSpec spec = a.spec.empty() ? preset(a.preset, ds.input_dim, ds.output_dim, a.budget) : load_spec(g.resolve(a.spec));
    if (spec.input_dim != ds.input_dim || spec.output_dim != ds.output_dim) {
      throw ConfigError("train: spec dims (" + std::to_string(spec.input_dim) + ", " + std::to_string(spec.output_dim) +
                        ") do not match the dataset (" + std::to_string(ds.input_dim) + ", " +
                        std::to_string(ds.output_dim) + ")");
    }
    if (a.lr) spec.learning_rate = *a.lr;
    cfg.learning_rate = spec.learning_rate;
    cfg.validate();
    const TrainResult r = train(spec, ds, cfg);
    logs = r.logs;
    stable = r.stable;
    const auto ckpt = g.resolve(a.out);
    if (ckpt.has_parent_path()) std::filesystem::create_directories(ckpt.parent_path());
    save_checkpoint(r.checkpoint, ckpt);
    const CountReport counts = count_report(r.checkpoint.weights);
    out << "hidden_dim " << spec.hidden_dim << ", trainable " << counts.total << ", hidden_proportion "
        << opt_text(counts.hidden_proportion) << "\n";
    out << "wrote " << ckpt.string() << "\n";
  }
  write_output(g.resolve(a.log), epoch_log_csv(logs));
  for (const auto& l : logs) {
    out << "epoch " << l.epoch << " train_loss " << format_double(l.train_loss) << " val_loss "
        << format_double(l.val_loss);
    if (l.val_accuracy) out << " val_acc " << format_double(*l.val_accuracy);
    out << "\n";
  }
  if (!stable) {
    out << "training diverged\n";
    return kExitDiverged;
  }
  return kExitOk;
}

// ---- sweep ---------------------------------------------------------------

struct SweepArgs {
  std::string data;
  std::string registry = "sweep.jsonl";
  std::string budget_mode = "fixed";
  double clip = 1.0;
  SweepConfig cfg;
};

int run_sweep_cmd(const Globals& g, SweepArgs a, std::ostream& out) {
  a.cfg.seed = g.seed;
  a.cfg.threads = g.threads;
  a.cfg.budget_mode = parse_budget_mode(a.budget_mode);
  if (a.clip < 0.0) throw ConfigError("sweep: --clip must be >= 0");
  a.cfg.grad_clip_norm = a.clip > 0.0 ? std::optional<double>(a.clip) : std::nullopt;
  a.cfg.validate();
  const SequenceDataset ds = load_dataset(g.resolve(a.data));
  const SweepOutcome r = run_sweep(a.cfg, ds, g.resolve(a.registry), [&](const std::string& s) { out << s << "\n"; });
  out << r.added.size() << " runs added, " << r.skipped_existing << " already present, " << r.skipped_infeasible.size()
      << " infeasible\n";
  return kExitOk;
}

// ---- bins ----------------------------------------------------------------

struct BinsArgs {
  std::string registry = "sweep.jsonl";
  std::string metric = "both";
  std::string out;
};

void print_bins(const BinTable& t, std::ostream& out) {
  out << bin_metric_name(t.metric) << "\n";
  out << "  bin        mean_min_loss  n  unstable\n";
  for (const auto& row : t.bins) {
    out << "  [" << format_double(row.lo) << "," << format_double(row.hi) << (row.hi == 1.0 ? "]  " : ")  ");
    if (row.uc) {
      out << "UC";
    } else {
      out << opt_text(row.mean_min_loss);
    }
    out << "  " << row.n << "  " << row.n_unstable << "\n";
  }
}

int run_bins(const Globals& g, const BinsArgs& a, std::ostream& out) {
  std::vector<BinMetric> metrics;
  if (a.metric == "both") {
    metrics = {BinMetric::hidden_proportion, BinMetric::model_sparsity};
  } else {
    metrics = {parse_bin_metric(a.metric)};
  }
  const auto records = existing_registry(g.resolve(a.registry));
  for (BinMetric m : metrics) print_bins(bin_summary(records, m), out);
  if (!a.out.empty()) write_output(g.resolve(a.out), bins_csv(records));
  return kExitOk;
}

// ---- meta-train / meta-eval ------------------------------------------------

struct MetaTrainArgs {
  std::string registry = "sweep.jsonl";
  std::string model = "forest.json";
  double holdout = 0.2;
  bool no_bootstrap = false;
  ForestConfig cfg;
};

void print_eval(const ForestEval& ev, std::ostream& out) {
  out << "n = " << ev.n << "\n"
      << "spearman = " << opt_text(ev.spearman) << "\n"
      << "pearson = " << opt_text(ev.pearson) << "\n"
      << "mae = " << format_double(ev.mae) << "\n";
}

std::vector<RunRecord> pick(const std::vector<RunRecord>& all, const std::vector<std::size_t>& idx) {
  std::vector<RunRecord> out;
  for (auto i : idx) out.push_back(all[i]);
  return out;
}

int run_meta_train(const Globals& g, MetaTrainArgs a, std::ostream& out) {
  a.cfg.seed = g.seed;
  a.cfg.threads = g.threads;
  a.cfg.bootstrap = !a.no_bootstrap;
  a.cfg.validate();
  const auto records = existing_registry(g.resolve(a.registry));
  const auto [train_idx, held_idx] = holdout_split(records.size(), a.holdout, g.seed);
  const auto train_set = pick(records, train_idx);
  const auto held = pick(records, held_idx);
  Forest f = forest_train(train_set, a.cfg);
  for (const auto& r : held) f.held_out.push_back(r.run_id);
  const auto path = g.resolve(a.model);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  save_forest(f, path);
  out << "trained " << f.trees.size() << " trees on " << train_set.size() << " runs, " << held.size() << " held out\n";
  if (!held.empty()) print_eval(forest_eval(f, forest_features(held), forest_targets(held)), out);
  out << "wrote " << path.string() << "\n";
  return kExitOk;
}

// Runs the forest was not trained on, or every run when nothing was held out.
std::vector<RunRecord> eval_records(const std::vector<RunRecord>& records, const Forest& f) {
  if (f.held_out.empty()) return records;
  const std::set<std::uint64_t> ids(f.held_out.begin(), f.held_out.end());
  std::vector<RunRecord> out;
  for (const auto& r : records) {
    if (ids.count(r.run_id)) out.push_back(r);
  }
  return out;
}

struct MetaEvalArgs {
  std::string registry = "sweep.jsonl";
  std::string model = "forest.json";
  std::string out;
};

int run_meta_eval(const Globals& g, const MetaEvalArgs& a, std::ostream& out) {
  const auto records = existing_registry(g.resolve(a.registry));
  const Forest f = load_forest(g.resolve(a.model));
  const auto held = eval_records(records, f);
  if (held.empty()) throw InputError("meta-eval: no registry runs to evaluate");
  print_eval(forest_eval(f, forest_features(held), forest_targets(held)), out);
  if (!a.out.empty()) write_output(g.resolve(a.out), pred_csv(held, f));
  return kExitOk;
}

// ---- export --------------------------------------------------------------

struct ExportArgs {
  std::string registry = "sweep.jsonl";
  std::string kind;
  std::string model;
  std::string out;
};

int run_export(const Globals& g, const ExportArgs& a, std::ostream& out) {
  std::vector<ExportKind> kinds;
  if (a.kind == "all") {
    kinds = {ExportKind::curves, ExportKind::scatter, ExportKind::bins, ExportKind::runs};
    if (!a.model.empty()) kinds.push_back(ExportKind::pred);
    if (!a.out.empty()) throw ConfigError("export: --out names a single file; omit it with --kind all");
  } else {
    kinds = {parse_export_kind(a.kind)};
    if (kinds[0] == ExportKind::pred && a.model.empty()) throw ConfigError("export: predicted-vs-actual needs --model");
  }
  const auto records = existing_registry(g.resolve(a.registry));
  for (ExportKind k : kinds) {
    std::string text;
    switch (k) {
      case ExportKind::curves: text = curves_csv(records); break;
      case ExportKind::scatter: text = scatter_csv(records); break;
      case ExportKind::bins: text = bins_csv(records); break;
      case ExportKind::runs: text = runs_csv(records); break;
      case ExportKind::pred: {
        const Forest f = load_forest(g.resolve(a.model));
        text = pred_csv(eval_records(records, f), f);
        break;
      }
    }
    const auto path = g.resolve(a.out.empty() ? std::string(export_kind_name(k)) + ".csv" : a.out);
    write_output(path, text);
    out << "wrote " << path.string() << "\n";
  }
  return kExitOk;
}

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Block-sparse recurrent networks: data, balancing, training, sweeps and meta-prediction", "brnn"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--seed", g.seed, "Master seed")->capture_default_str();
  app.add_option("--out-dir", g.out_dir, "Directory that relative paths resolve against")->capture_default_str();
  app.add_option("--threads", g.threads, "Worker threads for sweeps and forest training")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);

  DataArgs da;
  auto* data = app.add_subcommand("data", "Generate a sequence dataset");
  data->add_option("--task", da.task, "rad, rad-lite or bc")->capture_default_str()->check(CLI::IsMember({"rad", "rad-lite", "bc"}));
  data->add_option("--count", da.count, "Number of sequences")->capture_default_str();
  data->add_option("--n", da.n, "Frames per RAD sequence")->capture_default_str();
  data->add_option("--side", da.side, "RAD-lite frame side")->capture_default_str();
  data->add_option("--val-frac", da.val_frac, "Validation fraction")->capture_default_str();
  data->add_option("--mnist-dir", da.mnist_dir, "MNIST IDX directory (default: $BRNN_DATA_DIR)");
  data->add_option("--input-dim", da.input_dim, "bc input width")->capture_default_str();
  data->add_option("--output-dim", da.output_dim, "bc output width")->capture_default_str();
  data->add_option("--length", da.length, "bc sequence length")->capture_default_str();
  data->add_option("--out", da.out, "Output dataset file")->capture_default_str();

  BalanceArgs ba;
  auto* bal = app.add_subcommand("balance", "Specify a balanced network from task dimensions");
  bal->add_option("--input-dim", ba.req.input_dim, "|x|")->required();
  bal->add_option("--output-dim", ba.req.output_dim, "|y|")->required();
  bal->add_option("--budget", ba.req.budget, "Parameter budget")->required();
  bal->add_option("--target-hp", ba.req.target_hp, "Target hidden proportion")->capture_default_str();
  bal->add_option("--step", ba.req.step, "Sparsity grid step")->capture_default_str();
  bal->add_option("--max-hidden", ba.req.max_hidden, "Largest hidden width searched")->capture_default_str();
  bal->add_option("--out", ba.out, "Output spec file")->capture_default_str();

  TrainArgs ta;
  auto* tr = app.add_subcommand("train", "Train a block RNN (or the LSTM baseline)");
  tr->add_option("--data", ta.data, "Dataset file")->required();
  tr->add_option("--spec", ta.spec, "Spec file");
  tr->add_option("--preset", ta.preset, "dense, uniform20, ah_varied or rad_varied");
  tr->add_option("--budget", ta.budget, "Budget for --preset and --lstm")->capture_default_str();
  tr->add_option("--lr", ta.lr, "Learning rate (default: the spec's)");
  tr->add_option("--epochs", ta.epochs, "Epochs")->capture_default_str();
  tr->add_option("--batch", ta.batch, "Mini-batch size")->capture_default_str();
  tr->add_option("--clip", ta.clip, "Global gradient-norm clip, 0 disables")->capture_default_str();
  tr->add_flag("--lstm", ta.lstm, "Train the LSTM baseline at --budget instead");
  tr->add_option("--out", ta.out, "Checkpoint file")->capture_default_str();
  tr->add_option("--log", ta.log, "Per-epoch CSV log")->capture_default_str();

  SweepArgs sa;
  auto* sw = app.add_subcommand("sweep", "Random hyperparameter sweep into a run registry");
  sw->add_option("--data", sa.data, "Dataset file")->required();
  sw->add_option("--registry", sa.registry, "Registry (JSON lines)")->capture_default_str();
  sw->add_option("--runs", sa.cfg.runs, "Number of runs")->capture_default_str();
  sw->add_option("--budget", sa.cfg.budget, "Parameter budget per run")->capture_default_str();
  sw->add_option("--budget-mode", sa.budget_mode, "fixed or free")->capture_default_str()->check(CLI::IsMember({"fixed", "free"}));
  sw->add_option("--epochs", sa.cfg.epochs, "Epochs per run")->capture_default_str();
  sw->add_option("--batch", sa.cfg.batch_size, "Mini-batch size")->capture_default_str();
  sw->add_option("--clip", sa.clip, "Gradient clip, 0 disables")->capture_default_str();
  sw->add_option("--max-hidden", sa.cfg.max_hidden, "Hidden width cap")->capture_default_str();
  sw->add_option("--min-hidden", sa.cfg.min_hidden, "Smallest hidden width in free mode")->capture_default_str();
  range_option(sw, "--mean-range", sa.cfg.ranges.mean_lo, sa.cfg.ranges.mean_hi, "Uniform range for block means");
  range_option(sw, "--std-range", sa.cfg.ranges.std_lo, sa.cfg.ranges.std_hi, "Log-uniform range for block stds");
  range_option(sw, "--sparsity-range", sa.cfg.ranges.sparsity_lo, sa.cfg.ranges.sparsity_hi,
               "Uniform range for block sparsities");
  range_option(sw, "--lr-range", sa.cfg.ranges.lr_lo, sa.cfg.ranges.lr_hi, "Log-uniform range for the learning rate");

  BinsArgs bn;
  auto* bins = app.add_subcommand("bins", "Mean min-loss per hidden-proportion / sparsity bin");
  bins->add_option("--registry", bn.registry, "Registry")->capture_default_str();
  bins->add_option("--metric", bn.metric, "hidden_proportion, model_sparsity or both")
      ->capture_default_str()
      ->check(CLI::IsMember({"hidden_proportion", "hp", "model_sparsity", "sparsity", "both"}));
  bins->add_option("--out", bn.out, "Also write the bins CSV here");

  MetaTrainArgs mt;
  auto* mtr = app.add_subcommand("meta-train", "Fit the random-forest loss predictor");
  mtr->add_option("--registry", mt.registry, "Registry")->capture_default_str();
  mtr->add_option("--model", mt.model, "Output model file")->capture_default_str();
  mtr->add_option("--trees", mt.cfg.trees, "Number of trees")->capture_default_str();
  mtr->add_option("--max-depth", mt.cfg.max_depth, "Tree depth limit")->capture_default_str();
  mtr->add_option("--min-leaf", mt.cfg.min_leaf, "Minimum samples per leaf")->capture_default_str();
  mtr->add_option("--feature-fraction", mt.cfg.feature_fraction, "Features tried per split")->capture_default_str();
  mtr->add_option("--holdout", mt.holdout, "Fraction of runs held out")->capture_default_str();
  mtr->add_flag("--no-bootstrap", mt.no_bootstrap, "Fit every tree on all training runs");

  MetaEvalArgs me;
  auto* mev = app.add_subcommand("meta-eval", "Score a forest on its held-out runs");
  mev->add_option("--registry", me.registry, "Registry")->capture_default_str();
  mev->add_option("--model", me.model, "Model file")->capture_default_str();
  mev->add_option("--out", me.out, "Also write predicted-vs-actual CSV here");

  ExportArgs ea;
  auto* ex = app.add_subcommand("export", "Write CSV files for plotting");
  ex->add_option("--registry", ea.registry, "Registry")->capture_default_str();
  ex->add_option("--kind", ea.kind, "curves, scatter, bins, predicted-vs-actual, runs or all")
      ->required()
      ->check(CLI::IsMember({"curves", "scatter", "bins", "predicted-vs-actual", "pred", "runs", "all"}));
  ex->add_option("--model", ea.model, "Forest model, for predicted-vs-actual");
  ex->add_option("--out", ea.out, "Output file (default <kind>.csv)");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (data->parsed()) return run_data(g, da, out);
    if (bal->parsed()) return run_balance(g, ba, out);
    if (tr->parsed()) return run_train(g, ta, out);
    if (sw->parsed()) return run_sweep_cmd(g, sa, out);
    if (bins->parsed()) return run_bins(g, bn, out);
    if (mtr->parsed()) return run_meta_train(g, mt, out);
    if (mev->parsed()) return run_meta_eval(g, me, out);
    if (ex->parsed()) return run_export(g, ea, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitDataError;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kExitDataError;
  }
  err << app.help();
  return kExitUsage;
}

}  // namespace brnn
