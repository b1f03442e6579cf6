// Acceptance runner: one PASS/FAIL line per criterion, exit status 1 if any fails.
//   brnn_acceptance [--only N[,N...]] [--workdir DIR] [--keep]

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "brnn/balancer.hpp"
#include "brnn/cli.hpp"
#include "brnn/export.hpp"
#include "brnn/forest.hpp"
#include "brnn/io.hpp"
#include "brnn/sweep.hpp"
#include "brnn/train.hpp"
#include "oracles.hpp"

using namespace brnn;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : (v[n / 2 - 1] + v[n / 2]) / 2.0;
}

// ---------------------------------------------------------------------------

Outcome hidden_proportion_reproduction() {
  const auto t0 = Clock::now();
  const BlockSpec spec = preset(Preset::rad_varied, 2500, 10, 100000);
  double lo = 1.0, hi = 0.0;
  bool ok = true;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    RngStream rng(seed, 1);
    const auto hp = count_report(instantiate(spec, rng)).hidden_proportion;
    if (!hp) return {false, "hidden proportion undefined"};
    lo = std::min(lo, *hp);
    hi = std::max(hi, *hp);
    ok = ok && std::abs(*hp - 0.22) <= 0.02;
  }
  const double dt = seconds_since(t0);
  ok = ok && dt < 1.0;
  return {ok, "h=" + std::to_string(spec.hidden_dim) + ", realized hp in [" + fmt(lo) + ", " + fmt(hi) +
                  "] over 10 seeds, " + fmt(dt, 2) + " s"};
}

Outcome balancer_reproduction() {
  const auto t0 = Clock::now();
  BalanceRequest req;
  req.input_dim = 2500;
  req.output_dim = 10;
  req.budget = 100000;
  req.target_hp = 0.5;
  const BalanceResult r = balance(req);
  const auto o = oracle::grid_oracle(2500, 10, 100000, 0.5, req.max_hidden);
  const double dt = seconds_since(t0);
  if (!o) return {false, "grid oracle found no feasible point"};
  auto close = [](double a, double b) { return std::abs(a - b) <= 1e-12 * std::max(1.0, std::abs(b)); };
  const bool matches = r.spec.hidden_dim == o->h && close(r.sparsity, o->s) && close(r.achieved_hp, o->hp) &&
                       close(r.nominal_total, o->total);
  bool others_dense = true;
  for (BlockId b : kAllBlocks) {
    if (b != BlockId::hx && r.spec.block(b).sparsity != 1.0) others_dense = false;
  }
  const bool ok = r.sparsified_block == BlockId::hx && others_dense && r.sparsity >= 0.06 && r.sparsity <= 0.10 &&
                  r.achieved_hp >= 0.44 && r.achieved_hp <= 0.50 && r.nominal_total >= 95000 &&
                  r.nominal_total <= 100000 && matches && dt < 5.0;
  return {ok, "hx sparsity " + fmt(r.sparsity) + ", h=" + std::to_string(r.spec.hidden_dim) + ", nominal hp " +
                  fmt(r.achieved_hp) + ", nominal total " + fmt(r.nominal_total, 7) +
                  (matches ? ", equals grid oracle" : ", differs from grid oracle") + ", " + fmt(dt, 2) + " s"};
}

Outcome counting_exactness() {
  RngStream rng(0xc0, 3);
  double worst_rel = 0.0;
  double worst_sigma = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    BlockSpec spec;
    spec.input_dim = 1 + rng.uniform_index(300);
    spec.hidden_dim = 1 + rng.uniform_index(120);
    spec.output_dim = 1 + rng.uniform_index(40);
    for (auto& c : spec.blocks) {
      const std::size_t pick = rng.uniform_index(10);
      c = BlockConfig{0.0, 0.1, pick == 0 ? 0.0 : pick == 1 ? 1.0 : rng.uniform()};
    }
    const double x = double(spec.input_dim), h = double(spec.hidden_dim), y = double(spec.output_dim);
    const std::array<double, 6> cap = {h * x, h * h, h * y, y * x, y * h, y * y};
    const auto nominal = nominal_param_count(spec);
    double closed_total = h + y;
    for (std::size_t i = 0; i < 6; ++i) {
      const double closed = cap[i] * spec.blocks[i].sparsity;
      closed_total += closed;
      worst_rel = std::max(worst_rel, std::abs(nominal.block(kAllBlocks[i]) - closed) / std::max(1.0, closed));
    }
    worst_rel = std::max(worst_rel, std::abs(nominal.total - closed_total) / closed_total);

    RngStream inst(trial, 1);
    const CountReport realized = count_report(instantiate(spec, inst));
    for (std::size_t i = 0; i < 6; ++i) {
      const double s = spec.blocks[i].sparsity;
      const double sigma = std::sqrt(cap[i] * s * (1.0 - s));
      const double dev = std::abs(double(realized.blocks[i]) - cap[i] * s);
      if (sigma == 0.0) {
        if (dev != 0.0) worst_sigma = std::max(worst_sigma, 1e9);
      } else {
        worst_sigma = std::max(worst_sigma, dev / sigma);
      }
    }
  }
  const bool ok = worst_rel <= 1e-12 && worst_sigma <= 4.0;
  return {ok, "worst nominal relative error " + fmt(worst_rel, 3) + ", worst realized deviation " + fmt(worst_sigma, 3) +
                  " sigma over 50 specs"};
}

BlockSpec random_small_spec(RngStream& rng, std::size_t x, std::size_t h, std::size_t y) {
  BlockSpec spec;
  spec.input_dim = x;
  spec.hidden_dim = h;
  spec.output_dim = y;
  for (auto& c : spec.blocks) c = BlockConfig{rng.uniform(-0.1, 0.1), 0.5, rng.uniform(0.4, 1.0)};
  return spec;
}

std::vector<Matrix> random_inputs(RngStream& rng, std::size_t x, std::size_t n, std::size_t T) {
  std::vector<Matrix> seq;
  for (std::size_t t = 0; t < T; ++t) seq.push_back(sample_normal(rng, x, n, 0.0, 1.0));
  return seq;
}

Targets random_targets(RngStream& rng, LossKind kind, std::size_t y, std::size_t n, std::size_t T) {
  Targets t;
  if (kind == LossKind::cross_entropy_final) {
    for (std::size_t i = 0; i < n; ++i) t.classes.push_back(rng.uniform_index(y));
  } else {
    for (std::size_t s = 0; s < T; ++s) t.steps.push_back(sample_normal(rng, y, n, 0.0, 1.0));
  }
  return t;
}

Outcome gradient_correctness() {
  const auto t0 = Clock::now();
  double worst = 0.0;
  std::size_t checked = 0;
  for (LossKind kind : {LossKind::cross_entropy_final, LossKind::mse_all_steps}) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      RngStream rng(seed, 0x9d);
      // the largest allowed net on the first seed, smaller random ones after
      const std::size_t x = seed == 0 ? 5 : 1 + rng.uniform_index(5);
      const std::size_t h = seed == 0 ? 8 : 1 + rng.uniform_index(8);
      const std::size_t y = seed == 0 ? 3 : 2 + rng.uniform_index(2);
      const std::size_t T = seed == 0 ? 6 : 1 + rng.uniform_index(6);
      const BlockSpec spec = random_small_spec(rng, x, h, y);
      RngStream init(seed, 1);
      WeightSpace ws = instantiate(spec, init);
      for (double& b : ws.bias_h) b = rng.uniform(-0.3, 0.3);
      for (double& b : ws.bias_y) b = rng.uniform(-0.3, 0.3);
      const auto seq = random_inputs(rng, x, 2, T);
      const auto targets = random_targets(rng, kind, y, 2, T);
      const auto w = oracle::check_block_gradients(ws, seq, targets, kind);
      worst = std::max(worst, w.rel);
      checked += w.checked;
    }
  }
  const double dt = seconds_since(t0);
  return {worst <= 1e-4 && dt < 30.0, "worst relative error " + fmt(worst, 3) + " over " + std::to_string(checked) +
                                          " parameters, " + fmt(dt, 2) + " s"};
}

Outcome mask_preservation() {
  RngStream rng(0x5a, 0);
  BlockSpec spec = random_small_spec(rng, 6, 9, 4);
  for (auto& c : spec.blocks) c.sparsity = rng.uniform(0.2, 0.7);
  RngStream init(5, 1);
  WeightSpace ws = instantiate(spec, init);
  AdamState st;
  AdamConfig cfg;
  cfg.learning_rate = 0.02;
  for (int step = 0; step < 200; ++step) {
    const LossKind kind = step % 2 ? LossKind::mse_all_steps : LossKind::cross_entropy_final;
    const auto seq = random_inputs(rng, 6, 4, 5);
    const auto g = backward(ws, seq, random_targets(rng, kind, 4, 4, 5), kind);
    adam_step(ws, g.grads, st, cfg);
  }
  std::size_t masked = 0, violations = 0;
  for (BlockId b : kAllBlocks) {
    const auto mask = ws.block(b).mask().values();
    const auto vals = ws.block(b).values().values();
    for (std::size_t i = 0; i < mask.size(); ++i) {
      if (mask[i]) continue;
      ++masked;
      if (std::bit_cast<std::uint64_t>(vals[i]) != 0) ++violations;
    }
  }
  return {violations == 0 && masked > 0, std::to_string(masked) + " masked entries after 200 steps, " +
                                             std::to_string(violations) + " not exactly +0"};
}

Outcome classic_equivalence() {
  double worst = 0.0;
  for (std::uint64_t trial = 0; trial < 20; ++trial) {
    RngStream rng(trial, 0xe1);
    BlockSpec spec = random_small_spec(rng, 2 + rng.uniform_index(5), 2 + rng.uniform_index(7), 1 + rng.uniform_index(4));
    spec.block(BlockId::hy).sparsity = 0.0;
    spec.block(BlockId::yx).sparsity = 0.0;
    spec.block(BlockId::yy).sparsity = 0.0;
    spec.block(BlockId::hx).sparsity = 1.0;
    spec.block(BlockId::hh).sparsity = 1.0;
    spec.block(BlockId::yh).sparsity = 1.0;
    RngStream init(trial, 1);
    WeightSpace ws = instantiate(spec, init);
    for (double& b : ws.bias_h) b = rng.uniform(-0.3, 0.3);
    for (double& b : ws.bias_y) b = rng.uniform(-0.3, 0.3);
    oracle::ClassicRnn ref{ws.block(BlockId::hx).values(), ws.block(BlockId::hh).values(),
                           ws.block(BlockId::yh).values(), ws.bias_h, ws.bias_y};
    const auto seq = random_inputs(rng, spec.input_dim, 3, 8);
    const auto states = run_sequence(ws, seq);
    for (std::size_t col = 0; col < 3; ++col) {
      const auto tr = ref.run(seq, col);
      for (std::size_t t = 0; t < seq.size(); ++t) {
        for (std::size_t i = 0; i < spec.hidden_dim; ++i) worst = std::max(worst, std::abs(states[t].h(i, col) - tr.h[t][i]));
        if (t + 1 < seq.size()) {
          for (std::size_t i = 0; i < spec.output_dim; ++i) {
            worst = std::max(worst, std::abs(states[t + 1].y(i, col) - tr.y[t][i]));
          }
        }
      }
    }
  }
  return {worst <= 1e-12, "worst entrywise difference " + fmt(worst, 3) + " over 20 trials"};
}

Outcome directional_performance() {
  const auto t0 = Clock::now();
  std::map<std::string, std::vector<double>> best;
  const std::vector<std::string> order = {"balanced", "uniform20", "ah_varied"};
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    RngStream gen(seed, 0), sp(seed, 1);
    const SequenceDataset ds = split(rad_lite_generate(2500, 5, 10, gen), 0.2, sp);
    BalanceRequest req;
    req.input_dim = ds.input_dim;
    req.output_dim = ds.output_dim;
    req.budget = 5000;
    const std::vector<std::pair<std::string, BlockSpec>> specs = {
        {"balanced", balance(req).spec},
        {"uniform20", preset(Preset::uniform20, ds.input_dim, ds.output_dim, 5000)},
        {"ah_varied", preset(Preset::ah_varied, ds.input_dim, ds.output_dim, 5000)}};
    for (const auto& [name, spec] : specs) {
      TrainConfig cfg;
      cfg.seed = seed;
      cfg.epochs = 25;
      cfg.learning_rate = spec.learning_rate;
      const TrainResult r = train(spec, ds, cfg);
      double b = 0.0;
      for (const auto& l : r.logs) b = std::max(b, l.val_accuracy.value_or(0.0));
      best[name].push_back(b);
    }
  }
  const double bal = median(best["balanced"]), uni = median(best["uniform20"]), ah = median(best["ah_varied"]);
  const double chance = 1.0 / 6.0;
  const double dt = seconds_since(t0);
  const bool ok = bal >= uni && uni > ah && std::min({bal, uni, ah}) > chance && dt < 600.0;
  return {ok, "median best val accuracy: balanced " + fmt(bal) + ", uniform20 " + fmt(uni) + ", ah_varied " + fmt(ah) +
                  " (chance " + fmt(chance) + "), " + fmt(dt, 3) + " s"};
}

// Shared by criteria 8 and 9.
struct SweepData {
  std::vector<RunRecord> records;
  double seconds = 0.0;
  std::string error;
};

SweepData run_desk_sweep(const fs::path& dir) {
  SweepData out;
  const auto t0 = Clock::now();
  try {
    RngStream gen(0, 10), sp(0, 11);
    const SequenceDataset ds = split(rad_lite_generate(1000, 5, 10, gen), 0.2, sp);
    SweepConfig cfg;
    cfg.runs = 200;
    cfg.budget = 10000;
    cfg.seed = 0;
    const fs::path registry = dir / "sweep.jsonl";
    fs::remove(registry);
    fs::remove(timing_path(registry));
    run_sweep(cfg, ds, registry);
    out.records = load_registry(registry);
  } catch (const std::exception& e) {
    out.error = e.what();
  }
  out.seconds = seconds_since(t0);
  return out;
}

Outcome bin_trend(const SweepData& sweep) {
  if (!sweep.error.empty()) return {false, "sweep failed: " + sweep.error};
  const BinTable hp = bin_summary(sweep.records, BinMetric::hidden_proportion);
  const BinTable ms = bin_summary(sweep.records, BinMetric::model_sparsity);
  auto text = [](const BinRow& r) { return r.mean_min_loss ? fmt(*r.mean_min_loss) : std::string("undefined"); };
  const auto& h0 = hp.bins[0];
  const auto& h1 = hp.bins[1];
  const auto& s0 = ms.bins[0];
  const auto& s2 = ms.bins[2];
  const bool hp_ok = h0.mean_min_loss && h1.mean_min_loss && *h1.mean_min_loss < *h0.mean_min_loss;
  const bool ms_ok = s0.mean_min_loss && s2.mean_min_loss && *s0.mean_min_loss < *s2.mean_min_loss;
  const bool ok = hp_ok && ms_ok && sweep.seconds < 3600.0;
  return {ok, std::to_string(sweep.records.size()) + " runs; hp bins [.2,.4) " + text(h1) + " (n=" + std::to_string(h1.n) +
                  ") vs [0,.2) " + text(h0) + " (n=" + std::to_string(h0.n) + "); sparsity bins [0,.2) " + text(s0) +
                  " (n=" + std::to_string(s0.n) + ") vs [.4,.6) " + text(s2) + " (n=" + std::to_string(s2.n) + "); " +
                  fmt(sweep.seconds, 4) + " s"};
}

Outcome meta_predictor(const SweepData& sweep) {
  if (!sweep.error.empty()) return {false, "sweep failed: " + sweep.error};
  const auto& records = sweep.records;
  const auto [train_idx, held_idx] = holdout_split(records.size(), 0.2, 0);
  std::vector<RunRecord> train_set, held;
  for (auto i : train_idx) train_set.push_back(records[i]);
  for (auto i : held_idx) held.push_back(records[i]);
  ForestConfig cfg;
  cfg.trees = 200;
  cfg.max_depth = 10;
  const Forest f = forest_train(train_set, cfg);
  const ForestEval ev = forest_eval(f, forest_features(held), forest_targets(held));

  // single trees against the brute-force partition
  std::size_t trees = 0, mismatches = 0;
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    RngStream rng(seed, 0x7e);
    const std::size_t n = 2 + rng.uniform_index(49);
    const std::size_t nf = 1 + rng.uniform_index(3);
    std::vector<std::vector<double>> x(n, std::vector<double>(nf));
    std::vector<double> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      for (auto& v : x[i]) v = seed % 2 ? rng.uniform() : double(rng.uniform_index(6));
      y[i] = rng.normal(0, 1);
    }
    ForestConfig tc;
    tc.max_depth = 1 + rng.uniform_index(6);
    tc.min_leaf = 1 + rng.uniform_index(3);
    tc.feature_fraction = 1.0;
    std::vector<std::size_t> rows(n);
    for (std::size_t i = 0; i < n; ++i) rows[i] = i;
    RngStream tr(seed, 0);
    const Tree t = fit_tree(x, y, rows, tc, tr);
    oracle::TreeOracle o{x, y, tc.max_depth, tc.min_leaf};
    const auto root = o.build(rows, 0);
    for (int q = 0; q < 100; ++q) {
      std::vector<double> v(nf);
      for (auto& e : v) e = rng.uniform(-0.5, 6.5);
      for (std::size_t i = 0; i < nf && q < int(n); ++i) v[i] = x[std::size_t(q)][i];
      if (t.predict(v) != oracle::TreeOracle::predict(root.get(), v)) ++mismatches;
    }
    ++trees;
  }
  const bool ok = ev.spearman && *ev.spearman >= 0.6 && mismatches == 0;
  return {ok, "held-out spearman " + (ev.spearman ? fmt(*ev.spearman) : std::string("undefined")) + " (n=" +
                  std::to_string(ev.n) + ", pearson " + (ev.pearson ? fmt(*ev.pearson) : std::string("undefined")) +
                  ", mae " + fmt(ev.mae) + "); " + std::to_string(trees) + " single trees vs brute force, " +
                  std::to_string(mismatches) + " mismatching predictions"};
}

int run_cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  return dispatch(args, out, err);
}

// data -> balance -> train -> sweep -> bins -> meta-train -> meta-eval -> export, all under one seed.
std::string pipeline(const fs::path& dir) {
  fs::remove_all(dir);
  fs::create_directories(dir);
  const std::string d = dir.string();
  const std::vector<std::vector<std::string>> steps = {
      {"--seed", "7", "--out-dir", d, "data", "--task", "rad-lite", "--count", "120"},
      {"--seed", "7", "--out-dir", d, "balance", "--input-dim", "100", "--output-dim", "6", "--budget", "3000"},
      {"--seed", "7", "--out-dir", d, "train", "--data", "data.bin", "--spec", "spec.txt", "--epochs", "3"},
      {"--seed", "7", "--out-dir", d, "train", "--data", "data.bin", "--preset", "uniform20", "--budget", "3000",
       "--epochs", "3", "--out", "u20.ckpt", "--log", "u20_log.csv"},
      {"--seed", "7", "--out-dir", d, "--threads", "2", "sweep", "--data", "data.bin", "--runs", "16", "--budget",
       "3000", "--epochs", "3"},
      {"--seed", "7", "--out-dir", d, "bins", "--out", "bins_table.csv"},
      {"--seed", "7", "--out-dir", d, "--threads", "2", "meta-train", "--trees", "30"},
      {"--seed", "7", "--out-dir", d, "meta-eval", "--out", "meta_pred.csv"},
      {"--seed", "7", "--out-dir", d, "export", "--kind", "all", "--model", "forest.json"},
  };
  for (const auto& s : steps) {
    const int code = run_cli(s);
    if (code != 0) return "step '" + s[4] + "' exited " + std::to_string(code);
  }
  return {};
}

Outcome determinism(const fs::path& work) {
  const fs::path a = work / "pipeline_a", b = work / "pipeline_b";
  for (const auto& dir : {a, b}) {
    const std::string e = pipeline(dir);
    if (!e.empty()) return {false, e};
  }
  std::set<std::string> names;
  for (const auto& dir : {a, b}) {
    for (const auto& entry : fs::directory_iterator(dir)) names.insert(entry.path().filename().string());
  }
  std::size_t compared = 0;
  std::vector<std::string> differing;
  for (const auto& name : names) {
    if (name.ends_with(".timing.jsonl")) continue;  // wall-clock only
    if (!fs::exists(a / name) || !fs::exists(b / name) || read_file_bytes(a / name) != read_file_bytes(b / name)) {
      differing.push_back(name);
    }
    ++compared;
  }
  std::string detail = std::to_string(compared) + " files compared across two runs";
  if (!differing.empty()) {
    detail += "; differing:";
    for (const auto& n : differing) detail += " " + n;
  }
  const bool has_all = names.count("sweep.jsonl") && names.count("model.ckpt") && names.count("curves.csv");
  return {differing.empty() && has_all, detail};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"brnn acceptance runner"};
  std::vector<int> only;
  std::string workdir = (fs::temp_directory_path() / "brnn_acceptance").string();
  bool keep = false;
  app.add_option("--only", only, "Run only these criteria")->delimiter(',');
  app.add_option("--workdir", workdir, "Scratch directory");
  app.add_flag("--keep", keep, "Keep the scratch directory");
  CLI11_PARSE(app, argc, argv);

  const fs::path work(workdir);
  fs::create_directories(work);
  auto wanted = [&](int n) { return only.empty() || std::find(only.begin(), only.end(), n) != only.end(); };

  SweepData sweep;
  bool sweep_done = false;
  auto need_sweep = [&]() -> const SweepData& {
    if (!sweep_done) {
      sweep = run_desk_sweep(work);
      sweep_done = true;
    }
    return sweep;
  };

  const std::vector<std::pair<int, std::function<Outcome()>>> criteria = {
      {1, hidden_proportion_reproduction},
      {2, balancer_reproduction},
      {3, counting_exactness},
      {4, gradient_correctness},
      {5, mask_preservation},
      {6, classic_equivalence},
      {7, directional_performance},
      {8, [&] { return bin_trend(need_sweep()); }},
      {9, [&] { return meta_predictor(need_sweep()); }},
      {10, [&] { return determinism(work); }},
  };
  int failed = 0;
  for (const auto& [n, fn] : criteria) {
    if (!wanted(n)) continue;
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failed;
    std::cout << "criterion " << n << ": " << (o.pass ? "PASS" : "FAIL") << " | " << o.detail << std::endl;
  }
  if (!keep) fs::remove_all(work);
  return failed == 0 ? 0 : 1;
}
