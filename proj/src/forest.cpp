#include "brnn/forest.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <mutex>
#include <numeric>
#include <thread>

#include <json.hpp>

#include "brnn/error.hpp"
#include "brnn/io.hpp"

namespace brnn {

void ForestConfig::validate() const {
  if (trees < 1) throw ConfigError("forest: need at least one tree");
  if (max_depth < 1) throw ConfigError("forest: max depth must be >= 1");
  if (min_leaf < 1) throw ConfigError("forest: min leaf size must be >= 1");
  if (!(feature_fraction > 0.0 && feature_fraction <= 1.0)) throw ConfigError("forest: feature fraction must be in (0, 1]");
}

double Tree::predict(const std::vector<double>& x) const {
  std::size_t i = 0;
  while (nodes[i].feature >= 0) {
    const TreeNode& n = nodes[i];
    i = x[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right;
  }
  return nodes[i].value;
}

double Forest::predict(const std::vector<double>& x) const {
  if (x.size() != feature_count) {
    throw InputError("forest: expected " + std::to_string(feature_count) + " features, got " + std::to_string(x.size()));
  }
  double sum = 0.0;
  for (const auto& t : trees) sum += t.predict(x);
  return sum / static_cast<double>(trees.size());
}

namespace {

struct Split {
  int feature = -1;
  double threshold = 0.0;
  double score = 0.0;
};

struct Builder {
  const std::vector<std::vector<double>>& x;
  const std::vector<double>& y;
  const ForestConfig& cfg;
  RngStream& rng;
  std::size_t n_features;
  std::size_t subset;
  Tree tree;

  std::vector<std::size_t> pick_features() {
    std::vector<std::size_t> all(n_features);
    std::iota(all.begin(), all.end(), std::size_t{0});
    for (std::size_t i = 0; i < subset; ++i) {
      const std::size_t j = i + rng.uniform_index(n_features - i);
      std::swap(all[i], all[j]);
    }
    all.resize(subset);
    std::sort(all.begin(), all.end());
    return all;
  }

  std::optional<Split> best_split(const std::vector<std::size_t>& rows, double parent_score) {
    const std::size_t n = rows.size();
    std::optional<Split> best;
    double best_score = parent_score;
    for (std::size_t f : pick_features()) {
      std::vector<std::size_t> order(rows);
      std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a][f] < x[b][f]; });
      double total = 0.0;
      for (std::size_t r : order) total += y[r];
      double left = 0.0;
      for (std::size_t i = 0; i + 1 < n; ++i) {
        left += y[order[i]];
        const std::size_t nl = i + 1, nr = n - nl;
        const double a = x[order[i]][f], b = x[order[i + 1]][f];
        if (a == b || nl < cfg.min_leaf || nr < cfg.min_leaf) continue;
        const double right = total - left;
        const double score = left * left / static_cast<double>(nl) + right * right / static_cast<double>(nr);
        if (score > best_score + 1e-12 * std::max(1.0, std::abs(best_score))) {
          double t = a + (b - a) / 2.0;
          if (!(t >= a && t < b)) t = a;
          best_score = score;
          best = Split{static_cast<int>(f), t, score};
        }
      }
    }
    return best;
  }

  std::uint32_t grow(std::vector<std::size_t> rows, std::size_t depth) {
    const auto idx = static_cast<std::uint32_t>(tree.nodes.size());
    tree.nodes.emplace_back();
    double sum = 0.0;
    for (std::size_t r : rows) sum += y[r];
    const double n = static_cast<double>(rows.size());
    const double mean = sum / n;
    tree.nodes[idx].value = mean;

    double sse = 0.0;
    for (std::size_t r : rows) sse += (y[r] - mean) * (y[r] - mean);
    if (depth >= cfg.max_depth || rows.size() < 2 * cfg.min_leaf || sse == 0.0) return idx;

    const auto split = best_split(rows, sum * sum / n);
    if (!split) return idx;
    std::vector<std::size_t> lrows, rrows;
    for (std::size_t r : rows) {
      (x[r][static_cast<std::size_t>(split->feature)] <= split->threshold ? lrows : rrows).push_back(r);
    }
    rows.clear();
    rows.shrink_to_fit();
    const std::uint32_t l = grow(std::move(lrows), depth + 1);
    const std::uint32_t r = grow(std::move(rrows), depth + 1);
    tree.nodes[idx].feature = split->feature;
    tree.nodes[idx].threshold = split->threshold;
    tree.nodes[idx].left = l;
    tree.nodes[idx].right = r;
    return idx;
  }
};

void check_xy(const std::vector<std::vector<double>>& x, const std::vector<double>& y) {
  if (x.empty()) throw InputError("forest: no training rows");
  if (x.size() != y.size()) throw InputError("forest: feature and target counts differ");
  const std::size_t f = x.front().size();
  if (f == 0) throw InputError("forest: rows have no features");
  for (const auto& row : x) {
    if (row.size() != f) throw InputError("forest: ragged feature rows");
    for (double v : row) {
      if (!std::isfinite(v)) throw InputError("forest: non-finite feature value");
    }
  }
  for (double v : y) {
    if (!std::isfinite(v)) throw InputError("forest: non-finite target");
  }
}

}  // namespace

Tree fit_tree(const std::vector<std::vector<double>>& x, const std::vector<double>& y, std::vector<std::size_t> rows,
              const ForestConfig& cfg, RngStream& rng) {
  check_xy(x, y);
  if (rows.empty()) throw InputError("forest: tree has no rows");
  std::sort(rows.begin(), rows.end());
  const std::size_t f = x.front().size();
  const auto k = static_cast<std::size_t>(std::lround(cfg.feature_fraction * static_cast<double>(f)));
  Builder b{x, y, cfg, rng, f, std::clamp<std::size_t>(k, 1, f), {}};
  b.grow(std::move(rows), 0);
  return std::move(b.tree);
}

Forest forest_fit(const std::vector<std::vector<double>>& x, const std::vector<double>& y, const ForestConfig& cfg) {
  cfg.validate();
  check_xy(x, y);
  Forest forest;
  forest.feature_count = x.front().size();
  forest.config = cfg;
  forest.trees.resize(cfg.trees);
  const std::size_t n = x.size();

  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex mu;
  auto worker = [&] {
    for (;;) {
      const std::size_t t = next.fetch_add(1);
      if (t >= cfg.trees) return;
      try {
        RngStream rng(cfg.seed, t);
        std::vector<std::size_t> rows(n);
        if (cfg.bootstrap) {
          for (auto& r : rows) r = rng.uniform_index(n);
        } else {
          std::iota(rows.begin(), rows.end(), std::size_t{0});
        }
        forest.trees[t] = fit_tree(x, y, std::move(rows), cfg, rng);
      } catch (...) {
        std::lock_guard lock(mu);
        if (!failure) failure = std::current_exception();
        return;
      }
    }
  };
  const std::size_t threads = std::clamp<std::size_t>(cfg.threads, 1, cfg.trees);
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t i = 0; i < threads; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (failure) std::rethrow_exception(failure);
  return forest;
}

std::vector<double> forest_targets(const std::vector<RunRecord>& records) {
  if (records.empty()) throw InputError("forest: registry is empty");
  std::vector<double> stable;
  for (const auto& r : records) {
    if (r.stable) stable.push_back(r.min_val_loss);
  }
  if (stable.empty()) {
    for (const auto& r : records) stable.push_back(r.min_val_loss);
  }
  std::sort(stable.begin(), stable.end());
  const std::size_t m = stable.size();
  const double median = m % 2 ? stable[m / 2] : (stable[m / 2 - 1] + stable[m / 2]) / 2.0;
  const double cap = 10.0 * median;
  std::vector<double> y;
  y.reserve(records.size());
  for (const auto& r : records) y.push_back(r.stable ? r.min_val_loss : std::min(r.min_val_loss, cap));
  return y;
}

std::vector<std::vector<double>> forest_features(const std::vector<RunRecord>& records) {
  std::vector<std::vector<double>> x;
  x.reserve(records.size());
  for (const auto& r : records) {
    const auto f = r.features();
    x.emplace_back(f.begin(), f.end());
  }
  return x;
}

Forest forest_train(const std::vector<RunRecord>& records, const ForestConfig& cfg) {
  if (records.size() < 10) {
    throw InputError("forest: need at least 10 records to train, got " + std::to_string(records.size()));
  }
  return forest_fit(forest_features(records), forest_targets(records), cfg);
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> holdout_split(std::size_t n, double held_fraction,
                                                                            std::uint64_t seed) {
  if (!(held_fraction >= 0.0 && held_fraction < 1.0)) throw ConfigError("holdout fraction must be in [0, 1)");
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  RngStream rng(seed, 0x486f6c64ull);
  seeded_shuffle(idx.begin(), idx.end(), rng);
  const auto held = static_cast<std::size_t>(std::llround(held_fraction * static_cast<double>(n)));
  std::vector<std::size_t> test(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(held));
  std::vector<std::size_t> train(idx.begin() + static_cast<std::ptrdiff_t>(held), idx.end());
  std::sort(test.begin(), test.end());
  std::sort(train.begin(), train.end());
  return {train, test};
}

std::vector<double> average_ranks(const std::vector<double>& v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double r = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

std::optional<double> pearson(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw InputError("correlation: length mismatch");
  const std::size_t n = a.size();
  if (n < 3) return std::nullopt;
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / static_cast<double>(n);
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / static_cast<double>(n);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) return std::nullopt;
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

std::optional<double> spearman(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw InputError("correlation: length mismatch");
  return pearson(average_ranks(a), average_ranks(b));
}

ForestEval forest_eval(const Forest& f, const std::vector<std::vector<double>>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw InputError("forest: feature and target counts differ");
  if (x.empty()) throw InputError("forest: nothing to evaluate");
  ForestEval ev;
  ev.n = x.size();
  std::vector<double> pred;
  pred.reserve(x.size());
  for (const auto& row : x) pred.push_back(f.predict(row));
  for (std::size_t i = 0; i < y.size(); ++i) ev.mae += std::abs(pred[i] - y[i]);
  ev.mae /= static_cast<double>(y.size());
  ev.spearman = spearman(pred, y);
  ev.pearson = pearson(pred, y);
  return ev;
}

std::string forest_to_json(const Forest& f) {
  using nlohmann::ordered_json;
  ordered_json j;
  j["format"] = "brnn-forest";
  j["version"] = 1;
  j["feature_count"] = f.feature_count;
  j["config"] = ordered_json{{"trees", f.config.trees},
                             {"max_depth", f.config.max_depth},
                             {"min_leaf", f.config.min_leaf},
                             {"feature_fraction", f.config.feature_fraction},
                             {"bootstrap", f.config.bootstrap},
                             {"seed", f.config.seed}};
  j["held_out"] = f.held_out;
  ordered_json trees = ordered_json::array();
  for (const auto& t : f.trees) {
    ordered_json nodes = ordered_json::array();
    for (const auto& n : t.nodes) nodes.push_back(ordered_json::array({n.feature, n.threshold, n.left, n.right, n.value}));
    trees.push_back(nodes);
  }
  j["trees"] = trees;
  return j.dump() + "\n";
}

Forest forest_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("forest: ") + e.what(), e.byte);
  }
  try {
    if (j.at("format").get<std::string>() != "brnn-forest") throw ParseError("forest: not a forest model file", 0);
    const int version = j.at("version").get<int>();
    if (version != 1) throw ParseError("forest: model version " + std::to_string(version) + " is not supported", 0);
    Forest f;
    f.feature_count = j.at("feature_count").get<std::size_t>();
    const auto& c = j.at("config");
    f.config.trees = c.at("trees").get<std::size_t>();
    f.config.max_depth = c.at("max_depth").get<std::size_t>();
    f.config.min_leaf = c.at("min_leaf").get<std::size_t>();
    f.config.feature_fraction = c.at("feature_fraction").get<double>();
    f.config.bootstrap = c.at("bootstrap").get<bool>();
    f.config.seed = c.at("seed").get<std::uint64_t>();
    f.held_out = j.at("held_out").get<std::vector<std::uint64_t>>();
    for (const auto& jt : j.at("trees")) {
      Tree t;
      for (const auto& jn : jt) {
        TreeNode n;
        n.feature = jn.at(0).get<int>();
        n.threshold = jn.at(1).get<double>();
        n.left = jn.at(2).get<std::uint32_t>();
        n.right = jn.at(3).get<std::uint32_t>();
        n.value = jn.at(4).get<double>();
        t.nodes.push_back(n);
      }
      if (t.nodes.empty()) throw ParseError("forest: empty tree", 0);
      for (const auto& n : t.nodes) {
        if (n.feature >= 0 && (static_cast<std::size_t>(n.feature) >= f.feature_count || n.left >= t.nodes.size() ||
                               n.right >= t.nodes.size())) {
          throw ParseError("forest: node references out of range", 0);
        }
      }
      f.trees.push_back(std::move(t));
    }
    if (f.trees.empty()) throw ParseError("forest: model has no trees", 0);
    return f;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("forest: malformed model: ") + e.what(), 0);
  }
}

void save_forest(const Forest& f, const std::filesystem::path& path) { write_text_file(path, forest_to_json(f)); }

Forest load_forest(const std::filesystem::path& path) { return forest_from_json(read_text_file(path)); }

}  // namespace brnn
