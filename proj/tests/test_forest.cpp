#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <set>

#include "brnn/export.hpp"
#include "brnn/forest.hpp"
#include "oracles.hpp"

using namespace brnn;

namespace {

using Rows = std::vector<std::vector<double>>;

Tree single_tree(const Rows& x, const std::vector<double>& y, std::size_t depth, std::size_t min_leaf) {
  ForestConfig cfg;
  cfg.max_depth = depth;
  cfg.min_leaf = min_leaf;
  cfg.feature_fraction = 1.0;
  std::vector<std::size_t> rows(x.size());
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
  RngStream rng(0, 0);
  return fit_tree(x, y, rows, cfg, rng);
}

RunRecord fake_record(std::uint64_t id, RngStream& rng) {
  RunRecord r;
  r.run_id = id;
  for (auto& c : r.spec.blocks) c = BlockConfig{rng.uniform(-0.1, 0.1), rng.uniform(0.01, 1), rng.uniform(0.01, 1)};
  r.spec.learning_rate = rng.uniform(1e-4, 1e-2);
  r.hidden_proportion = rng.uniform();
  r.min_val_loss = 2.0 - r.hidden_proportion + 0.1 * rng.normal(0, 1);
  r.val_losses = {r.min_val_loss};
  return r;
}

}  // namespace

TEST_CASE("constant targets give constant predictions") {
  RngStream rng(1, 0);
  Rows x;
  for (int i = 0; i < 30; ++i) x.push_back({rng.normal(0, 1), rng.normal(0, 1)});
  const std::vector<double> y(30, 2.5);
  ForestConfig cfg;
  cfg.trees = 10;
  const Forest f = forest_fit(x, y, cfg);
  for (const auto& t : f.trees) CHECK(t.nodes.size() == 1);
  for (int i = 0; i < 20; ++i) CHECK(f.predict({rng.normal(0, 5), rng.normal(0, 5)}) == 2.5);
}

TEST_CASE("depth-one split on a step") {
  const Rows x = {{0}, {1}, {2}, {3}};
  const std::vector<double> y = {0, 0, 1, 1};
  const Tree t = single_tree(x, y, 1, 1);
  REQUIRE(t.nodes.size() == 3);
  CHECK(t.nodes[0].feature == 0);
  CHECK(t.nodes[0].threshold > 1.0);
  CHECK(t.nodes[0].threshold < 2.0);
  CHECK(t.predict({0.5}) == 0.0);
  CHECK(t.predict({2.5}) == 1.0);
}

TEST_CASE("unbounded tree memorizes distinct rows") {
  RngStream rng(2, 0);
  Rows x;
  std::vector<double> y;
  for (int i = 0; i < 60; ++i) {
    x.push_back({rng.uniform(), rng.uniform(), rng.uniform()});
    y.push_back(rng.normal(0, 1));
  }
  ForestConfig cfg;
  cfg.trees = 1;
  cfg.bootstrap = false;
  cfg.max_depth = 1000;
  cfg.min_leaf = 1;
  cfg.feature_fraction = 1.0;
  const Forest f = forest_fit(x, y, cfg);
  double mae = 0;
  for (std::size_t i = 0; i < x.size(); ++i) mae += std::abs(f.predict(x[i]) - y[i]);
  CHECK(mae == 0.0);
}

TEST_CASE("single tree equals the brute-force partition") {
  for (std::uint64_t seed = 0; seed < 25; ++seed) {
    RngStream rng(seed, 7);
    const std::size_t n = 5 + rng.uniform_index(46);
    const std::size_t f = 1 + rng.uniform_index(3);
    Rows x(n, std::vector<double>(f));
    std::vector<double> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      // coarse grid so duplicates and ties in x occur
      for (auto& v : x[i]) v = static_cast<double>(rng.uniform_index(8)) / 4.0;
      y[i] = rng.normal(0, 1) + x[i][0];
    }
    const std::size_t depth = 1 + rng.uniform_index(5);
    const std::size_t min_leaf = 1 + rng.uniform_index(3);
    const Tree t = single_tree(x, y, depth, min_leaf);
    oracle::TreeOracle o{x, y, depth, min_leaf};
    std::vector<std::size_t> all(n);
    for (std::size_t i = 0; i < n; ++i) all[i] = i;
    const auto root = o.build(all, 0);
    for (int q = 0; q < 200; ++q) {
      std::vector<double> v(f);
      for (auto& e : v) e = static_cast<double>(rng.uniform_index(10)) / 4.0 - 0.1;
      CHECK(t.predict(v) == oracle::TreeOracle::predict(root.get(), v));
    }
  }
}

TEST_CASE("forest prediction properties") {
  RngStream rng(4, 0);
  Rows x;
  std::vector<double> y;
  for (int i = 0; i < 80; ++i) {
    x.push_back({rng.normal(0, 1), rng.normal(0, 1), rng.normal(0, 1)});
    y.push_back(std::sin(x.back()[0]) + 0.1 * rng.normal(0, 1));
  }
  ForestConfig cfg;
  cfg.trees = 25;
  cfg.max_depth = 4;
  const Forest f = forest_fit(x, y, cfg);
  const auto [lo, hi] = std::minmax_element(y.begin(), y.end());
  Forest doubled = f;
  doubled.trees.insert(doubled.trees.end(), f.trees.begin(), f.trees.end());
  for (int q = 0; q < 100; ++q) {
    const std::vector<double> v = {rng.normal(0, 3), rng.normal(0, 3), rng.normal(0, 3)};
    const double p = f.predict(v);
    CHECK(p >= *lo);
    CHECK(p <= *hi);
    CHECK(doubled.predict(v) == doctest::Approx(p).epsilon(1e-12));
  }
  for (const auto& t : f.trees) {
    for (const auto& n : t.nodes) {
      if (n.feature >= 0) CHECK(std::isfinite(n.threshold));
    }
  }
  CHECK_THROWS_AS(f.predict({1.0}), InputError);

  // thread count does not change the model
  ForestConfig threaded = cfg;
  threaded.threads = 4;
  const Forest g = forest_fit(x, y, threaded);
  CHECK(g.trees == f.trees);

  ForestConfig single = cfg;
  single.trees = 1;
  single.max_depth = 1;
  single.min_leaf = 80;
  const Forest leaf = forest_fit(x, y, single);
  REQUIRE(leaf.trees[0].nodes.size() == 1);
  CHECK(leaf.predict({0, 0, 0}) == leaf.trees[0].nodes[0].value);
}

TEST_CASE("forest depth bound") {
  RngStream rng(5, 0);
  Rows x;
  std::vector<double> y;
  for (int i = 0; i < 200; ++i) {
    x.push_back({rng.uniform(), rng.uniform()});
    y.push_back(rng.normal(0, 1));
  }
  ForestConfig cfg;
  cfg.trees = 5;
  cfg.max_depth = 3;
  const Forest f = forest_fit(x, y, cfg);
  for (const auto& t : f.trees) {
    std::function<std::size_t(std::size_t)> depth = [&](std::size_t i) -> std::size_t {
      if (t.nodes[i].feature < 0) return 0;
      return 1 + std::max(depth(t.nodes[i].left), depth(t.nodes[i].right));
    };
    CHECK(depth(0) <= 3);
  }
}

TEST_CASE("correlations") {
  const std::vector<double> a = {1, 2, 3, 4, 5};
  CHECK(*spearman(a, {10, 20, 30, 40, 50}) == doctest::Approx(1.0));
  CHECK(*spearman(a, {5, 4, 3, 2, 1}) == doctest::Approx(-1.0));
  CHECK(*spearman(a, {1, 4, 9, 16, 25}) == doctest::Approx(1.0));
  CHECK_FALSE(spearman(a, {2, 2, 2, 2, 2}).has_value());
  CHECK_FALSE(spearman({1, 2}, {1, 2}).has_value());
  CHECK(average_ranks({3, 1, 3, 2}) == std::vector<double>{3.5, 1, 3.5, 2});
  CHECK(*pearson({1, 2, 3}, {2, 4, 6}) == doctest::Approx(1.0));

  // constant predictor: spearman undefined, mae is the mean absolute deviation around that constant
  Forest constant;
  constant.feature_count = 1;
  Tree t;
  t.nodes.push_back(TreeNode{-1, 0, 0, 0, 2.0});
  constant.trees.push_back(t);
  const ForestEval ev = forest_eval(constant, {{0}, {1}, {2}, {3}}, {1, 2, 3, 6});
  CHECK_FALSE(ev.spearman.has_value());
  CHECK_FALSE(ev.pearson.has_value());
  CHECK(ev.mae == doctest::Approx((1 + 0 + 1 + 4) / 4.0));
}

TEST_CASE("targets cap unstable runs") {
  std::vector<RunRecord> rs(4);
  const double losses[] = {1.0, 2.0, 3.0, 1e9};
  for (int i = 0; i < 4; ++i) {
    rs[i].min_val_loss = losses[i];
    rs[i].stable = i < 3;
  }
  CHECK(forest_targets(rs) == std::vector<double>{1, 2, 3, 20});
  rs[3].min_val_loss = 5.0;
  CHECK(forest_targets(rs)[3] == 5.0);
  for (auto& r : rs) r.stable = false;
  CHECK(forest_targets(rs)[3] == 5.0);
}

TEST_CASE("forest training on records and model files") {
  RngStream rng(9, 0);
  std::vector<RunRecord> records;
  for (std::uint64_t i = 0; i < 120; ++i) records.push_back(fake_record(i, rng));
  const auto [train_idx, held_idx] = holdout_split(records.size(), 0.2, 3);
  CHECK(held_idx.size() == 24);
  CHECK(train_idx.size() == 96);
  std::vector<RunRecord> train, held;
  for (auto i : train_idx) train.push_back(records[i]);
  for (auto i : held_idx) held.push_back(records[i]);

  ForestConfig cfg;
  cfg.trees = 40;
  Forest f = forest_train(train, cfg);
  for (const auto& r : held) f.held_out.push_back(r.run_id);
  const ForestEval ev = forest_eval(f, forest_features(held), forest_targets(held));
  REQUIRE(ev.spearman.has_value());
  CHECK(*ev.spearman > 0.6);

  const auto path = std::filesystem::temp_directory_path() / "brnn_forest_test.json";
  save_forest(f, path);
  const Forest back = load_forest(path);
  CHECK(back.trees == f.trees);
  CHECK(back.held_out == f.held_out);
  CHECK(forest_to_json(back) == forest_to_json(f));
  std::filesystem::remove(path);

  const std::string pred = pred_csv(held, f);
  CHECK(static_cast<std::size_t>(std::count(pred.begin(), pred.end(), '\n')) == held.size() + 1);

  records.resize(9);
  CHECK_THROWS_AS(forest_train(records, cfg), InputError);
  CHECK_THROWS_AS(forest_from_json("{\"format\":\"other\"}"), ParseError);
}
