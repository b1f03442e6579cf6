#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "brnn/sweep.hpp"

namespace brnn {

struct ForestConfig {
  std::size_t trees = 200;
  std::size_t max_depth = 10;
  std::size_t min_leaf = 2;
  double feature_fraction = 1.0 / 3.0;
  bool bootstrap = true;
  std::uint64_t seed = 0;
  std::size_t threads = 1;

  void validate() const;
};

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  std::uint32_t left = 0;
  std::uint32_t right = 0;
  double value = 0.0;

  friend bool operator==(const TreeNode&, const TreeNode&) = default;
};

struct Tree {
  std::vector<TreeNode> nodes;  // root at 0
  double predict(const std::vector<double>& x) const;
  friend bool operator==(const Tree&, const Tree&) = default;
};

struct Forest {
  std::size_t feature_count = 0;
  std::vector<Tree> trees;
  ForestConfig config;
  std::vector<std::uint64_t> held_out;  // run ids kept out of training, if any

  double predict(const std::vector<double>& x) const;
};

// x is row-major, one row per sample. Trees are fit independently, each from stream (seed, tree index).
Forest forest_fit(const std::vector<std::vector<double>>& x, const std::vector<double>& y, const ForestConfig& cfg);

// One regression tree over the given rows (repeats allowed). Each node draws its
// own feature subset from rng.
Tree fit_tree(const std::vector<std::vector<double>>& x, const std::vector<double>& y, std::vector<std::size_t> rows,
              const ForestConfig& cfg, RngStream& rng);

// Regression targets from a registry: min validation loss, with unstable runs
// capped at ten times the median of stable runs.
std::vector<double> forest_targets(const std::vector<RunRecord>& records);
std::vector<std::vector<double>> forest_features(const std::vector<RunRecord>& records);

// Needs at least 10 records.
Forest forest_train(const std::vector<RunRecord>& records, const ForestConfig& cfg);

// Deterministic 80/20 style partition of record indices: {train, held out}.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> holdout_split(std::size_t n, double held_fraction,
                                                                            std::uint64_t seed);

struct ForestEval {
  std::size_t n = 0;
  std::optional<double> spearman;
  std::optional<double> pearson;
  double mae = 0.0;
};

std::optional<double> pearson(const std::vector<double>& a, const std::vector<double>& b);
std::optional<double> spearman(const std::vector<double>& a, const std::vector<double>& b);
std::vector<double> average_ranks(const std::vector<double>& v);

ForestEval forest_eval(const Forest& f, const std::vector<std::vector<double>>& x, const std::vector<double>& y);

void save_forest(const Forest& f, const std::filesystem::path& path);
Forest load_forest(const std::filesystem::path& path);
std::string forest_to_json(const Forest& f);
Forest forest_from_json(const std::string& text);

}  // namespace brnn
