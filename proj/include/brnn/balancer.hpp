#pragma once

#include <cstddef>

#include "brnn/block_spec.hpp"

namespace brnn {

// A-priori specification from task dimensions alone: every block dense except
// one off-centre top-row block (hx when |x| >= |y|, otherwise hy), whose
// sparsity is searched on a grid jointly with the hidden width so that the
// nominal hidden proportion lands as close as possible to the target.
struct BalanceRequest {
  std::size_t input_dim = 1;
  std::size_t output_dim = 1;
  double budget = 0.0;
  double target_hp = 0.5;
  double step = 0.01;
  std::size_t max_hidden = 4096;

  void validate() const;
};

struct BalanceResult {
  BlockSpec spec;
  double achieved_hp = 0.0;
  double nominal_total = 0.0;
  BlockId sparsified_block = BlockId::hx;
  double sparsity = 1.0;
};

// Hidden proportion computed from expected (nominal) block counts.
double nominal_hidden_proportion(const BlockSpec& spec);

// Grid values k * step for k = 1.. with 1.0 always included.
std::vector<double> sparsity_grid(double step);

BlockId balanced_block_for(std::size_t input_dim, std::size_t output_dim) noexcept;

// Ordering used to choose among feasible (h, s) points: closer hp first
// (differences under 1e-12 count as ties), then larger nominal total, then smaller h.
struct BalanceCandidate {
  double hp_gap = 0.0;
  double total = 0.0;
  std::size_t hidden = 0;
  double sparsity = 0.0;
};
bool better_candidate(const BalanceCandidate& a, const BalanceCandidate& b) noexcept;

BalanceResult balance(const BalanceRequest& req);

}  // namespace brnn
