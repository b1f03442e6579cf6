#include "brnn/balancer.hpp"

#include <cmath>
#include <optional>

namespace brnn {

namespace {

constexpr double kHpTieTolerance = 1e-12;

BlockSpec family_spec(const BalanceRequest& req, BlockId sparse_block, double s, std::size_t h) {
  BlockSpec spec;
  spec.input_dim = req.input_dim;
  spec.output_dim = req.output_dim;
  spec.hidden_dim = h;
  spec.block(sparse_block).sparsity = s;
  return spec;
}

}  // namespace

void BalanceRequest::validate() const {
  if (input_dim < 1 || output_dim < 1) throw ConfigError("balance: dimensions must be >= 1");
  if (!(target_hp > 0.0 && target_hp < 1.0)) throw ConfigError("balance: target_hp must lie in (0, 1)");
  if (!(step > 0.0 && step <= 0.5)) throw ConfigError("balance: step must lie in (0, 0.5]");
  if (max_hidden < 1) throw ConfigError("balance: max hidden dim must be >= 1");
  if (!(budget > 0.0) || !std::isfinite(budget)) throw ConfigError("balance: budget must be positive");
}

double nominal_hidden_proportion(const BlockSpec& spec) {
  const auto counts = nominal_param_count(spec);
  const double top = counts.block(BlockId::hx) + counts.block(BlockId::hh) + counts.block(BlockId::hy);
  if (top <= 0.0) return 0.0;
  return counts.block(BlockId::hh) / top;
}

std::vector<double> sparsity_grid(double step) {
  std::vector<double> grid;
  for (std::size_t k = 1;; ++k) {
    // Round to 12 digits so that 0.07 is the grid point, not 0.07000000000000001.
    const double s = std::round(static_cast<double>(k) * step * 1e12) / 1e12;
    if (s >= 1.0) break;
    grid.push_back(s);
  }
  grid.push_back(1.0);
  return grid;
}

BlockId balanced_block_for(std::size_t input_dim, std::size_t output_dim) noexcept {
  return input_dim >= output_dim ? BlockId::hx : BlockId::hy;
}

bool better_candidate(const BalanceCandidate& a, const BalanceCandidate& b) noexcept {
  if (std::abs(a.hp_gap - b.hp_gap) > kHpTieTolerance) return a.hp_gap < b.hp_gap;
  if (a.total != b.total) return a.total > b.total;
  return a.hidden < b.hidden;
}

BalanceResult balance(const BalanceRequest& req) {
  req.validate();
  const BlockId sparse_block = balanced_block_for(req.input_dim, req.output_dim);

  {
    const BlockSpec dense_h1 = family_spec(req, sparse_block, 1.0, 1);
    if (nominal_param_count(dense_h1).total > req.budget) {
      throw ConfigError("balance: budget " + std::to_string(req.budget) +
                        " cannot hold a dense network with hidden_dim = 1 (needs " +
                        std::to_string(nominal_param_count(dense_h1).total) + ")");
    }
  }

  // hp(h) = h / (off-centre per-unit width + h) rises strictly with h, so for each s
  // only the two integers around the crossing point (or the budget cap) can win.
  const double off_centre_other = static_cast<double>(sparse_block == BlockId::hx ? req.output_dim : req.input_dim);
  const double off_centre_sparse = static_cast<double>(sparse_block == BlockId::hx ? req.input_dim : req.output_dim);

  std::optional<BalanceCandidate> best;
  for (double s : sparsity_grid(req.step)) {
    BlockSpec spec = family_spec(req, sparse_block, s, 1);
    std::size_t h_max = 0;
    try {
      h_max = solve_hidden_dim(spec, req.budget, req.max_hidden);
    } catch (const ConfigError&) {
      continue;
    }
    const double crossing = req.target_hp * (s * off_centre_sparse + off_centre_other) / (1.0 - req.target_hp);
    std::vector<std::size_t> candidates;
    if (crossing >= static_cast<double>(h_max)) {
      candidates.push_back(h_max);
    } else {
      const auto lo = static_cast<std::size_t>(std::max(1.0, std::floor(crossing)));
      candidates.push_back(std::min(lo, h_max));
      if (lo + 1 <= h_max) candidates.push_back(lo + 1);
    }
    for (std::size_t h : candidates) {
      spec.hidden_dim = h;
      BalanceCandidate c{std::abs(nominal_hidden_proportion(spec) - req.target_hp), nominal_param_count(spec).total, h, s};
      if (!best || better_candidate(c, *best)) best = c;
    }
  }
  if (!best) {
    throw ConfigError("balance: no grid point fits the budget; the binding constraint is the parameter budget " +
                      std::to_string(req.budget));
  }

  BalanceResult result;
  result.spec = family_spec(req, sparse_block, best->sparsity, best->hidden);
  apply_default_init(result.spec);
  result.achieved_hp = nominal_hidden_proportion(result.spec);
  result.nominal_total = nominal_param_count(result.spec).total;
  result.sparsified_block = sparse_block;
  result.sparsity = best->sparsity;
  return result;
}

}  // namespace brnn
