#include "brnn/rng.hpp"

#include <cmath>

namespace brnn {

std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

RngStream::RngStream(std::uint64_t master_seed, std::uint64_t stream_id)
    : master_seed_(master_seed),
      stream_id_(stream_id),
      derived_seed_(splitmix64(master_seed ^ splitmix64(stream_id ^ 0x5851f42d4c957f2dULL))),
      engine_(derived_seed_) {}

RngStream RngStream::split(std::uint64_t child_id) const { return RngStream(derived_seed_, child_id); }

std::uint64_t RngStream::next_u64() { return engine_(); }

double RngStream::uniform() {
  // 53 random mantissa bits.
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double RngStream::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

double RngStream::normal(double mean, double std) {
  std::normal_distribution<double> dist(mean, std);
  return dist(engine_);
}

std::size_t RngStream::uniform_index(std::size_t n) {
  std::uniform_int_distribution<std::size_t> dist(0, n - 1);
  return dist(engine_);
}

Matrix sample_normal(RngStream& rng, std::size_t rows, std::size_t cols, double mean, double std) {
  if (!(std >= 0.0) || !std::isfinite(std)) throw ConfigError("sample_normal: std must be finite and >= 0");
  Matrix m(rows, cols, mean);
  if (std == 0.0) return m;
  std::normal_distribution<double> dist(mean, std);
  for (double& v : m.values()) v = dist(rng.engine());
  return m;
}

BoolMatrix sample_bernoulli_mask(RngStream& rng, std::size_t rows, std::size_t cols, double p) {
  if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("sample_bernoulli_mask: p must lie in [0, 1]");
  if (p == 1.0) return BoolMatrix(rows, cols, 1);
  if (p == 0.0) return BoolMatrix(rows, cols, 0);
  BoolMatrix m(rows, cols, 0);
  for (auto& v : m.values()) v = rng.uniform() < p ? 1 : 0;
  return m;
}

}  // namespace brnn
