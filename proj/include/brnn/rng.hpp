#pragma once

#include <cstddef>
#include <cstdint>
#include <random>

#include "brnn/matrix.hpp"

namespace brnn {

std::uint64_t splitmix64(std::uint64_t x) noexcept;

// A seeded random stream identified by (master_seed, stream_id). Streams are
// single-owner; parallel workers split their own child streams up front.
class RngStream {
 public:
  RngStream(std::uint64_t master_seed, std::uint64_t stream_id);

  std::uint64_t master_seed() const noexcept { return master_seed_; }
  std::uint64_t stream_id() const noexcept { return stream_id_; }

  // Child stream keyed by this stream's identity and `child_id`; does not
  // advance this stream.
  RngStream split(std::uint64_t child_id) const;

  double uniform();                       // [0, 1)
  double uniform(double lo, double hi);   // [lo, hi)
  double normal(double mean, double std);
  std::size_t uniform_index(std::size_t n);  // [0, n)
  std::uint64_t next_u64();

  std::mt19937_64& engine() noexcept { return engine_; }

 private:
  std::uint64_t master_seed_;
  std::uint64_t stream_id_;
  std::uint64_t derived_seed_;
  std::mt19937_64 engine_;
};

Matrix sample_normal(RngStream& rng, std::size_t rows, std::size_t cols, double mean, double std);

// p == 1 and p == 0 are exact and consume no draws.
BoolMatrix sample_bernoulli_mask(RngStream& rng, std::size_t rows, std::size_t cols, double p);

template <class It>
void seeded_shuffle(It first, It last, RngStream& rng) {
  const auto n = static_cast<std::size_t>(last - first);
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = rng.uniform_index(i);
    std::swap(first[i - 1], first[j]);
  }
}

}  // namespace brnn
