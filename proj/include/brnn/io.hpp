#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "brnn/block_spec.hpp"
#include "brnn/optim.hpp"

namespace brnn {

// Shortest round-trip decimal form, '.' separator, no locale influence.
std::string format_double(double v);
double parse_double(std::string_view text, std::string_view what);
std::uint64_t parse_u64(std::string_view text, std::string_view what);

// Flat key-value text, e.g. `block.hx.sparsity = 0.08`. Lines starting with '#'
// are comments. Every key is required; unknown keys are rejected.
std::string spec_to_text(const BlockSpec& spec, std::string_view header_comment = {});
BlockSpec spec_from_text(std::string_view text);
void save_spec(const BlockSpec& spec, const std::filesystem::path& path, std::string_view header_comment = {});
BlockSpec load_spec(const std::filesystem::path& path);

struct Checkpoint {
  BlockSpec spec;
  WeightSpace weights;
  std::optional<AdamState> optimizer;
  std::uint64_t seed = 0;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

// "BRNNCKPT", u32 version, spec text, u64 seed, then per block (hx..yy): rows,
// cols, bit-packed row-major mask (LSB first), count, values over mask-true
// positions row-major; biases; optional Adam state. Little-endian throughout.
std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

void write_text_file(const std::filesystem::path& path, std::string_view text);
std::string read_text_file(const std::filesystem::path& path);

}  // namespace brnn
