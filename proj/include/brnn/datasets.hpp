#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string_view>
#include <vector>

#include "brnn/matrix.hpp"
#include "brnn/rng.hpp"
#include "brnn/rnn.hpp"

namespace brnn {

// ---------------------------------------------------------------------------
// IDX files (big-endian): magic 0x00000801 (labels) or 0x00000803 (images),
// one 32-bit dimension per axis, then an unsigned-byte payload.
// ---------------------------------------------------------------------------

struct IdxArray {
  std::vector<std::uint32_t> dims;
  std::vector<std::uint8_t> data;
};

IdxArray parse_idx(std::span<const std::uint8_t> bytes);

struct ImageSet {
  std::size_t rows = 28;
  std::size_t cols = 28;
  std::vector<std::vector<std::uint8_t>> images;  // rows * cols each, row-major
  std::vector<std::uint8_t> labels;

  void validate() const;
};

std::vector<std::vector<std::uint8_t>> parse_idx_images(std::span<const std::uint8_t> bytes, std::size_t& rows,
                                                        std::size_t& cols);
std::vector<std::uint8_t> parse_idx_labels(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);

// Reads <dir>/train-images-idx3-ubyte and <dir>/train-labels-idx1-ubyte.
ImageSet load_mnist(const std::filesystem::path& dir);

// ---------------------------------------------------------------------------
// Sequence datasets
// ---------------------------------------------------------------------------

enum class TaskKind { rad, rad_lite, bc };

std::string_view task_name(TaskKind k) noexcept;
TaskKind parse_task(std::string_view name);

struct Sequence {
  Matrix inputs;          // T x |x|, one row per step
  std::size_t label = 0;  // classification target
  Matrix targets;         // T x |y| for regression tasks, empty otherwise

  std::size_t length() const noexcept { return inputs.rows(); }
  friend bool operator==(const Sequence&, const Sequence&) = default;
};

// Generators fill `train` only; split() produces the train/validation partition.
struct SequenceDataset {
  TaskKind task = TaskKind::rad_lite;
  LossKind loss_kind = LossKind::cross_entropy_final;
  std::size_t input_dim = 0;
  std::size_t output_dim = 0;
  std::uint64_t seed = 0;
  std::vector<Sequence> train;
  std::vector<Sequence> validation;

  std::size_t size() const noexcept { return train.size() + validation.size(); }
  void validate() const;
  friend bool operator==(const SequenceDataset&, const SequenceDataset&) = default;
};

// Image transforms applied to square frames with intensities in [0, 1].
enum class Transform : std::uint8_t {
  identity,
  rotate90,
  rotate180,
  rotate270,
  flip_horizontal,
  flip_vertical,
  invert,
  shift_right3,
  shift_down3,
};

inline constexpr std::size_t kTransformCount = 9;

std::string_view transform_name(Transform t) noexcept;

// Ordered pair applied first-then-second.
struct TransformCombo {
  Transform first = Transform::identity;
  Transform second = Transform::identity;
  friend bool operator==(const TransformCombo&, const TransformCombo&) = default;
};

// All ordered pairs of distinct catalog entries (72 combos).
const std::vector<TransformCombo>& combo_catalog();

Matrix apply_transform(const Matrix& frame, Transform t);
Matrix apply_combo(const Matrix& frame, const TransformCombo& combo);

struct RadSequence {
  std::vector<std::vector<double>> frames;  // flattened, values in [0, 1]
  std::size_t anomaly_index = 0;
  std::size_t base_combo = 0;     // index into combo_catalog()
  std::size_t anomaly_combo = 0;  // index into combo_catalog()
};

// Builds one sequence from square source frames: base combo on every frame
// except `anomaly_index`, which receives the anomaly combo. Throws ConfigError
// when the two combos are equal.
RadSequence render_rad_sequence(const std::vector<Matrix>& sources, const TransformCombo& base,
                                const TransformCombo& anomaly, std::size_t anomaly_index);

// 28x28 digits are centred in 50x50 frames (input_dim 2500); output_dim = n + 1.
SequenceDataset rad_generate(const ImageSet& images, std::size_t count, std::size_t n, RngStream& rng);

// Same construction over procedural glyphs of size side x side.
SequenceDataset rad_lite_generate(std::size_t count, std::size_t n, std::size_t side, RngStream& rng);

// Glyph pool used by rad_lite_generate: `classes` prototypes, `per_class` jittered instances each.
ImageSet make_glyph_set(std::size_t side, std::size_t classes, std::size_t per_class, RngStream& rng);

// Dense tanh teacher: H' = tanh(Whx x + Whh H), Y = Wyh H', hidden width 2|y|.
struct BcTeacher {
  Matrix w_hx;
  Matrix w_hh;
  Matrix w_yh;

  static BcTeacher make(std::uint64_t teacher_seed, std::size_t input_dim, std::size_t output_dim);
  // inputs: T x |x| -> targets: T x |y|
  Matrix run(const Matrix& inputs) const;
  // Per output row, sum_j |Wyh(i, j)|; bounds |target_i| since |tanh| <= 1.
  std::vector<double> output_bound() const;
};

SequenceDataset bc_generate(std::uint64_t teacher_seed, std::size_t input_dim, std::size_t output_dim, std::size_t count,
                            std::size_t length, RngStream& rng);

SequenceDataset split(const SequenceDataset& dataset, double validation_fraction, RngStream& rng);

void save_dataset(const SequenceDataset& ds, const std::filesystem::path& path);
SequenceDataset load_dataset(const std::filesystem::path& path);

}  // namespace brnn
