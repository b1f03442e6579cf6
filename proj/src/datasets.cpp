#include "brnn/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include "brnn/binary_io.hpp"

namespace brnn {

// ---------------------------------------------------------------------------
// IDX
// ---------------------------------------------------------------------------

namespace {

std::uint32_t read_be32(std::span<const std::uint8_t> bytes, std::size_t offset) {
  if (bytes.size() < offset + 4) throw ParseError("idx: truncated header", bytes.size());
  return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

}  // namespace

IdxArray parse_idx(std::span<const std::uint8_t> bytes) {
  const std::uint32_t magic = read_be32(bytes, 0);
  if (magic != 0x00000801u && magic != 0x00000803u) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "0x%08x", magic);
    throw ParseError(std::string("idx: unsupported magic ") + buf, 0);
  }
  const std::size_t rank = magic & 0xffu;
  IdxArray out;
  std::uint64_t payload = 1;
  for (std::size_t i = 0; i < rank; ++i) {
    const std::size_t off = 4 + 4 * i;
    const std::uint32_t d = read_be32(bytes, off);
    out.dims.push_back(d);
    if (d != 0 && payload > (std::uint64_t{1} << 40) / d) throw ParseError("idx: dimension product overflows", off);
    payload *= d;
  }
  const std::size_t header = 4 + 4 * rank;
  const std::size_t available = bytes.size() - header;
  if (available < payload) {
    throw ParseError("idx: payload truncated, expected " + std::to_string(payload) + " bytes but found " +
                         std::to_string(available),
                     bytes.size());
  }
  if (available > payload) throw ParseError("idx: trailing bytes after payload", header + payload);
  out.data.assign(bytes.begin() + static_cast<std::ptrdiff_t>(header), bytes.end());
  return out;
}

std::vector<std::vector<std::uint8_t>> parse_idx_images(std::span<const std::uint8_t> bytes, std::size_t& rows,
                                                        std::size_t& cols) {
  auto arr = parse_idx(bytes);
  if (arr.dims.size() != 3) throw ParseError("idx: image file must have magic 0x00000803", 0);
  rows = arr.dims[1];
  cols = arr.dims[2];
  const std::size_t stride = rows * cols;
  std::vector<std::vector<std::uint8_t>> images(arr.dims[0]);
  for (std::size_t i = 0; i < images.size(); ++i) {
    images[i].assign(arr.data.begin() + static_cast<std::ptrdiff_t>(i * stride),
                     arr.data.begin() + static_cast<std::ptrdiff_t>((i + 1) * stride));
  }
  return images;
}

std::vector<std::uint8_t> parse_idx_labels(std::span<const std::uint8_t> bytes) {
  auto arr = parse_idx(bytes);
  if (arr.dims.size() != 1) throw ParseError("idx: label file must have magic 0x00000801", 0);
  return std::move(arr.data);
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void ImageSet::validate() const {
  if (images.size() != labels.size()) throw InputError("image set: image and label counts differ");
  for (const auto& img : images) {
    if (img.size() != rows * cols) throw InputError("image set: image size does not match declared shape");
  }
}

ImageSet load_mnist(const std::filesystem::path& dir) {
  ImageSet set;
  set.images = parse_idx_images(read_file_bytes(dir / "train-images-idx3-ubyte"), set.rows, set.cols);
  set.labels = parse_idx_labels(read_file_bytes(dir / "train-labels-idx1-ubyte"));
  set.validate();
  return set;
}

// ---------------------------------------------------------------------------
// Task metadata
// ---------------------------------------------------------------------------

std::string_view task_name(TaskKind k) noexcept {
  switch (k) {
    case TaskKind::rad: return "rad";
    case TaskKind::rad_lite: return "rad-lite";
    case TaskKind::bc: return "bc";
  }
  return "rad-lite";
}

TaskKind parse_task(std::string_view name) {
  if (name == "rad") return TaskKind::rad;
  if (name == "rad-lite" || name == "rad_lite") return TaskKind::rad_lite;
  if (name == "bc") return TaskKind::bc;
  throw ConfigError("unknown task '" + std::string(name) + "'");
}

void SequenceDataset::validate() const {
  auto check = [&](const Sequence& s) {
    if (s.inputs.cols() != input_dim) throw InputError("dataset: sequence input width differs from input_dim");
    if (s.length() == 0) throw InputError("dataset: empty sequence");
    if (loss_kind == LossKind::cross_entropy_final) {
      if (s.label >= output_dim) throw InputError("dataset: label out of range");
    } else if (s.targets.rows() != s.length() || s.targets.cols() != output_dim) {
      throw InputError("dataset: target shape mismatch");
    }
  };
  for (const auto& s : train) check(s);
  for (const auto& s : validation) check(s);
}

// ---------------------------------------------------------------------------
// Transforms
// ---------------------------------------------------------------------------

std::string_view transform_name(Transform t) noexcept {
  static constexpr std::array<std::string_view, kTransformCount> names = {
      "identity", "rotate90", "rotate180", "rotate270", "flip-horizontal",
      "flip-vertical", "invert-intensity", "shift(+3,0)", "shift(0,+3)"};
  return names[static_cast<std::size_t>(t)];
}

const std::vector<TransformCombo>& combo_catalog() {
  static const std::vector<TransformCombo> catalog = [] {
    std::vector<TransformCombo> c;
    for (std::size_t a = 0; a < kTransformCount; ++a) {
      for (std::size_t b = 0; b < kTransformCount; ++b) {
        if (a != b) c.push_back({static_cast<Transform>(a), static_cast<Transform>(b)});
      }
    }
    return c;
  }();
  return catalog;
}

Matrix apply_transform(const Matrix& frame, Transform t) {
  const std::size_t n = frame.rows();
  if (frame.cols() != n) throw ShapeError("apply_transform: frame must be square, got " + shape_string(frame));
  Matrix out(n, n, 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < n; ++c) {
      const double v = frame(r, c);
      switch (t) {
        case Transform::identity: out(r, c) = v; break;
        case Transform::rotate90: out(c, n - 1 - r) = v; break;  // clockwise
        case Transform::rotate180: out(n - 1 - r, n - 1 - c) = v; break;
        case Transform::rotate270: out(n - 1 - c, r) = v; break;
        case Transform::flip_horizontal: out(r, n - 1 - c) = v; break;
        case Transform::flip_vertical: out(n - 1 - r, c) = v; break;
        case Transform::invert: out(r, c) = 1.0 - v; break;
        case Transform::shift_right3:
          if (c + 3 < n) out(r, c + 3) = v;
          break;
        case Transform::shift_down3:
          if (r + 3 < n) out(r + 3, c) = v;
          break;
      }
    }
  }
  return out;
}

Matrix apply_combo(const Matrix& frame, const TransformCombo& combo) {
  return apply_transform(apply_transform(frame, combo.first), combo.second);
}

RadSequence render_rad_sequence(const std::vector<Matrix>& sources, const TransformCombo& base,
                                const TransformCombo& anomaly, std::size_t anomaly_index) {
  if (base == anomaly) throw ConfigError("rad: anomaly combo must differ from the base combo");
  if (sources.size() < 2) throw ConfigError("rad: sequences need at least two frames");
  if (anomaly_index >= sources.size()) throw ConfigError("rad: anomaly index out of range");
  RadSequence seq;
  seq.anomaly_index = anomaly_index;
  for (std::size_t i = 0; i < sources.size(); ++i) {
    Matrix f = apply_combo(sources[i], i == anomaly_index ? anomaly : base);
    seq.frames.emplace_back(f.values().begin(), f.values().end());
  }
  const auto& cat = combo_catalog();
  auto find = [&](const TransformCombo& c) {
    return static_cast<std::size_t>(std::find(cat.begin(), cat.end(), c) - cat.begin());
  };
  seq.base_combo = find(base);
  seq.anomaly_combo = find(anomaly);
  return seq;
}

namespace {

Matrix to_frame(const std::vector<std::uint8_t>& img, std::size_t rows, std::size_t cols, std::size_t side) {
  if (rows > side || cols > side) throw ConfigError("rad: image larger than frame");
  Matrix f(side, side, 0.0);
  const std::size_t r0 = (side - rows) / 2;
  const std::size_t c0 = (side - cols) / 2;
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) f(r0 + r, c0 + c) = static_cast<double>(img[r * cols + c]) / 255.0;
  }
  return f;
}

SequenceDataset build_rad(const ImageSet& images, std::size_t count, std::size_t n, std::size_t side, TaskKind task,
                          RngStream& rng) {
  if (n < 2) throw ConfigError("rad: n must be >= 2");
  images.validate();
  std::map<std::uint8_t, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < images.labels.size(); ++i) by_class[images.labels[i]].push_back(i);
  if (by_class.empty()) throw ConfigError("rad: image set is empty");
  std::vector<std::uint8_t> classes;
  for (const auto& [label, idx] : by_class) classes.push_back(label);

  const auto& catalog = combo_catalog();
  SequenceDataset ds;
  ds.task = task;
  ds.loss_kind = LossKind::cross_entropy_final;
  ds.input_dim = side * side;
  ds.output_dim = n + 1;
  ds.seed = rng.master_seed();
  ds.train.reserve(count);

  for (std::size_t s = 0; s < count; ++s) {
    const std::uint8_t label = classes[rng.uniform_index(classes.size())];
    auto pool = by_class[label];
    if (pool.size() < n) {
      throw ConfigError("rad: class " + std::to_string(label) + " has " + std::to_string(pool.size()) +
                        " images, fewer than n = " + std::to_string(n));
    }
    // Partial Fisher-Yates for n distinct images.
    for (std::size_t i = 0; i < n; ++i) std::swap(pool[i], pool[i + rng.uniform_index(pool.size() - i)]);
    std::vector<Matrix> sources;
    sources.reserve(n);
    for (std::size_t i = 0; i < n; ++i) sources.push_back(to_frame(images.images[pool[i]], images.rows, images.cols, side));

    const std::size_t base = rng.uniform_index(catalog.size());
    const std::size_t anomaly_index = rng.uniform_index(n);
    // Redraw anomaly combos that render the anomalous source identically to the base combo.
    const Matrix base_render = apply_combo(sources[anomaly_index], catalog[base]);
    std::size_t anomaly = base;
    for (int attempt = 0; attempt < 64; ++attempt) {
      const std::size_t pick = rng.uniform_index(catalog.size() - 1);
      anomaly = pick >= base ? pick + 1 : pick;
      if (apply_combo(sources[anomaly_index], catalog[anomaly]) != base_render) break;
    }
    RadSequence rad = render_rad_sequence(sources, catalog[base], catalog[anomaly], anomaly_index);

    Sequence seq;
    seq.inputs = Matrix(n, ds.input_dim, 0.0);
    for (std::size_t t = 0; t < n; ++t) std::copy(rad.frames[t].begin(), rad.frames[t].end(), seq.inputs.row(t).begin());
    seq.label = rad.anomaly_index;
    ds.train.push_back(std::move(seq));
  }
  return ds;
}

}  // namespace

SequenceDataset rad_generate(const ImageSet& images, std::size_t count, std::size_t n, RngStream& rng) {
  return build_rad(images, count, n, 50, TaskKind::rad, rng);
}

ImageSet make_glyph_set(std::size_t side, std::size_t classes, std::size_t per_class, RngStream& rng) {
  if (side < 8) throw ConfigError("glyphs: side must be >= 8");
  ImageSet set;
  set.rows = side;
  set.cols = side;
  for (std::size_t c = 0; c < classes; ++c) {
    // Prototype: a blob grown by random accretion from one interior pixel,
    // with per-pixel intensity so no transform maps it onto itself.
    Matrix proto(side, side, 0.0);
    const std::size_t inner = side - 2;
    const auto target = static_cast<std::size_t>(std::lround(static_cast<double>(side * side) * rng.uniform(0.12, 0.22)));
    std::vector<std::pair<std::size_t, std::size_t>> cells;
    cells.emplace_back(1 + rng.uniform_index(inner), 1 + rng.uniform_index(inner));
    proto(cells[0].first, cells[0].second) = rng.uniform(0.6, 1.0);
    static constexpr int kStep[4][2] = {{1, 0}, {-1, 0}, {0, 1}, {0, -1}};
    while (cells.size() < target) {
      const auto [r, c] = cells[rng.uniform_index(cells.size())];
      const auto* d = kStep[rng.uniform_index(4)];
      const long nr = static_cast<long>(r) + d[0];
      const long nc = static_cast<long>(c) + d[1];
      if (nr < 1 || nc < 1 || nr > static_cast<long>(side) - 2 || nc > static_cast<long>(side) - 2) continue;
      double& v = proto(static_cast<std::size_t>(nr), static_cast<std::size_t>(nc));
      if (v > 0.0) continue;
      v = rng.uniform(0.6, 1.0);
      cells.emplace_back(static_cast<std::size_t>(nr), static_cast<std::size_t>(nc));
    }
    for (std::size_t k = 0; k < per_class; ++k) {
      // Instance: one-pixel jitter, intensity scale and sparse pixel noise.
      const long dx = static_cast<long>(rng.uniform_index(3)) - 1;
      const long dy = static_cast<long>(rng.uniform_index(3)) - 1;
      const double gain = rng.uniform(0.6, 1.0);
      std::vector<std::uint8_t> img(side * side, 0);
      for (std::size_t r = 0; r < side; ++r) {
        for (std::size_t col = 0; col < side; ++col) {
          const long sr = static_cast<long>(r) - dy;
          const long sc = static_cast<long>(col) - dx;
          double v = 0.0;
          if (sr >= 0 && sc >= 0 && sr < static_cast<long>(side) && sc < static_cast<long>(side)) {
            v = proto(static_cast<std::size_t>(sr), static_cast<std::size_t>(sc)) * gain;
          }
          if (rng.uniform() < 0.03) v = rng.uniform(0.0, 0.5);
          img[r * side + col] = static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
        }
      }
      set.images.push_back(std::move(img));
      set.labels.push_back(static_cast<std::uint8_t>(c));
    }
  }
  return set;
}

SequenceDataset rad_lite_generate(std::size_t count, std::size_t n, std::size_t side, RngStream& rng) {
  if (side < 8) throw ConfigError("rad-lite: side must be >= 8");
  if (n < 2) throw ConfigError("rad: n must be >= 2");
  RngStream glyph_rng = rng.split(0x67);
  const ImageSet glyphs = make_glyph_set(side, 10, std::max<std::size_t>(4 * n, 32), glyph_rng);
  return build_rad(glyphs, count, n, side, TaskKind::rad_lite, rng);
}

// ---------------------------------------------------------------------------
// Behavioral cloning substitute
// ---------------------------------------------------------------------------

BcTeacher BcTeacher::make(std::uint64_t teacher_seed, std::size_t input_dim, std::size_t output_dim) {
  if (input_dim < 1 || output_dim < 1) throw ConfigError("bc: dimensions must be >= 1");
  RngStream rng(teacher_seed, 0xbc);
  const std::size_t h = 2 * output_dim;
  BcTeacher t;
  const double top_std = 0.5 / std::sqrt(static_cast<double>(input_dim + h));
  t.w_hx = sample_normal(rng, h, input_dim, 0.0, top_std);
  t.w_hh = sample_normal(rng, h, h, 0.0, top_std);
  t.w_yh = sample_normal(rng, output_dim, h, 0.0, 0.5 / std::sqrt(static_cast<double>(h)));
  return t;
}

Matrix BcTeacher::run(const Matrix& inputs) const {
  const std::size_t h = w_hh.rows();
  std::vector<double> state(h, 0.0);
  std::vector<double> next(h, 0.0);
  Matrix out(inputs.rows(), w_yh.rows(), 0.0);
  for (std::size_t t = 0; t < inputs.rows(); ++t) {
    auto x = inputs.row(t);
    for (std::size_t i = 0; i < h; ++i) {
      double a = 0.0;
      for (std::size_t j = 0; j < x.size(); ++j) a += w_hx(i, j) * x[j];
      for (std::size_t j = 0; j < h; ++j) a += w_hh(i, j) * state[j];
      next[i] = std::tanh(a);
    }
    state.swap(next);
    for (std::size_t i = 0; i < w_yh.rows(); ++i) {
      double y = 0.0;
      for (std::size_t j = 0; j < h; ++j) y += w_yh(i, j) * state[j];
      out(t, i) = y;
    }
  }
  return out;
}

std::vector<double> BcTeacher::output_bound() const {
  std::vector<double> bound(w_yh.rows(), 0.0);
  for (std::size_t i = 0; i < w_yh.rows(); ++i) {
    for (double v : w_yh.row(i)) bound[i] += std::abs(v);
  }
  return bound;
}

SequenceDataset bc_generate(std::uint64_t teacher_seed, std::size_t input_dim, std::size_t output_dim, std::size_t count,
                            std::size_t length, RngStream& rng) {
  if (length < 1) throw ConfigError("bc: sequence length must be >= 1");
  const BcTeacher teacher = BcTeacher::make(teacher_seed, input_dim, output_dim);
  SequenceDataset ds;
  ds.task = TaskKind::bc;
  ds.loss_kind = LossKind::mse_all_steps;
  ds.input_dim = input_dim;
  ds.output_dim = output_dim;
  ds.seed = rng.master_seed();
  ds.train.reserve(count);
  for (std::size_t s = 0; s < count; ++s) {
    Sequence seq;
    seq.inputs = sample_normal(rng, length, input_dim, 0.0, 1.0);
    seq.targets = teacher.run(seq.inputs);
    ds.train.push_back(std::move(seq));
  }
  return ds;
}

SequenceDataset split(const SequenceDataset& dataset, double validation_fraction, RngStream& rng) {
  if (!(validation_fraction > 0.0 && validation_fraction < 1.0)) throw InputError("split: fraction must lie in (0, 1)");
  std::vector<Sequence> pool = dataset.train;
  pool.insert(pool.end(), dataset.validation.begin(), dataset.validation.end());
  const auto n_val = static_cast<std::size_t>(std::llround(validation_fraction * static_cast<double>(pool.size())));
  if (n_val == 0 || n_val >= pool.size()) {
    throw InputError("split: fraction " + std::to_string(validation_fraction) + " leaves an empty split of " +
                     std::to_string(pool.size()) + " sequences");
  }
  seeded_shuffle(pool.begin(), pool.end(), rng);
  SequenceDataset out = dataset;
  out.validation.assign(std::make_move_iterator(pool.end() - static_cast<std::ptrdiff_t>(n_val)),
                        std::make_move_iterator(pool.end()));
  pool.resize(pool.size() - n_val);
  out.train = std::move(pool);
  return out;
}

// ---------------------------------------------------------------------------
// Container: "BRNNDSET", u32 version, task, loss kind, dims, seed, then the
// train and validation sequences. Integers and doubles little-endian.
// ---------------------------------------------------------------------------

namespace {

constexpr std::string_view kDatasetMagic = "BRNNDSET";
constexpr std::uint32_t kDatasetVersion = 1;

void write_sequence(ByteWriter& w, const Sequence& s, LossKind kind) {
  w.u64(s.inputs.rows());
  for (double v : s.inputs.values()) w.f64(v);
  if (kind == LossKind::cross_entropy_final) {
    w.u64(s.label);
  } else {
    for (double v : s.targets.values()) w.f64(v);
  }
}

Sequence read_sequence(ByteReader& r, const SequenceDataset& ds) {
  Sequence s;
  const auto len = static_cast<std::size_t>(r.u64());
  s.inputs = Matrix(len, ds.input_dim, 0.0);
  for (double& v : s.inputs.values()) v = r.f64();
  if (ds.loss_kind == LossKind::cross_entropy_final) {
    s.label = static_cast<std::size_t>(r.u64());
  } else {
    s.targets = Matrix(len, ds.output_dim, 0.0);
    for (double& v : s.targets.values()) v = r.f64();
  }
  return s;
}

}  // namespace

void save_dataset(const SequenceDataset& ds, const std::filesystem::path& path) {
  ByteWriter w;
  w.raw({reinterpret_cast<const std::uint8_t*>(kDatasetMagic.data()), kDatasetMagic.size()});
  w.u32(kDatasetVersion);
  w.u8(static_cast<std::uint8_t>(ds.task));
  w.u8(static_cast<std::uint8_t>(ds.loss_kind));
  w.u64(ds.input_dim);
  w.u64(ds.output_dim);
  w.u64(ds.seed);
  w.u64(ds.train.size());
  w.u64(ds.validation.size());
  for (const auto& s : ds.train) write_sequence(w, s, ds.loss_kind);
  for (const auto& s : ds.validation) write_sequence(w, s, ds.loss_kind);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(w.bytes().data()), static_cast<std::streamsize>(w.bytes().size()));
}

SequenceDataset load_dataset(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  ByteReader r(bytes);
  auto magic = r.raw(kDatasetMagic.size());
  if (!std::equal(magic.begin(), magic.end(), kDatasetMagic.begin())) throw ParseError("dataset: bad magic", 0);
  const std::uint32_t version = r.u32();
  if (version != kDatasetVersion) {
    throw ParseError("dataset: unsupported version " + std::to_string(version), kDatasetMagic.size());
  }
  SequenceDataset ds;
  const std::uint8_t task = r.u8();
  const std::uint8_t kind = r.u8();
  if (task > 2 || kind > 1) throw ParseError("dataset: bad task or loss code", r.offset() - 2);
  ds.task = static_cast<TaskKind>(task);
  ds.loss_kind = static_cast<LossKind>(kind);
  ds.input_dim = static_cast<std::size_t>(r.u64());
  ds.output_dim = static_cast<std::size_t>(r.u64());
  ds.seed = r.u64();
  const auto n_train = static_cast<std::size_t>(r.u64());
  const auto n_val = static_cast<std::size_t>(r.u64());
  for (std::size_t i = 0; i < n_train; ++i) ds.train.push_back(read_sequence(r, ds));
  for (std::size_t i = 0; i < n_val; ++i) ds.validation.push_back(read_sequence(r, ds));
  if (!r.at_end()) throw ParseError("dataset: trailing bytes", r.offset());
  ds.validate();
  return ds;
}

}  // namespace brnn
