#include "brnn/io.hpp"

#include <charconv>
#include <fstream>
#include <map>
#include <sstream>

#include "brnn/binary_io.hpp"
#include "brnn/datasets.hpp"

namespace brnn {

std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc{}) throw Error("format_double: conversion failed");
  return std::string(buf, end);
}

double parse_double(std::string_view text, std::string_view what) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || ptr != text.data() + text.size()) {
    throw ConfigError(std::string(what) + ": '" + std::string(text) + "' is not a number");
  }
  return v;
}

std::uint64_t parse_u64(std::string_view text, std::string_view what) {
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || ptr != text.data() + text.size()) {
    throw ConfigError(std::string(what) + ": '" + std::string(text) + "' is not a non-negative integer");
  }
  return v;
}

namespace {

constexpr std::string_view kSpecFormat = "brnn-spec-1";

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

}  // namespace

std::string spec_to_text(const BlockSpec& spec, std::string_view header_comment) {
  std::ostringstream out;
  if (!header_comment.empty()) {
    std::istringstream lines{std::string(header_comment)};
    for (std::string line; std::getline(lines, line);) out << "# " << line << '\n';
  }
  out << "format = " << kSpecFormat << '\n';
  out << "input_dim = " << spec.input_dim << '\n';
  out << "hidden_dim = " << spec.hidden_dim << '\n';
  out << "output_dim = " << spec.output_dim << '\n';
  out << "activation = " << activation_name(spec.activation) << '\n';
  out << "learning_rate = " << format_double(spec.learning_rate) << '\n';
  for (BlockId b : kAllBlocks) {
    const auto& c = spec.block(b);
    const std::string prefix = "block." + std::string(block_name(b)) + ".";
    out << prefix << "mean = " << format_double(c.mean) << '\n';
    out << prefix << "std = " << format_double(c.std) << '\n';
    out << prefix << "sparsity = " << format_double(c.sparsity) << '\n';
  }
  return out.str();
}

BlockSpec spec_from_text(std::string_view text) {
  std::map<std::string, std::string, std::less<>> kv;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = trim(text.substr(0, nl));
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ConfigError("spec line " + std::to_string(line_no) + ": expected 'key = value'");
    std::string key(trim(line.substr(0, eq)));
    std::string value(trim(line.substr(eq + 1)));
    if (!kv.emplace(key, value).second) throw ConfigError("spec line " + std::to_string(line_no) + ": duplicate key " + key);
  }
  auto take = [&](const std::string& key) {
    auto it = kv.find(key);
    if (it == kv.end()) throw ConfigError("spec: missing key '" + key + "'");
    std::string v = it->second;
    kv.erase(it);
    return v;
  };
  if (take("format") != kSpecFormat) throw ConfigError("spec: unsupported format (expected " + std::string(kSpecFormat) + ")");
  BlockSpec spec;
  spec.input_dim = parse_u64(take("input_dim"), "input_dim");
  spec.hidden_dim = parse_u64(take("hidden_dim"), "hidden_dim");
  spec.output_dim = parse_u64(take("output_dim"), "output_dim");
  spec.activation = parse_activation(take("activation"));
  spec.learning_rate = parse_double(take("learning_rate"), "learning_rate");
  for (BlockId b : kAllBlocks) {
    const std::string prefix = "block." + std::string(block_name(b)) + ".";
    auto& c = spec.block(b);
    c.mean = parse_double(take(prefix + "mean"), prefix + "mean");
    c.std = parse_double(take(prefix + "std"), prefix + "std");
    c.sparsity = parse_double(take(prefix + "sparsity"), prefix + "sparsity");
  }
  if (!kv.empty()) throw ConfigError("spec: unknown key '" + kv.begin()->first + "'");
  spec.validate();
  return spec;
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot write " + path.string());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
}

std::string read_text_file(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  return std::string(bytes.begin(), bytes.end());
}

void save_spec(const BlockSpec& spec, const std::filesystem::path& path, std::string_view header_comment) {
  write_text_file(path, spec_to_text(spec, header_comment));
}

BlockSpec load_spec(const std::filesystem::path& path) { return spec_from_text(read_text_file(path)); }

namespace {

constexpr std::string_view kCheckpointMagic = "BRNNCKPT";

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
  ckpt.weights.validate();
  ByteWriter w;
  w.raw({reinterpret_cast<const std::uint8_t*>(kCheckpointMagic.data()), kCheckpointMagic.size()});
  w.u32(kCheckpointVersion);
  w.text(spec_to_text(ckpt.spec));
  w.u64(ckpt.seed);
  for (BlockId b : kAllBlocks) {
    const auto& m = ckpt.weights.block(b);
    w.u64(m.rows());
    w.u64(m.cols());
    const auto mask = m.mask().values();
    std::vector<std::uint8_t> packed((mask.size() + 7) / 8, 0);
    for (std::size_t i = 0; i < mask.size(); ++i) {
      if (mask[i]) packed[i / 8] |= static_cast<std::uint8_t>(1u << (i % 8));
    }
    w.raw(packed);
    w.u64(m.trainable_count());
    const auto values = m.values().values();
    for (std::uint32_t idx : m.pattern().flat()) w.f64(values[idx]);
  }
  for (double v : ckpt.weights.bias_h) w.f64(v);
  for (double v : ckpt.weights.bias_y) w.f64(v);
  w.u8(ckpt.optimizer ? 1 : 0);
  if (ckpt.optimizer) {
    w.u64(ckpt.optimizer->step);
    w.u64(ckpt.optimizer->m.size());
    for (double v : ckpt.optimizer->m) w.f64(v);
    for (double v : ckpt.optimizer->v) w.f64(v);
  }
  return w.bytes();
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  auto magic = r.raw(kCheckpointMagic.size());
  if (!std::equal(magic.begin(), magic.end(), kCheckpointMagic.begin())) throw ParseError("checkpoint: bad magic", 0);
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw ParseError("checkpoint: format version " + std::to_string(version) + " is not supported (this build reads " +
                         std::to_string(kCheckpointVersion) + ")",
                     kCheckpointMagic.size());
  }
  Checkpoint ckpt;
  ckpt.spec = spec_from_text(r.text());
  ckpt.seed = r.u64();
  auto& ws = ckpt.weights;
  ws.input_dim = ckpt.spec.input_dim;
  ws.hidden_dim = ckpt.spec.hidden_dim;
  ws.output_dim = ckpt.spec.output_dim;
  ws.activation = ckpt.spec.activation;
  for (BlockId b : kAllBlocks) {
    const std::size_t at = r.offset();
    const auto rows = static_cast<std::size_t>(r.u64());
    const auto cols = static_cast<std::size_t>(r.u64());
    if (rows != ckpt.spec.rows(b) || cols != ckpt.spec.cols(b)) {
      throw ParseError("checkpoint: block " + std::string(block_name(b)) + " shape disagrees with its spec", at);
    }
    auto packed = r.raw((rows * cols + 7) / 8);
    BoolMatrix mask(rows, cols, 0);
    auto mv = mask.values();
    for (std::size_t i = 0; i < mv.size(); ++i) mv[i] = (packed[i / 8] >> (i % 8)) & 1u;
    auto pattern = std::make_shared<const SparsityPattern>(std::move(mask));
    const std::size_t count_at = r.offset();
    const auto count = static_cast<std::size_t>(r.u64());
    if (count != pattern->count()) throw ParseError("checkpoint: value count disagrees with mask", count_at);
    Matrix values(rows, cols, 0.0);
    auto vv = values.values();
    for (std::uint32_t idx : pattern->flat()) vv[idx] = r.f64();
    ws.block(b) = MaskedMatrix(std::move(values), std::move(pattern));
  }
  ws.bias_h.resize(ws.hidden_dim);
  ws.bias_y.resize(ws.output_dim);
  for (double& v : ws.bias_h) v = r.f64();
  for (double& v : ws.bias_y) v = r.f64();
  if (r.u8() != 0) {
    AdamState st;
    st.step = r.u64();
    const auto n = static_cast<std::size_t>(r.u64());
    if (n != ws.trainable_count()) throw ParseError("checkpoint: optimizer state size disagrees with weights", r.offset());
    st.m.resize(n);
    st.v.resize(n);
    for (double& v : st.m) v = r.f64();
    for (double& v : st.v) v = r.f64();
    ckpt.optimizer = std::move(st);
  }
  if (!r.at_end()) throw ParseError("checkpoint: trailing bytes", r.offset());
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const auto bytes = encode_checkpoint(ckpt);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(read_file_bytes(path)); }

}  // namespace brnn
