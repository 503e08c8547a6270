#pragma once

#include "dct/harness.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

namespace dct {

// Checkpoint layout (all integers and floats little-endian):
//
//   bytes 0..7   magic "DCTCKPT1"
//   u32          format version (currently 1)
//   u32          phase (0 pretrain, 1 cotrain)
//   u64          global step
//   i64          segment cursor
//   u64          non-finite update aborts
//   u64          corpus byte count   (0 when unknown)
//   u64          corpus FNV-1a hash  (0 when unknown)
//   u64 + bytes  config echo, the flat key=value text of the run
//   u8           snapshot-evaluator present
//   tensors      model parameters    (order: TransformerModel::param_list)
//   tensors      actor parameters    (order: Actor::param_list)
//   [tensors]    snapshot parameters (same order as model), if present
//   memories     per layer, per stream: next-span marker and both stores
//   u8           optimizer state present (1 when the run uses adam)
//   [i64+tensors] adam timestep, first moments, second moments (model order)
//   u64 + bytes  action RNG state (text)
//   bytes        trailer "DCTEND!!"
//
// A tensor is u64 rows, u64 cols, then rows*cols raw 32-bit floats.

namespace ckpt {

constexpr char kMagic[8] = {'D', 'C', 'T', 'C', 'K', 'P', 'T', '1'};
constexpr char kTrailer[8] = {'D', 'C', 'T', 'E', 'N', 'D', '!', '!'};
constexpr std::uint32_t kVersion = 1;

inline void write_raw(std::ostream& out, const void* p, std::size_t n) {
  out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
  if (!out) throw IoError("checkpoint: write failed");
}

inline void read_raw(std::istream& in, void* p, std::size_t n) {
  in.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
  if (in.gcount() != static_cast<std::streamsize>(n)) throw IoError("checkpoint: truncated file");
}

template <typename T>
void write_pod(std::ostream& out, T v) {
  write_raw(out, &v, sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
  T v;
  read_raw(in, &v, sizeof(T));
  return v;
}

inline void write_string(std::ostream& out, const std::string& s) {
  write_pod<std::uint64_t>(out, s.size());
  write_raw(out, s.data(), s.size());
}

inline std::string read_string(std::istream& in) {
  std::uint64_t n = read_pod<std::uint64_t>(in);
  if (n > (1ull << 32)) throw IoError("checkpoint: implausible string length");
  std::string s(n, '\0');
  read_raw(in, s.data(), n);
  return s;
}

inline void write_tensor(std::ostream& out, const MatF& m) {
  write_pod<std::uint64_t>(out, static_cast<std::uint64_t>(m.rows()));
  write_pod<std::uint64_t>(out, static_cast<std::uint64_t>(m.cols()));
  write_raw(out, m.data(), sizeof(float) * static_cast<std::size_t>(m.size()));
}

inline MatF read_tensor(std::istream& in) {
  auto rows = read_pod<std::uint64_t>(in);
  auto cols = read_pod<std::uint64_t>(in);
  if (rows > (1ull << 31) || cols > (1ull << 31)) throw IoError("checkpoint: implausible tensor");
  MatF m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  read_raw(in, m.data(), sizeof(float) * static_cast<std::size_t>(m.size()));
  return m;
}

inline void write_params(std::ostream& out, const std::vector<Param<float>*>& params) {
  write_pod<std::uint64_t>(out, params.size());
  for (const Param<float>* p : params) write_tensor(out, p->value);
}

inline void read_params(std::istream& in, const std::vector<Param<float>*>& params) {
  std::uint64_t n = read_pod<std::uint64_t>(in);
  if (n != params.size()) throw IoError("checkpoint: parameter tensor count mismatch");
  for (Param<float>* p : params) {
    MatF v = read_tensor(in);
    if (v.rows() != p->value.rows() || v.cols() != p->value.cols())
      throw IoError("checkpoint: tensor shape mismatch at " + p->name);
    p->value = std::move(v);
  }
}

inline void write_block(std::ostream& out, const HiddenBlock<float>& b) {
  write_pod<std::int64_t>(out, b.span_begin);
  write_pod<std::int64_t>(out, b.span_end);
  write_pod<std::uint8_t>(out, b.compressed ? 1 : 0);
  write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(b.ratio));
  write_tensor(out, b.activations);
}

inline HiddenBlock<float> read_block(std::istream& in) {
  HiddenBlock<float> b;
  b.span_begin = read_pod<std::int64_t>(in);
  b.span_end = read_pod<std::int64_t>(in);
  b.compressed = read_pod<std::uint8_t>(in) != 0;
  b.ratio = static_cast<int>(read_pod<std::uint32_t>(in));
  b.activations = read_tensor(in);
  b.check();
  return b;
}

}  // namespace ckpt

inline void save_checkpoint(const std::string& path, Trainer& trainer,
                            std::uint64_t corpus_bytes = 0, std::uint64_t corpus_hash = 0) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open checkpoint for writing: " + path);
  ckpt::write_raw(out, ckpt::kMagic, sizeof(ckpt::kMagic));
  ckpt::write_pod<std::uint32_t>(out, ckpt::kVersion);
  ckpt::write_pod<std::uint32_t>(out, trainer.phase() == Phase::kCotrain ? 1 : 0);
  ckpt::write_pod<std::uint64_t>(out, trainer.global_step());
  ckpt::write_pod<std::int64_t>(out, trainer.segment_cursor());
  ckpt::write_pod<std::uint64_t>(out, trainer.nonfinite_aborts());
  ckpt::write_pod<std::uint64_t>(out, corpus_bytes);
  ckpt::write_pod<std::uint64_t>(out, corpus_hash);
  ckpt::write_string(out, trainer.config().to_text());
  ckpt::write_pod<std::uint8_t>(out, trainer.has_snapshot() ? 1 : 0);
  ckpt::write_params(out, trainer.model().param_list());
  ckpt::write_params(out, trainer.actor().param_list());
  if (trainer.has_snapshot())
    ckpt::write_params(out, trainer.snapshot().model().param_list());

  const auto& mem = trainer.memories();
  ckpt::write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(mem.size()));
  ckpt::write_pod<std::uint32_t>(out, mem.empty() ? 0 : static_cast<std::uint32_t>(mem[0].size()));
  for (const auto& layer : mem) {
    for (const auto& st : layer) {
      auto next = st.next_span_begin();
      ckpt::write_pod<std::uint8_t>(out, next.has_value() ? 1 : 0);
      ckpt::write_pod<std::int64_t>(out, next.value_or(0));
      ckpt::write_pod<std::uint64_t>(out, st.memory_blocks().size());
      for (const auto& b : st.memory_blocks()) ckpt::write_block(out, b);
      ckpt::write_pod<std::uint64_t>(out, st.compressed_blocks().size());
      for (const auto& b : st.compressed_blocks()) ckpt::write_block(out, b);
    }
  }
  ckpt::write_pod<std::uint8_t>(out, trainer.has_adam() ? 1 : 0);
  if (trainer.has_adam()) {
    auto& adam = trainer.adam();
    ckpt::write_pod<std::int64_t>(out, adam.timestep());
    ckpt::write_pod<std::uint64_t>(out, adam.first_moments().size());
    for (const auto& m : adam.first_moments()) ckpt::write_tensor(out, m);
    for (const auto& v : adam.second_moments()) ckpt::write_tensor(out, v);
  }
  ckpt::write_string(out, trainer.action_rng().save());
  ckpt::write_raw(out, ckpt::kTrailer, sizeof(ckpt::kTrailer));
  if (!out.flush()) throw IoError("checkpoint: flush failed");
}

struct CheckpointInfo {
  std::uint32_t version = 0;
  Phase phase = Phase::kPretrain;
  std::uint64_t global_step = 0;
  std::int64_t segment_cursor = 0;
  std::uint64_t nonfinite_aborts = 0;
  std::uint64_t corpus_bytes = 0;
  std::uint64_t corpus_hash = 0;
  std::string config_text;
  bool has_snapshot = false;
};

inline CheckpointInfo read_checkpoint_header(std::istream& in) {
  char magic[8];
  ckpt::read_raw(in, magic, sizeof(magic));
  if (std::memcmp(magic, ckpt::kMagic, sizeof(magic)) != 0)
    throw IoError("checkpoint: bad magic string");
  CheckpointInfo info;
  info.version = ckpt::read_pod<std::uint32_t>(in);
  if (info.version != ckpt::kVersion)
    throw IoError("checkpoint: unsupported format version " + std::to_string(info.version));
  info.phase = ckpt::read_pod<std::uint32_t>(in) == 1 ? Phase::kCotrain : Phase::kPretrain;
  info.global_step = ckpt::read_pod<std::uint64_t>(in);
  info.segment_cursor = ckpt::read_pod<std::int64_t>(in);
  info.nonfinite_aborts = ckpt::read_pod<std::uint64_t>(in);
  info.corpus_bytes = ckpt::read_pod<std::uint64_t>(in);
  info.corpus_hash = ckpt::read_pod<std::uint64_t>(in);
  info.config_text = ckpt::read_string(in);
  info.has_snapshot = ckpt::read_pod<std::uint8_t>(in) != 0;
  return info;
}

inline CheckpointInfo inspect_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  return read_checkpoint_header(in);
}

// Rebuilds a trainer in exactly the saved state.
inline std::unique_ptr<Trainer> load_checkpoint(const std::string& path,
                                                CheckpointInfo* info_out = nullptr) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  CheckpointInfo info = read_checkpoint_header(in);
  RunConfig cfg = RunConfig::from_text(info.config_text);
  auto trainer = std::make_unique<Trainer>(cfg);
  trainer->set_phase(info.phase);
  trainer->set_global_step(info.global_step);
  trainer->set_segment_cursor(info.segment_cursor);
  trainer->set_nonfinite_aborts(info.nonfinite_aborts);
  ckpt::read_params(in, trainer->model().param_list());
  ckpt::read_params(in, trainer->actor().param_list());
  if (info.has_snapshot) {
    std::uint64_t n = ckpt::read_pod<std::uint64_t>(in);
    std::vector<MatF> values;
    values.reserve(n);
    for (std::uint64_t i = 0; i < n; ++i) values.push_back(ckpt::read_tensor(in));
    trainer->install_snapshot_params(values);
  }

  auto layers = ckpt::read_pod<std::uint32_t>(in);
  auto streams = ckpt::read_pod<std::uint32_t>(in);
  auto& mem = trainer->memories();
  if (layers != mem.size() || (layers > 0 && streams != mem[0].size()))
    throw IoError("checkpoint: memory grid does not match config");
  for (auto& layer : mem) {
    for (auto& st : layer) {
      st.clear();
      bool has_next = ckpt::read_pod<std::uint8_t>(in) != 0;
      std::int64_t next = ckpt::read_pod<std::int64_t>(in);
      std::uint64_t n_mem = ckpt::read_pod<std::uint64_t>(in);
      for (std::uint64_t i = 0; i < n_mem; ++i) st.restore_block(ckpt::read_block(in));
      std::uint64_t n_cm = ckpt::read_pod<std::uint64_t>(in);
      for (std::uint64_t i = 0; i < n_cm; ++i) st.restore_block(ckpt::read_block(in));
      st.set_next_span_begin(has_next ? std::optional<std::int64_t>(next) : std::nullopt);
    }
  }
  bool has_adam = ckpt::read_pod<std::uint8_t>(in) != 0;
  if (has_adam != trainer->has_adam())
    throw IoError("checkpoint: optimizer state does not match the configured optimizer");
  if (has_adam) {
    auto& adam = trainer->adam();
    adam.set_timestep(ckpt::read_pod<std::int64_t>(in));
    std::uint64_t n = ckpt::read_pod<std::uint64_t>(in);
    if (n != adam.first_moments().size()) throw IoError("checkpoint: adam tensor count mismatch");
    for (auto& m : adam.first_moments()) m = ckpt::read_tensor(in);
    for (auto& v : adam.second_moments()) v = ckpt::read_tensor(in);
  }
  trainer->action_rng().restore(ckpt::read_string(in));
  char trailer[8];
  ckpt::read_raw(in, trailer, sizeof(trailer));
  if (std::memcmp(trailer, ckpt::kTrailer, sizeof(trailer)) != 0)
    throw IoError("checkpoint: bad trailer (truncated or corrupt)");
  if (info_out) *info_out = info;
  return trainer;
}

}  // namespace dct
