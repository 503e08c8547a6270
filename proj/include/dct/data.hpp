#pragma once

#include "dct/common.hpp"

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

namespace dct {

// Contiguous, non-overlapping byte splits in file order.
struct CorpusSplits {
  std::vector<std::uint8_t> train;
  std::vector<std::uint8_t> validation;
  std::vector<std::uint8_t> test;
};

inline std::vector<std::uint8_t> read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open corpus file: " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return bytes;
}

// Raw bytes, no preprocessing; boundaries at exact byte offsets
// (train = floor(N * p_train), validation = floor(N * p_val), test = rest).
inline CorpusSplits split_corpus(const std::vector<std::uint8_t>& bytes, double p_train = 0.90,
                                 double p_val = 0.05) {
  if (bytes.empty()) throw IoError("corpus is empty");
  if (!(p_train > 0.0) || p_val < 0.0 || p_train + p_val > 1.0 + 1e-12)
    throw ContractError("split proportions invalid");
  std::size_t n = bytes.size();
  std::size_t n_train = static_cast<std::size_t>(static_cast<double>(n) * p_train);
  std::size_t n_val = static_cast<std::size_t>(static_cast<double>(n) * p_val);
  if (n_train == 0 || n_train + n_val > n) throw ContractError("split proportions leave no data");
  CorpusSplits s;
  s.train.assign(bytes.begin(), bytes.begin() + n_train);
  s.validation.assign(bytes.begin() + n_train, bytes.begin() + n_train + n_val);
  s.test.assign(bytes.begin() + n_train + n_val, bytes.end());
  return s;
}

inline CorpusSplits load_corpus(const std::string& path, double p_train = 0.90,
                                double p_val = 0.05) {
  return split_corpus(read_bytes(path), p_train, p_val);
}

// FNV-1a, used to sanity-check that a resumed run sees the same corpus.
inline std::uint64_t corpus_hash(const std::vector<std::uint8_t>& bytes) {
  std::uint64_t h = 1469598103934665603ull;
  for (std::uint8_t b : bytes) {
    h ^= b;
    h *= 1099511628211ull;
  }
  return h;
}

// Cuts a split into `streams` parallel contiguous shards and serves aligned
// (input, target) segments of n_s bytes, targets shifted one byte ahead.
// Within a stream, consecutive segments are corpus-contiguous so recurrence
// over segment boundaries is valid. Segment indices past the end of a shard
// wrap around (with a virtual, ever-increasing token span kept by callers).
class BatchPlan {
 public:
  BatchPlan(const std::vector<std::uint8_t>* split, int streams, int n_s)
      : split_(split), streams_(streams), n_s_(n_s) {
    if (streams <= 0 || n_s <= 0) throw ContractError("batch plan: bad dimensions");
    shard_ = split->size() / static_cast<std::size_t>(streams);
    if (shard_ < static_cast<std::size_t>(n_s) + 1)
      throw ContractError("batch plan: split too small for streams * (n_s + 1) bytes");
    segments_per_stream_ = static_cast<std::int64_t>((shard_ - 1) / static_cast<std::size_t>(n_s));
  }

  int streams() const { return streams_; }
  int segment_length() const { return n_s_; }
  std::int64_t segments_per_stream() const { return segments_per_stream_; }
  // Bytes per stream never consumed as inputs.
  std::int64_t dropped_bytes_per_stream() const {
    return static_cast<std::int64_t>(shard_) - segments_per_stream_ * n_s_;
  }

  // segment `index` of stream `s`; `index` may exceed segments_per_stream,
  // in which case it wraps.
  void segment(int s, std::int64_t index, std::vector<int>& tokens,
               std::vector<int>& targets) const {
    std::int64_t wrapped = index % segments_per_stream_;
    std::size_t base = static_cast<std::size_t>(s) * shard_ +
                       static_cast<std::size_t>(wrapped) * static_cast<std::size_t>(n_s_);
    tokens.resize(n_s_);
    targets.resize(n_s_);
    const std::vector<std::uint8_t>& data = *split_;
    for (int i = 0; i < n_s_; ++i) {
      tokens[i] = data[base + i];
      targets[i] = data[base + i + 1];
    }
  }

  // All-stream convenience used by the training loop.
  void minibatch(std::int64_t index, std::vector<std::vector<int>>& tokens,
                 std::vector<std::vector<int>>& targets) const {
    tokens.resize(streams_);
    targets.resize(streams_);
    for (int s = 0; s < streams_; ++s) segment(s, index, tokens[s], targets[s]);
  }

 private:
  const std::vector<std::uint8_t>* split_;
  int streams_;
  int n_s_;
  std::size_t shard_ = 0;
  std::int64_t segments_per_stream_ = 0;
};

}  // namespace dct
