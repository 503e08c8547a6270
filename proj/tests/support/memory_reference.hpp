#pragma once

// Naive list-based reference model for the two-tier memory, plus a randomized
// comparison harness. Kept independent of the production data structure: the
// reference tracks one entry per granular position and one (begin, end) span
// per compressed row, with plain deques.

#include "dct/conv.hpp"
#include "dct/memory.hpp"

#include <cstdint>
#include <deque>
#include <set>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace dct_test {

struct NaiveTwoTier {
  int n_m, n_cm, c;
  std::deque<std::int64_t> mem;                                // token index per position
  std::deque<std::pair<std::int64_t, std::int64_t>> cm;        // token span per row
  std::set<std::int64_t> dropped;                              // permanently gone

  NaiveTwoTier(int n_m_, int n_cm_, int c_) : n_m(n_m_), n_cm(n_cm_), c(c_) {}

  std::vector<std::int64_t> append(std::int64_t begin, int rows) {
    for (int i = 0; i < rows; ++i) mem.push_back(begin + i);
    std::vector<std::int64_t> evicted;
    while (static_cast<int>(mem.size()) > n_m) {
      evicted.push_back(mem.front());
      mem.pop_front();
    }
    return evicted;
  }

  // Returns dropped compressed positions (rows).
  int commit(const std::vector<std::int64_t>& tokens) {
    int rows = static_cast<int>(tokens.size()) / c;
    for (int r = 0; r < rows; ++r) cm.push_back({tokens[r * c], tokens[r * c] + c});
    for (std::size_t i = static_cast<std::size_t>(rows) * c; i < tokens.size(); ++i)
      dropped.insert(tokens[i]);  // remainder not covered by any row
    int over = static_cast<int>(cm.size()) - n_cm;
    for (int i = 0; i < over; ++i) {
      for (std::int64_t t = cm.front().first; t < cm.front().second; ++t) dropped.insert(t);
      cm.pop_front();
    }
    return over > 0 ? over : 0;
  }

  void discard(const std::vector<std::int64_t>& tokens) {
    for (auto t : tokens) dropped.insert(t);
  }

  std::int64_t reading_distance(std::int64_t seg_begin, std::int64_t seg_end) const {
    std::int64_t oldest = seg_begin;
    if (!mem.empty()) oldest = std::min(oldest, mem.front());
    if (!cm.empty()) oldest = std::min(oldest, cm.front().first);
    return seg_end - oldest;
  }
};

inline void oracle_check(bool ok, const std::string& what, std::uint64_t seed, int op) {
  if (!ok) {
    std::ostringstream os;
    os << "memory oracle divergence (seed " << seed << ", op " << op << "): " << what;
    throw std::runtime_error(os.str());
  }
}

// Runs one randomized append/keep/discard sequence against the reference,
// comparing spans, occupancy, eviction order and reading distance after every
// operation. Also verifies span conservation with a shadow token set.
inline void run_memory_oracle_sequence(std::uint64_t seed, int ops) {
  dct::Rng rng(seed);
  auto pick = [&](int lo, int hi) {  // inclusive
    return lo + static_cast<int>(rng.uniform() * (hi - lo + 1));
  };
  const int c = pick(1, 4);
  const int n_s = pick(1, 6);
  const int n_m = pick(1, 10);
  const int n_cm = pick(1, 8);
  const int d = 3;

  dct::LayerMemoryState<float> state(n_m, n_cm, c, n_s);
  dct::Rng conv_rng(seed + 1);
  dct::SegmentCompressor<float> conv(d, c, conv_rng);
  NaiveTwoTier ref(n_m, n_cm, c);

  std::int64_t next = 0;
  for (int op = 0; op < ops; ++op) {
    // Activation rows carry their token index so eviction order is checkable
    // at the data level, not just through spans.
    dct::MatF hidden(n_s, d);
    for (int i = 0; i < n_s; ++i) hidden.row(i).setConstant(static_cast<float>(next + i));

    std::int64_t seg_begin = next, seg_end = next + n_s;
    oracle_check(state.reading_distance(seg_begin, seg_end) == ref.reading_distance(seg_begin, seg_end),
                 "reading distance before append", seed, op);

    dct::HiddenBlock<float> evicted = state.append_segment(hidden, seg_begin, seg_end);
    std::vector<std::int64_t> ref_evicted = ref.append(seg_begin, n_s);
    next = seg_end;

    oracle_check(evicted.rows() == static_cast<int>(ref_evicted.size()), "evicted count", seed, op);
    if (!ref_evicted.empty()) {
      oracle_check(evicted.span_begin == ref_evicted.front() &&
                       evicted.span_end == ref_evicted.back() + 1,
                   "evicted span", seed, op);
      for (int i = 0; i < evicted.rows(); ++i)
        oracle_check(evicted.activations(i, 0) == static_cast<float>(ref_evicted[i]),
                     "evicted activation order", seed, op);
    }

    if (!evicted.empty()) {
      bool keep = rng.uniform() < 0.5;
      if (keep) {
        auto res = dct::compress(evicted, conv);
        int real_dropped = state.commit_compressed(res.block);
        int ref_dropped = ref.commit(ref_evicted);
        oracle_check(real_dropped == ref_dropped, "dropped count", seed, op);
        oracle_check(res.degenerate == (evicted.rows() < c), "degenerate flag", seed, op);
      } else {
        dct::discard_evicted(std::move(evicted));
        ref.discard(ref_evicted);
      }
    }

    // Full-state comparison.
    oracle_check(state.occupied_memory() == static_cast<int>(ref.mem.size()), "memory occupancy",
                 seed, op);
    oracle_check(state.occupied_compressed() == static_cast<int>(ref.cm.size()),
                 "compressed occupancy", seed, op);
    oracle_check(state.occupied_memory() <= n_m && state.occupied_compressed() <= n_cm,
                 "capacity bound", seed, op);

    std::vector<std::int64_t> flat;
    for (const auto& b : state.memory_blocks()) {
      oracle_check(b.ratio == 1 && !b.compressed, "memory block shape", seed, op);
      for (int i = 0; i < b.rows(); ++i) {
        flat.push_back(b.span_begin + i);
        oracle_check(b.activations(i, 0) == static_cast<float>(b.span_begin + i),
                     "memory activation/span agreement", seed, op);
      }
    }
    oracle_check(flat.size() == ref.mem.size(), "flattened memory size", seed, op);
    for (std::size_t i = 0; i < flat.size(); ++i)
      oracle_check(flat[i] == ref.mem[i], "memory token order", seed, op);
    for (std::size_t i = 1; i < flat.size(); ++i)
      oracle_check(flat[i - 1] < flat[i], "memory strictly increasing", seed, op);

    std::vector<std::pair<std::int64_t, std::int64_t>> spans;
    for (const auto& b : state.compressed_blocks()) {
      oracle_check(b.ratio == c && b.compressed, "compressed block shape", seed, op);
      for (int i = 0; i < b.rows(); ++i)
        spans.push_back({b.span_begin + static_cast<std::int64_t>(i) * c,
                         b.span_begin + static_cast<std::int64_t>(i + 1) * c});
    }
    oracle_check(spans.size() == ref.cm.size(), "compressed row count", seed, op);
    for (std::size_t i = 0; i < spans.size(); ++i)
      oracle_check(spans[i] == ref.cm[i], "compressed span order", seed, op);

    // Span conservation: every produced token is in exactly one place.
    std::set<std::int64_t> seen;
    auto claim = [&](std::int64_t t) {
      oracle_check(!seen.count(t), "token in two places", seed, op);
      seen.insert(t);
    };
    for (auto t : flat) claim(t);
    for (const auto& sp : spans)
      for (std::int64_t t = sp.first; t < sp.second; ++t) claim(t);
    for (auto t : ref.dropped) claim(t);
    oracle_check(static_cast<std::int64_t>(seen.size()) == next, "token conservation", seed, op);

    oracle_check(state.reading_distance(next, next + n_s) == ref.reading_distance(next, next + n_s),
                 "reading distance after ops", seed, op);
  }
}

}  // namespace dct_test
