#pragma once

#include "dct/common.hpp"

#include <cstdint>
#include <deque>
#include <memory>
#include <optional>
#include <utility>
#include <vector>

namespace dct {

// A contiguous run of per-position hidden vectors with its absolute token
// span. Granular blocks carry one token per row (ratio 1); compressed blocks
// carry `ratio` tokens per row. `conv_input` is only set on freshly
// compressed blocks and holds the rows the compression consumed, so the
// current step can push attention gradients back into the compression kernel.
template <typename S>
struct HiddenBlock {
  Mat<S> activations;        // rows x d
  std::int64_t span_begin = 0;
  std::int64_t span_end = 0;  // exclusive
  bool compressed = false;
  int ratio = 1;
  std::shared_ptr<const Mat<S>> conv_input;

  int rows() const { return static_cast<int>(activations.rows()); }
  std::int64_t span_tokens() const { return span_end - span_begin; }
  bool empty() const { return rows() == 0; }

  void check() const {
    if (ratio < 1) throw ContractError("block ratio must be >= 1");
    if (span_tokens() != static_cast<std::int64_t>(rows()) * ratio)
      throw ContractError("block span does not match rows * ratio");
  }
};

// Releases an evicted block without touching any store. Its span leaves the
// reading-distance accounting entirely.
template <typename S>
inline void discard_evicted(HiddenBlock<S>&& block) {
  HiddenBlock<S> sink(std::move(block));
  (void)sink;
}

// Per-row context assembled for attention: compressed rows first, then
// granular memory rows, both oldest-first. `ages[i]` is the distance in
// tokens from the next segment's first token back to the newest token row i
// represents (always >= 1). `fresh` marks row ranges belonging to blocks
// compressed during the current step.
template <typename S>
struct ContextView {
  Mat<S> values;  // (occupied_cm + occupied_m) x d
  std::vector<std::int64_t> ages;
  struct FreshRange {
    int row_begin = 0;
    int row_count = 0;
    const HiddenBlock<S>* block = nullptr;
  };
  std::vector<FreshRange> fresh;

  int rows() const { return static_cast<int>(values.rows()); }
};

// Bounded two-tier FIFO of hidden states for one (layer, stream) pair.
// The granular store holds up to n_m positions of ratio-1 blocks; the
// compressed store holds up to n_cm rows, each summarizing `c` tokens.
template <typename S>
class LayerMemoryState {
 public:
  LayerMemoryState(int n_m, int n_cm, int ratio, int segment_rows)
      : n_m_(n_m), n_cm_(n_cm), ratio_(ratio), segment_rows_(segment_rows) {
    if (n_m <= 0 || n_cm <= 0 || ratio < 1 || segment_rows <= 0)
      throw ContractError("memory state: bad capacities");
  }

  int capacity_memory() const { return n_m_; }
  int capacity_compressed() const { return n_cm_; }
  int ratio() const { return ratio_; }
  int segment_rows() const { return segment_rows_; }

  int occupied_memory() const { return occ_m_; }
  int occupied_compressed() const { return occ_cm_; }
  bool memory_full() const { return occ_m_ == n_m_; }
  bool compressed_full() const { return occ_cm_ == n_cm_; }

  std::optional<std::int64_t> next_span_begin() const { return next_begin_; }

  // Appends one segment of hidden states as a granular block. If the granular
  // capacity overflows, exactly the overflow count of oldest positions is
  // removed and returned as a single contiguous block (empty when nothing
  // overflows).
  HiddenBlock<S> append_segment(const Mat<S>& hidden, std::int64_t span_begin,
                                std::int64_t span_end) {
    if (static_cast<int>(hidden.rows()) != segment_rows_)
      throw ShapeError("append_segment: segment must have exactly the configured rows");
    if (span_end - span_begin != hidden.rows())
      throw ShapeError("append_segment: span length must equal row count");
    if (next_begin_ && *next_begin_ != span_begin)
      throw ContractError("append_segment: span does not continue the stored timeline");

    HiddenBlock<S> block;
    block.activations = hidden;
    block.span_begin = span_begin;
    block.span_end = span_end;
    block.ratio = 1;
    memory_.push_back(std::move(block));
    occ_m_ += segment_rows_;
    next_begin_ = span_end;

    int overflow = occ_m_ - n_m_;
    if (overflow <= 0) {
      HiddenBlock<S> none;
      none.span_begin = none.span_end = oldest_memory_begin();
      return none;
    }
    return take_oldest_memory(overflow);
  }

  // Appends a compressed block; positions beyond n_cm are dropped oldest
  // first and never re-judged. Returns the number of dropped positions.
  int commit_compressed(HiddenBlock<S> block) {
    if (block.empty()) return 0;
    if (block.ratio != ratio_)
      throw ContractError("commit_compressed: block ratio does not match configured ratio");
    block.compressed = true;
    block.check();
    compressed_.push_back(std::move(block));
    occ_cm_ += compressed_.back().rows();
    int overflow = occ_cm_ - n_cm_;
    if (overflow <= 0) return 0;
    drop_oldest_compressed(overflow);
    return overflow;
  }

  // Tokens between the end of the current segment and the oldest token still
  // represented anywhere (stores or the segment itself).
  std::int64_t reading_distance(std::int64_t seg_begin, std::int64_t seg_end) const {
    std::int64_t oldest = seg_begin;
    if (!memory_.empty()) oldest = std::min(oldest, memory_.front().span_begin);
    if (!compressed_.empty()) oldest = std::min(oldest, compressed_.front().span_begin);
    return seg_end - oldest;
  }

  // Rows the next forward pass may attend over: compressed then granular,
  // oldest-first, with per-row ages relative to the next segment start.
  ContextView<S> attention_context(int d_model) const {
    ContextView<S> ctx;
    int total = occ_cm_ + occ_m_;
    ctx.values.resize(total, d_model);
    ctx.ages.resize(total);
    if (total == 0) return ctx;
    std::int64_t next = next_begin_.value_or(0);
    int row = 0;
    for (const auto& block : compressed_) {
      if (block.conv_input) {
        ctx.fresh.push_back({row, block.rows(), &block});
      }
      for (int i = 0; i < block.rows(); ++i, ++row) {
        ctx.values.row(row) = block.activations.row(i);
        // A compressed row stands in for `ratio` tokens; its age is taken
        // from the newest token it summarizes.
        std::int64_t newest = block.span_begin + static_cast<std::int64_t>(i + 1) * block.ratio - 1;
        ctx.ages[row] = next - newest;
      }
    }
    for (const auto& block : memory_) {
      for (int i = 0; i < block.rows(); ++i, ++row) {
        ctx.values.row(row) = block.activations.row(i);
        ctx.ages[row] = next - (block.span_begin + i);
      }
    }
    return ctx;
  }

  // Clears fresh-compression handles; gradients stop flowing into the
  // compression kernel from blocks committed in earlier steps.
  void detach_fresh() {
    for (auto& block : compressed_) block.conv_input.reset();
  }

  void clear() {
    memory_.clear();
    compressed_.clear();
    occ_m_ = occ_cm_ = 0;
    next_begin_.reset();
  }

  const std::deque<HiddenBlock<S>>& memory_blocks() const { return memory_; }
  const std::deque<HiddenBlock<S>>& compressed_blocks() const { return compressed_; }

  // Serialization hooks used by checkpointing.
  void restore_block(HiddenBlock<S> block) {
    block.check();
    if (block.compressed) {
      occ_cm_ += block.rows();
      compressed_.push_back(std::move(block));
    } else {
      occ_m_ += block.rows();
      memory_.push_back(std::move(block));
    }
  }
  void set_next_span_begin(std::optional<std::int64_t> v) { next_begin_ = v; }

 private:
  std::int64_t oldest_memory_begin() const {
    if (!memory_.empty()) return memory_.front().span_begin;
    return next_begin_.value_or(0);
  }

  HiddenBlock<S> take_oldest_memory(int count) {
    HiddenBlock<S> out;
    out.ratio = 1;
    out.span_begin = memory_.front().span_begin;
    out.span_end = out.span_begin + count;
    out.activations.resize(count, memory_.front().activations.cols());
    int written = 0;
    while (written < count) {
      HiddenBlock<S>& front = memory_.front();
      int take = std::min(count - written, front.rows());
      out.activations.middleRows(written, take) = front.activations.topRows(take);
      written += take;
      occ_m_ -= take;
      if (take == front.rows()) {
        memory_.pop_front();
      } else {
        Mat<S> rest = front.activations.bottomRows(front.rows() - take);
        front.activations = std::move(rest);
        front.span_begin += take;
      }
    }
    return out;
  }

  void drop_oldest_compressed(int count) {
    int dropped = 0;
    while (dropped < count) {
      HiddenBlock<S>& front = compressed_.front();
      int take = std::min(count - dropped, front.rows());
      dropped += take;
      occ_cm_ -= take;
      if (take == front.rows()) {
        compressed_.pop_front();
      } else {
        Mat<S> rest = front.activations.bottomRows(front.rows() - take);
        front.activations = std::move(rest);
        front.span_begin += static_cast<std::int64_t>(take) * front.ratio;
      }
    }
  }

  int n_m_;
  int n_cm_;
  int ratio_;
  int segment_rows_;
  int occ_m_ = 0;
  int occ_cm_ = 0;
  std::optional<std::int64_t> next_begin_;
  std::deque<HiddenBlock<S>> memory_;
  std::deque<HiddenBlock<S>> compressed_;
};

}  // namespace dct
