#pragma once

#include "dct/nn.hpp"

#include <cstdint>
#include <limits>
#include <vector>

namespace dct {

// Multi-head attention over [context; segment] rows with a learned per-head
// relative-position bias. Queries come from the segment rows only; keys and
// values from all rows. Token distances are taken from the context ages, so
// compressed rows are attended at the age of the newest token they summarize.
// Causal within the segment: query i sees context rows plus segment rows <= i.
template <typename S>
class RelativeAttention {
 public:
  RelativeAttention(const std::string& name, int d_model, int heads, int max_distance,
                    Rng& rng, double init_std)
      : d_(d_model), heads_(heads), head_dim_(d_model / heads),
        max_distance_(max_distance),
        wq_(name + ".q", d_model, d_model, rng, init_std),
        wk_(name + ".k", d_model, d_model, rng, init_std),
        wv_(name + ".v", d_model, d_model, rng, init_std),
        wo_(name + ".o", d_model, d_model, rng, init_std),
        rel_bias_(name + ".rel_bias", heads, max_distance + 1) {
    if (d_model % heads != 0) throw ShapeError("attention: d_model must divide by heads");
  }

  struct Cache {
    int ctx_rows = 0;
    int seg_rows = 0;
    Mat<S> q;                   // seg_rows x d
    Mat<S> k, v;                // (ctx+seg) x d
    std::vector<Mat<S>> probs;  // per head, seg_rows x (ctx+seg)
    Mat<S> concat;              // seg_rows x d, heads concatenated pre-output-proj
    std::vector<std::int64_t> ages;
  };

  // `normed_all` holds the normalized [context; segment] rows.
  Mat<S> forward(const Mat<S>& normed_all, int seg_rows,
                 const std::vector<std::int64_t>& ages, Cache& cache) const {
    const int total = static_cast<int>(normed_all.rows());
    const int ctx_rows = total - seg_rows;
    if (ctx_rows < 0) throw ShapeError("attention: fewer rows than segment length");
    if (static_cast<int>(ages.size()) != ctx_rows)
      throw ShapeError("attention: ages must match context rows");

    cache.ctx_rows = ctx_rows;
    cache.seg_rows = seg_rows;
    cache.ages = ages;
    cache.q = wq_.forward(normed_all.bottomRows(seg_rows));
    cache.k = wk_.forward(normed_all);
    cache.v = wv_.forward(normed_all);
    cache.probs.assign(heads_, Mat<S>());
    cache.concat.resize(seg_rows, d_);

    const S scale = S(1) / static_cast<S>(std::sqrt(static_cast<double>(head_dim_)));
    const S neg_inf = -std::numeric_limits<S>::infinity();

    for (int h = 0; h < heads_; ++h) {
      auto qh = cache.q.middleCols(h * head_dim_, head_dim_);
      auto kh = cache.k.middleCols(h * head_dim_, head_dim_);
      auto vh = cache.v.middleCols(h * head_dim_, head_dim_);
      Mat<S> scores = (qh * kh.transpose()) * scale;
      for (int i = 0; i < seg_rows; ++i) {
        for (int j = 0; j < ctx_rows; ++j)
          scores(i, j) += rel_bias_.value(h, distance_index(i + ages[j]));
        for (int j = 0; j < seg_rows; ++j) {
          if (j > i) {
            scores(i, ctx_rows + j) = neg_inf;
          } else {
            scores(i, ctx_rows + j) += rel_bias_.value(h, distance_index(i - j));
          }
        }
      }
      softmax_rows(scores);
      cache.concat.middleCols(h * head_dim_, head_dim_).noalias() = scores * vh;
      cache.probs[h] = std::move(scores);
    }
    return wo_.forward(cache.concat);
  }

  // Returns the gradient with respect to `normed_all`.
  Mat<S> backward(const Mat<S>& normed_all, const Cache& cache, const Mat<S>& grad_out) {
    const int total = cache.ctx_rows + cache.seg_rows;
    const S scale = S(1) / static_cast<S>(std::sqrt(static_cast<double>(head_dim_)));

    Mat<S> grad_concat = wo_.backward(cache.concat, grad_out);
    Mat<S> grad_q = Mat<S>::Zero(cache.seg_rows, d_);
    Mat<S> grad_k = Mat<S>::Zero(total, d_);
    Mat<S> grad_v = Mat<S>::Zero(total, d_);

    for (int h = 0; h < heads_; ++h) {
      auto qh = cache.q.middleCols(h * head_dim_, head_dim_);
      auto kh = cache.k.middleCols(h * head_dim_, head_dim_);
      auto vh = cache.v.middleCols(h * head_dim_, head_dim_);
      const Mat<S>& probs = cache.probs[h];
      auto grad_oh = grad_concat.middleCols(h * head_dim_, head_dim_);

      grad_v.middleCols(h * head_dim_, head_dim_).noalias() += probs.transpose() * grad_oh;
      Mat<S> grad_probs = grad_oh * vh.transpose();
      // softmax backward: dS = P .* (dP - rowsum(dP .* P))
      Mat<S> grad_scores(cache.seg_rows, total);
      for (int i = 0; i < cache.seg_rows; ++i) {
        S dot = probs.row(i).dot(grad_probs.row(i));
        grad_scores.row(i) = probs.row(i).array() * (grad_probs.row(i).array() - dot);
      }
      for (int i = 0; i < cache.seg_rows; ++i) {
        for (int j = 0; j < cache.ctx_rows; ++j)
          rel_bias_.grad(h, distance_index(i + cache.ages[j])) += grad_scores(i, j);
        for (int j = 0; j <= i; ++j)
          rel_bias_.grad(h, distance_index(i - j)) += grad_scores(i, cache.ctx_rows + j);
      }
      grad_q.middleCols(h * head_dim_, head_dim_).noalias() += grad_scores * kh * scale;
      grad_k.middleCols(h * head_dim_, head_dim_).noalias() +=
          grad_scores.transpose() * qh * scale;
    }

    Mat<S> grad_all = Mat<S>::Zero(total, d_);
    grad_all.bottomRows(cache.seg_rows) += wq_.backward(normed_all.bottomRows(cache.seg_rows), grad_q);
    grad_all += wk_.backward(normed_all, grad_k);
    grad_all += wv_.backward(normed_all, grad_v);
    return grad_all;
  }

  void params(std::vector<Param<S>*>& out) {
    wq_.params(out);
    wk_.params(out);
    wv_.params(out);
    wo_.params(out);
    out.push_back(&rel_bias_);
  }

  Param<S>& rel_bias() { return rel_bias_; }

 private:
  int distance_index(std::int64_t delta) const {
    if (delta < 0) delta = 0;
    if (delta > max_distance_) delta = max_distance_;
    return static_cast<int>(delta);
  }

  int d_;
  int heads_;
  int head_dim_;
  int max_distance_;
  Linear<S> wq_, wk_, wv_, wo_;
  Param<S> rel_bias_;
};

}  // namespace dct
