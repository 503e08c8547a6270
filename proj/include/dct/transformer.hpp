#pragma once

#include "dct/attention.hpp"
#include "dct/config.hpp"
#include "dct/conv.hpp"
#include "dct/memory.hpp"
#include "dct/nn.hpp"

#include <cmath>
#include <cstdint>
#include <vector>

namespace dct {

inline double bits_per_character(double mean_cross_entropy) {
  return mean_cross_entropy / M_LN2;
}

inline double perplexity_from_loss(double mean_cross_entropy) {
  return std::exp(mean_cross_entropy);
}

// Eq.-style perplexity from per-token log-likelihoods (natural log).
inline double perplexity(const std::vector<double>& token_logprobs) {
  if (token_logprobs.empty()) throw ContractError("perplexity: no tokens");
  double total = 0.0;
  for (double lp : token_logprobs) total += lp;
  return std::exp(-total / static_cast<double>(token_logprobs.size()));
}

// Shape parameters of the decoder. `max_distance` bounds the relative
// attention lookup table.
struct ModelDims {
  int layers = 2;
  int d_model = 128;
  int heads = 4;
  int d_ff = 512;
  int vocab = 256;
  int n_s = 128;
  int max_distance = 512;
};

// Decoder-only transformer with relative-position attention over
// [compressed memory; memory; segment]. Pre-norm residual blocks. Memory at
// block l caches the inputs of block l, so layer hidden states returned from
// forward() are exactly what gets appended to each layer's stores.
//
// The per-layer compression kernels are owned here as well: they are trained
// by the same gradient step as the rest of the model, via attention gradients
// flowing into freshly compressed context rows.
template <typename S>
class TransformerModel {
 public:
  TransformerModel(const ModelDims& dims, Rng& rng)
      : dims_(dims), emb_("emb", dims.vocab, dims.d_model),
        ln_f_("ln_f", dims.d_model),
        out_proj_("out", dims.d_model, dims.vocab, rng, kInitStd) {
    for (Eigen::Index i = 0; i < emb_.value.size(); ++i)
      emb_.value.data()[i] = static_cast<S>(rng.normal(0.0, kInitStd));
    blocks_.reserve(dims.layers);
    for (int l = 0; l < dims.layers; ++l) {
      std::string p = "block" + std::to_string(l);
      blocks_.push_back(Block{
          LayerNorm<S>(p + ".ln1", dims.d_model),
          RelativeAttention<S>(p + ".attn", dims.d_model, dims.heads, dims.max_distance, rng,
                               kInitStd),
          LayerNorm<S>(p + ".ln2", dims.d_model),
          Linear<S>(p + ".ff1", dims.d_model, dims.d_ff, rng, kInitStd),
          Linear<S>(p + ".ff2", dims.d_ff, dims.d_model, rng, kInitStd),
      });
    }
  }

  // Compression kernels live alongside the blocks; one per layer.
  void add_compressors(int ratio, Rng& rng) {
    compressors_.clear();
    compressors_.reserve(dims_.layers);
    for (int l = 0; l < dims_.layers; ++l) compressors_.emplace_back(dims_.d_model, ratio, rng);
  }

  const ModelDims& dims() const { return dims_; }
  SegmentCompressor<S>& compressor(int layer) { return compressors_[layer]; }
  int compressor_count() const { return static_cast<int>(compressors_.size()); }

  struct LayerCache {
    std::vector<typename LayerNorm<S>::Cache> ln1;  // per stream
    std::vector<Mat<S>> normed1;                    // per stream, (ctx+n_s) x d
    std::vector<typename RelativeAttention<S>::Cache> attn;
    Mat<S> after_attn;  // streams*n_s x d
    typename LayerNorm<S>::Cache ln2;
    Mat<S> normed2;
    Mat<S> ff_pre;
    Mat<S> ff_act;
  };

  struct ForwardCache {
    int streams = 0;
    int seg_rows = 0;
    std::vector<int> tokens;                // streams*n_s
    std::vector<Mat<S>> layer_inputs;       // per layer: streams*n_s x d
    std::vector<LayerCache> layers;
    Mat<S> final_hidden;
    typename LayerNorm<S>::Cache ln_f;
    Mat<S> normed_f;
    Mat<S> logits;       // streams*n_s x vocab
    Mat<S> grad_logits;  // d(loss)/d(logits)
    double loss = 0.0;
  };

  // tokens/targets: one row of n_s ids per stream. contexts: per layer, one
  // ContextView per stream (empty views allowed). Returns mean cross-entropy
  // in natural log.
  double forward(const std::vector<std::vector<int>>& tokens,
                 const std::vector<std::vector<int>>& targets,
                 const std::vector<std::vector<const ContextView<S>*>>& contexts,
                 ForwardCache& cache) const {
    const int streams = static_cast<int>(tokens.size());
    const int T = dims_.n_s;
    if (static_cast<int>(contexts.size()) != dims_.layers)
      throw ShapeError("forward: need one context list per layer");
    cache.streams = streams;
    cache.seg_rows = T;
    cache.tokens.resize(static_cast<std::size_t>(streams) * T);

    Mat<S> x(streams * T, dims_.d_model);
    for (int s = 0; s < streams; ++s) {
      if (static_cast<int>(tokens[s].size()) != T)
        throw ShapeError("forward: each stream must carry n_s tokens");
      for (int i = 0; i < T; ++i) {
        int id = tokens[s][i];
        if (id < 0 || id >= dims_.vocab) throw ContractError("forward: token id outside vocabulary");
        cache.tokens[static_cast<std::size_t>(s) * T + i] = id;
        x.row(s * T + i) = emb_.value.row(id);
      }
    }

    cache.layer_inputs.assign(dims_.layers, Mat<S>());
    cache.layers.clear();
    cache.layers.resize(dims_.layers);

    for (int l = 0; l < dims_.layers; ++l) {
      if (static_cast<int>(contexts[l].size()) != streams)
        throw ShapeError("forward: need one context per stream");
      cache.layer_inputs[l] = x;
      LayerCache& lc = cache.layers[l];
      lc.ln1.resize(streams);
      lc.normed1.resize(streams);
      lc.attn.resize(streams);
      lc.after_attn = x;
      for (int s = 0; s < streams; ++s) {
        const ContextView<S>& ctx = *contexts[l][s];
        if (ctx.rows() > 0 && ctx.values.cols() != dims_.d_model)
          throw ShapeError("forward: context width must match d_model");
        Mat<S> cat(ctx.rows() + T, dims_.d_model);
        if (ctx.rows() > 0) cat.topRows(ctx.rows()) = ctx.values;
        cat.bottomRows(T) = x.middleRows(s * T, T);
        lc.normed1[s] = blocks_[l].ln1.forward(cat, lc.ln1[s]);
        Mat<S> attn_out =
            blocks_[l].attn.forward(lc.normed1[s], T, ctx.ages, lc.attn[s]);
        lc.after_attn.middleRows(s * T, T) += attn_out;
      }
      lc.normed2 = blocks_[l].ln2.forward(lc.after_attn, lc.ln2);
      lc.ff_pre = blocks_[l].ff1.forward(lc.normed2);
      lc.ff_act = gelu_forward(lc.ff_pre);
      x = lc.after_attn + blocks_[l].ff2.forward(lc.ff_act);
    }

    cache.final_hidden = x;
    cache.normed_f = ln_f_.forward(x, cache.ln_f);
    cache.logits = out_proj_.forward(cache.normed_f);
    if (!all_finite(cache.logits)) throw NumericError("forward: non-finite logits");

    std::vector<int> flat_targets(static_cast<std::size_t>(streams) * T);
    for (int s = 0; s < streams; ++s) {
      if (static_cast<int>(targets[s].size()) != T)
        throw ShapeError("forward: each stream must carry n_s targets");
      for (int i = 0; i < T; ++i) {
        int id = targets[s][i];
        if (id < 0 || id >= dims_.vocab) throw ContractError("forward: target id outside vocabulary");
        flat_targets[static_cast<std::size_t>(s) * T + i] = id;
      }
    }
    cache.loss = softmax_cross_entropy(cache.logits, flat_targets, &cache.grad_logits);
    return cache.loss;
  }

  // Backpropagates the loss recorded in `cache`, accumulating parameter
  // gradients. Returns, per layer and per stream, the gradient with respect
  // to the context rows (for fresh-compression backprop); cached granular
  // rows are constants and their slices are simply dropped by the caller.
  std::vector<std::vector<Mat<S>>> backward(ForwardCache& cache) {
    const int streams = cache.streams;
    const int T = cache.seg_rows;

    Mat<S> grad_normed_f = out_proj_.backward(cache.normed_f, cache.grad_logits);
    Mat<S> grad_x = ln_f_.backward(cache.ln_f, grad_normed_f);

    std::vector<std::vector<Mat<S>>> grad_ctx(dims_.layers);
    for (int l = dims_.layers - 1; l >= 0; --l) {
      LayerCache& lc = cache.layers[l];
      // FFN
      Mat<S> grad_ff_act = blocks_[l].ff2.backward(lc.ff_act, grad_x);
      Mat<S> grad_ff_pre = gelu_backward(lc.ff_pre, grad_ff_act);
      Mat<S> grad_normed2 = blocks_[l].ff1.backward(lc.normed2, grad_ff_pre);
      Mat<S> grad_after_attn = grad_x + blocks_[l].ln2.backward(lc.ln2, grad_normed2);

      grad_ctx[l].resize(streams);
      Mat<S> grad_input = grad_after_attn;  // residual path into the block input
      for (int s = 0; s < streams; ++s) {
        const int ctx_rows = lc.attn[s].ctx_rows;
        Mat<S> grad_attn_out = grad_after_attn.middleRows(s * T, T);
        Mat<S> grad_normed1 = blocks_[l].attn.backward(lc.normed1[s], lc.attn[s], grad_attn_out);
        Mat<S> grad_cat = blocks_[l].ln1.backward(lc.ln1[s], grad_normed1);
        grad_ctx[l][s] = grad_cat.topRows(ctx_rows);
        grad_input.middleRows(s * T, T) += grad_cat.bottomRows(T);
      }
      grad_x = std::move(grad_input);
    }

    for (int s = 0; s < streams; ++s)
      for (int i = 0; i < T; ++i)
        emb_.grad.row(cache.tokens[static_cast<std::size_t>(s) * T + i]) += grad_x.row(s * T + i);
    return grad_ctx;
  }

  void params(std::vector<Param<S>*>& out) {
    out.push_back(&emb_);
    for (auto& b : blocks_) {
      b.ln1.params(out);
      b.attn.params(out);
      b.ln2.params(out);
      b.ff1.params(out);
      b.ff2.params(out);
    }
    ln_f_.params(out);
    out_proj_.params(out);
    for (auto& comp : compressors_) comp.params(out);
  }

  std::vector<Param<S>*> param_list() {
    std::vector<Param<S>*> out;
    params(out);
    return out;
  }

 private:
  static constexpr double kInitStd = 0.02;

  struct Block {
    LayerNorm<S> ln1;
    RelativeAttention<S> attn;
    LayerNorm<S> ln2;
    Linear<S> ff1;
    Linear<S> ff2;
  };

  ModelDims dims_;
  Param<S> emb_;
  std::vector<Block> blocks_;
  LayerNorm<S> ln_f_;
  Linear<S> out_proj_;
  std::vector<SegmentCompressor<S>> compressors_;
};

inline ModelDims dims_from_config(const RunConfig& cfg) {
  ModelDims d;
  d.layers = cfg.layers;
  d.d_model = cfg.d_model;
  d.heads = cfg.heads;
  d.d_ff = cfg.ff_width();
  d.vocab = cfg.vocab;
  d.n_s = cfg.n_s;
  d.max_distance = cfg.max_rel_distance();
  return d;
}

}  // namespace dct
