#pragma once

#include "dct/memory.hpp"
#include "dct/nn.hpp"

#include <memory>
#include <utility>

namespace dct {

// One-dimensional convolution over position rows with window and stride both
// equal to the compression ratio, mapping d channels to d channels. An n-row
// input yields floor(n/c) output rows. Weight layout: taps stacked along the
// input dimension, weight[(k*d + i), j] multiplies input row (r*c + k),
// channel i into output channel j.
template <typename S>
class SegmentCompressor {
 public:
  SegmentCompressor(int d_model, int ratio, Rng& rng)
      : d_(d_model), c_(ratio),
        weight_("conv.weight", ratio * d_model, d_model),
        bias_("conv.bias", 1, d_model) {
    S scale = static_cast<S>(1.0 / std::sqrt(static_cast<double>(ratio * d_model)));
    for (Eigen::Index i = 0; i < weight_.value.size(); ++i)
      weight_.value.data()[i] = static_cast<S>(rng.normal()) * scale;
    bias_.value.setZero();
  }

  int ratio() const { return c_; }
  int d_model() const { return d_; }

  Mat<S> forward(const Mat<S>& input) const {
    int n_out = static_cast<int>(input.rows()) / c_;
    // Rows are contiguous in memory, so c consecutive rows of width d read as
    // one row of width c*d.
    Eigen::Map<const Mat<S>> windows(input.data(), n_out, c_ * d_);
    Mat<S> out = windows * weight_.value;
    out.rowwise() += bias_.value.row(0);
    return out;
  }

  // Accumulates weight/bias gradients for an upstream gradient on the output
  // rows. Inputs are cached activations and receive no gradient.
  void backward(const Mat<S>& input, const Mat<S>& grad_out) {
    int n_out = static_cast<int>(grad_out.rows());
    Eigen::Map<const Mat<S>> windows(input.data(), n_out, c_ * d_);
    weight_.grad.noalias() += windows.transpose() * grad_out;
    bias_.grad.row(0) += grad_out.colwise().sum();
  }

  void params(std::vector<Param<S>*>& out) {
    out.push_back(&weight_);
    out.push_back(&bias_);
  }

  Param<S>& weight() { return weight_; }
  Param<S>& bias() { return bias_; }

 private:
  int d_;
  int c_;
  Param<S> weight_;
  Param<S> bias_;
};

template <typename S>
struct CompressResult {
  HiddenBlock<S> block;
  bool degenerate = false;  // evicted had fewer rows than the ratio
};

// Maps an evicted granular block of n rows to floor(n/c) compressed rows.
// The output span covers the first floor(n/c)*c tokens of the input span;
// any remainder tokens are dropped. The block keeps a handle to the consumed
// input rows so the current step can route attention gradients back into the
// kernel.
template <typename S>
inline CompressResult<S> compress(const HiddenBlock<S>& evicted,
                                  const SegmentCompressor<S>& params) {
  if (evicted.ratio != 1) throw ContractError("compress: input must be granular (ratio 1)");
  int c = params.ratio();
  int n = evicted.rows();
  CompressResult<S> result;
  if (n < c) {
    result.degenerate = true;
    result.block.ratio = c;
    result.block.compressed = true;
    result.block.span_begin = result.block.span_end = evicted.span_begin;
    result.block.activations.resize(0, params.d_model());
    return result;
  }
  int n_out = n / c;
  auto used = std::make_shared<Mat<S>>(evicted.activations.topRows(n_out * c));
  result.block.activations = params.forward(*used);
  result.block.span_begin = evicted.span_begin;
  result.block.span_end = evicted.span_begin + static_cast<std::int64_t>(n_out) * c;
  result.block.ratio = c;
  result.block.compressed = true;
  result.block.conv_input = std::move(used);
  return result;
}

}  // namespace dct
