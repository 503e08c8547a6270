#pragma once

#include "dct/nn.hpp"

#include <vector>

namespace dct {

namespace detail {
template <typename S>
inline S sigmoid(S x) {
  return S(1) / (S(1) + std::exp(-x));
}
}  // namespace detail

// One direction of an LSTM over row-sequences. Gate order in the stacked
// weight columns: input, forget, cell, output.
template <typename S>
class LstmDirection {
 public:
  LstmDirection(const std::string& name, int input_dim, int hidden, Rng& rng)
      : input_dim_(input_dim), hidden_(hidden),
        wx_(name + ".wx", input_dim, 4 * hidden),
        wh_(name + ".wh", hidden, 4 * hidden),
        bias_(name + ".bias", 1, 4 * hidden) {
    double std_x = 1.0 / std::sqrt(static_cast<double>(input_dim));
    double std_h = 1.0 / std::sqrt(static_cast<double>(hidden));
    for (Eigen::Index i = 0; i < wx_.value.size(); ++i)
      wx_.value.data()[i] = static_cast<S>(rng.normal(0.0, std_x));
    for (Eigen::Index i = 0; i < wh_.value.size(); ++i)
      wh_.value.data()[i] = static_cast<S>(rng.normal(0.0, std_h));
    bias_.value.setZero();
    // forget gate bias starts open
    bias_.value.row(0).segment(hidden_, hidden_).setConstant(S(1));
  }

  struct Cache {
    bool reverse = false;
    Mat<S> x_proj;                  // T x 4H
    Mat<S> i, f, g, o, c, tanh_c, h;  // T x H each, in processing order
  };

  // Processes the rows of `input` (front to back, or back to front when
  // `reverse`), returning the final hidden state [1 x H].
  Mat<S> forward(const Mat<S>& input, bool reverse, Cache& cache) const {
    const int T = static_cast<int>(input.rows());
    const int H = hidden_;
    cache.reverse = reverse;
    cache.x_proj = input * wx_.value;
    cache.x_proj.rowwise() += bias_.value.row(0);
    cache.i.resize(T, H);
    cache.f.resize(T, H);
    cache.g.resize(T, H);
    cache.o.resize(T, H);
    cache.c.resize(T, H);
    cache.tanh_c.resize(T, H);
    cache.h.resize(T, H);

    Mat<S> h_prev = Mat<S>::Zero(1, H);
    Mat<S> c_prev = Mat<S>::Zero(1, H);
    for (int t = 0; t < T; ++t) {
      int row = reverse ? T - 1 - t : t;
      Mat<S> z = cache.x_proj.row(row) + h_prev * wh_.value;
      for (int j = 0; j < H; ++j) {
        cache.i(t, j) = detail::sigmoid(z(0, j));
        cache.f(t, j) = detail::sigmoid(z(0, H + j));
        cache.g(t, j) = std::tanh(z(0, 2 * H + j));
        cache.o(t, j) = detail::sigmoid(z(0, 3 * H + j));
        cache.c(t, j) = cache.f(t, j) * c_prev(0, j) + cache.i(t, j) * cache.g(t, j);
        cache.tanh_c(t, j) = std::tanh(cache.c(t, j));
        cache.h(t, j) = cache.o(t, j) * cache.tanh_c(t, j);
      }
      h_prev = cache.h.row(t);
      c_prev = cache.c.row(t);
    }
    return h_prev;
  }

  // BPTT from a gradient on the final hidden state. Inputs are observations;
  // no input gradient is produced.
  void backward(const Mat<S>& input, const Cache& cache, const Mat<S>& grad_h_final) {
    const int T = static_cast<int>(cache.h.rows());
    const int H = hidden_;
    Mat<S> grad_h = grad_h_final;
    Mat<S> grad_c = Mat<S>::Zero(1, H);
    Mat<S> grad_z(1, 4 * H);
    for (int t = T - 1; t >= 0; --t) {
      int row = cache.reverse ? T - 1 - t : t;
      for (int j = 0; j < H; ++j) {
        S i = cache.i(t, j), f = cache.f(t, j), g = cache.g(t, j), o = cache.o(t, j);
        S tc = cache.tanh_c(t, j);
        S dh = grad_h(0, j);
        S dc = grad_c(0, j) + dh * o * (S(1) - tc * tc);
        S c_prev = t > 0 ? cache.c(t - 1, j) : S(0);
        grad_z(0, j) = dc * g * i * (S(1) - i);
        grad_z(0, H + j) = dc * c_prev * f * (S(1) - f);
        grad_z(0, 2 * H + j) = dc * i * (S(1) - g * g);
        grad_z(0, 3 * H + j) = dh * tc * o * (S(1) - o);
        grad_c(0, j) = dc * f;
      }
      wx_.grad.noalias() += input.row(row).transpose() * grad_z;
      bias_.grad += grad_z;
      if (t > 0) {
        wh_.grad.noalias() += cache.h.row(t - 1).transpose() * grad_z;
        grad_h.noalias() = grad_z * wh_.value.transpose();
      }
    }
  }

  void params(std::vector<Param<S>*>& out) {
    out.push_back(&wx_);
    out.push_back(&wh_);
    out.push_back(&bias_);
  }

 private:
  int input_dim_;
  int hidden_;
  Param<S> wx_, wh_, bias_;
};

// Bidirectional encoder: runs both directions over the rows and concatenates
// the two final hidden states.
template <typename S>
class BiLstmEncoder {
 public:
  BiLstmEncoder(const std::string& name, int input_dim, int hidden, Rng& rng)
      : hidden_(hidden),
        fwd_(name + ".fwd", input_dim, hidden, rng),
        bwd_(name + ".bwd", input_dim, hidden, rng) {}

  struct Cache {
    typename LstmDirection<S>::Cache fwd, bwd;
  };

  Mat<S> forward(const Mat<S>& input, Cache& cache) const {
    Mat<S> pooled(1, 2 * hidden_);
    pooled.leftCols(hidden_) = fwd_.forward(input, false, cache.fwd);
    pooled.rightCols(hidden_) = bwd_.forward(input, true, cache.bwd);
    return pooled;
  }

  void backward(const Mat<S>& input, const Cache& cache, const Mat<S>& grad_pooled) {
    fwd_.backward(input, cache.fwd, grad_pooled.leftCols(hidden_));
    bwd_.backward(input, cache.bwd, grad_pooled.rightCols(hidden_));
  }

  int hidden() const { return hidden_; }

  void params(std::vector<Param<S>*>& out) {
    fwd_.params(out);
    bwd_.params(out);
  }

 private:
  int hidden_;
  LstmDirection<S> fwd_, bwd_;
};

}  // namespace dct
