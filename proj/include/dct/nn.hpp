#pragma once

#include "dct/common.hpp"

#include <string>
#include <vector>

namespace dct {

template <typename S>
struct Param {
  std::string name;
  Mat<S> value;
  Mat<S> grad;

  Param(std::string n, Eigen::Index rows, Eigen::Index cols)
      : name(std::move(n)), value(Mat<S>::Zero(rows, cols)), grad(Mat<S>::Zero(rows, cols)) {}

  void zero_grad() { grad.setZero(); }
};

// y = x W + b
template <typename S>
class Linear {
 public:
  Linear(const std::string& name, int in, int out, Rng& rng, double init_std)
      : weight_(name + ".weight", in, out), bias_(name + ".bias", 1, out) {
    for (Eigen::Index i = 0; i < weight_.value.size(); ++i)
      weight_.value.data()[i] = static_cast<S>(rng.normal(0.0, init_std));
    bias_.value.setZero();
  }

  Mat<S> forward(const Mat<S>& x) const {
    Mat<S> y = x * weight_.value;
    y.rowwise() += bias_.value.row(0);
    return y;
  }

  Mat<S> backward(const Mat<S>& x, const Mat<S>& grad_y) {
    weight_.grad.noalias() += x.transpose() * grad_y;
    bias_.grad.row(0) += grad_y.colwise().sum();
    return grad_y * weight_.value.transpose();
  }

  void params(std::vector<Param<S>*>& out) {
    out.push_back(&weight_);
    out.push_back(&bias_);
  }

  Param<S>& weight() { return weight_; }
  Param<S>& bias() { return bias_; }

 private:
  Param<S> weight_;
  Param<S> bias_;
};

// Row-wise layer normalization with learned gain and shift.
template <typename S>
class LayerNorm {
 public:
  LayerNorm(const std::string& name, int d)
      : gamma_(name + ".gamma", 1, d), beta_(name + ".beta", 1, d) {
    gamma_.value.setOnes();
    beta_.value.setZero();
  }

  struct Cache {
    Mat<S> normed;   // (x - mean) * rstd
    Vec<S> rstd;
  };

  Mat<S> forward(const Mat<S>& x, Cache& cache) const {
    const S eps = static_cast<S>(1e-5);
    Eigen::Index n = x.rows(), d = x.cols();
    cache.normed.resize(n, d);
    cache.rstd.resize(n);
    Mat<S> y(n, d);
    for (Eigen::Index i = 0; i < n; ++i) {
      S mean = x.row(i).mean();
      S var = (x.row(i).array() - mean).square().sum() / static_cast<S>(d);
      S rstd = S(1) / std::sqrt(var + eps);
      cache.rstd[i] = rstd;
      cache.normed.row(i) = (x.row(i).array() - mean) * rstd;
      y.row(i) = cache.normed.row(i).array() * gamma_.value.row(0).array() +
                 beta_.value.row(0).array();
    }
    return y;
  }

  Mat<S> backward(const Cache& cache, const Mat<S>& grad_y) {
    Eigen::Index n = grad_y.rows(), d = grad_y.cols();
    Mat<S> grad_x(n, d);
    for (Eigen::Index i = 0; i < n; ++i) {
      auto nrm = cache.normed.row(i).array();
      auto gy = grad_y.row(i).array();
      auto dnorm = (gy * gamma_.value.row(0).array()).eval();
      S mean_dnorm = dnorm.mean();
      S mean_dnorm_norm = (dnorm * nrm).mean();
      grad_x.row(i) = ((dnorm - mean_dnorm - nrm * mean_dnorm_norm) * cache.rstd[i]).matrix();
      gamma_.grad.row(0).array() += gy * nrm;
      beta_.grad.row(0).array() += gy;
    }
    return grad_x;
  }

  void params(std::vector<Param<S>*>& out) {
    out.push_back(&gamma_);
    out.push_back(&beta_);
  }

 private:
  Param<S> gamma_;
  Param<S> beta_;
};

// tanh-approximation GELU
template <typename S>
inline Mat<S> gelu_forward(const Mat<S>& x) {
  const S k = static_cast<S>(std::sqrt(2.0 / M_PI));
  const S a = static_cast<S>(0.044715);
  Mat<S> y(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    S v = x.data()[i];
    y.data()[i] = S(0.5) * v * (S(1) + std::tanh(k * (v + a * v * v * v)));
  }
  return y;
}

template <typename S>
inline Mat<S> gelu_backward(const Mat<S>& x, const Mat<S>& grad_y) {
  const S k = static_cast<S>(std::sqrt(2.0 / M_PI));
  const S a = static_cast<S>(0.044715);
  Mat<S> grad_x(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    S v = x.data()[i];
    S u = k * (v + a * v * v * v);
    S t = std::tanh(u);
    S sech2 = S(1) - t * t;
    S du = k * (S(1) + S(3) * a * v * v);
    grad_x.data()[i] = grad_y.data()[i] * (S(0.5) * (S(1) + t) + S(0.5) * v * sech2 * du);
  }
  return grad_x;
}

// Numerically stable row softmax, in place.
template <typename S>
inline void softmax_rows(Mat<S>& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    S mx = m.row(i).maxCoeff();
    m.row(i) = (m.row(i).array() - mx).exp();
    S sum = m.row(i).sum();
    m.row(i) /= sum;
  }
}

// Mean cross-entropy (natural log) over rows of logits against integer
// targets. Returns the loss; fills grad_logits with d(loss)/d(logits).
template <typename S>
inline double softmax_cross_entropy(const Mat<S>& logits, const std::vector<int>& targets,
                                    Mat<S>* grad_logits) {
  Eigen::Index n = logits.rows();
  if (static_cast<Eigen::Index>(targets.size()) != n)
    throw ShapeError("cross entropy: target count mismatch");
  double total = 0.0;
  Mat<S> probs = logits;
  softmax_rows(probs);
  for (Eigen::Index i = 0; i < n; ++i) {
    double p = static_cast<double>(probs(i, targets[i]));
    total -= std::log(std::max(p, 1e-300));
  }
  double loss = total / static_cast<double>(n);
  if (grad_logits) {
    *grad_logits = probs;
    S inv = S(1) / static_cast<S>(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      (*grad_logits)(i, targets[i]) -= S(1);
      grad_logits->row(i) *= inv;
    }
  }
  return loss;
}

// Plain gradient-descent step over a parameter set. Refuses to apply a
// non-finite update; returns false and leaves values untouched in that case.
template <typename S>
inline bool sgd_step(const std::vector<Param<S>*>& params, double lr, std::string* diag = nullptr) {
  for (Param<S>* p : params) {
    if (!all_finite(p->grad)) {
      if (diag) *diag = "non-finite gradient in " + p->name;
      return false;
    }
  }
  for (Param<S>* p : params) p->value -= static_cast<S>(lr) * p->grad;
  return true;
}

template <typename S>
inline void zero_grads(const std::vector<Param<S>*>& params) {
  for (Param<S>* p : params) p->zero_grad();
}

// Adam with bias correction over a fixed parameter list. Moment tensors are
// addressed by list position, so the list must be the same on every step
// (and is what checkpoints serialize).
template <typename S>
class AdamState {
 public:
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEps = 1e-8;

  explicit AdamState(const std::vector<Param<S>*>& params) {
    m_.reserve(params.size());
    v_.reserve(params.size());
    for (const Param<S>* p : params) {
      m_.push_back(Mat<S>::Zero(p->value.rows(), p->value.cols()));
      v_.push_back(Mat<S>::Zero(p->value.rows(), p->value.cols()));
    }
  }

  bool step(const std::vector<Param<S>*>& params, double lr, std::string* diag = nullptr) {
    if (params.size() != m_.size()) throw ShapeError("adam: parameter list changed");
    for (Param<S>* p : params) {
      if (!all_finite(p->grad)) {
        if (diag) *diag = "non-finite gradient in " + p->name;
        return false;
      }
    }
    ++t_;
    const S b1 = static_cast<S>(kBeta1), b2 = static_cast<S>(kBeta2);
    const S corr1 = static_cast<S>(1.0 - std::pow(kBeta1, static_cast<double>(t_)));
    const S corr2 = static_cast<S>(1.0 - std::pow(kBeta2, static_cast<double>(t_)));
    const S eps = static_cast<S>(kEps);
    const S rate = static_cast<S>(lr);
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto& g = params[i]->grad;
      m_[i] = b1 * m_[i] + (S(1) - b1) * g;
      v_[i] = (b2 * v_[i].array() + (S(1) - b2) * g.array().square()).matrix();
      params[i]->value.array() -=
          rate * (m_[i].array() / corr1) / ((v_[i].array() / corr2).sqrt() + eps);
    }
    return true;
  }

  std::int64_t timestep() const { return t_; }
  void set_timestep(std::int64_t t) { t_ = t; }
  std::vector<Mat<S>>& first_moments() { return m_; }
  std::vector<Mat<S>>& second_moments() { return v_; }

 private:
  std::vector<Mat<S>> m_, v_;
  std::int64_t t_ = 0;
};

}  // namespace dct
