#pragma once

#include "dct/lstm.hpp"
#include "dct/memory.hpp"
#include "dct/transformer.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace dct {

inline constexpr int kActionDiscard = 0;
inline constexpr int kActionKeep = 1;

// Raised when a policy state is requested before both stores are full; the
// caller skips judging and keeps the default compress-and-commit behavior.
struct TrajectoryNotStarted : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// r = m * a^ppl. Strictly decreasing in perplexity, so lower perplexity means
// higher reward; underflow clamps to zero.
struct RewardTransform {
  double m = 1.0;
  double a = 0.99;

  RewardTransform() = default;
  RewardTransform(double slope, double base) : m(slope), a(base) {
    if (!(m > 0.0)) throw ContractError("reward transform: slope must be > 0");
    if (!(a > 0.0 && a < 1.0)) throw ContractError("reward transform: base must lie in (0, 1)");
  }

  double operator()(double ppl) const { return m * std::pow(a, ppl); }
};

// Mean reward over a finished trajectory.
inline double trajectory_return(const std::vector<double>& rewards) {
  if (rewards.empty()) throw ContractError("trajectory_return: empty trajectory");
  double total = 0.0;
  for (double r : rewards) total += r;
  return total / static_cast<double>(rewards.size());
}

// The judger's observation: last-layer compressed memory, memory, and
// sequence rows, mean-pooled over streams and stacked in that order.
// All streams must have both stores full so the shape is fixed.
template <typename S>
Mat<S> build_policy_state(const std::vector<const LayerMemoryState<S>*>& states,
                          const Mat<S>& seq_last, int d_model) {
  if (states.empty()) throw ContractError("build_policy_state: no streams");
  const int n_cm = states[0]->capacity_compressed();
  const int n_m = states[0]->capacity_memory();
  const int n_seq = static_cast<int>(seq_last.rows()) / static_cast<int>(states.size());
  Mat<S> pooled = Mat<S>::Zero(n_cm + n_m + n_seq, d_model);
  for (std::size_t s = 0; s < states.size(); ++s) {
    const LayerMemoryState<S>& st = *states[s];
    if (!st.compressed_full() || !st.memory_full())
      throw TrajectoryNotStarted("policy state requires both stores full");
    int row = 0;
    for (const auto& block : st.compressed_blocks())
      for (int i = 0; i < block.rows(); ++i) pooled.row(row++) += block.activations.row(i);
    for (const auto& block : st.memory_blocks())
      for (int i = 0; i < block.rows(); ++i) pooled.row(row++) += block.activations.row(i);
    pooled.middleRows(n_cm + n_m, n_seq) +=
        seq_last.middleRows(static_cast<int>(s) * n_seq, n_seq);
  }
  pooled /= static_cast<S>(states.size());
  return pooled;
}

struct PolicyDecision {
  double p_discard = 0.5;
  double p_keep = 0.5;
  double logp_discard = 0.0;
  double logp_keep = 0.0;
  double entropy = 0.0;

  double prob(int action) const { return action == kActionKeep ? p_keep : p_discard; }
  double logp(int action) const { return action == kActionKeep ? logp_keep : logp_discard; }
};

// BiLSTM over the state rows, pooled as [final forward; final backward],
// then a linear head to two logits (discard, keep). The head starts at zero
// so the initial policy is uniform.
template <typename S>
class Actor {
 public:
  Actor(int input_dim, int hidden, Rng& rng)
      : encoder_("actor", input_dim, hidden, rng),
        head_w_("actor.head.weight", 2 * hidden, 2),
        head_b_("actor.head.bias", 1, 2) {}

  struct Cache {
    typename BiLstmEncoder<S>::Cache enc;
    Mat<S> pooled;
  };

  Mat<S> forward(const Mat<S>& state, Cache& cache) const {
    cache.pooled = encoder_.forward(state, cache.enc);
    Mat<S> logits = cache.pooled * head_w_.value;
    logits += head_b_.value;
    return logits;
  }

  void backward(const Mat<S>& state, const Cache& cache, const Mat<S>& grad_logits) {
    head_w_.grad.noalias() += cache.pooled.transpose() * grad_logits;
    head_b_.grad += grad_logits;
    Mat<S> grad_pooled = grad_logits * head_w_.value.transpose();
    encoder_.backward(state, cache.enc, grad_pooled);
  }

  void params(std::vector<Param<S>*>& out) {
    encoder_.params(out);
    out.push_back(&head_w_);
    out.push_back(&head_b_);
  }

  std::vector<Param<S>*> param_list() {
    std::vector<Param<S>*> out;
    params(out);
    return out;
  }

 private:
  BiLstmEncoder<S> encoder_;
  Param<S> head_w_;
  Param<S> head_b_;
};

// Stable softmax over the two logits plus the action-distribution entropy.
template <typename S>
PolicyDecision policy_forward(const Actor<S>& actor, const Mat<S>& state,
                              typename Actor<S>::Cache& cache) {
  Mat<S> logits = actor.forward(state, cache);
  double z0 = static_cast<double>(logits(0, 0));
  double z1 = static_cast<double>(logits(0, 1));
  if (!std::isfinite(z0) || !std::isfinite(z1))
    throw NumericError("policy_forward: non-finite logits");
  double mx = std::max(z0, z1);
  double e0 = std::exp(z0 - mx), e1 = std::exp(z1 - mx);
  double sum = e0 + e1;
  PolicyDecision d;
  d.p_discard = e0 / sum;
  d.p_keep = e1 / sum;
  d.logp_discard = z0 - mx - std::log(sum);
  d.logp_keep = z1 - mx - std::log(sum);
  d.entropy = 0.0;
  if (d.p_discard > 0.0) d.entropy -= d.p_discard * d.logp_discard;
  if (d.p_keep > 0.0) d.entropy -= d.p_keep * d.logp_keep;
  return d;
}

template <typename S>
PolicyDecision policy_forward(const Actor<S>& actor, const Mat<S>& state) {
  typename Actor<S>::Cache cache;
  return policy_forward(actor, state, cache);
}

// Draws Keep with probability p_keep from the given stream.
inline int sample_action(const PolicyDecision& decision, Rng& rng) {
  return rng.uniform() < decision.p_discard ? kActionDiscard : kActionKeep;
}

template <typename S>
struct TrajectoryEntry {
  Mat<S> state;
  int action = kActionKeep;
  double reward = 0.0;
  double logp = 0.0;
  double entropy = 0.0;
  double ppl = 0.0;  // the model perplexity the reward was derived from
};

template <typename S>
using Trajectory = std::vector<TrajectoryEntry<S>>;

// The maximized surrogate:
//   J = (1/N) * sum_t [ (r_t - b) * log p(a_t | s_t) + alpha * entropy(p(.|s_t)) ].
// With alpha = 0 its gradient is exactly the Monte-Carlo policy-gradient
// estimator; the entropy term counteracts policy collapse.
template <typename S>
double reinforce_surrogate(const Actor<S>& actor, const Trajectory<S>& trajectory,
                           double baseline, double alpha) {
  if (trajectory.empty()) throw ContractError("reinforce_surrogate: empty trajectory");
  double total = 0.0;
  for (const auto& e : trajectory) {
    PolicyDecision d = policy_forward(actor, e.state);
    total += (e.reward - baseline) * d.logp(e.action) + alpha * d.entropy;
  }
  return total / static_cast<double>(trajectory.size());
}

// Accumulates the gradient of the negated surrogate into the actor's grads,
// so a plain descent step ascends J.
template <typename S>
void reinforce_backward(Actor<S>& actor, const Trajectory<S>& trajectory, double baseline,
                        double alpha) {
  const double inv_n = 1.0 / static_cast<double>(trajectory.size());
  for (const auto& e : trajectory) {
    typename Actor<S>::Cache cache;
    PolicyDecision d = policy_forward(actor, e.state, cache);
    double adv = e.reward - baseline;
    double p[2] = {d.p_discard, d.p_keep};
    double logp[2] = {d.logp_discard, d.logp_keep};
    Mat<S> grad_logits(1, 2);
    for (int j = 0; j < 2; ++j) {
      double indicator = (j == e.action) ? 1.0 : 0.0;
      double d_logp = adv * (indicator - p[j]);
      double d_entropy = -alpha * p[j] * (logp[j] + d.entropy);
      grad_logits(0, j) = static_cast<S>(-(d_logp + d_entropy) * inv_n);
    }
    actor.backward(e.state, cache, grad_logits);
  }
}

// One REINFORCE ascent step, re-running the actor on each stored state
// (parameters are unchanged since the decisions were taken). Returns false
// (no-op) on an empty trajectory or a non-finite gradient.
template <typename S>
bool reinforce_update(Actor<S>& actor, const Trajectory<S>& trajectory, double baseline,
                      double alpha, double eta, std::string* diag = nullptr) {
  if (trajectory.empty()) {
    if (diag) *diag = "empty trajectory; actor unchanged";
    return false;
  }
  for (const auto& e : trajectory) {
    if (!std::isfinite(e.reward - baseline))
      throw NumericError("reinforce_update: non-finite advantage");
  }
  auto params = actor.param_list();
  zero_grads(params);
  reinforce_backward(actor, trajectory, baseline, alpha);
  return sgd_step(params, eta, diag);
}

// The frozen scorer used for the REINFORCE baseline. Implementations take a
// mini-batch of token rows and return the log-probability assigned to each
// target token; anything that can produce per-token log-probabilities (an
// external pretrained model included) can be plugged in here.
class Evaluator {
 public:
  virtual ~Evaluator() = default;
  virtual std::vector<double> target_logprobs(const std::vector<std::vector<int>>& tokens,
                                              const std::vector<std::vector<int>>& targets) = 0;

  double mean_cross_entropy(const std::vector<std::vector<int>>& tokens,
                            const std::vector<std::vector<int>>& targets) {
    std::vector<double> lp = target_logprobs(tokens, targets);
    if (lp.empty()) throw ContractError("evaluator: no tokens scored");
    double total = 0.0;
    for (double v : lp) total += v;
    return -total / static_cast<double>(lp.size());
  }
};

// Fixed-distribution evaluator; useful for tests and as a degenerate baseline.
class UniformEvaluator : public Evaluator {
 public:
  explicit UniformEvaluator(int vocab) : logp_(-std::log(static_cast<double>(vocab))) {}
  std::vector<double> target_logprobs(const std::vector<std::vector<int>>& tokens,
                                      const std::vector<std::vector<int>>& targets) override {
    std::size_t n = 0;
    for (const auto& row : targets) n += row.size();
    (void)tokens;
    return std::vector<double>(n, logp_);
  }

 private:
  double logp_;
};

// Copies parameter values between structurally identical modules.
template <typename S>
inline void copy_params(const std::vector<Param<S>*>& from, const std::vector<Param<S>*>& to) {
  if (from.size() != to.size()) throw ShapeError("copy_params: parameter count mismatch");
  for (std::size_t i = 0; i < from.size(); ++i) {
    if (from[i]->value.rows() != to[i]->value.rows() ||
        from[i]->value.cols() != to[i]->value.cols())
      throw ShapeError("copy_params: tensor shape mismatch at " + to[i]->name);
    to[i]->value = from[i]->value;
  }
}

// A frozen copy of a trained model, scored context-free on each mini-batch.
// Its parameters never receive gradients. Construct, then copy_params from
// the model being snapshotted (or fill from a checkpoint).
template <typename S>
class SnapshotEvaluator : public Evaluator {
 public:
  SnapshotEvaluator(const ModelDims& dims, int ratio)
      : dims_(dims), rng_(0), model_(dims, rng_) {
    model_.add_compressors(ratio, rng_);
  }

  std::vector<double> target_logprobs(const std::vector<std::vector<int>>& tokens,
                                      const std::vector<std::vector<int>>& targets) override {
    const int streams = static_cast<int>(tokens.size());
    ContextView<S> empty_ctx;
    empty_ctx.values.resize(0, dims_.d_model);
    std::vector<std::vector<const ContextView<S>*>> contexts(
        dims_.layers, std::vector<const ContextView<S>*>(streams, &empty_ctx));
    typename TransformerModel<S>::ForwardCache cache;
    model_.forward(tokens, targets, contexts, cache);
    std::vector<double> out;
    out.reserve(cache.logits.rows());
    Mat<S> probs = cache.logits;
    softmax_rows(probs);
    for (int s = 0; s < streams; ++s)
      for (int i = 0; i < dims_.n_s; ++i) {
        int row = s * dims_.n_s + i;
        out.push_back(std::log(
            std::max(static_cast<double>(probs(row, targets[s][i])), 1e-300)));
      }
    return out;
  }

  TransformerModel<S>& model() { return model_; }

 private:
  ModelDims dims_;
  Rng rng_;
  TransformerModel<S> model_;
};

// Per-mini-batch baseline contribution: the evaluator's transformed
// perplexity by default, or its raw cross-entropy in the ablation variant.
inline double evaluator_minibatch_score(Evaluator& evaluator,
                                        const std::vector<std::vector<int>>& tokens,
                                        const std::vector<std::vector<int>>& targets,
                                        const RewardTransform& transform,
                                        BaselineScore mode) {
  double ce = evaluator.mean_cross_entropy(tokens, targets);
  if (mode == BaselineScore::kRawCrossEntropy) return ce;
  return transform(perplexity_from_loss(ce));
}

}  // namespace dct
