#pragma once

#include "dct/config.hpp"
#include "dct/data.hpp"
#include "dct/judger.hpp"
#include "dct/transformer.hpp"

#include <json.hpp>

#include <cmath>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace dct {

enum class Phase { kPretrain, kCotrain };

inline const char* phase_name(Phase p) {
  return p == Phase::kPretrain ? "pretrain" : "cotrain";
}

struct StepMetrics {
  std::uint64_t step = 0;
  Phase phase = Phase::kPretrain;
  double loss = 0.0;
  double ppl = 0.0;
  double bpc = 0.0;
  int trajectory_len = 0;
  int keeps = 0;
  int decisions = 0;
  std::int64_t reading_distance = 0;
  double reward_mean = 0.0;
  double baseline = 0.0;
};

// Newline-delimited record sinks; any may be null.
struct LogSinks {
  std::ostream* metrics = nullptr;
  std::ostream* trajectory = nullptr;
  std::ostream* distance = nullptr;
};

struct EvalResult {
  double loss = 0.0;
  double ppl = 0.0;
  double bpc = 0.0;
  std::int64_t tokens = 0;
};

// Action policy used by forward-only passes (evaluation, analysis).
enum class RolloutPolicy { kArgmax, kSample, kKeepAll, kDiscardAll };

// Owns the model, judger, per-stream memories and the phase schedule, and
// runs the per-step procedure: mini-batch forwards, keep/discard decisions
// once the stores are full, reward collection, and one policy-gradient update
// per finished step.
class Trainer {
 public:
  using S = float;

  explicit Trainer(const RunConfig& cfg)
      : cfg_(cfg), dims_(dims_from_config(cfg)), init_rng_(cfg.seed),
        model_(dims_, init_rng_), actor_(cfg.d_model, cfg.actor_hidden, init_rng_),
        action_rng_(cfg.seed ^ 0x9e3779b97f4a7c15ull) {
    cfg_.validate();
    model_.add_compressors(cfg.c, init_rng_);
    if (cfg_.optimizer == OptimizerKind::kAdam) adam_.emplace(model_.param_list());
    reset_memories();
  }

  RunConfig& config() { return cfg_; }
  const RunConfig& config() const { return cfg_; }
  TransformerModel<S>& model() { return model_; }
  Actor<S>& actor() { return actor_; }
  Rng& action_rng() { return action_rng_; }
  Phase phase() const { return phase_; }
  void set_phase(Phase p) { phase_ = p; }
  std::uint64_t global_step() const { return global_step_; }
  void set_global_step(std::uint64_t s) { global_step_ = s; }
  std::int64_t segment_cursor() const { return seg_cursor_; }
  void set_segment_cursor(std::int64_t c) { seg_cursor_ = c; }
  std::uint64_t nonfinite_aborts() const { return nonfinite_aborts_; }
  void set_nonfinite_aborts(std::uint64_t n) { nonfinite_aborts_ = n; }

  std::vector<std::vector<LayerMemoryState<S>>>& memories() { return mem_; }
  const std::vector<std::vector<LayerMemoryState<S>>>& memories() const { return mem_; }

  bool has_adam() const { return adam_.has_value(); }
  AdamState<S>& adam() { return *adam_; }

  bool has_snapshot() const { return snapshot_ != nullptr; }
  SnapshotEvaluator<S>& snapshot() { return *snapshot_; }

  void reset_memories() {
    mem_.clear();
    mem_.resize(cfg_.layers);
    for (int l = 0; l < cfg_.layers; ++l)
      for (int s = 0; s < cfg_.streams(); ++s)
        mem_[l].emplace_back(cfg_.n_m, cfg_.n_cm, cfg_.c, cfg_.n_s);
  }

  // Freezes the current model as the co-training evaluator and switches phase.
  void begin_cotrain() {
    snapshot_ = std::make_unique<SnapshotEvaluator<S>>(dims_, cfg_.c);
    copy_params(model_.param_list(), snapshot_->model().param_list());
    phase_ = Phase::kCotrain;
  }

  void install_snapshot_params(const std::vector<Mat<S>>& values) {
    snapshot_ = std::make_unique<SnapshotEvaluator<S>>(dims_, cfg_.c);
    auto dst = snapshot_->model().param_list();
    if (values.size() != dst.size()) throw ShapeError("snapshot restore: parameter count");
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i]->value = values[i];
  }

  // One pass over the training split at the pretraining rate with the judger
  // never consulted: every evicted block is compressed and committed.
  std::vector<StepMetrics> pretrain(const std::vector<std::uint8_t>& train_split,
                                    LogSinks sinks = {}) {
    BatchPlan plan(&train_split, cfg_.streams(), cfg_.n_s);
    std::int64_t total_minibatches;
    if (cfg_.steps > 0) {
      total_minibatches = cfg_.steps * cfg_.minibatches;
    } else {
      total_minibatches = static_cast<std::int64_t>(
          static_cast<double>(plan.segments_per_stream()) * cfg_.pretrain_epochs);
    }
    std::vector<StepMetrics> out;
    std::int64_t done = 0;
    while (done < total_minibatches) {
      int k = static_cast<int>(std::min<std::int64_t>(cfg_.minibatches, total_minibatches - done));
      out.push_back(run_step(plan, k, cfg_.pretrain_lr, JudgerMode::kOff, sinks));
      if (!trajectory_.empty()) throw ContractError("pretrain: trajectory buffer must stay empty");
      done += k;
    }
    return out;
  }

  // Co-training: model updates every mini-batch, one REINFORCE update per
  // step once the stores are full. Requires begin_cotrain() (or a restored
  // snapshot) unless the judger is off or the evaluator is uniform.
  std::vector<StepMetrics> cotrain(const std::vector<std::uint8_t>& train_split,
                                   std::int64_t steps, LogSinks sinks = {}) {
    if (phase_ != Phase::kCotrain) phase_ = Phase::kCotrain;
    if (cfg_.judger != JudgerMode::kOff && cfg_.evaluator == EvaluatorKind::kSnapshot &&
        !snapshot_)
      throw ContractError("cotrain: no evaluator snapshot; run begin_cotrain() first");
    BatchPlan plan(&train_split, cfg_.streams(), cfg_.n_s);
    std::vector<StepMetrics> out;
    out.reserve(steps);
    for (std::int64_t i = 0; i < steps; ++i)
      out.push_back(run_step(plan, cfg_.minibatches, cfg_.cotrain_lr, cfg_.judger, sinks));
    return out;
  }

  // The deterministic policy that matches the configured judger mode.
  RolloutPolicy default_rollout_policy() const {
    switch (cfg_.judger) {
      case JudgerMode::kOff:
      case JudgerMode::kPinnedKeep: return RolloutPolicy::kKeepAll;
      case JudgerMode::kPinnedDiscard: return RolloutPolicy::kDiscardAll;
      case JudgerMode::kLearned: return RolloutPolicy::kArgmax;
    }
    return RolloutPolicy::kArgmax;
  }

  EvalResult evaluate(const std::vector<std::uint8_t>& split) {
    return evaluate(split, default_rollout_policy());
  }

  // Streaming evaluation over a split with memories carried across segments
  // and a deterministic action policy (argmax ties keep).
  EvalResult evaluate(const std::vector<std::uint8_t>& split, RolloutPolicy policy) {
    BatchPlan plan(&split, cfg_.streams(), cfg_.n_s);
    auto saved_mem = std::move(mem_);
    reset_memories();
    double total_ce = 0.0;
    std::int64_t total_tokens = 0;
    for (std::int64_t seg = 0; seg < plan.segments_per_stream(); ++seg) {
      MinibatchResult r = run_forward_only(plan, seg, policy, nullptr, 0);
      total_ce += r.loss * static_cast<double>(cfg_.streams() * cfg_.n_s);
      total_tokens += static_cast<std::int64_t>(cfg_.streams()) * cfg_.n_s;
    }
    mem_ = std::move(saved_mem);
    EvalResult res;
    res.tokens = total_tokens;
    res.loss = total_ce / static_cast<double>(total_tokens);
    res.ppl = perplexity_from_loss(res.loss);
    res.bpc = bits_per_character(res.loss);
    return res;
  }

  // Forward-only rollout over a split emitting the reading-distance series;
  // used by the analysis command. When `actions` is given it receives one
  // entry per mini-batch: -1 unjudged, otherwise the action taken.
  StepMetrics analyze(const std::vector<std::uint8_t>& split, std::int64_t minibatches,
                      RolloutPolicy policy, LogSinks sinks,
                      std::vector<int>* actions = nullptr) {
    BatchPlan plan(&split, cfg_.streams(), cfg_.n_s);
    auto saved_mem = std::move(mem_);
    reset_memories();
    StepMetrics agg;
    agg.phase = phase_;
    double loss_sum = 0.0;
    for (std::int64_t seg = 0; seg < minibatches; ++seg) {
      MinibatchResult r = run_forward_only(plan, seg, policy, sinks.distance, seg);
      loss_sum += r.loss;
      agg.reading_distance = r.distance;
      if (r.judged) {
        ++agg.decisions;
        if (r.action == kActionKeep) ++agg.keeps;
      }
      if (actions) actions->push_back(r.judged ? r.action : -1);
    }
    mem_ = std::move(saved_mem);
    agg.loss = minibatches > 0 ? loss_sum / static_cast<double>(minibatches) : 0.0;
    agg.ppl = perplexity_from_loss(agg.loss);
    agg.bpc = bits_per_character(agg.loss);
    return agg;
  }

 private:
  struct MinibatchResult {
    double loss = 0.0;
    std::int64_t distance = 0;
    bool judged = false;
    int action = -1;
  };

  struct PendingScore {
    std::vector<std::vector<int>> tokens, targets;
  };

  // Per-stream context assembly for every layer.
  struct ContextSet {
    std::vector<std::vector<ContextView<S>>> views;  // [layer][stream]
    std::vector<std::vector<const ContextView<S>*>> ptrs;
  };

  ContextSet gather_contexts() const {
    ContextSet ctx;
    ctx.views.resize(cfg_.layers);
    ctx.ptrs.resize(cfg_.layers);
    for (int l = 0; l < cfg_.layers; ++l) {
      ctx.views[l].reserve(cfg_.streams());
      for (int s = 0; s < cfg_.streams(); ++s)
        ctx.views[l].push_back(mem_[l][s].attention_context(cfg_.d_model));
      for (auto& v : ctx.views[l]) ctx.ptrs[l].push_back(&v);
    }
    return ctx;
  }

  // Routes attention gradients on freshly compressed context rows into the
  // per-layer compression kernels.
  void backprop_fresh(const ContextSet& ctx,
                      const std::vector<std::vector<Mat<S>>>& grad_ctx) {
    for (int l = 0; l < cfg_.layers; ++l)
      for (int s = 0; s < cfg_.streams(); ++s)
        for (const auto& range : ctx.views[l][s].fresh)
          model_.compressor(l).backward(
              *range.block->conv_input,
              grad_ctx[l][s].middleRows(range.row_begin, range.row_count));
  }

  bool stores_full(int stream) const {
    const auto& st = mem_[cfg_.layers - 1][stream];
    return st.memory_full() && st.compressed_full();
  }

  bool will_evict(int stream) const {
    const auto& st = mem_[cfg_.layers - 1][stream];
    return st.occupied_memory() + cfg_.n_s > cfg_.n_m;
  }

  // Applies keep/discard to one stream's evicted blocks across all layers.
  void apply_action(int stream, std::vector<std::vector<HiddenBlock<S>>>& evicted, int action,
                    bool keep_gradient_handle) {
    for (int l = 0; l < cfg_.layers; ++l) {
      HiddenBlock<S>& block = evicted[l][stream];
      if (block.empty()) continue;
      if (action == kActionKeep) {
        CompressResult<S> res = compress(block, model_.compressor(l));
        if (!keep_gradient_handle) res.block.conv_input.reset();
        mem_[l][stream].commit_compressed(std::move(res.block));
      } else {
        discard_evicted(std::move(block));
      }
    }
  }

  double minibatch_reward(double ppl) const {
    RewardTransform f(cfg_.reward_m, cfg_.reward_a);
    return f(ppl);
  }

  // Per-stream perplexities recovered from the loss gradient
  // (p_target = N * grad + 1 at the target coordinate).
  std::vector<double> per_stream_ppl(const typename TransformerModel<S>::ForwardCache& cache,
                                     const std::vector<std::vector<int>>& targets) const {
    const double n = static_cast<double>(cache.logits.rows());
    std::vector<double> out(cfg_.streams());
    for (int s = 0; s < cfg_.streams(); ++s) {
      double ce = 0.0;
      for (int i = 0; i < cfg_.n_s; ++i) {
        int row = s * cfg_.n_s + i;
        double p = n * static_cast<double>(cache.grad_logits(row, targets[s][i])) + 1.0;
        ce -= std::log(std::max(p, 1e-300));
      }
      out[s] = perplexity_from_loss(ce / static_cast<double>(cfg_.n_s));
    }
    return out;
  }

  // One training mini-batch: forward, backward, parameter update, then the
  // judged memory transition. Returns loss and the decision taken.
  MinibatchResult run_minibatch(const BatchPlan& plan, double lr, JudgerMode mode,
                                std::ostream* distance_sink, std::uint64_t step_for_log,
                                int minibatch_index) {
    std::vector<std::vector<int>> tokens, targets;
    plan.minibatch(seg_cursor_, tokens, targets);
    const std::int64_t span_begin = seg_cursor_ * cfg_.n_s;
    const std::int64_t span_end = span_begin + cfg_.n_s;

    ContextSet ctx = gather_contexts();
    typename TransformerModel<S>::ForwardCache cache;
    model_.forward(tokens, targets, ctx.ptrs, cache);

    MinibatchResult result;
    result.loss = cache.loss;
    result.distance =
        mem_[cfg_.layers - 1][0].reading_distance(span_begin, span_end);

    auto params = model_.param_list();
    zero_grads(params);
    auto grad_ctx = model_.backward(cache);
    backprop_fresh(ctx, grad_ctx);
    std::string diag;
    bool ok = adam_ ? adam_->step(params, lr, &diag) : sgd_step(params, lr, &diag);
    if (!ok) {
      ++nonfinite_aborts_;
      std::cerr << "[dct] step " << global_step_ << ": update aborted: " << diag << "\n";
    }

    // Decide before appending: the state the judger sees is exactly what the
    // forward pass attended to, plus the current segment representation.
    const Mat<S>& seq_last = cache.layer_inputs[cfg_.layers - 1];
    bool judging = mode != JudgerMode::kOff && will_evict(0);
    std::vector<int> actions(cfg_.streams(), kActionKeep);

    if (judging && !cfg_.judge_per_row) {
      if (stores_full(0)) {
        std::vector<const LayerMemoryState<S>*> last_layer;
        for (int s = 0; s < cfg_.streams(); ++s) last_layer.push_back(&mem_[cfg_.layers - 1][s]);
        Mat<S> state = build_policy_state(last_layer, seq_last, cfg_.d_model);
        PolicyDecision d = policy_forward(actor_, state);
        int action = pick_action(d, mode);
        double ppl = perplexity_from_loss(cache.loss);
        trajectory_.push_back(
            {std::move(state), action, minibatch_reward(ppl), d.logp(action), d.entropy, ppl});
        pending_scores_.push_back({tokens, targets});
        for (int s = 0; s < cfg_.streams(); ++s) actions[s] = action;
        result.judged = true;
        result.action = action;
      }
    } else if (judging && cfg_.judge_per_row) {
      std::vector<double> ppls = per_stream_ppl(cache, targets);
      bool any = false;
      int first_action = -1;
      for (int s = 0; s < cfg_.streams(); ++s) {
        if (!will_evict(s) || !stores_full(s)) continue;
        std::vector<const LayerMemoryState<S>*> one{&mem_[cfg_.layers - 1][s]};
        Mat<S> seq_slice = seq_last.middleRows(s * cfg_.n_s, cfg_.n_s);
        Mat<S> state = build_policy_state(one, seq_slice, cfg_.d_model);
        PolicyDecision d = policy_forward(actor_, state);
        int action = pick_action(d, mode);
        trajectory_.push_back({std::move(state), action, minibatch_reward(ppls[s]),
                               d.logp(action), d.entropy, ppls[s]});
        actions[s] = action;
        if (!any) first_action = action;
        any = true;
      }
      if (any) {
        pending_scores_.push_back({tokens, targets});
        result.judged = true;
        result.action = first_action;
      }
    }

    // Append the segment everywhere, then apply each stream's action to its
    // evicted blocks (unjudged evictions default to compress-and-commit).
    std::vector<std::vector<HiddenBlock<S>>> evicted(cfg_.layers);
    for (int l = 0; l < cfg_.layers; ++l) {
      evicted[l].resize(cfg_.streams());
      for (int s = 0; s < cfg_.streams(); ++s)
        evicted[l][s] = mem_[l][s].append_segment(
            cache.layer_inputs[l].middleRows(s * cfg_.n_s, cfg_.n_s), span_begin, span_end);
    }
    const bool any_evicted = has_nonempty(evicted);
    for (int s = 0; s < cfg_.streams(); ++s) apply_action(s, evicted, actions[s], true);

    if (distance_sink) {
      nlohmann::json rec;
      rec["step"] = step_for_log;
      rec["minibatch"] = minibatch_index;
      rec["distance"] = result.distance;
      rec["action"] = result.judged ? (result.action == kActionKeep ? "keep" : "discard")
                                    : (any_evicted ? "default" : "none");
      *distance_sink << rec.dump() << "\n";
    }

    ++seg_cursor_;
    return result;
  }

  static bool has_nonempty(const std::vector<std::vector<HiddenBlock<S>>>& evicted) {
    for (const auto& layer : evicted)
      for (const auto& b : layer)
        if (!b.empty()) return true;
    return false;
  }

  int pick_action(const PolicyDecision& d, JudgerMode mode) {
    switch (mode) {
      case JudgerMode::kPinnedKeep: return kActionKeep;
      case JudgerMode::kPinnedDiscard: return kActionDiscard;
      case JudgerMode::kLearned: return sample_action(d, action_rng_);
      case JudgerMode::kOff: break;
    }
    throw ContractError("pick_action: judger off");
  }

  // One step: K mini-batches, then baseline + policy gradient + logs.
  StepMetrics run_step(const BatchPlan& plan, int minibatches, double lr, JudgerMode mode,
                       LogSinks sinks) {
    StepMetrics m;
    m.step = global_step_;
    m.phase = phase_;
    double loss_sum = 0.0;
    for (int t = 0; t < minibatches; ++t) {
      MinibatchResult r =
          run_minibatch(plan, lr, mode, sinks.distance, global_step_, t);
      loss_sum += r.loss;
      m.reading_distance = r.distance;
    }
    m.loss = loss_sum / static_cast<double>(minibatches);
    m.ppl = perplexity_from_loss(m.loss);
    m.bpc = bits_per_character(m.loss);

    m.trajectory_len = static_cast<int>(trajectory_.size());
    if (!trajectory_.empty()) {
      double baseline = compute_baseline();
      m.baseline = baseline;
      double reward_sum = 0.0;
      for (const auto& e : trajectory_) {
        reward_sum += e.reward;
        ++m.decisions;
        if (e.action == kActionKeep) ++m.keeps;
      }
      m.reward_mean = reward_sum / static_cast<double>(trajectory_.size());
      if (sinks.trajectory) {
        for (std::size_t t = 0; t < trajectory_.size(); ++t) {
          const auto& e = trajectory_[t];
          nlohmann::json rec;
          rec["step"] = global_step_;
          rec["t"] = t;
          rec["action"] = e.action == kActionKeep ? "keep" : "discard";
          rec["reward"] = e.reward;
          rec["ppl"] = e.ppl;
          rec["baseline"] = baseline;
          rec["entropy"] = e.entropy;
          rec["advantage"] = e.reward - baseline;
          *sinks.trajectory << rec.dump() << "\n";
        }
      }
      std::string diag;
      if (!reinforce_update(actor_, trajectory_, baseline, cfg_.entropy_alpha, cfg_.actor_lr,
                            &diag)) {
        ++nonfinite_aborts_;
        std::cerr << "[dct] step " << global_step_ << ": actor update aborted: " << diag << "\n";
      }
      trajectory_.clear();
      pending_scores_.clear();
    }

    // Gradients stop at step boundaries: compression handles from this step
    // no longer feed the kernels.
    for (auto& layer : mem_)
      for (auto& st : layer) st.detach_fresh();

    if (sinks.metrics) {
      nlohmann::json rec;
      rec["step"] = m.step;
      rec["phase"] = phase_name(m.phase);
      rec["loss"] = m.loss;
      rec["ppl"] = m.ppl;
      rec["bpc"] = m.bpc;
      rec["trajectory_len"] = m.trajectory_len;
      rec["keeps"] = m.keeps;
      rec["decisions"] = m.decisions;
      rec["keep_fraction"] =
          m.decisions > 0 ? static_cast<double>(m.keeps) / m.decisions : -1.0;
      rec["reading_distance"] = m.reading_distance;
      rec["reward_mean"] = m.reward_mean;
      rec["baseline"] = m.baseline;
      *sinks.metrics << rec.dump() << "\n";
    }

    ++global_step_;
    return m;
  }

  double compute_baseline() {
    std::unique_ptr<UniformEvaluator> uniform;
    Evaluator* eval = nullptr;
    if (cfg_.evaluator == EvaluatorKind::kUniform) {
      uniform = std::make_unique<UniformEvaluator>(cfg_.vocab);
      eval = uniform.get();
    } else {
      eval = snapshot_.get();
    }
    if (!eval) throw ContractError("baseline: no evaluator available");
    RewardTransform f(cfg_.reward_m, cfg_.reward_a);
    double total = 0.0;
    for (const auto& p : pending_scores_)
      total += evaluator_minibatch_score(*eval, p.tokens, p.targets, f, cfg_.evaluator_score);
    return total / static_cast<double>(pending_scores_.size());
  }

  // Forward pass without learning; memory transitions follow the rollout
  // policy. Used by evaluate() and analyze().
  MinibatchResult run_forward_only(const BatchPlan& plan, std::int64_t seg,
                                   RolloutPolicy policy, std::ostream* distance_sink,
                                   std::uint64_t step_for_log) {
    std::vector<std::vector<int>> tokens, targets;
    plan.minibatch(seg, tokens, targets);
    const std::int64_t span_begin = seg * cfg_.n_s;
    const std::int64_t span_end = span_begin + cfg_.n_s;

    ContextSet ctx = gather_contexts();
    typename TransformerModel<S>::ForwardCache cache;
    model_.forward(tokens, targets, ctx.ptrs, cache);

    MinibatchResult result;
    result.loss = cache.loss;
    result.distance = mem_[cfg_.layers - 1][0].reading_distance(span_begin, span_end);

    bool judging = will_evict(0) && stores_full(0) &&
                   (policy == RolloutPolicy::kArgmax || policy == RolloutPolicy::kSample);
    int action = kActionKeep;
    if (judging) {
      std::vector<const LayerMemoryState<S>*> last_layer;
      for (int s = 0; s < cfg_.streams(); ++s) last_layer.push_back(&mem_[cfg_.layers - 1][s]);
      Mat<S> state =
          build_policy_state(last_layer, cache.layer_inputs[cfg_.layers - 1], cfg_.d_model);
      PolicyDecision d = policy_forward(actor_, state);
      action = policy == RolloutPolicy::kArgmax
                   ? (d.p_keep >= d.p_discard ? kActionKeep : kActionDiscard)
                   : sample_action(d, action_rng_);
      result.judged = true;
      result.action = action;
    } else if (policy == RolloutPolicy::kDiscardAll && will_evict(0)) {
      action = kActionDiscard;
      result.judged = will_evict(0) && stores_full(0);
      result.action = action;
    }

    std::vector<std::vector<HiddenBlock<S>>> evicted(cfg_.layers);
    for (int l = 0; l < cfg_.layers; ++l) {
      evicted[l].resize(cfg_.streams());
      for (int s = 0; s < cfg_.streams(); ++s)
        evicted[l][s] = mem_[l][s].append_segment(
            cache.layer_inputs[l].middleRows(s * cfg_.n_s, cfg_.n_s), span_begin, span_end);
    }
    const bool any_evicted = has_nonempty(evicted);
    for (int s = 0; s < cfg_.streams(); ++s) apply_action(s, evicted, action, false);

    if (distance_sink) {
      nlohmann::json rec;
      rec["step"] = step_for_log;
      rec["minibatch"] = 0;
      rec["distance"] = result.distance;
      rec["action"] = result.judged ? (action == kActionKeep ? "keep" : "discard")
                                    : (any_evicted ? "default" : "none");
      *distance_sink << rec.dump() << "\n";
    }
    return result;
  }

  RunConfig cfg_;
  ModelDims dims_;
  Rng init_rng_;
  TransformerModel<S> model_;
  Actor<S> actor_;
  Rng action_rng_;
  std::optional<AdamState<S>> adam_;
  std::unique_ptr<SnapshotEvaluator<S>> snapshot_;
  std::vector<std::vector<LayerMemoryState<S>>> mem_;
  Trajectory<S> trajectory_;
  std::vector<PendingScore> pending_scores_;
  Phase phase_ = Phase::kPretrain;
  std::uint64_t global_step_ = 0;
  std::int64_t seg_cursor_ = 0;
  std::uint64_t nonfinite_aborts_ = 0;
};

}  // namespace dct
