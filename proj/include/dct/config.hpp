#pragma once

#include "dct/common.hpp"

#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace dct {

enum class JudgerMode { kLearned, kPinnedKeep, kPinnedDiscard, kOff };
enum class EvaluatorKind { kSnapshot, kUniform };
enum class BaselineScore { kTransformed, kRawCrossEntropy };
enum class OptimizerKind { kSgd, kAdam };

// Every hyperparameter of a run. Serialized as a flat key=value document;
// the same text is echoed into checkpoints and output directories.
struct RunConfig {
  // memory system
  int n_s = 128;   // segment length
  int n_m = 128;   // granular memory capacity (positions)
  int n_cm = 64;   // compressed memory capacity (positions)
  int c = 4;       // compression ratio

  // transformer
  int layers = 2;
  int d_model = 128;
  int heads = 4;
  int d_ff = 0;  // 0 means 4 * d_model
  int vocab = 256;

  // batching
  int batch = 32;        // segment samples per step
  int minibatches = 4;   // K; streams = batch / minibatches

  // optimization
  double pretrain_lr = 1e-4;
  double cotrain_lr = 1e-5;
  double pretrain_epochs = 1.0;
  OptimizerKind optimizer = OptimizerKind::kSgd;

  // judger
  double reward_m = 1.0;
  double reward_a = 0.99;
  double entropy_alpha = 0.01;
  double actor_lr = 1e-4;
  int actor_hidden = 64;
  bool judge_per_row = false;
  JudgerMode judger = JudgerMode::kLearned;
  EvaluatorKind evaluator = EvaluatorKind::kSnapshot;
  BaselineScore evaluator_score = BaselineScore::kTransformed;

  // run control
  std::uint64_t seed = 1234;
  std::int64_t steps = 0;  // 0: pretrain runs pretrain_epochs; cotrain requires > 0
  double split_train = 0.90;
  double split_val = 0.05;

  int streams() const { return batch / minibatches; }
  int ff_width() const { return d_ff > 0 ? d_ff : 4 * d_model; }
  // Largest query-key token distance the attention can meet.
  int max_rel_distance() const { return n_s - 1 + n_m + c * n_cm; }

  void validate() const {
    auto req = [](bool ok, const char* msg) {
      if (!ok) throw ContractError(std::string("config: ") + msg);
    };
    req(n_s > 0 && n_m > 0 && n_cm > 0, "lengths must be positive");
    req(c >= 1, "compression ratio must be >= 1");
    req(layers > 0 && d_model > 0 && heads > 0 && vocab > 0, "model dims must be positive");
    req(d_model % heads == 0, "d_model must be divisible by heads");
    req(minibatches >= 1, "minibatches must be >= 1");
    req(batch >= 1 && batch % minibatches == 0, "batch must be divisible by minibatches");
    req(reward_m > 0.0, "reward_m must be > 0");
    req(reward_a > 0.0 && reward_a < 1.0, "reward_a must lie in (0, 1)");
    req(actor_hidden > 0, "actor_hidden must be positive");
    req(split_train > 0.0 && split_val >= 0.0 && split_train + split_val < 1.0 + 1e-12,
        "split proportions invalid");
  }

  std::string to_text() const;
  static RunConfig from_text(const std::string& text);
  static RunConfig from_file(const std::string& path);

  // Keys that define tensor shapes or run-long trainer state; a checkpoint
  // and a config file must agree on these.
  static const std::vector<std::string>& structural_keys() {
    static const std::vector<std::string> keys = {
        "n_s", "n_m", "n_cm", "c", "layers", "d_model", "heads",
        "d_ff", "vocab", "batch", "minibatches", "actor_hidden", "optimizer"};
    return keys;
  }

  std::map<std::string, std::string> to_map() const;
  void apply(const std::string& key, const std::string& value);
};

namespace detail {

inline std::string judger_name(JudgerMode m) {
  switch (m) {
    case JudgerMode::kLearned: return "learned";
    case JudgerMode::kPinnedKeep: return "keep";
    case JudgerMode::kPinnedDiscard: return "discard";
    case JudgerMode::kOff: return "off";
  }
  return "learned";
}

inline JudgerMode judger_from(const std::string& s) {
  if (s == "learned") return JudgerMode::kLearned;
  if (s == "keep") return JudgerMode::kPinnedKeep;
  if (s == "discard") return JudgerMode::kPinnedDiscard;
  if (s == "off") return JudgerMode::kOff;
  throw ContractError("config: unknown judger mode '" + s + "'");
}

inline std::string fmt_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace detail

inline std::map<std::string, std::string> RunConfig::to_map() const {
  std::map<std::string, std::string> m;
  m["n_s"] = std::to_string(n_s);
  m["n_m"] = std::to_string(n_m);
  m["n_cm"] = std::to_string(n_cm);
  m["c"] = std::to_string(c);
  m["layers"] = std::to_string(layers);
  m["d_model"] = std::to_string(d_model);
  m["heads"] = std::to_string(heads);
  m["d_ff"] = std::to_string(d_ff);
  m["vocab"] = std::to_string(vocab);
  m["batch"] = std::to_string(batch);
  m["minibatches"] = std::to_string(minibatches);
  m["pretrain_lr"] = detail::fmt_double(pretrain_lr);
  m["cotrain_lr"] = detail::fmt_double(cotrain_lr);
  m["pretrain_epochs"] = detail::fmt_double(pretrain_epochs);
  m["optimizer"] = optimizer == OptimizerKind::kAdam ? "adam" : "sgd";
  m["reward_m"] = detail::fmt_double(reward_m);
  m["reward_a"] = detail::fmt_double(reward_a);
  m["entropy_alpha"] = detail::fmt_double(entropy_alpha);
  m["actor_lr"] = detail::fmt_double(actor_lr);
  m["actor_hidden"] = std::to_string(actor_hidden);
  m["judge_per_row"] = judge_per_row ? "true" : "false";
  m["judger"] = detail::judger_name(judger);
  m["evaluator"] = evaluator == EvaluatorKind::kSnapshot ? "snapshot" : "uniform";
  m["evaluator_score"] =
      evaluator_score == BaselineScore::kTransformed ? "transformed" : "raw_ce";
  m["seed"] = std::to_string(seed);
  m["steps"] = std::to_string(steps);
  m["split_train"] = detail::fmt_double(split_train);
  m["split_val"] = detail::fmt_double(split_val);
  return m;
}

inline void RunConfig::apply(const std::string& key, const std::string& value) {
  auto as_int = [&] { return std::stoll(value); };
  auto as_double = [&] { return std::stod(value); };
  auto as_bool = [&] {
    if (value == "true" || value == "1") return true;
    if (value == "false" || value == "0") return false;
    throw ContractError("config: bad boolean for " + key);
  };
  if (key == "n_s") n_s = static_cast<int>(as_int());
  else if (key == "n_m") n_m = static_cast<int>(as_int());
  else if (key == "n_cm") n_cm = static_cast<int>(as_int());
  else if (key == "c") c = static_cast<int>(as_int());
  else if (key == "layers") layers = static_cast<int>(as_int());
  else if (key == "d_model") d_model = static_cast<int>(as_int());
  else if (key == "heads") heads = static_cast<int>(as_int());
  else if (key == "d_ff") d_ff = static_cast<int>(as_int());
  else if (key == "vocab") vocab = static_cast<int>(as_int());
  else if (key == "batch") batch = static_cast<int>(as_int());
  else if (key == "minibatches") minibatches = static_cast<int>(as_int());
  else if (key == "pretrain_lr") pretrain_lr = as_double();
  else if (key == "cotrain_lr") cotrain_lr = as_double();
  else if (key == "pretrain_epochs") pretrain_epochs = as_double();
  else if (key == "optimizer") {
    if (value == "sgd") optimizer = OptimizerKind::kSgd;
    else if (value == "adam") optimizer = OptimizerKind::kAdam;
    else throw ContractError("config: unknown optimizer '" + value + "'");
  }
  else if (key == "reward_m") reward_m = as_double();
  else if (key == "reward_a") reward_a = as_double();
  else if (key == "entropy_alpha") entropy_alpha = as_double();
  else if (key == "actor_lr") actor_lr = as_double();
  else if (key == "actor_hidden") actor_hidden = static_cast<int>(as_int());
  else if (key == "judge_per_row") judge_per_row = as_bool();
  else if (key == "judger") judger = detail::judger_from(value);
  else if (key == "evaluator") {
    if (value == "snapshot") evaluator = EvaluatorKind::kSnapshot;
    else if (value == "uniform") evaluator = EvaluatorKind::kUniform;
    else throw ContractError("config: unknown evaluator '" + value + "'");
  } else if (key == "evaluator_score") {
    if (value == "transformed") evaluator_score = BaselineScore::kTransformed;
    else if (value == "raw_ce") evaluator_score = BaselineScore::kRawCrossEntropy;
    else throw ContractError("config: unknown evaluator_score '" + value + "'");
  } else if (key == "seed") seed = static_cast<std::uint64_t>(as_int());
  else if (key == "steps") steps = as_int();
  else if (key == "split_train") split_train = as_double();
  else if (key == "split_val") split_val = as_double();
  else throw ContractError("config: unknown key '" + key + "'");
}

inline std::string RunConfig::to_text() const {
  std::ostringstream os;
  for (const auto& [k, v] : to_map()) os << k << "=" << v << "\n";
  return os.str();
}

inline RunConfig RunConfig::from_text(const std::string& text) {
  RunConfig cfg;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::size_t first = line.find_first_not_of(" \t");
    if (first == std::string::npos) continue;
    if (line[first] == '#') continue;
    std::size_t eq = line.find('=');
    if (eq == std::string::npos) throw ContractError("config: expected key=value, got '" + line + "'");
    std::string key = line.substr(first, eq - first);
    std::string value = line.substr(eq + 1);
    while (!key.empty() && (key.back() == ' ' || key.back() == '\t')) key.pop_back();
    std::size_t vstart = value.find_first_not_of(" \t");
    value = vstart == std::string::npos ? "" : value.substr(vstart);
    cfg.apply(key, value);
  }
  cfg.validate();
  return cfg;
}

inline RunConfig RunConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file: " + path);
  std::ostringstream os;
  os << in.rdbuf();
  return from_text(os.str());
}

}  // namespace dct
