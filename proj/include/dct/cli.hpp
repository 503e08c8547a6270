#pragma once

#include "dct/checkpoint.hpp"
#include "dct/corpus_gen.hpp"
#include "dct/data.hpp"
#include "dct/harness.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace dct {

namespace cli_detail {

struct CommonOpts {
  std::string config_path;
  std::string corpus_path;
  std::string checkpoint_path;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<std::int64_t> steps;
};

inline std::vector<std::pair<std::string, std::string>> parse_kv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file: " + path);
  std::vector<std::pair<std::string, std::string>> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::size_t first = line.find_first_not_of(" \t");
    if (first == std::string::npos || line[first] == '#') continue;
    std::size_t eq = line.find('=');
    if (eq == std::string::npos) throw ContractError("config: expected key=value, got '" + line + "'");
    std::string key = line.substr(first, eq - first);
    while (!key.empty() && (key.back() == ' ' || key.back() == '\t')) key.pop_back();
    std::string value = line.substr(eq + 1);
    std::size_t vstart = value.find_first_not_of(" \t");
    value = vstart == std::string::npos ? "" : value.substr(vstart);
    out.emplace_back(key, value);
  }
  return out;
}

inline RunConfig fresh_config(const CommonOpts& opts) {
  RunConfig cfg = opts.config_path.empty() ? RunConfig{} : RunConfig::from_file(opts.config_path);
  if (opts.seed) cfg.seed = *opts.seed;
  if (opts.steps) cfg.steps = *opts.steps;
  cfg.validate();
  return cfg;
}

// Applies a config file on top of a checkpoint's embedded config. Structural
// keys must agree; run-level keys override.
inline void overlay_config(RunConfig& cfg, const CommonOpts& opts) {
  if (!opts.config_path.empty()) {
    auto base = cfg.to_map();
    for (const auto& [key, value] : parse_kv_file(opts.config_path)) {
      bool structural = false;
      for (const auto& sk : RunConfig::structural_keys()) structural |= (sk == key);
      if (structural) {
        if (base.count(key) && base[key] != value)
          throw ContractError("config: structural key '" + key +
                              "' conflicts with the checkpoint (checkpoint " + base[key] +
                              ", file " + value + ")");
        continue;
      }
      cfg.apply(key, value);
    }
  }
  if (opts.steps) cfg.steps = *opts.steps;
  cfg.validate();
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
}

struct Sinks {
  std::ofstream metrics, trajectory, distance;
  LogSinks as_log_sinks() {
    LogSinks s;
    s.metrics = &metrics;
    s.trajectory = &trajectory;
    s.distance = &distance;
    return s;
  }
};

inline std::unique_ptr<Sinks> open_sinks(const std::filesystem::path& out_dir) {
  auto sinks = std::make_unique<Sinks>();
  sinks->metrics.open(out_dir / "metrics.jsonl");
  sinks->trajectory.open(out_dir / "trajectory.jsonl");
  sinks->distance.open(out_dir / "distance.jsonl");
  if (!sinks->metrics || !sinks->trajectory || !sinks->distance)
    throw IoError("cannot open log files under " + out_dir.string());
  return sinks;
}

inline const std::vector<std::uint8_t>& choose_split(const CorpusSplits& splits,
                                                     const std::string& name) {
  if (name == "train") return splits.train;
  if (name == "validation" || name == "val") return splits.validation;
  if (name == "test") return splits.test;
  throw ContractError("unknown split '" + name + "'");
}

inline RolloutPolicy parse_policy(const std::string& name) {
  if (name == "argmax") return RolloutPolicy::kArgmax;
  if (name == "sample") return RolloutPolicy::kSample;
  if (name == "keep") return RolloutPolicy::kKeepAll;
  if (name == "discard") return RolloutPolicy::kDiscardAll;
  throw ContractError("unknown policy '" + name + "'");
}

inline int cmd_pretrain(const CommonOpts& opts) {
  RunConfig cfg = fresh_config(opts);
  CorpusSplits splits = load_corpus(opts.corpus_path, cfg.split_train, cfg.split_val);
  std::filesystem::create_directories(opts.out_dir);
  std::filesystem::path out(opts.out_dir);
  write_text(out / "config_echo.txt", cfg.to_text());
  auto sinks = open_sinks(out);

  Trainer trainer(cfg);
  auto metrics = trainer.pretrain(splits.train, sinks->as_log_sinks());
  std::uint64_t hash = corpus_hash(read_bytes(opts.corpus_path));
  save_checkpoint((out / "pretrain.ckpt").string(), trainer,
                  std::filesystem::file_size(opts.corpus_path), hash);
  double last_bpc = metrics.empty() ? bits_per_character(std::log(cfg.vocab)) : metrics.back().bpc;
  std::cout << "pretrain done: steps=" << metrics.size() << " final_bpc=" << last_bpc
            << " checkpoint=" << (out / "pretrain.ckpt").string() << "\n";
  return 0;
}

inline int cmd_cotrain(const CommonOpts& opts) {
  CheckpointInfo info;
  auto trainer = load_checkpoint(opts.checkpoint_path, &info);
  overlay_config(trainer->config(), opts);
  if (opts.seed) trainer->action_rng() = Rng(*opts.seed ^ 0x9e3779b97f4a7c15ull);
  if (trainer->config().steps <= 0)
    throw ContractError("cotrain: --steps must be positive");
  CorpusSplits splits =
      load_corpus(opts.corpus_path, trainer->config().split_train, trainer->config().split_val);

  std::filesystem::create_directories(opts.out_dir);
  std::filesystem::path out(opts.out_dir);
  write_text(out / "config_echo.txt", trainer->config().to_text());
  auto sinks = open_sinks(out);

  if (trainer->phase() == Phase::kPretrain) trainer->begin_cotrain();
  auto metrics = trainer->cotrain(splits.train, trainer->config().steps, sinks->as_log_sinks());
  std::uint64_t hash = corpus_hash(read_bytes(opts.corpus_path));
  save_checkpoint((out / "cotrain.ckpt").string(), *trainer,
                  std::filesystem::file_size(opts.corpus_path), hash);
  double keep_num = 0, keep_den = 0;
  for (const auto& m : metrics) {
    keep_num += m.keeps;
    keep_den += m.decisions;
  }
  std::cout << "cotrain done: steps=" << metrics.size()
            << " final_bpc=" << (metrics.empty() ? 0.0 : metrics.back().bpc)
            << " keep_fraction=" << (keep_den > 0 ? keep_num / keep_den : -1.0)
            << " checkpoint=" << (out / "cotrain.ckpt").string() << "\n";
  return 0;
}

inline int cmd_eval(const CommonOpts& opts, const std::string& split_name) {
  auto trainer = load_checkpoint(opts.checkpoint_path);
  overlay_config(trainer->config(), opts);
  CorpusSplits splits =
      load_corpus(opts.corpus_path, trainer->config().split_train, trainer->config().split_val);
  EvalResult r = trainer->evaluate(choose_split(splits, split_name));
  nlohmann::json rec;
  rec["split"] = split_name;
  rec["loss"] = r.loss;
  rec["ppl"] = r.ppl;
  rec["bpc"] = r.bpc;
  rec["tokens"] = r.tokens;
  std::cout << rec.dump() << "\n";
  if (!opts.out_dir.empty()) {
    std::filesystem::create_directories(opts.out_dir);
    rec["config"] = trainer->config().to_text();
    write_text(std::filesystem::path(opts.out_dir) / "eval.json", rec.dump(2) + "\n");
  }
  return 0;
}

inline int cmd_analyze(const CommonOpts& opts, const std::string& split_name,
                       const std::string& policy_name) {
  auto trainer = load_checkpoint(opts.checkpoint_path);
  overlay_config(trainer->config(), opts);
  CorpusSplits splits =
      load_corpus(opts.corpus_path, trainer->config().split_train, trainer->config().split_val);
  const auto& split = choose_split(splits, split_name);

  RolloutPolicy policy = policy_name.empty() ? trainer->default_rollout_policy()
                                             : parse_policy(policy_name);
  BatchPlan plan(&split, trainer->config().streams(), trainer->config().n_s);
  std::int64_t minibatches = trainer->config().steps > 0
                                 ? trainer->config().steps
                                 : plan.segments_per_stream();

  std::filesystem::create_directories(opts.out_dir);
  std::filesystem::path out(opts.out_dir);
  write_text(out / "config_echo.txt", trainer->config().to_text());
  std::ofstream distance(out / "distance.jsonl");
  std::ofstream keep_series(out / "keep_fraction.jsonl");
  if (!distance || !keep_series) throw IoError("cannot open series files under " + out.string());
  LogSinks sinks;
  sinks.distance = &distance;
  std::vector<int> actions;
  StepMetrics agg = trainer->analyze(split, minibatches, policy, sinks, &actions);

  const int window = 50;
  std::vector<int> judged;  // 1 = keep, 0 = discard
  for (std::size_t i = 0; i < actions.size(); ++i) {
    if (actions[i] < 0) continue;
    judged.push_back(actions[i]);
    int span = std::min<int>(window, static_cast<int>(judged.size()));
    int in_window = 0;
    for (int k = 0; k < span; ++k) in_window += judged[judged.size() - 1 - k];
    int total = 0;
    for (int a : judged) total += a;
    nlohmann::json rec;
    rec["minibatch"] = i;
    rec["action"] = actions[i] == kActionKeep ? "keep" : "discard";
    rec["keep_fraction"] = static_cast<double>(total) / judged.size();
    rec["window_keep_fraction"] = static_cast<double>(in_window) / span;
    keep_series << rec.dump() << "\n";
  }

  nlohmann::json rec;
  rec["minibatches"] = minibatches;
  rec["final_reading_distance"] = agg.reading_distance;
  rec["decisions"] = agg.decisions;
  rec["keeps"] = agg.keeps;
  rec["keep_fraction"] = agg.decisions > 0 ? static_cast<double>(agg.keeps) / agg.decisions : -1.0;
  rec["loss"] = agg.loss;
  rec["bpc"] = agg.bpc;
  write_text(out / "analysis.json", rec.dump(2) + "\n");
  std::cout << rec.dump() << "\n";
  return 0;
}

inline int cmd_inspect(const CommonOpts& opts) {
  CheckpointInfo info = inspect_checkpoint(opts.checkpoint_path);
  nlohmann::json rec;
  rec["version"] = info.version;
  rec["phase"] = phase_name(info.phase);
  rec["global_step"] = info.global_step;
  rec["segment_cursor"] = info.segment_cursor;
  rec["nonfinite_aborts"] = info.nonfinite_aborts;
  rec["corpus_bytes"] = info.corpus_bytes;
  rec["corpus_hash"] = info.corpus_hash;
  rec["has_snapshot_evaluator"] = info.has_snapshot;
  rec["config"] = info.config_text;
  std::cout << rec.dump(2) << "\n";
  return 0;
}

inline int cmd_gen_corpus(const std::string& out_path, std::uint64_t bytes, std::uint64_t seed) {
  CorpusGenerator gen(seed);
  auto data = gen.generate(bytes);
  std::ofstream out(out_path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write corpus to " + out_path);
  out.write(reinterpret_cast<const char*>(data.data()),
            static_cast<std::streamsize>(data.size()));
  if (!out.flush()) throw IoError("corpus write failed");
  std::cout << "wrote " << data.size() << " bytes to " << out_path << "\n";
  return 0;
}

}  // namespace cli_detail

// Entry point shared by the binary and the tests. `args` excludes argv[0].
inline int run_cli(std::vector<std::string> args) {
  using namespace cli_detail;
  CLI::App app{"dynamic compressive transformer trainer"};
  app.require_subcommand(1);

  CommonOpts opts;
  std::string split_name = "validation";
  std::string policy_name;
  std::uint64_t gen_bytes = 1000000;
  std::uint64_t gen_seed = 7;
  std::string gen_out;

  auto add_common = [&](CLI::App* cmd, bool corpus, bool checkpoint, bool out_required) {
    cmd->add_option("--config", opts.config_path, "flat key=value config file");
    cmd->add_option("--seed", opts.seed, "random seed override");
    cmd->add_option("--steps", opts.steps, "step count override");
    auto* c = cmd->add_option("--corpus", opts.corpus_path, "raw byte corpus file");
    if (corpus) c->required();
    auto* k = cmd->add_option("--checkpoint", opts.checkpoint_path, "checkpoint path");
    if (checkpoint) k->required();
    auto* o = cmd->add_option("--out", opts.out_dir, "output directory");
    if (out_required) o->required();
  };

  CLI::App* pre = app.add_subcommand("pretrain", "pretrain with unconditional compression");
  add_common(pre, true, false, true);
  CLI::App* cot = app.add_subcommand("cotrain", "co-train the model and the compression judger");
  add_common(cot, true, true, true);
  CLI::App* ev = app.add_subcommand("eval", "evaluate BPC/PPL on a split");
  add_common(ev, true, true, false);
  ev->add_option("--split", split_name, "train|validation|test")->capture_default_str();
  CLI::App* an = app.add_subcommand("analyze", "emit reading-distance and keep-fraction series");
  add_common(an, true, true, true);
  an->add_option("--split", split_name, "train|validation|test")->capture_default_str();
  an->add_option("--policy", policy_name, "argmax|sample|keep|discard (default: from config)");
  CLI::App* ins = app.add_subcommand("inspect-checkpoint", "print checkpoint header");
  add_common(ins, false, true, false);
  CLI::App* gen = app.add_subcommand("gen-corpus", "write a deterministic synthetic corpus");
  gen->add_option("--out", gen_out, "output file")->required();
  gen->add_option("--bytes", gen_bytes, "corpus size in bytes")->capture_default_str();
  gen->add_option("--seed", gen_seed, "generator seed")->capture_default_str();

  std::vector<char*> argv;
  std::string prog = "dct";
  argv.push_back(prog.data());
  for (auto& a : args) argv.push_back(a.data());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (pre->parsed()) return cmd_pretrain(opts);
    if (cot->parsed()) return cmd_cotrain(opts);
    if (ev->parsed()) return cmd_eval(opts, split_name);
    if (an->parsed()) return cmd_analyze(opts, split_name, policy_name);
    if (ins->parsed()) return cmd_inspect(opts);
    if (gen->parsed()) return cmd_gen_corpus(gen_out, gen_bytes, gen_seed);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}

}  // namespace dct
