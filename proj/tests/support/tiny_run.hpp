#pragma once

// A desk-miniature configuration and corpus for harness-level tests: large
// enough to fill both stores within a few steps, small enough to train in
// milliseconds.

#include "dct/config.hpp"
#include "dct/corpus_gen.hpp"

#include <cstdint>
#include <vector>

namespace dct_test {

inline dct::RunConfig tiny_config() {
  dct::RunConfig cfg;
  cfg.n_s = 8;
  cfg.n_m = 8;
  cfg.n_cm = 4;
  cfg.c = 2;
  cfg.layers = 2;
  cfg.d_model = 16;
  cfg.heads = 2;
  cfg.d_ff = 32;
  cfg.vocab = 256;
  cfg.batch = 8;
  cfg.minibatches = 4;  // 2 streams
  cfg.pretrain_lr = 1e-3;
  cfg.cotrain_lr = 5e-4;
  cfg.actor_lr = 1e-3;
  cfg.actor_hidden = 8;
  cfg.seed = 99;
  return cfg;
}

inline std::vector<std::uint8_t> tiny_corpus(std::size_t bytes = 20000, std::uint64_t seed = 7) {
  dct::CorpusGenerator gen(seed);
  return gen.generate(bytes);
}

}  // namespace dct_test
