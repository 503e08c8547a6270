#pragma once

#include "dct/common.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace dct {

// Deterministic English-like filler text for smoke runs and tests when no
// real corpus is at hand: a Zipf-weighted syllable lexicon arranged into
// sentences and paragraphs, with occasional wiki-style markup and numbers.
// Byte entropy lands in the 2-3 bits/char range, low enough for a small
// model to learn and high enough to be non-trivial.
class CorpusGenerator {
 public:
  explicit CorpusGenerator(std::uint64_t seed) : rng_(seed) { build_lexicon(); }

  std::vector<std::uint8_t> generate(std::size_t bytes) {
    std::vector<std::uint8_t> out;
    out.reserve(bytes + 256);
    while (out.size() < bytes) {
      int sentences = 3 + static_cast<int>(rng_.uniform() * 6);
      for (int s = 0; s < sentences && out.size() < bytes; ++s) append_sentence(out);
      append(out, "\n\n");
    }
    out.resize(bytes);
    return out;
  }

 private:
  void build_lexicon() {
    static const char* onsets[] = {"b",  "br", "c",  "ch", "d",  "dr", "f",  "g",
                                   "gr", "h",  "j",  "k",  "l",  "m",  "n",  "p",
                                   "pr", "r",  "s",  "st", "t",  "th", "tr", "v", "w"};
    static const char* nuclei[] = {"a", "e", "i", "o", "u", "ai", "ea", "ou", "io"};
    static const char* codas[] = {"",  "n", "r",  "s",  "t",  "l",  "m",
                                  "d", "k", "nd", "st", "rn", "ng", "ck"};
    const int target = 1400;
    words_.reserve(target);
    for (int i = 0; i < target; ++i) {
      int syllables = 1 + static_cast<int>(rng_.uniform() * 3);
      std::string w;
      for (int s = 0; s < syllables; ++s) {
        w += onsets[static_cast<int>(rng_.uniform() * std::size(onsets))];
        w += nuclei[static_cast<int>(rng_.uniform() * std::size(nuclei))];
        if (rng_.uniform() < 0.5) w += codas[static_cast<int>(rng_.uniform() * std::size(codas))];
      }
      words_.push_back(w);
    }
    weights_.resize(words_.size());
    double total = 0.0;
    for (std::size_t i = 0; i < words_.size(); ++i) {
      weights_[i] = 1.0 / std::pow(static_cast<double>(i) + 2.7, 1.07);
      total += weights_[i];
    }
    for (double& w : weights_) w /= total;
  }

  const std::string& pick_word() {
    double u = rng_.uniform();
    double acc = 0.0;
    for (std::size_t i = 0; i < words_.size(); ++i) {
      acc += weights_[i];
      if (u < acc) return words_[i];
    }
    return words_.back();
  }

  void append(std::vector<std::uint8_t>& out, const std::string& s) {
    out.insert(out.end(), s.begin(), s.end());
  }

  void append_sentence(std::vector<std::uint8_t>& out) {
    int words = 4 + static_cast<int>(rng_.uniform() * 11);
    for (int i = 0; i < words; ++i) {
      std::string w = pick_word();
      if (i == 0) w[0] = static_cast<char>(std::toupper(w[0]));
      if (i > 0) append(out, " ");
      double u = rng_.uniform();
      if (u < 0.03) {
        append(out, "[[" + w + "]]");
      } else if (u < 0.05) {
        append(out, std::to_string(1800 + static_cast<int>(rng_.uniform() * 250)));
      } else {
        append(out, w);
      }
      if (i > 0 && i + 1 < words && rng_.uniform() < 0.08) append(out, ",");
    }
    append(out, rng_.uniform() < 0.9 ? "." : "?");
    append(out, " ");
  }

  Rng rng_;
  std::vector<std::string> words_;
  std::vector<double> weights_;
};

}  // namespace dct
