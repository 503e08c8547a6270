#include "dct/conv.hpp"
#include "dct/memory.hpp"

#include "support/memory_reference.hpp"

#include <catch2/catch_amalgamated.hpp>

using dct::HiddenBlock;
using dct::LayerMemoryState;
using dct::MatF;

namespace {

MatF indexed_rows(std::int64_t begin, int rows, int d = 4) {
  MatF m(rows, d);
  for (int i = 0; i < rows; ++i) m.row(i).setConstant(static_cast<float>(begin + i));
  return m;
}

dct::SegmentCompressor<float> make_conv(int d, int c, std::uint64_t seed = 11) {
  dct::Rng rng(seed);
  return dct::SegmentCompressor<float>(d, c, rng);
}

}  // namespace

TEST_CASE("append within capacity evicts nothing", "[memory]") {
  LayerMemoryState<float> st(128, 64, 4, 128);
  auto evicted = st.append_segment(indexed_rows(0, 128), 0, 128);
  CHECK(evicted.empty());
  CHECK(st.occupied_memory() == 128);
  CHECK(st.memory_full());
}

TEST_CASE("append to a full store evicts exactly the oldest segment", "[memory]") {
  LayerMemoryState<float> st(128, 64, 4, 128);
  st.append_segment(indexed_rows(0, 128), 0, 128);
  auto evicted = st.append_segment(indexed_rows(128, 128), 128, 256);
  REQUIRE(evicted.rows() == 128);
  CHECK(evicted.span_begin == 0);
  CHECK(evicted.span_end == 128);
  CHECK(evicted.activations(0, 0) == 0.0f);
  CHECK(evicted.activations(127, 0) == 127.0f);
  CHECK(st.occupied_memory() == 128);
}

TEST_CASE("small fifo evicts the two oldest rows on the second append", "[memory]") {
  // n_m=6, n_s=4: hand simulation of a FIFO of capacity 6.
  LayerMemoryState<float> st(6, 8, 2, 4);
  CHECK(st.append_segment(indexed_rows(0, 4), 0, 4).empty());
  auto evicted = st.append_segment(indexed_rows(4, 4), 4, 8);
  REQUIRE(evicted.rows() == 2);
  CHECK(evicted.span_begin == 0);
  CHECK(evicted.span_end == 2);
  CHECK(st.occupied_memory() == 6);
  CHECK(st.memory_blocks().front().span_begin == 2);
}

TEST_CASE("append contract violations", "[memory]") {
  LayerMemoryState<float> st(8, 4, 2, 4);
  st.append_segment(indexed_rows(0, 4), 0, 4);
  SECTION("non-contiguous span") {
    CHECK_THROWS_AS(st.append_segment(indexed_rows(5, 4), 5, 9), dct::ContractError);
  }
  SECTION("row count different from the configured segment length") {
    CHECK_THROWS_AS(st.append_segment(indexed_rows(4, 3), 4, 7), dct::ShapeError);
  }
  SECTION("span length different from rows") {
    CHECK_THROWS_AS(st.append_segment(indexed_rows(4, 4), 4, 9), dct::ShapeError);
  }
}

TEST_CASE("compress maps n rows to floor(n/c) rows", "[memory][conv]") {
  SECTION("128 rows at ratio 4 give 32") {
    auto conv = make_conv(4, 4);
    HiddenBlock<float> b{indexed_rows(0, 128), 0, 128, false, 1, nullptr};
    auto res = dct::compress(b, conv);
    CHECK(res.block.rows() == 32);
    CHECK(res.block.ratio == 4);
    CHECK(res.block.span_begin == 0);
    CHECK(res.block.span_end == 128);
    CHECK_FALSE(res.degenerate);
  }
  SECTION("ratio 1 keeps the row count") {
    auto conv = make_conv(4, 1);
    HiddenBlock<float> b{indexed_rows(0, 7), 0, 7, false, 1, nullptr};
    CHECK(dct::compress(b, conv).block.rows() == 7);
  }
  SECTION("5 rows at ratio 2 give 2, span truncated") {
    auto conv = make_conv(4, 2);
    HiddenBlock<float> b{indexed_rows(10, 5), 10, 15, false, 1, nullptr};
    auto res = dct::compress(b, conv);
    CHECK(res.block.rows() == 2);
    CHECK(res.block.span_end == 14);
  }
  SECTION("exhaustive shape law for n in [c, 4c]") {
    for (int c = 1; c <= 4; ++c) {
      auto conv = make_conv(3, c);
      for (int n = c; n <= 4 * c; ++n) {
        HiddenBlock<float> b{indexed_rows(0, n, 3), 0, n, false, 1, nullptr};
        CHECK(dct::compress(b, conv).block.rows() == n / c);
      }
    }
  }
  SECTION("fewer rows than the ratio yields an empty block with a warning") {
    auto conv = make_conv(4, 4);
    HiddenBlock<float> b{indexed_rows(0, 3), 0, 3, false, 1, nullptr};
    auto res = dct::compress(b, conv);
    CHECK(res.degenerate);
    CHECK(res.block.empty());
  }
  SECTION("compressed input rejected") {
    auto conv = make_conv(4, 2);
    HiddenBlock<float> b{indexed_rows(0, 4), 0, 8, true, 2, nullptr};
    CHECK_THROWS_AS(dct::compress(b, conv), dct::ContractError);
  }
}

TEST_CASE("commit_compressed drops oldest rows beyond capacity", "[memory]") {
  LayerMemoryState<float> st(128, 64, 4, 128);
  auto conv = make_conv(4, 4);
  auto committed = [&](std::int64_t begin) {
    HiddenBlock<float> b{indexed_rows(begin, 128), begin, begin + 128, false, 1, nullptr};
    return st.commit_compressed(dct::compress(b, conv).block);
  };
  CHECK(committed(0) == 0);    // 32 rows into an empty store
  CHECK(st.occupied_compressed() == 32);
  CHECK(committed(128) == 0);  // store now holds 64 rows
  CHECK(st.occupied_compressed() == 64);
  CHECK(committed(256) == 32);  // third commit pushes out the 32 oldest
  CHECK(st.occupied_compressed() == 64);
  CHECK(st.compressed_blocks().front().span_begin == 128);
}

TEST_CASE("commit rejects ratio mismatches", "[memory]") {
  LayerMemoryState<float> st(8, 4, 2, 4);
  HiddenBlock<float> wrong{indexed_rows(0, 2), 0, 6, true, 3, nullptr};
  CHECK_THROWS_AS(st.commit_compressed(wrong), dct::ContractError);
}

TEST_CASE("discard leaves the compressed store untouched", "[memory]") {
  LayerMemoryState<float> st(128, 64, 4, 128);
  st.append_segment(indexed_rows(0, 128), 0, 128);
  auto evicted = st.append_segment(indexed_rows(128, 128), 128, 256);
  int before = st.occupied_compressed();
  dct::discard_evicted(std::move(evicted));
  CHECK(st.occupied_compressed() == before);
  // the discarded span no longer counts toward the reading distance
  CHECK(st.reading_distance(256, 384) == 384 - 128);
}

TEST_CASE("alternating keep and discard stores exactly the kept spans", "[memory]") {
  LayerMemoryState<float> st(4, 64, 2, 4);
  auto conv = make_conv(4, 2);
  std::int64_t next = 0;
  std::vector<std::int64_t> kept_spans;
  for (int seg = 0; seg < 5; ++seg) {
    auto evicted = st.append_segment(indexed_rows(next, 4), next, next + 4);
    next += 4;
    if (evicted.empty()) continue;
    bool keep = seg % 2 == 1;  // evictions start at seg 1; keep segs 1 and 3
    if (keep) {
      st.commit_compressed(dct::compress(evicted, conv).block);
      kept_spans.push_back(evicted.span_begin);
    } else {
      dct::discard_evicted(std::move(evicted));
    }
  }
  REQUIRE(st.compressed_blocks().size() == 2);
  auto it = st.compressed_blocks().begin();
  CHECK(it->span_begin == kept_spans[0]);
  CHECK(std::next(it)->span_begin == kept_spans[1]);
}

TEST_CASE("reading distance at the reference configuration", "[memory]") {
  const int n_s = 128, n_m = 128, n_cm = 64, c = 4;
  auto conv = make_conv(4, c);

  SECTION("first segment with empty memories") {
    LayerMemoryState<float> st(n_m, n_cm, c, n_s);
    CHECK(st.reading_distance(0, n_s) == 128);
  }

  auto run_policy = [&](bool keep_all) {
    LayerMemoryState<float> st(n_m, n_cm, c, n_s);
    std::int64_t next = 0;
    std::int64_t distance = 0;
    for (int seg = 0; seg < 24; ++seg) {
      distance = st.reading_distance(next, next + n_s);
      auto evicted = st.append_segment(indexed_rows(next, n_s), next, next + n_s);
      next += n_s;
      if (evicted.empty()) continue;
      if (keep_all)
        st.commit_compressed(dct::compress(evicted, conv).block);
      else
        dct::discard_evicted(std::move(evicted));
    }
    return distance;
  };

  SECTION("keep-all steady state") { CHECK(run_policy(true) == 512); }
  SECTION("discard-all steady state") { CHECK(run_policy(false) == 256); }
}

TEST_CASE("keep-all minus discard-all distance equals covered compressed tokens", "[memory]") {
  // Property: at equal timesteps, distance(keep) - distance(discard) is the
  // token span covered by the kept compressed rows.
  const int n_s = 8, n_m = 16, n_cm = 6, c = 2;
  auto conv = make_conv(4, c);
  LayerMemoryState<float> keep_st(n_m, n_cm, c, n_s);
  LayerMemoryState<float> drop_st(n_m, n_cm, c, n_s);
  std::int64_t next = 0;
  for (int seg = 0; seg < 12; ++seg) {
    std::int64_t b = next, e = next + n_s;
    std::int64_t d_keep = keep_st.reading_distance(b, e);
    std::int64_t d_drop = drop_st.reading_distance(b, e);
    CHECK(d_keep - d_drop == static_cast<std::int64_t>(c) * keep_st.occupied_compressed());
    auto ek = keep_st.append_segment(indexed_rows(b, n_s), b, e);
    auto ed = drop_st.append_segment(indexed_rows(b, n_s), b, e);
    if (!ek.empty()) keep_st.commit_compressed(dct::compress(ek, conv).block);
    if (!ed.empty()) dct::discard_evicted(std::move(ed));
    next = e;
  }
}

TEST_CASE("attention context stacks compressed before memory with correct ages", "[memory]") {
  SECTION("empty state gives an empty context") {
    LayerMemoryState<float> st(128, 64, 4, 128);
    auto ctx = st.attention_context(4);
    CHECK(ctx.rows() == 0);
    CHECK(ctx.ages.empty());
  }

  SECTION("full state at the reference configuration has 192 rows") {
    const int n_s = 128, n_m = 128, n_cm = 64, c = 4;
    auto conv = make_conv(4, c);
    LayerMemoryState<float> st(n_m, n_cm, c, n_s);
    std::int64_t next = 0;
    for (int seg = 0; seg < 8; ++seg) {
      auto ev = st.append_segment(indexed_rows(next, n_s), next, next + n_s);
      next += n_s;
      if (!ev.empty()) st.commit_compressed(dct::compress(ev, conv).block);
    }
    REQUIRE(st.compressed_full());
    REQUIRE(st.memory_full());
    auto ctx = st.attention_context(4);
    CHECK(ctx.rows() == 192);
  }

  SECTION("one kept compression plus a full memory gives 160 rows") {
    const int n_s = 128, n_m = 128, n_cm = 64, c = 4;
    auto conv = make_conv(4, c);
    LayerMemoryState<float> st(n_m, n_cm, c, n_s);
    st.append_segment(indexed_rows(0, n_s), 0, 128);
    auto ev = st.append_segment(indexed_rows(128, n_s), 128, 256);
    st.commit_compressed(dct::compress(ev, conv).block);
    auto ctx = st.attention_context(4);
    CHECK(ctx.rows() == 160);
  }

  SECTION("ages are relative to the next segment and use each row's ratio") {
    const int n_s = 4, n_m = 4, n_cm = 4, c = 2;
    auto conv = make_conv(4, c);
    LayerMemoryState<float> st(n_m, n_cm, c, n_s);
    st.append_segment(indexed_rows(0, 4), 0, 4);
    auto ev = st.append_segment(indexed_rows(4, 4), 4, 8);  // evicts tokens 0..3
    st.commit_compressed(dct::compress(ev, conv).block);    // rows for (0,1) and (2,3)
    auto ctx = st.attention_context(4);
    REQUIRE(ctx.rows() == 6);
    // next segment starts at 8; compressed rows age by their newest token
    CHECK(ctx.ages[0] == 8 - 1);
    CHECK(ctx.ages[1] == 8 - 3);
    CHECK(ctx.ages[2] == 8 - 4);  // oldest granular row is token 4
    CHECK(ctx.ages[5] == 8 - 7);
  }
}

TEST_CASE("randomized sequences match the naive reference", "[memory][oracle]") {
  for (std::uint64_t seed = 1; seed <= 300; ++seed)
    dct_test::run_memory_oracle_sequence(seed, 40);
}
