#include "dct/checkpoint.hpp"

#include "support/tiny_run.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

namespace fs = std::filesystem;

namespace {

fs::path temp_file(const char* name) {
  return fs::temp_directory_path() / name;
}

std::vector<char> slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::vector<char>((std::istreambuf_iterator<char>(in)),
                           std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("checkpoint roundtrip restores every tensor and counter", "[checkpoint]") {
  auto cfg = dct_test::tiny_config();
  cfg.judger = dct::JudgerMode::kLearned;
  auto corpus = dct_test::tiny_corpus();
  auto splits = dct::split_corpus(corpus);
  dct::Trainer t(cfg);
  t.begin_cotrain();
  t.cotrain(splits.train, 3);

  auto path = temp_file("dct_roundtrip.ckpt");
  save_checkpoint(path.string(), t, 123, 456);

  dct::CheckpointInfo info;
  auto restored = dct::load_checkpoint(path.string(), &info);
  CHECK(info.corpus_bytes == 123);
  CHECK(info.corpus_hash == 456);
  CHECK(restored->phase() == dct::Phase::kCotrain);
  CHECK(restored->global_step() == t.global_step());
  CHECK(restored->segment_cursor() == t.segment_cursor());
  CHECK(restored->config().to_text() == t.config().to_text());
  CHECK(restored->action_rng().save() == t.action_rng().save());

  auto pa = t.model().param_list();
  auto pb = restored->model().param_list();
  REQUIRE(pa.size() == pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) CHECK(pa[i]->value == pb[i]->value);

  auto& ma = t.memories();
  auto& mb = restored->memories();
  for (std::size_t l = 0; l < ma.size(); ++l)
    for (std::size_t s = 0; s < ma[l].size(); ++s) {
      CHECK(ma[l][s].occupied_memory() == mb[l][s].occupied_memory());
      CHECK(ma[l][s].occupied_compressed() == mb[l][s].occupied_compressed());
      CHECK(ma[l][s].next_span_begin() == mb[l][s].next_span_begin());
      auto ia = ma[l][s].memory_blocks().begin();
      auto ib = mb[l][s].memory_blocks().begin();
      for (; ia != ma[l][s].memory_blocks().end(); ++ia, ++ib) {
        CHECK(ia->span_begin == ib->span_begin);
        CHECK(ia->activations == ib->activations);
      }
    }

  // saving the restored trainer reproduces the file byte for byte
  auto path2 = temp_file("dct_roundtrip2.ckpt");
  save_checkpoint(path2.string(), *restored, 123, 456);
  CHECK(slurp(path) == slurp(path2));
  fs::remove(path);
  fs::remove(path2);
}

TEST_CASE("checkpoint corruption is detected", "[checkpoint]") {
  auto cfg = dct_test::tiny_config();
  dct::Trainer t(cfg);
  auto path = temp_file("dct_corrupt.ckpt");
  save_checkpoint(path.string(), t);

  SECTION("corrupted magic string") {
    auto bytes = slurp(path);
    bytes[0] = 'X';
    std::ofstream(path, std::ios::binary).write(bytes.data(), bytes.size());
    CHECK_THROWS_AS(dct::load_checkpoint(path.string()), dct::IoError);
    CHECK_THROWS_AS(dct::inspect_checkpoint(path.string()), dct::IoError);
  }
  SECTION("unsupported version") {
    auto bytes = slurp(path);
    bytes[8] = 99;
    std::ofstream(path, std::ios::binary).write(bytes.data(), bytes.size());
    CHECK_THROWS_AS(dct::load_checkpoint(path.string()), dct::IoError);
  }
  SECTION("truncated file") {
    auto bytes = slurp(path);
    bytes.resize(bytes.size() / 2);
    std::ofstream(path, std::ios::binary | std::ios::trunc)
        .write(bytes.data(), bytes.size());
    CHECK_THROWS_AS(dct::load_checkpoint(path.string()), dct::IoError);
  }
  SECTION("missing file") {
    CHECK_THROWS_AS(dct::load_checkpoint("/nonexistent/x.ckpt"), dct::IoError);
  }
  fs::remove(path);
}

TEST_CASE("inspect reads the header without loading tensors", "[checkpoint]") {
  auto cfg = dct_test::tiny_config();
  dct::Trainer t(cfg);
  t.set_global_step(17);
  auto path = temp_file("dct_inspect.ckpt");
  save_checkpoint(path.string(), t, 1000, 2000);
  auto info = dct::inspect_checkpoint(path.string());
  CHECK(info.version == 1);
  CHECK(info.global_step == 17);
  CHECK(info.corpus_bytes == 1000);
  CHECK(info.config_text == cfg.to_text());
  CHECK_FALSE(info.has_snapshot);
  fs::remove(path);
}
