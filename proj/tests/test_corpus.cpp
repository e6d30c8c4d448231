#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <set>
#include <string>
#include <vector>

#include "cclab/corpus.hpp"
#include "cclab/rng.hpp"
#include "cclab/textgen.hpp"
#include "cclab/tokenizer.hpp"

using cclab::Rng;
using cclab::Segment;
using cclab::TaskKind;
using cclab::Tokenizer;

namespace {

Tokenizer small_tokenizer() {
  std::vector<std::string> docs = {"abababab abab ababab", "the quick brown fox", "ababab"};
  return Tokenizer::train(docs, 300);
}

}  // namespace

TEST_CASE("tokenizer round-trips simple repeated text") {
  auto t = small_tokenizer();
  CHECK(t.vocab_size() <= 300);
  auto ids = t.encode("abab");
  CHECK(t.decode(ids) == "abab");
  CHECK(static_cast<int>(ids.size()) < 4);  // merges actually fired
}

TEST_CASE("tokenizer never emits special ids for raw text") {
  auto t = small_tokenizer();
  Rng rng(123);
  for (int iter = 0; iter < 200; ++iter) {
    std::string s;
    const int len = rng.uniform_int(64);
    for (int i = 0; i < len; ++i) {
      s.push_back(static_cast<char>(rng.uniform_int(256)));
    }
    for (int id : t.encode(s)) {
      CHECK(id != Tokenizer::kBos);
      CHECK(id != Tokenizer::kSepText);
      CHECK(id != Tokenizer::kPad);
    }
  }
}

TEST_CASE("tokenizer training is deterministic byte-for-byte") {
  cclab::TextGenConfig cfg;
  cfg.seed = 5;
  cfg.target_chars = 40000;
  auto docs = cclab::generate_documents(cfg);
  auto a = Tokenizer::train(docs, 512);
  auto b = Tokenizer::train(docs, 512);
  CHECK(a.to_text() == b.to_text());
}

TEST_CASE("tokenizer empty text round trip") {
  auto t = small_tokenizer();
  auto ids = t.encode("");
  CHECK(ids.empty());
  CHECK(t.decode(ids) == "");
}

TEST_CASE("tokenizer round-trips arbitrary utf-8 text") {
  auto t = small_tokenizer();
  const std::string s = "Då svarade hön: \xF0\x9F\x98\x80 — und zwölf Bäume über 1 Straße.";
  CHECK(t.decode(t.encode(s)) == s);
}

TEST_CASE("tokenizer fuzz: 1000 random byte strings round-trip exactly") {
  auto t = small_tokenizer();
  Rng rng(999);
  for (int iter = 0; iter < 1000; ++iter) {
    std::string s;
    const int len = rng.uniform_int(128);
    for (int i = 0; i < len; ++i) {
      s.push_back(static_cast<char>(rng.uniform_int(256)));
    }
    REQUIRE(t.decode(t.encode(s)) == s);
  }
}

TEST_CASE("tokenizer decode rejects out-of-range ids") {
  auto t = small_tokenizer();
  std::vector<std::int32_t> bad = {0, t.vocab_size()};
  CHECK_THROWS_WITH_AS(t.decode(bad), doctest::Contains("outside vocabulary"),
                       std::runtime_error);
}

TEST_CASE("tokenizer rejects empty corpus and tiny vocab") {
  std::vector<std::string> none;
  CHECK_THROWS_AS(Tokenizer::train(none, 300), std::runtime_error);
  std::vector<std::string> empty_doc = {""};
  CHECK_THROWS_AS(Tokenizer::train(empty_doc, 300), std::runtime_error);
  std::vector<std::string> ok = {"hello"};
  CHECK_THROWS_WITH_AS(Tokenizer::train(ok, 258), doctest::Contains("at least"),
                       std::runtime_error);
}

TEST_CASE("tokenizer save/load round trip") {
  auto t = small_tokenizer();
  const auto path = std::filesystem::temp_directory_path() / "cclab_tok_test.txt";
  t.save(path);
  auto loaded = Tokenizer::load(path);
  CHECK(loaded.to_text() == t.to_text());
  CHECK(loaded.decode(loaded.encode("the quick")) == "the quick");
  std::filesystem::remove(path);
}

TEST_CASE("tokenizer merges compress generated prose") {
  cclab::TextGenConfig cfg;
  cfg.seed = 11;
  cfg.target_chars = 60000;
  auto docs = cclab::generate_documents(cfg);
  auto t = Tokenizer::train(docs, 1024);
  CHECK(t.vocab_size() == 1024);
  const auto& doc = docs.front();
  const auto ids = t.encode(doc);
  // Should be clearly below 1 token per byte on in-domain text.
  CHECK(ids.size() * 2 < doc.size());
  CHECK(t.decode(ids) == doc);
}

TEST_CASE("make_segments splits deterministically and disjointly") {
  std::vector<std::int32_t> stream(1000);
  for (int i = 0; i < 1000; ++i) {
    stream[static_cast<std::size_t>(i)] = i % 97;
  }
  auto a = cclab::make_segments(stream, 10, 60, 20, 42);
  auto b = cclab::make_segments(stream, 10, 60, 20, 42);
  CHECK(cclab::segment_manifest(a, 10, 42) == cclab::segment_manifest(b, 10, 42));

  std::set<std::int64_t> offsets;
  for (const auto& s : a.train) {
    CHECK(s.tokens.size() == 10);
    CHECK(offsets.insert(s.source_offset).second);
  }
  for (const auto& s : a.val) {
    CHECK(offsets.insert(s.source_offset).second);  // no overlap with train
  }
  auto c = cclab::make_segments(stream, 10, 60, 20, 43);
  CHECK(cclab::segment_manifest(a, 10, 42) != cclab::segment_manifest(c, 10, 43));
}

TEST_CASE("make_segments reports required vs available tokens") {
  std::vector<std::int32_t> stream(100, 1);
  CHECK_THROWS_WITH_AS(cclab::make_segments(stream, 10, 9, 2, 1),
                       doctest::Contains("need 110 tokens, have 100"), std::runtime_error);
}

TEST_CASE("to_task shapes for reconstruction and lm") {
  Segment seg;
  for (int i = 0; i < 16; ++i) {
    seg.tokens.push_back(i);
  }
  auto recon = cclab::to_task(seg, TaskKind::reconstruction, 8, 0);
  CHECK(recon.context.size() == 8);
  CHECK(recon.continuation.empty());
  CHECK(recon.k == 0);
  CHECK(recon.context[7] == 7);

  auto lm = cclab::to_task(seg, TaskKind::lm, 8, 3);
  CHECK(lm.context.size() == 8);
  CHECK(lm.continuation.size() == 8);
  CHECK(lm.continuation.front() == 8);
  CHECK(lm.k == 3);

  auto lm0 = cclab::to_task(seg, TaskKind::lm, 8, 0);
  CHECK(lm0.k == 0);

  CHECK_THROWS_AS(cclab::to_task(seg, TaskKind::lm, 16, 0), std::runtime_error);
  CHECK_THROWS_AS(cclab::to_task(seg, TaskKind::lm, 8, 9), std::runtime_error);
  CHECK_THROWS_AS(cclab::to_task(seg, TaskKind::reconstruction, 8, 1), std::runtime_error);
  CHECK_THROWS_AS(cclab::to_task(seg, TaskKind::reconstruction, 17, 0), std::runtime_error);
}

TEST_CASE("token stream save/load round trip") {
  std::vector<std::int32_t> toks = {0, 5, 300, 4095, 17};
  const auto path = std::filesystem::temp_directory_path() / "cclab_stream_test.txt";
  cclab::save_token_stream(path, toks);
  auto loaded = cclab::load_token_stream(path);
  CHECK(loaded == toks);
  std::filesystem::remove(path);
}

TEST_CASE("generated corpus is deterministic and entity-recurrent") {
  cclab::TextGenConfig cfg;
  cfg.seed = 21;
  cfg.target_chars = 30000;
  auto a = cclab::generate_documents(cfg);
  auto b = cclab::generate_documents(cfg);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    REQUIRE(a[i] == b[i]);
  }
  std::size_t total = 0;
  for (const auto& d : a) {
    total += d.size();
  }
  CHECK(total >= cfg.target_chars);
}
