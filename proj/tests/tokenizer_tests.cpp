#include <doctest.h>

#include <random>
#include <sstream>

#include "cloze/corpus.hpp"
#include "cloze/tokenizer.hpp"

using namespace cloze;

namespace {
TaggedSentence sentence(std::initializer_list<const char*> tokens) {
  TaggedSentence s;
  for (const char* t : tokens) {
    s.tokens.push_back(t);
    s.tags.push_back(Tag::O);
  }
  return s;
}
}  // namespace

TEST_CASE("reserved ids are fixed and PAD is zero") {
  Vocabulary v;
  CHECK(Vocabulary::kPad == 0);
  CHECK(v.size() == 5);
  CHECK(v.token(0) == "[PAD]");
  CHECK(v.token(4) == "[MASK]");
  CHECK(v.token_id("[CLS]") == Vocabulary::kCls);
}

TEST_CASE("build_vocab applies the frequency threshold") {
  auto v = build_vocab({sentence({"a", "a", "b"})}, 2);
  CHECK(v.token_id("a") >= Vocabulary::kReserved);
  CHECK(v.token_id("b") == Vocabulary::kUnk);
}

TEST_CASE("build_vocab on an empty corpus yields only reserved tokens") {
  auto v = build_vocab({}, 1);
  CHECK(v.size() == Vocabulary::kReserved);
}

TEST_CASE("build_vocab ordering: frequency desc then lexicographic, rebuild identical") {
  std::vector<TaggedSentence> corpus{sentence({"b", "b", "c", "a", "c", "c"})};
  auto v = build_vocab(corpus, 1);
  CHECK(v.token_id("c") == 5);  // freq 3
  CHECK(v.token_id("b") == 6);  // freq 2
  CHECK(v.token_id("a") == 7);  // freq 1
  auto v2 = build_vocab(corpus, 1);
  CHECK(v.fingerprint() == v2.fingerprint());
}

TEST_CASE("encode frames and maps unknowns") {
  auto v = build_vocab({sentence({"keep", "up", "the", "good", "work"})}, 1);

  auto empty = encode({}, v, true);
  CHECK(empty == std::vector<int>{Vocabulary::kCls, Vocabulary::kSep});

  auto ids = encode({"keep", "up", "the", "good", "work"}, v, true);
  REQUIRE(ids.size() == 7);
  CHECK(ids.front() == Vocabulary::kCls);
  CHECK(ids.back() == Vocabulary::kSep);

  auto unk = encode({"zzz"}, v, false);
  CHECK(unk == std::vector<int>{Vocabulary::kUnk});
}

TEST_CASE("decode inverts encode on in-vocabulary frameless input") {
  auto v = build_vocab({sentence({"w0", "w1", "w2", "w3", "w4", "w5"})}, 1);
  CHECK(decode({Vocabulary::kCls, Vocabulary::kSep}, v) ==
        std::vector<std::string>{"[CLS]", "[SEP]"});

  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<std::string> tokens;
    for (std::size_t i = 0, n = rng() % 12; i < n; ++i)
      tokens.push_back("w" + std::to_string(rng() % 6));
    CHECK(decode(encode(tokens, v, false), v) == tokens);
  }

  CHECK_THROWS_AS(decode({v.size()}, v), Error);
}

TEST_CASE("vocabulary file round trip preserves ids and fingerprint") {
  auto v = build_vocab({sentence({"alpha", "beta", "beta"})}, 1);
  std::stringstream ss;
  v.save(ss);
  auto loaded = Vocabulary::load(ss);
  CHECK(loaded.size() == v.size());
  CHECK(loaded.token_id("beta") == v.token_id("beta"));
  CHECK(loaded.fingerprint() == v.fingerprint());
  CHECK(loaded.min_freq() == 1);
}
