#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "dstf/bpe.hpp"
#include "dstf/dataset.hpp"
#include "dstf/errors.hpp"
#include "dstf/ops.hpp"
#include "dstf/rng.hpp"

using namespace dstf;

namespace {

using Sym = std::vector<std::string>;

std::vector<Sym> naive_chunks(const std::string& text) {
  std::vector<Sym> out;
  Sym cur;
  for (char ch : text) {
    const bool space = ch == ' ' || ch == '\n' || ch == '\t' || ch == '\r' || ch == '\v' || ch == '\f';
    // a whitespace byte starts a new chunk unless the current chunk is a lone whitespace byte
    if (space && !cur.empty()) {
      out.push_back(cur);
      cur.clear();
    }
    cur.emplace_back(1, ch);
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

void merge_in(Sym& s, const std::string& a, const std::string& b) {
  Sym out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i + 1 < s.size() && s[i] == a && s[i + 1] == b) {
      out.push_back(a + b);
      ++i;
    } else {
      out.push_back(s[i]);
    }
  }
  s = out;
}

// Recounts every adjacent pair from scratch before each merge.
std::vector<std::pair<std::string, std::string>> naive_train(const std::string& text, std::size_t n_merges) {
  auto chunks = naive_chunks(text);
  std::vector<std::pair<std::string, std::string>> merges;
  while (merges.size() < n_merges) {
    std::map<std::pair<std::string, std::string>, long> counts;
    for (const auto& c : chunks)
      for (std::size_t i = 0; i + 1 < c.size(); ++i) ++counts[{c[i], c[i + 1]}];
    long best = 0;
    std::pair<std::string, std::string> pick;
    for (const auto& [p, n] : counts)
      if (n > best) {
        best = n;
        pick = p;
      }
    if (best == 0) break;
    merges.push_back(pick);
    for (auto& c : chunks) merge_in(c, pick.first, pick.second);
  }
  return merges;
}

std::vector<std::string> naive_encode(const std::string& text,
                                      const std::vector<std::pair<std::string, std::string>>& merges) {
  std::vector<std::string> out;
  for (auto c : naive_chunks(text)) {
    for (const auto& [a, b] : merges) merge_in(c, a, b);
    out.insert(out.end(), c.begin(), c.end());
  }
  return out;
}

std::string random_text(Rng& rng, std::size_t words) {
  static const char* const vocab[] = {"the", "cat", "sat", "on", "a", "mat", "then", "that", "cart", "at",
                                      "tattle", "aaaa", "\xc3\xa9t\xc3\xa9", "\xe6\x97\xa5\xe6\x9c\xac"};
  std::string s;
  for (std::size_t i = 0; i < words; ++i) {
    s += vocab[rng.below(std::size(vocab))];
    const auto sep = rng.below(10);
    s += sep == 0 ? "\n" : sep == 1 ? "  " : sep == 2 ? ". " : " ";
  }
  return s;
}

}  // namespace

TEST_CASE("pre-tokenization") {
  const auto c = split_chunks("hi  there\nyou");
  REQUIRE(c.size() == 4);
  CHECK(c[0] == "hi");
  CHECK(c[1] == " ");
  CHECK(c[2] == " there");
  CHECK(c[3] == "\nyou");
  CHECK(split_chunks("").empty());
}

TEST_CASE("bpe basics") {
  const auto t = BpeTokenizer::train("aaaa", 258);
  REQUIRE(t.merges().size() == 1);
  CHECK(t.merges()[0] == BpeTokenizer::Merge{'a', 'a'});
  CHECK(t.encode("aaaa") == std::vector<std::int32_t>{257, 257});

  const auto base = BpeTokenizer::train("hello world", 257);
  CHECK(base.merges().empty());
  const auto ids = base.encode("hello");
  CHECK(ids == std::vector<std::int32_t>{'h', 'e', 'l', 'l', 'o'});

  CHECK(t.encode("").empty());
  CHECK_THROWS_AS(BpeTokenizer::train("", 300), DataError);
  CHECK_THROWS_AS(BpeTokenizer::train("abc", 256), ConfigError);
  CHECK_THROWS_AS(t.decode(std::vector<std::int32_t>{258}), DataError);
  CHECK(t.decode(std::vector<std::int32_t>{BpeTokenizer::kEndOfText}) == "\x1e");

  // stops early when no pair is left
  CHECK(BpeTokenizer::train("ab", 400).vocab_size() == 258);
}

TEST_CASE("bpe matches the naive recount oracle") {
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    Rng rng(seed);
    const auto corpus = random_text(rng, 300);
    const auto tok = BpeTokenizer::train(corpus, 257 + 40);
    const auto want = naive_train(corpus, 40);
    REQUIRE(tok.merges().size() == want.size());
    for (std::size_t i = 0; i < want.size(); ++i) {
      const auto& [l, r] = tok.merges()[i];
      CAPTURE(i);
      CHECK(tok.token_bytes(l) == want[i].first);
      CHECK(tok.token_bytes(r) == want[i].second);
    }
    const auto held_out = random_text(rng, 80);
    std::vector<std::string> got;
    for (auto id : tok.encode(held_out)) got.push_back(tok.token_bytes(id));
    CHECK(got == naive_encode(held_out, want));
  }
}

TEST_CASE("encode/decode round trip and determinism") {
  Rng rng(9);
  const auto corpus = random_text(rng, 400);
  const auto tok = BpeTokenizer::train(corpus, 320);
  for (int i = 0; i < 50; ++i) {
    std::string s;
    const auto n = rng.below(40);
    for (std::size_t k = 0; k < n; ++k) {
      // mix of ASCII, whitespace and multi-byte sequences
      switch (rng.below(4)) {
        case 0: s += static_cast<char>('a' + rng.below(26)); break;
        case 1: s += " \n\t"[rng.below(3)]; break;
        case 2: s += "\xc3\xa9"; break;
        default: s += "\xf0\x9f\x98\x80"; break;
      }
    }
    const auto ids = tok.encode(s);
    CHECK(tok.decode(ids) == s);
    for (auto id : ids) CHECK((id >= 0 && static_cast<std::size_t>(id) < tok.vocab_size()));
  }
  CHECK(BpeTokenizer::train(corpus, 320).to_json().dump() == tok.to_json().dump());

  const auto path = std::filesystem::temp_directory_path() / "dstf_test_vocab.json";
  tok.save(path);
  const auto loaded = BpeTokenizer::load(path);
  CHECK(loaded.merges() == tok.merges());
  CHECK(loaded.encode(corpus) == tok.encode(corpus));
  std::filesystem::remove(path);
  CHECK_THROWS_AS(BpeTokenizer::load(path), DataError);
  CHECK_THROWS_AS(BpeTokenizer::from_json(nlohmann::json{{"type", "byte-bpe"}, {"merges", {{5, 999}}}}), DataError);
}

TEST_CASE("corpus parsing and split") {
  const auto c = parse_corpus("first doc\nline two\n\x1e\nsecond\n\x1e\n\x1e\nthird");
  REQUIRE(c.documents.size() == 3);
  CHECK(c.documents[0] == "first doc\nline two\n");
  CHECK(c.documents[1] == "second\n");
  CHECK(c.documents[2] == "third");

  Corpus many;
  for (int i = 0; i < 10; ++i) many.documents.push_back("doc" + std::to_string(i));
  const auto [train, val] = split_corpus(many, 0.25);
  CHECK(train.documents.size() == 7);
  CHECK(val.documents.size() == 3);
  CHECK(val.documents.front() == "doc7");
  CHECK(split_corpus(many, 0.01).second.documents.size() == 1);
  CHECK_THROWS(split_corpus(many, 0.0));
  CHECK_THROWS(split_corpus(Corpus{{"only"}}, 0.5));
  CHECK_THROWS_AS(load_corpus("/nonexistent/corpus.txt"), DataError);
}

TEST_CASE("windows never cross documents") {
  const BpeTokenizer bytes;
  const Corpus c{{"abcdefg", "xyz"}};
  const Dataset d(c, bytes, 4);
  // "abcdefg" + EOT = 8 ids, 7 pairs -> windows of 4 and 3; "xyz" + EOT -> 3 pairs
  REQUIRE(d.size() == 3);
  CHECK(d.window(0).inputs == std::vector<std::int32_t>{'a', 'b', 'c', 'd'});
  CHECK(d.window(0).targets == std::vector<std::int32_t>{'b', 'c', 'd', 'e'});
  CHECK(d.window(1).inputs == std::vector<std::int32_t>{'e', 'f', 'g', BpeTokenizer::kEndOfText});
  CHECK(d.window(1).targets == std::vector<std::int32_t>{'f', 'g', BpeTokenizer::kEndOfText, kIgnoreIndex});
  CHECK(d.window(2).inputs == std::vector<std::int32_t>{'x', 'y', 'z', BpeTokenizer::kEndOfText});
  CHECK(d.window(2).targets == std::vector<std::int32_t>{'y', 'z', BpeTokenizer::kEndOfText, kIgnoreIndex});
  CHECK(d.target_count() == 10);

  const auto b = d.batch(1, 2);
  CHECK(b.inputs.shape == Shape{2, 4});
  CHECK(b.targets.ids[3] == kIgnoreIndex);
  CHECK_THROWS_AS(Dataset(c, bytes, 0), ConfigError);
}

TEST_CASE("batch iterator") {
  const BpeTokenizer bytes;
  Corpus c;
  for (int i = 0; i < 11; ++i) c.documents.push_back(std::string(3, static_cast<char>('a' + i)));
  const Dataset d(c, bytes, 4);
  REQUIRE(d.size() == 11);
  BatchIterator it(d, 3, 42);
  CHECK(it.batches_per_epoch() == 3);
  std::multiset<std::int32_t> firsts;
  for (int i = 0; i < 3; ++i) {
    const auto b = it.next();
    CHECK(b.inputs.shape == Shape{3, 4});
    for (std::size_t r = 0; r < 3; ++r) firsts.insert(b.inputs.ids[r * 4]);
  }
  CHECK(it.epoch() == 0);
  // nine distinct windows per epoch, two dropped
  CHECK(std::set<std::int32_t>(firsts.begin(), firsts.end()).size() == 9);
  it.next();
  CHECK(it.epoch() == 1);

  BatchIterator a(d, 3, 7), b(d, 3, 7), other(d, 3, 8);
  bool differs = false;
  for (int i = 0; i < 6; ++i) {
    const auto x = a.next(), y = b.next(), z = other.next();
    CHECK(x.inputs.ids == y.inputs.ids);
    differs = differs || x.inputs.ids != z.inputs.ids;
  }
  CHECK(differs);
}
