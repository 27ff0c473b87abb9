#include "dstf/bpe.hpp"

#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <unordered_map>

#include "dstf/errors.hpp"

namespace dstf {

namespace {

bool is_space(unsigned char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f'; }

struct PairHash {
  std::size_t operator()(const BpeTokenizer::Merge& p) const {
    return std::hash<std::uint64_t>()((static_cast<std::uint64_t>(static_cast<std::uint32_t>(p.first)) << 32) |
                                      static_cast<std::uint32_t>(p.second));
  }
};

// Replaces every non-overlapping occurrence of `m`, scanning left to right.
void apply_merge(std::vector<std::int32_t>& syms, const BpeTokenizer::Merge& m, std::int32_t id) {
  std::size_t w = 0;
  for (std::size_t r = 0; r < syms.size(); ++r) {
    if (r + 1 < syms.size() && syms[r] == m.first && syms[r + 1] == m.second) {
      syms[w++] = id;
      ++r;
    } else {
      syms[w++] = syms[r];
    }
  }
  syms.resize(w);
}

}  // namespace

std::vector<std::string_view> split_chunks(std::string_view text) {
  std::vector<std::string_view> chunks;
  std::size_t i = 0;
  while (i < text.size()) {
    const std::size_t start = i;
    if (is_space(static_cast<unsigned char>(text[i]))) ++i;
    while (i < text.size() && !is_space(static_cast<unsigned char>(text[i]))) ++i;
    chunks.push_back(text.substr(start, i - start));
  }
  return chunks;
}

BpeTokenizer::BpeTokenizer() {
  tokens_.reserve(kBaseVocab);
  for (int b = 0; b < 256; ++b) tokens_.emplace_back(1, static_cast<char>(b));
  tokens_.emplace_back("\x1e");
}

void BpeTokenizer::add_merge(Merge m) {
  const auto n = static_cast<std::int32_t>(tokens_.size());
  if (m.first < 0 || m.second < 0 || m.first >= n || m.second >= n || m.first == kEndOfText ||
      m.second == kEndOfText) {
    throw DataError("bpe: merge (" + std::to_string(m.first) + ", " + std::to_string(m.second) +
                    ") references an unknown or special id");
  }
  merges_.push_back(m);
  tokens_.push_back(tokens_[m.first] + tokens_[m.second]);
}

const std::string& BpeTokenizer::token_bytes(std::int32_t id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw DataError("bpe: unknown token id " + std::to_string(id));
  }
  return tokens_[id];
}

BpeTokenizer BpeTokenizer::train(std::string_view corpus, std::size_t vocab_size) {
  if (vocab_size < kBaseVocab) {
    throw ConfigError("bpe: vocab size must be >= " + std::to_string(kBaseVocab) + ", got " +
                      std::to_string(vocab_size));
  }
  if (corpus.empty()) throw DataError("bpe: corpus is empty");
  BpeTokenizer tok;

  std::map<std::string_view, std::int64_t> word_counts;
  for (auto chunk : split_chunks(corpus)) ++word_counts[chunk];
  std::vector<std::vector<std::int32_t>> words;
  std::vector<std::int64_t> freq;
  for (const auto& [w, c] : word_counts) {
    std::vector<std::int32_t> syms;
    for (unsigned char ch : w) syms.push_back(ch);
    words.push_back(std::move(syms));
    freq.push_back(c);
  }

  std::unordered_map<Merge, std::int64_t, PairHash> counts;
  std::unordered_map<Merge, std::set<std::size_t>, PairHash> where;
  auto account = [&](std::size_t wi, std::int64_t sign) {
    const auto& s = words[wi];
    for (std::size_t i = 0; i + 1 < s.size(); ++i) {
      const Merge p{s[i], s[i + 1]};
      counts[p] += sign * freq[wi];
      if (sign > 0) where[p].insert(wi);
    }
  };
  for (std::size_t wi = 0; wi < words.size(); ++wi) account(wi, +1);

  auto precedes = [&](const Merge& a, const Merge& b) {
    const auto& al = tok.tokens_[a.first];
    const auto& bl = tok.tokens_[b.first];
    if (al != bl) return al < bl;
    const auto& ar = tok.tokens_[a.second];
    const auto& br = tok.tokens_[b.second];
    if (ar != br) return ar < br;
    return a < b;
  };

  while (tok.vocab_size() < vocab_size) {
    Merge best{-1, -1};
    std::int64_t best_count = 0;
    for (const auto& [p, c] : counts) {
      if (c <= 0) continue;
      if (c > best_count || (c == best_count && precedes(p, best))) {
        best = p;
        best_count = c;
      }
    }
    if (best_count == 0) break;
    const auto id = static_cast<std::int32_t>(tok.vocab_size());
    tok.add_merge(best);
    const auto affected = std::move(where[best]);
    where.erase(best);
    for (auto wi : affected) {
      account(wi, -1);
      apply_merge(words[wi], best, id);
      account(wi, +1);
    }
    for (auto it = counts.begin(); it != counts.end();) {
      it = it->second == 0 ? counts.erase(it) : std::next(it);
    }
  }
  return tok;
}

std::vector<std::int32_t> BpeTokenizer::encode(std::string_view text) const {
  std::unordered_map<Merge, std::int32_t, PairHash> rank;
  for (std::size_t i = 0; i < merges_.size(); ++i) rank.emplace(merges_[i], static_cast<std::int32_t>(i));
  std::unordered_map<std::string_view, std::vector<std::int32_t>> cache;
  std::vector<std::int32_t> out;
  out.reserve(text.size());
  for (auto chunk : split_chunks(text)) {
    auto [it, fresh] = cache.try_emplace(chunk);
    if (fresh) {
      auto& syms = it->second;
      for (unsigned char ch : chunk) syms.push_back(ch);
      while (syms.size() > 1) {
        std::int32_t best = -1;
        for (std::size_t i = 0; i + 1 < syms.size(); ++i) {
          const auto r = rank.find({syms[i], syms[i + 1]});
          if (r != rank.end() && (best < 0 || r->second < best)) best = r->second;
        }
        if (best < 0) break;
        apply_merge(syms, merges_[best], static_cast<std::int32_t>(kBaseVocab) + best);
      }
    }
    out.insert(out.end(), it->second.begin(), it->second.end());
  }
  return out;
}

std::string BpeTokenizer::decode(std::span<const std::int32_t> ids) const {
  std::string out;
  for (auto id : ids) out += token_bytes(id);
  return out;
}

nlohmann::json BpeTokenizer::to_json() const {
  nlohmann::json merges = nlohmann::json::array();
  for (const auto& [a, b] : merges_) merges.push_back({a, b});
  return {{"type", "byte-bpe"},
          {"version", 1},
          {"vocab_size", vocab_size()},
          {"specials", {{"<|endoftext|>", kEndOfText}}},
          {"merges", merges}};
}

BpeTokenizer BpeTokenizer::from_json(const nlohmann::json& j) {
  try {
    if (j.at("type").get<std::string>() != "byte-bpe") throw DataError("bpe: vocab type is not byte-bpe");
    BpeTokenizer tok;
    for (const auto& m : j.at("merges")) tok.add_merge({m.at(0).get<std::int32_t>(), m.at(1).get<std::int32_t>()});
    if (j.contains("vocab_size") && j.at("vocab_size").get<std::size_t>() != tok.vocab_size()) {
      throw DataError("bpe: vocab_size field disagrees with the merge list");
    }
    return tok;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("bpe: malformed vocab JSON: ") + e.what());
  }
}

void BpeTokenizer::save(const std::filesystem::path& path) const {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw DataError("bpe: cannot write " + path.string());
  os << to_json().dump() << '\n';
  if (!os) throw DataError("bpe: write to " + path.string() + " failed");
}

BpeTokenizer BpeTokenizer::load(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw DataError("bpe: cannot open vocab " + path.string());
  try {
    return from_json(nlohmann::json::parse(is));
  } catch (const nlohmann::json::exception& e) {
    throw DataError("bpe: " + path.string() + ": " + e.what());
  }
}

}  // namespace dstf
