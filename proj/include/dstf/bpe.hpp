#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"

namespace dstf {

// Byte-level BPE. Ids 0..255 are raw bytes, 256 is the end-of-text separator,
// and merge i produces id 257 + i.
class BpeTokenizer {
 public:
  static constexpr std::int32_t kEndOfText = 256;
  static constexpr std::size_t kBaseVocab = 257;

  using Merge = std::pair<std::int32_t, std::int32_t>;

  BpeTokenizer();  // byte level, no merges

  // Greedy most-frequent-pair merging within pre-tokenized chunks until
  // `vocab_size` ids exist or no pair is left. Ties go to the pair whose
  // (left bytes, right bytes) is lexicographically smallest.
  static BpeTokenizer train(std::string_view corpus, std::size_t vocab_size);

  std::vector<std::int32_t> encode(std::string_view text) const;
  std::string decode(std::span<const std::int32_t> ids) const;

  std::size_t vocab_size() const { return tokens_.size(); }
  const std::vector<Merge>& merges() const { return merges_; }
  const std::string& token_bytes(std::int32_t id) const;

  nlohmann::json to_json() const;
  static BpeTokenizer from_json(const nlohmann::json& j);
  void save(const std::filesystem::path& path) const;
  static BpeTokenizer load(const std::filesystem::path& path);

 private:
  void add_merge(Merge m);

  std::vector<Merge> merges_;
  std::vector<std::string> tokens_;
};

// Pre-tokenization: each chunk is at most one leading whitespace byte followed by
// the maximal run of non-whitespace bytes. Concatenating the chunks gives `text`.
std::vector<std::string_view> split_chunks(std::string_view text);

}  // namespace dstf
