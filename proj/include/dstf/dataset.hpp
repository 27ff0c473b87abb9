#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dstf/bpe.hpp"
#include "dstf/tensor.hpp"

namespace dstf {

// Documents of a UTF-8 corpus. A line holding only "\x1e" separates documents.
struct Corpus {
  std::vector<std::string> documents;

  std::size_t bytes() const;
};

Corpus parse_corpus(std::string_view text);
Corpus load_corpus(const std::filesystem::path& path);

// One training sequence: `inputs` and next-token `targets`, both of length T.
// Padding positions carry kEndOfText inputs and kIgnoreIndex targets.
struct Window {
  std::vector<std::int32_t> inputs;
  std::vector<std::int32_t> targets;
};

struct Batch {
  TokenIds inputs;   // [B, T]
  TokenIds targets;  // [B, T]
};

// Fixed-length windows that never cross a document boundary. Each document is
// followed by an end-of-text token, so the model learns to close documents.
class Dataset {
 public:
  Dataset() = default;
  Dataset(const Corpus& corpus, const BpeTokenizer& tokenizer, std::size_t seq_len);

  std::size_t size() const { return windows_.size(); }
  bool empty() const { return windows_.empty(); }
  std::size_t seq_len() const { return seq_len_; }
  std::size_t target_count() const;  // non-ignored targets
  const Window& window(std::size_t i) const { return windows_.at(i); }

  // Windows [first, first + count) stacked into one batch.
  Batch batch(std::size_t first, std::size_t count) const;
  Batch gather(const std::vector<std::size_t>& indices) const;

 private:
  std::size_t seq_len_ = 0;
  std::vector<Window> windows_;
};

// Splits off the last ceil(fraction * n) documents (at least one) as validation data.
std::pair<Corpus, Corpus> split_corpus(const Corpus& corpus, double val_fraction);

// Endless shuffled batches of B windows; every epoch is a fresh permutation
// drawn from (seed, epoch), and a trailing partial batch is dropped.
class BatchIterator {
 public:
  BatchIterator(const Dataset& data, std::size_t batch_size, std::uint64_t seed);

  Batch next();
  std::size_t epoch() const { return epoch_; }
  std::size_t batches_per_epoch() const { return data_->size() / batch_size_; }

 private:
  void reshuffle();

  const Dataset* data_;
  std::size_t batch_size_;
  std::uint64_t seed_;
  std::size_t epoch_ = 0;
  std::size_t cursor_ = 0;
  std::vector<std::size_t> order_;
};

}  // namespace dstf
