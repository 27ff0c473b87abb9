#include "dstf/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numeric>

#include "dstf/errors.hpp"
#include "dstf/ops.hpp"
#include "dstf/rng.hpp"

namespace dstf {

std::size_t Corpus::bytes() const {
  std::size_t n = 0;
  for (const auto& d : documents) n += d.size();
  return n;
}

Corpus parse_corpus(std::string_view text) {
  Corpus corpus;
  std::string current;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    const bool has_newline = end != std::string_view::npos;
    if (!has_newline) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line == "\x1e") {
      if (!current.empty()) corpus.documents.push_back(std::move(current));
      current.clear();
    } else {
      current.append(text.substr(pos, (has_newline ? end + 1 : end) - pos));
    }
    pos = has_newline ? end + 1 : end;
  }
  if (!current.empty()) corpus.documents.push_back(std::move(current));
  return corpus;
}

Corpus load_corpus(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("corpus: cannot open " + path.string());
  const std::string text((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  Corpus corpus = parse_corpus(text);
  if (corpus.documents.empty()) throw DataError("corpus: " + path.string() + " holds no text");
  return corpus;
}

Dataset::Dataset(const Corpus& corpus, const BpeTokenizer& tokenizer, std::size_t seq_len) : seq_len_(seq_len) {
  if (seq_len == 0) throw ConfigError("dataset: sequence length must be positive");
  for (const auto& doc : corpus.documents) {
    auto ids = tokenizer.encode(doc);
    ids.push_back(BpeTokenizer::kEndOfText);
    // Prediction pairs (ids[i], ids[i+1]) for i < n-1, chunked into windows of T.
    const std::size_t pairs = ids.size() - 1;
    for (std::size_t start = 0; start < pairs; start += seq_len) {
      Window w;
      w.inputs.assign(seq_len, BpeTokenizer::kEndOfText);
      w.targets.assign(seq_len, kIgnoreIndex);
      const std::size_t n = std::min(seq_len, pairs - start);
      for (std::size_t i = 0; i < n; ++i) {
        w.inputs[i] = ids[start + i];
        w.targets[i] = ids[start + i + 1];
      }
      windows_.push_back(std::move(w));
    }
  }
}

std::size_t Dataset::target_count() const {
  std::size_t n = 0;
  for (const auto& w : windows_) n += std::count_if(w.targets.begin(), w.targets.end(), [](auto t) { return t >= 0; });
  return n;
}

Batch Dataset::gather(const std::vector<std::size_t>& indices) const {
  if (indices.empty()) throw UsageError("dataset: empty batch");
  const std::size_t B = indices.size(), T = seq_len_;
  std::vector<std::int32_t> in, tg;
  in.reserve(B * T);
  tg.reserve(B * T);
  for (auto i : indices) {
    const auto& w = windows_.at(i);
    in.insert(in.end(), w.inputs.begin(), w.inputs.end());
    tg.insert(tg.end(), w.targets.begin(), w.targets.end());
  }
  return {TokenIds(Shape{B, T}, std::move(in)), TokenIds(Shape{B, T}, std::move(tg))};
}

Batch Dataset::batch(std::size_t first, std::size_t count) const {
  std::vector<std::size_t> idx(count);
  std::iota(idx.begin(), idx.end(), first);
  return gather(idx);
}

std::pair<Corpus, Corpus> split_corpus(const Corpus& corpus, double val_fraction) {
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) throw ConfigError("data.val_fraction must lie in (0, 1)");
  const std::size_t n = corpus.documents.size();
  if (n < 2) throw DataError("corpus: need at least 2 documents to split off validation data");
  std::size_t n_val = static_cast<std::size_t>(std::ceil(val_fraction * static_cast<double>(n)));
  n_val = std::clamp<std::size_t>(n_val, 1, n - 1);
  Corpus train, val;
  train.documents.assign(corpus.documents.begin(), corpus.documents.end() - static_cast<std::ptrdiff_t>(n_val));
  val.documents.assign(corpus.documents.end() - static_cast<std::ptrdiff_t>(n_val), corpus.documents.end());
  return {std::move(train), std::move(val)};
}

BatchIterator::BatchIterator(const Dataset& data, std::size_t batch_size, std::uint64_t seed)
    : data_(&data), batch_size_(batch_size), seed_(seed) {
  if (batch_size == 0) throw ConfigError("train.batch_size must be positive");
  if (data.size() < batch_size) {
    throw DataError("dataset: " + std::to_string(data.size()) + " windows cannot fill a batch of " +
                    std::to_string(batch_size));
  }
  reshuffle();
}

void BatchIterator::reshuffle() {
  order_.resize(data_->size());
  std::iota(order_.begin(), order_.end(), 0);
  Rng rng = Rng::for_stream(seed_, "batches." + std::to_string(epoch_));
  for (std::size_t i = order_.size(); i > 1; --i) std::swap(order_[i - 1], order_[rng.below(i)]);
  cursor_ = 0;
}

Batch BatchIterator::next() {
  if (cursor_ + batch_size_ > order_.size()) {
    ++epoch_;
    reshuffle();
  }
  std::vector<std::size_t> idx(order_.begin() + static_cast<std::ptrdiff_t>(cursor_),
                               order_.begin() + static_cast<std::ptrdiff_t>(cursor_ + batch_size_));
  cursor_ += batch_size_;
  return data_->gather(idx);
}

}  // namespace dstf
