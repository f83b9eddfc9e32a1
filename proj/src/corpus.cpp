#include "ipa/corpus.hpp"

#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "ipa/errors.hpp"
#include "ipa/random.hpp"

namespace ipa {

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

namespace {

void require_nonempty(const TokenStreams& s) {
  if (s.train.empty()) throw ContractError("load_corpus: train split is empty");
  if (s.valid.empty()) throw ContractError("load_corpus: valid split is empty");
  if (s.test.empty()) throw ContractError("load_corpus: test split is empty");
}

}  // namespace

Corpus load_corpus(const std::filesystem::path& path, const SplitFractions& f,
                   std::size_t target_vocab, const Tokenizer* tokenizer) {
  if (f.train <= 0.0 || f.valid < 0.0 || f.test < 0.0 ||
      std::abs(f.train + f.valid + f.test - 1.0) > 1e-9) {
    throw ContractError("load_corpus: split fractions must be non-negative and sum to 1");
  }
  const std::string text = read_text_file(path);
  if (text.empty()) throw ContractError("load_corpus: " + path.string() + " is empty");
  const auto train_bytes = static_cast<std::size_t>(std::floor(double(text.size()) * f.train));
  Corpus c{tokenizer ? *tokenizer
                     : Tokenizer::train(std::string_view(text).substr(0, train_bytes), target_vocab),
           {}};
  const auto ids = c.tokenizer.encode(text);
  const auto n = static_cast<double>(ids.size());
  const auto cut1 = static_cast<std::size_t>(std::floor(n * f.train));
  const auto cut2 = static_cast<std::size_t>(std::floor(n * (f.train + f.valid)));
  c.streams.train.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(cut1));
  c.streams.valid.assign(ids.begin() + static_cast<std::ptrdiff_t>(cut1),
                         ids.begin() + static_cast<std::ptrdiff_t>(cut2));
  c.streams.test.assign(ids.begin() + static_cast<std::ptrdiff_t>(cut2), ids.end());
  require_nonempty(c.streams);
  return c;
}

Corpus load_corpus(const std::filesystem::path& train, const std::filesystem::path& valid,
                   const std::filesystem::path& test, std::size_t target_vocab,
                   const Tokenizer* tokenizer) {
  const std::string train_text = read_text_file(train);
  const std::string valid_text = read_text_file(valid);
  const std::string test_text = read_text_file(test);
  if (train_text.empty()) throw ContractError("load_corpus: train split is empty");
  Corpus c{tokenizer ? *tokenizer : Tokenizer::train(train_text, target_vocab), {}};
  c.streams.train = c.tokenizer.encode(train_text);
  c.streams.valid = c.tokenizer.encode(valid_text);
  c.streams.test = c.tokenizer.encode(test_text);
  require_nonempty(c.streams);
  return c;
}

// ---- batching -------------------------------------------------------------

BatchSampler::BatchSampler(std::span<const std::int32_t> stream, std::size_t seq_len,
                           std::size_t batch_size, std::uint64_t seed, bool shuffle)
    : stream_(stream), seq_len_(seq_len), batch_size_(batch_size), seed_(seed), shuffle_(shuffle) {
  if (seq_len_ == 0 || batch_size_ == 0) throw ContractError("BatchSampler: zero length or batch");
  windows_ = stream_.size() > seq_len_ ? (stream_.size() - 1) / seq_len_ : 0;
  if (windows_ == 0) {
    throw ContractError("BatchSampler: stream of " + std::to_string(stream_.size()) +
                        " tokens holds no window of " + std::to_string(seq_len_) + " + 1");
  }
}

const std::vector<std::size_t>& BatchSampler::permutation(std::size_t epoch) const {
  if (epoch != cached_epoch_) {
    cached_perm_.resize(windows_);
    std::iota(cached_perm_.begin(), cached_perm_.end(), std::size_t{0});
    if (shuffle_) {
      Rng rng(seed_ ^ (0x9E3779B97F4A7C15ULL * (epoch + 1)));
      for (std::size_t i = windows_; i > 1; --i) {
        std::swap(cached_perm_[i - 1], cached_perm_[rng.below(i)]);
      }
    }
    cached_epoch_ = epoch;
  }
  return cached_perm_;
}

std::size_t BatchSampler::window_at(std::size_t index) const {
  return permutation(index / windows_)[index % windows_];
}

Batch BatchSampler::batch(std::size_t step) const {
  Batch b;
  b.inputs.reserve(batch_size_);
  b.targets.reserve(batch_size_);
  for (std::size_t i = 0; i < batch_size_; ++i) {
    const std::size_t start = window_at(step * batch_size_ + i) * seq_len_;
    const auto first = stream_.begin() + static_cast<std::ptrdiff_t>(start);
    const auto len = static_cast<std::ptrdiff_t>(seq_len_);
    b.inputs.emplace_back(first, first + len);
    b.targets.emplace_back(first + 1, first + 1 + len);
  }
  return b;
}

}  // namespace ipa
