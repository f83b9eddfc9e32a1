#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "ipa/tokenizer.hpp"

namespace ipa {

using TokenStream = std::vector<std::int32_t>;

struct TokenStreams {
  TokenStream train;
  TokenStream valid;
  TokenStream test;
};

struct Corpus {
  Tokenizer tokenizer;
  TokenStreams streams;
};

struct SplitFractions {
  double train = 0.8;
  double valid = 0.1;
  double test = 0.1;
};

// Whole file as bytes. Throws IoError if it cannot be read.
std::string read_text_file(const std::filesystem::path& path);

// Single file split by fractions. The tokenizer (unless supplied) is trained
// on the leading train fraction of the bytes only; the encoded stream is then
// cut at floor(N * train) and floor(N * (train + valid)) tokens.
// Throws ContractError if a split comes out empty or fractions are invalid.
Corpus load_corpus(const std::filesystem::path& path, const SplitFractions& fractions,
                   std::size_t target_vocab, const Tokenizer* tokenizer = nullptr);

// Pre-split train/valid/test files; the tokenizer sees the train file only.
Corpus load_corpus(const std::filesystem::path& train, const std::filesystem::path& valid,
                   const std::filesystem::path& test, std::size_t target_vocab,
                   const Tokenizer* tokenizer = nullptr);

// B sequences of m ids and their next-token targets.
struct Batch {
  std::vector<TokenStream> inputs;
  std::vector<TokenStream> targets;
};

// Serves non-overlapping windows stream[w*m, w*m + m) with targets shifted by
// one. Window order is a fresh permutation every epoch (identity when
// shuffling is off), and batch(step) depends only on (seed, step).
class BatchSampler {
 public:
  BatchSampler(std::span<const std::int32_t> stream, std::size_t seq_len, std::size_t batch_size,
               std::uint64_t seed, bool shuffle = true);

  std::size_t windows() const noexcept { return windows_; }
  Batch batch(std::size_t step) const;
  // Index of the window served as entry `index` of the global window sequence.
  std::size_t window_at(std::size_t index) const;

 private:
  const std::vector<std::size_t>& permutation(std::size_t epoch) const;

  std::span<const std::int32_t> stream_;
  std::size_t seq_len_;
  std::size_t batch_size_;
  std::uint64_t seed_;
  bool shuffle_;
  std::size_t windows_;
  mutable std::size_t cached_epoch_ = static_cast<std::size_t>(-1);
  mutable std::vector<std::size_t> cached_perm_;
};

}  // namespace ipa
