#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace ipa {

// Ordered BPE merges as (left id, right id); merge i creates token 257 + i.
using MergeList = std::vector<std::pair<std::int32_t, std::int32_t>>;

// Byte-level BPE tokenizer. Ids 0..255 are the raw bytes, 256 is the
// end-of-text marker (decodes to nothing), and every later id is the
// concatenation of the pair named by its merge.
class Tokenizer {
 public:
  static constexpr std::int32_t kEndOfText = 256;
  static constexpr std::size_t kBaseVocab = 257;
  static constexpr std::string_view kFormatTag = "ipa-bpe-v1";

  // Plain byte-level vocabulary without merges.
  Tokenizer();

  // Greedy most-frequent-pair merging over whitespace-delimited chunks until
  // the vocabulary reaches `target_vocab` or no pair occurs twice. Ties go to
  // the lexicographically smallest (left bytes, right bytes).
  // Throws ContractError for an empty corpus or target_vocab < 257.
  static Tokenizer train(std::string_view corpus, std::size_t target_vocab);

  std::vector<std::int32_t> encode(std::string_view text) const;
  // Throws IndexError for ids outside the vocabulary.
  std::string decode(std::span<const std::int32_t> ids) const;

  std::size_t vocab_size() const noexcept { return tokens_.size(); }
  const std::string& token(std::int32_t id) const;
  const MergeList& merges() const noexcept { return merges_; }

  // Text file: format tag, V, V lines of base64 token bytes, then one
  // "left right" line per merge. Lines end in '\n'.
  std::string serialize() const;
  static Tokenizer parse(std::string_view text);
  void save(const std::filesystem::path& path) const;
  static Tokenizer load(const std::filesystem::path& path);

  // FNV-1a over the serialized form, as 16 hex digits.
  std::string fingerprint() const;

 private:
  void add_merge(std::int32_t left, std::int32_t right);
  std::vector<std::int32_t> encode_chunk(std::string_view chunk) const;

  std::vector<std::string> tokens_;
  MergeList merges_;
  std::unordered_map<std::uint64_t, std::int32_t> rank_;  // packed pair -> merge index
};

// Splits text into merge domains: maximal non-whitespace runs, each taking a
// single directly preceding space as prefix; every other whitespace byte is
// its own chunk. Concatenating the chunks gives back the text.
std::vector<std::string_view> pretokenize(std::string_view text);

std::string base64_encode(std::string_view bytes);
// Throws ContractError on malformed input.
std::string base64_decode(std::string_view text);

}  // namespace ipa
