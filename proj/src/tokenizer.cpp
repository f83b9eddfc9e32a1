#include "ipa/tokenizer.hpp"

#include <array>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <tuple>
#include <unordered_set>

#include "ipa/errors.hpp"

namespace ipa {

namespace {

constexpr std::uint64_t pack(std::int32_t a, std::int32_t b) {
  return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(a)) << 32) |
         static_cast<std::uint32_t>(b);
}

bool is_space(unsigned char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f';
}

constexpr std::string_view kAlphabet =
    "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

}  // namespace

// ---- base64 ----------------------------------------------------------------

std::string base64_encode(std::string_view bytes) {
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 2 < bytes.size(); i += 3) {
    const std::uint32_t v = (std::uint32_t(std::uint8_t(bytes[i])) << 16) |
                            (std::uint32_t(std::uint8_t(bytes[i + 1])) << 8) |
                            std::uint8_t(bytes[i + 2]);
    out += kAlphabet[(v >> 18) & 63];
    out += kAlphabet[(v >> 12) & 63];
    out += kAlphabet[(v >> 6) & 63];
    out += kAlphabet[v & 63];
  }
  const std::size_t rest = bytes.size() - i;
  if (rest > 0) {
    std::uint32_t v = std::uint32_t(std::uint8_t(bytes[i])) << 16;
    if (rest == 2) v |= std::uint32_t(std::uint8_t(bytes[i + 1])) << 8;
    out += kAlphabet[(v >> 18) & 63];
    out += kAlphabet[(v >> 12) & 63];
    out += rest == 2 ? kAlphabet[(v >> 6) & 63] : '=';
    out += '=';
  }
  return out;
}

std::string base64_decode(std::string_view text) {
  if (text.size() % 4 != 0) throw ContractError("base64: length is not a multiple of 4");
  std::array<int, 256> lookup{};
  lookup.fill(-1);
  for (std::size_t i = 0; i < kAlphabet.size(); ++i) lookup[std::uint8_t(kAlphabet[i])] = int(i);
  std::string out;
  out.reserve(text.size() / 4 * 3);
  for (std::size_t i = 0; i < text.size(); i += 4) {
    std::uint32_t v = 0;
    int pad = 0;
    for (std::size_t k = 0; k < 4; ++k) {
      const char c = text[i + k];
      int d = 0;
      if (c == '=') {
        if (i + 4 != text.size() || k < 2) throw ContractError("base64: misplaced padding");
        ++pad;
      } else {
        if (pad) throw ContractError("base64: data after padding");
        d = lookup[std::uint8_t(c)];
        if (d < 0) throw ContractError("base64: invalid character");
      }
      v = (v << 6) | std::uint32_t(d);
    }
    out += char((v >> 16) & 0xFF);
    if (pad < 2) out += char((v >> 8) & 0xFF);
    if (pad < 1) out += char(v & 0xFF);
  }
  return out;
}

// ---- pre-tokenization -------------------------------------------------------

std::vector<std::string_view> pretokenize(std::string_view text) {
  std::vector<std::string_view> chunks;
  std::size_t i = 0;
  while (i < text.size()) {
    const auto c = static_cast<unsigned char>(text[i]);
    std::size_t start = i;
    if (is_space(c)) {
      const bool prefix = c == ' ' && i + 1 < text.size() &&
                          !is_space(static_cast<unsigned char>(text[i + 1]));
      if (!prefix) {
        chunks.push_back(text.substr(i, 1));
        ++i;
        continue;
      }
      ++i;  // the space joins the following word
    }
    while (i < text.size() && !is_space(static_cast<unsigned char>(text[i]))) ++i;
    chunks.push_back(text.substr(start, i - start));
  }
  return chunks;
}

// ---- tokenizer --------------------------------------------------------------

Tokenizer::Tokenizer() {
  tokens_.reserve(kBaseVocab);
  for (int b = 0; b < 256; ++b) tokens_.emplace_back(1, static_cast<char>(b));
  tokens_.emplace_back();  // end-of-text
}

void Tokenizer::add_merge(std::int32_t left, std::int32_t right) {
  rank_.emplace(pack(left, right), static_cast<std::int32_t>(merges_.size()));
  merges_.emplace_back(left, right);
  tokens_.push_back(tokens_[static_cast<std::size_t>(left)] + tokens_[static_cast<std::size_t>(right)]);
}

Tokenizer Tokenizer::train(std::string_view corpus, std::size_t target_vocab) {
  if (corpus.empty()) throw ContractError("bpe_train: empty corpus");
  if (target_vocab < kBaseVocab) {
    throw ContractError("bpe_train: target vocabulary must be at least " + std::to_string(kBaseVocab));
  }
  Tokenizer tok;

  struct Word {
    std::vector<std::int32_t> symbols;
    std::int64_t count = 0;
  };
  std::vector<Word> words;
  {
    std::map<std::string_view, std::int64_t> counts;
    for (auto chunk : pretokenize(corpus)) ++counts[chunk];
    words.reserve(counts.size());
    for (const auto& [chunk, count] : counts) {
      if (chunk.size() < 2) continue;
      Word w;
      w.count = count;
      for (char ch : chunk) w.symbols.push_back(static_cast<std::uint8_t>(ch));
      words.push_back(std::move(w));
    }
  }

  std::unordered_set<std::string> known(tok.tokens_.begin(), tok.tokens_.end());
  std::unordered_map<std::uint64_t, std::int64_t> pair_counts;
  while (tok.vocab_size() < target_vocab) {
    pair_counts.clear();
    for (const auto& w : words) {
      for (std::size_t i = 0; i + 1 < w.symbols.size(); ++i) {
        pair_counts[pack(w.symbols[i], w.symbols[i + 1])] += w.count;
      }
    }
    // Pairs whose concatenation is already a token are skipped so that ids
    // and byte strings stay in one-to-one correspondence.
    std::int64_t best_count = 0;
    std::int32_t best_left = -1, best_right = -1;
    for (const auto& [key, count] : pair_counts) {
      if (count < 2 || count < best_count) continue;
      const auto left = static_cast<std::int32_t>(key >> 32);
      const auto right = static_cast<std::int32_t>(key & 0xFFFFFFFFu);
      const auto& ls = tok.tokens_[std::size_t(left)];
      const auto& rs = tok.tokens_[std::size_t(right)];
      if (count == best_count && best_left >= 0) {
        const auto& bl = tok.tokens_[std::size_t(best_left)];
        const auto& br = tok.tokens_[std::size_t(best_right)];
        if (std::tie(ls, rs) >= std::tie(bl, br)) continue;
      }
      if (known.contains(ls + rs)) continue;
      best_count = count;
      best_left = left;
      best_right = right;
    }
    if (best_left < 0) break;  // no pair occurs at least twice

    const auto merged = static_cast<std::int32_t>(tok.vocab_size());
    tok.add_merge(best_left, best_right);
    known.insert(tok.tokens_.back());
    for (auto& w : words) {
      auto& s = w.symbols;
      std::size_t out = 0;
      for (std::size_t i = 0; i < s.size(); ++i) {
        if (i + 1 < s.size() && s[i] == best_left && s[i + 1] == best_right) {
          s[out++] = merged;
          ++i;
        } else {
          s[out++] = s[i];
        }
      }
      s.resize(out);
    }
  }
  return tok;
}

std::vector<std::int32_t> Tokenizer::encode_chunk(std::string_view chunk) const {
  std::vector<std::int32_t> s;
  s.reserve(chunk.size());
  for (char ch : chunk) s.push_back(static_cast<std::uint8_t>(ch));
  // Merging the lowest-ranked pair first equals applying the merge list in
  // order: a merge can only create pairs whose merges come later in the list.
  while (s.size() > 1) {
    std::int32_t best = -1;
    for (std::size_t i = 0; i + 1 < s.size(); ++i) {
      auto it = rank_.find(pack(s[i], s[i + 1]));
      if (it != rank_.end() && (best < 0 || it->second < best)) best = it->second;
    }
    if (best < 0) break;
    const auto [left, right] = merges_[static_cast<std::size_t>(best)];
    const auto merged = static_cast<std::int32_t>(kBaseVocab) + best;
    std::size_t out = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (i + 1 < s.size() && s[i] == left && s[i + 1] == right) {
        s[out++] = merged;
        ++i;
      } else {
        s[out++] = s[i];
      }
    }
    s.resize(out);
  }
  return s;
}

std::vector<std::int32_t> Tokenizer::encode(std::string_view text) const {
  std::vector<std::int32_t> ids;
  ids.reserve(text.size() / 2);
  std::unordered_map<std::string_view, std::vector<std::int32_t>> cache;
  for (auto chunk : pretokenize(text)) {
    auto it = cache.find(chunk);
    if (it == cache.end()) it = cache.emplace(chunk, encode_chunk(chunk)).first;
    ids.insert(ids.end(), it->second.begin(), it->second.end());
  }
  return ids;
}

const std::string& Tokenizer::token(std::int32_t id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw IndexError("tokenizer: id " + std::to_string(id) + " outside [0, " +
                     std::to_string(tokens_.size()) + ")");
  }
  return tokens_[static_cast<std::size_t>(id)];
}

std::string Tokenizer::decode(std::span<const std::int32_t> ids) const {
  std::string out;
  for (auto id : ids) out += token(id);
  return out;
}

std::string Tokenizer::serialize() const {
  std::string out;
  out += kFormatTag;
  out += '\n';
  out += std::to_string(tokens_.size());
  out += '\n';
  for (const auto& t : tokens_) {
    out += base64_encode(t);
    out += '\n';
  }
  for (const auto& [l, r] : merges_) {
    out += std::to_string(l);
    out += ' ';
    out += std::to_string(r);
    out += '\n';
  }
  return out;
}

Tokenizer Tokenizer::parse(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) throw ContractError("tokenizer file: missing final newline");
    lines.push_back(text.substr(pos, nl - pos));
    pos = nl + 1;
  }
  if (lines.size() < 2 || lines[0] != kFormatTag) throw ContractError("tokenizer file: bad format tag");
  std::size_t vocab = 0;
  const auto vline = lines[1];
  if (std::from_chars(vline.data(), vline.data() + vline.size(), vocab).ec != std::errc{} ||
      vocab < kBaseVocab) {
    throw ContractError("tokenizer file: bad vocabulary size");
  }
  if (lines.size() != 2 + vocab + (vocab - kBaseVocab)) {
    throw ContractError("tokenizer file: expected " + std::to_string(vocab - kBaseVocab) + " merges");
  }
  Tokenizer tok;
  for (std::size_t i = 0; i < kBaseVocab; ++i) {
    if (base64_decode(lines[2 + i]) != tok.tokens_[i]) {
      throw ContractError("tokenizer file: base token " + std::to_string(i) + " altered");
    }
  }
  for (std::size_t i = 0; i < vocab - kBaseVocab; ++i) {
    const auto line = lines[2 + vocab + i];
    const auto sp = line.find(' ');
    std::int32_t l = -1, r = -1;
    if (sp == std::string_view::npos ||
        std::from_chars(line.data(), line.data() + sp, l).ec != std::errc{} ||
        std::from_chars(line.data() + sp + 1, line.data() + line.size(), r).ec != std::errc{}) {
      throw ContractError("tokenizer file: malformed merge line " + std::to_string(i));
    }
    const auto next = static_cast<std::int32_t>(tok.vocab_size());
    if (l < 0 || r < 0 || l >= next || r >= next) {
      throw ContractError("tokenizer file: merge " + std::to_string(i) + " references unknown ids");
    }
    tok.add_merge(l, r);
    if (base64_decode(lines[2 + kBaseVocab + i]) != tok.tokens_.back()) {
      throw ContractError("tokenizer file: token " + std::to_string(next) + " disagrees with its merge");
    }
  }
  return tok;
}

void Tokenizer::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write tokenizer file " + path.string());
  const auto text = serialize();
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw IoError("failed writing tokenizer file " + path.string());
}

Tokenizer Tokenizer::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read tokenizer file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

std::string Tokenizer::fingerprint() const {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : serialize()) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace ipa
