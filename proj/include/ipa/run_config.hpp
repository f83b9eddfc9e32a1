#pragma once

// Experiment description consumed by `ipa train`:
//
//   {
//     "kind": "ipa" | "gpt",
//     "model": { ModelConfig or GPTConfig fields },
//     "train": { TrainConfig fields },
//     "data": {
//       "corpus": PATH, "split": {"train": .8, "valid": .1, "test": .1}
//         or "train": PATH, "valid": PATH, "test": PATH,
//       "vocab": N,            // target size when training a tokenizer
//       "tokenizer": PATH      // optional: reuse an existing tokenizer file
//     },
//     "output": {"checkpoint": PATH, "metrics": PATH, "tokenizer": PATH}
//   }
//
// Unknown keys anywhere are rejected. Relative paths resolve against the
// directory of the config file. model.vocab may be omitted; it is then taken
// from the tokenizer, and if given it must match it.

#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include "ipa/checkpoint.hpp"
#include "ipa/config.hpp"
#include "ipa/corpus.hpp"
#include "ipa/grad_check.hpp"
#include "ipa/language_model.hpp"

namespace ipa {

struct DataConfig {
  std::filesystem::path corpus;
  SplitFractions split;
  std::filesystem::path train, valid, test;
  std::size_t vocab = 1024;
  std::filesystem::path tokenizer;
};

struct OutputConfig {
  std::filesystem::path checkpoint;
  std::filesystem::path metrics;
  std::filesystem::path tokenizer;
};

struct RunConfig {
  std::string kind = "ipa";
  json model;  // validated as ModelConfig or GPTConfig depending on kind
  TrainConfig train;
  DataConfig data;
  OutputConfig output;
  bool model_vocab_given = false;

  // Throws ConfigError naming the offending field.
  static RunConfig from_json(const json& j, const std::filesystem::path& base_dir);
  static RunConfig load(const std::filesystem::path& path);
  bool uses_split_files() const { return data.corpus.empty(); }
  // Fully resolved form; every field appears explicitly.
  json to_json() const;

  Corpus load_data() const;
  // Model config with the tokenizer's vocabulary filled in.
  json resolved_model(std::size_t vocab) const;
};

// Builds an "ipa" or "gpt" model from its config JSON.
std::unique_ptr<LanguageModel> make_model(const std::string& kind, const json& model,
                                          std::uint64_t seed);

// Model rebuilt from a checkpoint header and loaded with its parameters.
std::unique_ptr<LanguageModel> model_from_checkpoint(const CheckpointRecord& record);
// Tokenizer stored in a checkpoint written by `ipa train`.
Tokenizer tokenizer_from_checkpoint(const CheckpointRecord& record);

// Tiny models used by `ipa gradcheck`: IPA with V=20, n=8, m=6, L=2, P_col=2,
// P_row=2, k=3, and the GPT matched to it (n=8, H=2, d_ff=16).
ModelConfig tiny_ipa_config();
GPTConfig tiny_gpt_config();
// Finite-difference check of every parameter of the tiny `kind` model on a
// random length-m sequence drawn from `seed`.
ad::GradCheckReport tiny_gradcheck(const std::string& kind, std::uint64_t seed);

}  // namespace ipa
