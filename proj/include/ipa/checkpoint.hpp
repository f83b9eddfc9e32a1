#pragma once

// Checkpoint file layout (all integers little-endian):
//
//   "IPA1"
//   u64 length, then that many bytes of UTF-8 JSON (configs, step, tokenizer hash)
//   repeated until end of file:
//     u32 name length, name bytes
//     u8  dtype tag (kDtypeF64 or kDtypeF32)
//     u32 rank, rank x u64 extents
//     raw little-endian element bytes

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "ipa/config.hpp"
#include "ipa/language_model.hpp"
#include "ipa/optimizer.hpp"
#include "ipa/tensor.hpp"

namespace ipa {

inline constexpr char kCheckpointMagic[4] = {'I', 'P', 'A', '1'};
inline constexpr std::uint8_t kDtypeF32 = 1;
inline constexpr std::uint8_t kDtypeF64 = 2;

struct CheckpointRecord {
  json header;
  std::vector<std::pair<std::string, Tensor>> tensors;
};

std::string encode_checkpoint(const CheckpointRecord& record);
// Throws ContractError on a malformed byte stream.
CheckpointRecord decode_checkpoint(std::string_view bytes);

void write_checkpoint(const std::filesystem::path& path, const CheckpointRecord& record);
CheckpointRecord read_checkpoint(const std::filesystem::path& path);

// Snapshot of model parameters ("param/<name>") and Adam moments
// ("adam.m/<name>", "adam.v/<name>"). The header gets kind, model config,
// optimizer step and whatever `extra` holds.
CheckpointRecord capture(const LanguageModel& model, const AdamState& adam, json extra);

// Copies parameters (and moments, if present) back. Names and shapes must
// match exactly; throws ContractError otherwise.
void restore(const CheckpointRecord& record, LanguageModel& model, AdamState* adam);

}  // namespace ipa
