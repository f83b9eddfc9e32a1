#include "ipa/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "ipa/errors.hpp"

namespace ipa {

namespace {

template <typename T>
void put(std::string& out, T value) {
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    out += static_cast<char>((static_cast<std::uint64_t>(value) >> (8 * i)) & 0xFF);
  }
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  bool done() const { return pos_ == bytes_.size(); }
  std::size_t remaining() const { return bytes_.size() - pos_; }

  template <typename T>
  T get() {
    need(sizeof(T));
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      v |= static_cast<std::uint64_t>(static_cast<std::uint8_t>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += sizeof(T);
    return static_cast<T>(v);
  }

  std::string_view take(std::size_t n) {
    need(n);
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw ContractError("checkpoint: truncated stream");
  }

  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string encode_checkpoint(const CheckpointRecord& record) {
  std::string out(kCheckpointMagic, 4);
  const std::string header = record.header.dump();
  put<std::uint64_t>(out, header.size());
  out += header;
  for (const auto& [name, t] : record.tensors) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    put<std::uint8_t>(out, kDtypeF64);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
    for (auto e : t.shape()) put<std::uint64_t>(out, e);
    for (double v : t.values()) put<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
  }
  return out;
}

CheckpointRecord decode_checkpoint(std::string_view bytes) {
  Reader r(bytes);
  if (r.take(4) != std::string_view(kCheckpointMagic, 4)) {
    throw ContractError("checkpoint: bad magic");
  }
  CheckpointRecord rec;
  const auto header_len = r.get<std::uint64_t>();
  try {
    rec.header = json::parse(r.take(header_len));
  } catch (const json::parse_error& e) {
    throw ContractError(std::string("checkpoint: header is not JSON: ") + e.what());
  }
  while (!r.done()) {
    const auto name_len = r.get<std::uint32_t>();
    std::string name(r.take(name_len));
    const auto dtype = r.get<std::uint8_t>();
    const auto rank = r.get<std::uint32_t>();
    if (rank == 0 || rank > 8) throw ContractError("checkpoint: bad rank for " + name);
    Shape shape(rank);
    std::size_t count = 1;
    for (auto& e : shape) {
      e = r.get<std::uint64_t>();
      if (e == 0 || e > r.remaining()) throw ContractError("checkpoint: bad extent for " + name);
      count *= e;
    }
    const std::size_t width = dtype == kDtypeF32 ? 4 : 8;
    if (count > r.remaining() / width) throw ContractError("checkpoint: truncated tensor " + name);
    Tensor t(shape);
    for (auto& v : t.values()) {
      if (dtype == kDtypeF64) {
        v = std::bit_cast<double>(r.get<std::uint64_t>());
      } else if (dtype == kDtypeF32) {
        v = static_cast<double>(std::bit_cast<float>(r.get<std::uint32_t>()));
      } else {
        throw ContractError("checkpoint: unknown dtype tag for " + name);
      }
    }
    rec.tensors.emplace_back(std::move(name), std::move(t));
  }
  return rec;
}

void write_checkpoint(const std::filesystem::path& path, const CheckpointRecord& record) {
  const std::string bytes = encode_checkpoint(record);
  // Write-then-rename keeps the previous checkpoint intact on failure.
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write checkpoint " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("failed writing checkpoint " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move checkpoint into place at " + path.string());
}

CheckpointRecord read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read checkpoint " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return decode_checkpoint(ss.str());
}

CheckpointRecord capture(const LanguageModel& model, const AdamState& adam, json extra) {
  CheckpointRecord rec;
  rec.header = std::move(extra);
  rec.header["kind"] = model.kind();
  rec.header["model"] = model.config_json();
  rec.header["optimizer_step"] = adam.step;
  const auto params = model.parameters();
  for (const auto& p : params) rec.tensors.emplace_back("param/" + p.name, p.var.value());
  if (!adam.first.empty()) {
    for (std::size_t k = 0; k < params.size(); ++k) {
      rec.tensors.emplace_back("adam.m/" + params[k].name, adam.first[k]);
      rec.tensors.emplace_back("adam.v/" + params[k].name, adam.second[k]);
    }
  }
  return rec;
}

void restore(const CheckpointRecord& record, LanguageModel& model, AdamState* adam) {
  auto params = model.parameters();
  std::vector<const Tensor*> values(params.size(), nullptr), first(params.size(), nullptr),
      second(params.size(), nullptr);
  auto index_of = [&](std::string_view name) -> std::size_t {
    for (std::size_t k = 0; k < params.size(); ++k) {
      if (params[k].name == name) return k;
    }
    throw ContractError("checkpoint: tensor for unknown parameter '" + std::string(name) + "'");
  };
  for (const auto& [name, t] : record.tensors) {
    const auto slash = name.find('/');
    if (slash == std::string::npos) throw ContractError("checkpoint: unnamespaced tensor " + name);
    const auto ns = std::string_view(name).substr(0, slash);
    const std::size_t k = index_of(std::string_view(name).substr(slash + 1));
    if (t.shape() != params[k].var.shape()) {
      throw ContractError("checkpoint: shape mismatch for " + name + ": " + to_string(t.shape()) +
                          " vs " + to_string(params[k].var.shape()));
    }
    if (ns == "param") values[k] = &t;
    else if (ns == "adam.m") first[k] = &t;
    else if (ns == "adam.v") second[k] = &t;
    else throw ContractError("checkpoint: unknown tensor namespace in " + name);
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (!values[k]) throw ContractError("checkpoint: missing parameter " + params[k].name);
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    params[k].var.mutable_value() = *values[k];
    params[k].var.zero_grad();
  }
  if (adam) {
    adam->step = record.header.value("optimizer_step", std::size_t{0});
    adam->first.clear();
    adam->second.clear();
    const bool has_moments = std::all_of(first.begin(), first.end(), [](auto* t) { return t; }) &&
                             std::all_of(second.begin(), second.end(), [](auto* t) { return t; });
    if (has_moments) {
      for (std::size_t k = 0; k < params.size(); ++k) {
        adam->first.push_back(*first[k]);
        adam->second.push_back(*second[k]);
      }
    }
  }
}

}  // namespace ipa
