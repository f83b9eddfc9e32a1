#pragma once

#include <cstddef>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "ipa/config.hpp"

namespace ipa {

// One JSONL line: {"step", "split", "loss", "ms_per_iter", "params"}.
struct MetricsRecord {
  std::size_t step = 0;
  std::string split;
  double loss = 0.0;
  double ms_per_iter = 0.0;
  std::size_t params = 0;

  // Serialized with the fields in the order above.
  std::string to_line() const;
  static MetricsRecord from_json(const json& j);
};

class MetricsWriter {
 public:
  MetricsWriter() = default;
  // Truncates unless `append` is set. Throws IoError if the file cannot be opened.
  MetricsWriter(const std::filesystem::path& path, bool append);

  bool is_open() const { return out_.is_open(); }
  void write(const MetricsRecord& record);

 private:
  std::ofstream out_;
};

std::vector<MetricsRecord> read_metrics(const std::filesystem::path& path);

}  // namespace ipa
