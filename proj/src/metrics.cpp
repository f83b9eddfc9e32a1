#include "ipa/metrics.hpp"

#include "ipa/errors.hpp"

namespace ipa {

std::string MetricsRecord::to_line() const {
  nlohmann::ordered_json j;
  j["step"] = step;
  j["split"] = split;
  j["loss"] = loss;
  j["ms_per_iter"] = ms_per_iter;
  j["params"] = params;
  return j.dump();
}

MetricsRecord MetricsRecord::from_json(const json& j) {
  MetricsRecord r;
  r.step = j.at("step").get<std::size_t>();
  r.split = j.at("split").get<std::string>();
  r.loss = j.at("loss").get<double>();
  r.ms_per_iter = j.at("ms_per_iter").get<double>();
  r.params = j.at("params").get<std::size_t>();
  return r;
}

MetricsWriter::MetricsWriter(const std::filesystem::path& path, bool append)
    : out_(path, append ? std::ios::app : std::ios::trunc) {
  if (!out_) throw IoError("cannot open metrics file " + path.string());
}

void MetricsWriter::write(const MetricsRecord& record) {
  if (!out_.is_open()) return;
  out_ << record.to_line() << '\n';
  out_.flush();
}

std::vector<MetricsRecord> read_metrics(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read metrics file " + path.string());
  std::vector<MetricsRecord> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) out.push_back(MetricsRecord::from_json(json::parse(line)));
  }
  return out;
}

}  // namespace ipa
