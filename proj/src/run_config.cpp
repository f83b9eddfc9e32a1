#include "ipa/run_config.hpp"

#include <cmath>
#include <fstream>

#include "field_reader.hpp"
#include "ipa/errors.hpp"
#include "ipa/gpt_model.hpp"
#include "ipa/ipa_model.hpp"
#include "ipa/random.hpp"

namespace ipa {

namespace {

using detail::FieldReader;

std::filesystem::path resolve(const std::string& p, const std::filesystem::path& base) {
  if (p.empty()) return {};
  std::filesystem::path path(p);
  return path.is_absolute() ? path : base / path;
}

json model_schema_check(const std::string& kind, const json& model) {
  // Round trip through the typed config so unknown keys and bad types fail here.
  if (kind == "ipa") return ModelConfig::from_json(model).to_json();
  return GPTConfig::from_json(model).to_json();
}

void validate_model(const std::string& kind, const json& resolved) {
  if (kind == "ipa") ModelConfig::from_json(resolved).validate();
  else GPTConfig::from_json(resolved).validate();
}

}  // namespace

RunConfig RunConfig::from_json(const json& j, const std::filesystem::path& base_dir) {
  RunConfig rc;
  json model = json::object();
  bool has_model = false;
  std::string corpus, train, valid, test, tokenizer;
  std::string out_ckpt, out_metrics, out_tok;
  FieldReader(j, "config")
      .text("kind", rc.kind)
      .value("model",
             [&](const json& v) {
               model = v;
               has_model = true;
             })
      .value("train", [&](const json& v) { rc.train = TrainConfig::from_json(v); })
      .value("data",
             [&](const json& v) {
               FieldReader(v, "data")
                   .text("corpus", corpus)
                   .text("train", train)
                   .text("valid", valid)
                   .text("test", test)
                   .size("vocab", rc.data.vocab)
                   .text("tokenizer", tokenizer)
                   .value("split",
                          [&](const json& s) {
                            FieldReader(s, "data.split")
                                .real("train", rc.data.split.train)
                                .real("valid", rc.data.split.valid)
                                .real("test", rc.data.split.test)
                                .finish();
                          })
                   .finish();
             })
      .value("output",
             [&](const json& v) {
               FieldReader(v, "output")
                   .text("checkpoint", out_ckpt)
                   .text("metrics", out_metrics)
                   .text("tokenizer", out_tok)
                   .finish();
             })
      .finish();

  if (rc.kind != "ipa" && rc.kind != "gpt") throw ConfigError("kind", "must be \"ipa\" or \"gpt\"");
  if (!has_model) throw ConfigError("model", "missing");
  rc.model_vocab_given = model.is_object() && model.contains("vocab");
  rc.model = model_schema_check(rc.kind, model);
  rc.train.validate();

  const bool split_files = !train.empty() || !valid.empty() || !test.empty();
  if (corpus.empty() == !split_files) {
    throw ConfigError("data.corpus", "give either a corpus file or train/valid/test files");
  }
  if (split_files && (train.empty() || valid.empty() || test.empty())) {
    throw ConfigError("data.train", "train, valid and test files must all be given");
  }
  const auto& f = rc.data.split;
  if (f.train <= 0.0 || f.valid < 0.0 || f.test <= 0.0 ||
      std::abs(f.train + f.valid + f.test - 1.0) > 1e-9) {
    throw ConfigError("data.split", "fractions must be non-negative and sum to 1");
  }
  if (tokenizer.empty() && rc.data.vocab < Tokenizer::kBaseVocab) {
    throw ConfigError("data.vocab", "must be at least 257");
  }
  rc.data.corpus = resolve(corpus, base_dir);
  rc.data.train = resolve(train, base_dir);
  rc.data.valid = resolve(valid, base_dir);
  rc.data.test = resolve(test, base_dir);
  rc.data.tokenizer = resolve(tokenizer, base_dir);
  if (out_ckpt.empty()) throw ConfigError("output.checkpoint", "missing");
  if (out_metrics.empty()) throw ConfigError("output.metrics", "missing");
  rc.output = {resolve(out_ckpt, base_dir), resolve(out_metrics, base_dir), resolve(out_tok, base_dir)};
  // Structural checks that do not need the vocabulary.
  auto probe = rc.model;
  probe["vocab"] = std::max<std::size_t>(probe["vocab"].get<std::size_t>(), 1);
  validate_model(rc.kind, probe);
  if (rc.train.seq_len > probe["m_max"].get<std::size_t>()) {
    throw ConfigError("train.seq_len", "exceeds model.m_max");
  }
  return rc;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config", std::string("not valid JSON: ") + e.what());
  }
  return from_json(j, std::filesystem::absolute(path).parent_path());
}

json RunConfig::to_json() const {
  json data = json::object();
  if (!uses_split_files()) {
    data["corpus"] = this->data.corpus.string();
    data["split"] = {{"train", this->data.split.train},
                     {"valid", this->data.split.valid},
                     {"test", this->data.split.test}};
  } else {
    data["train"] = this->data.train.string();
    data["valid"] = this->data.valid.string();
    data["test"] = this->data.test.string();
  }
  data["vocab"] = this->data.vocab;
  if (!this->data.tokenizer.empty()) data["tokenizer"] = this->data.tokenizer.string();
  json out{{"checkpoint", output.checkpoint.string()}, {"metrics", output.metrics.string()}};
  if (!output.tokenizer.empty()) out["tokenizer"] = output.tokenizer.string();
  return json{{"kind", kind}, {"model", model}, {"train", train.to_json()}, {"data", data},
              {"output", out}};
}

Corpus RunConfig::load_data() const {
  std::optional<Tokenizer> tok;
  if (!data.tokenizer.empty()) tok = Tokenizer::load(data.tokenizer);
  const Tokenizer* given = tok ? &*tok : nullptr;
  if (uses_split_files()) return load_corpus(data.train, data.valid, data.test, data.vocab, given);
  return load_corpus(data.corpus, data.split, data.vocab, given);
}

json RunConfig::resolved_model(std::size_t vocab) const {
  json m = model;
  if (model_vocab_given && m["vocab"].get<std::size_t>() != vocab) {
    throw ConfigError("model.vocab", "is " + m["vocab"].dump() + " but the tokenizer has " +
                                         std::to_string(vocab) + " tokens");
  }
  m["vocab"] = vocab;
  validate_model(kind, m);
  return m;
}

std::unique_ptr<LanguageModel> make_model(const std::string& kind, const json& model,
                                          std::uint64_t seed) {
  if (kind == "ipa") return std::make_unique<IPAModel>(ModelConfig::from_json(model), seed);
  if (kind == "gpt") return std::make_unique<GPTModel>(GPTConfig::from_json(model), seed);
  throw ConfigError("kind", "unknown model kind \"" + kind + "\"");
}

std::unique_ptr<LanguageModel> model_from_checkpoint(const CheckpointRecord& record) {
  const auto& h = record.header;
  if (!h.contains("kind") || !h.contains("model")) {
    throw ContractError("checkpoint header lacks the model kind or config");
  }
  auto model = make_model(h["kind"].get<std::string>(), h["model"], 0);
  restore(record, *model, nullptr);
  return model;
}

Tokenizer tokenizer_from_checkpoint(const CheckpointRecord& record) {
  const auto it = record.header.find("tokenizer");
  if (it == record.header.end() || !it->is_string()) {
    throw ContractError("checkpoint carries no tokenizer");
  }
  return Tokenizer::parse(it->get<std::string>());
}

ModelConfig tiny_ipa_config() {
  ModelConfig c;
  c.vocab = 20;
  c.n = 8;
  c.m_max = 6;
  c.layers = 2;
  c.p_col = 2;
  c.p_row = 2;
  c.k = 3;
  return c;
}

GPTConfig tiny_gpt_config() { return GPTConfig::matched_to(tiny_ipa_config()); }

ad::GradCheckReport tiny_gradcheck(const std::string& kind, std::uint64_t seed) {
  const auto ipa = tiny_ipa_config();
  std::unique_ptr<LanguageModel> model;
  if (kind == "ipa") model = std::make_unique<IPAModel>(ipa, seed);
  else if (kind == "gpt") model = std::make_unique<GPTModel>(tiny_gpt_config(), seed);
  else throw ConfigError("model_kind", "must be ipa or gpt");
  Rng rng(seed ^ 0x5bd1e995ULL);
  std::vector<std::int32_t> ids(ipa.m_max), targets(ipa.m_max);
  for (auto& t : ids) t = static_cast<std::int32_t>(rng.below(ipa.vocab));
  for (auto& t : targets) t = static_cast<std::int32_t>(rng.below(ipa.vocab));
  auto loss = [&] { return ad::cross_entropy(model->forward(ids), targets); };
  return ad::grad_check(loss, model->parameters());
}

}  // namespace ipa
