// ipa: command-line driver for tokenizer training, model training,
// evaluation, sampling, gradient checks and parameter accounting.
//
// Exit codes: 0 ok, 2 bad flags/config/contract, 3 numeric failure, 4 I/O.

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include "ipa/checkpoint.hpp"
#include "ipa/corpus.hpp"
#include "ipa/errors.hpp"
#include "ipa/gpt_model.hpp"
#include "ipa/ipa_model.hpp"
#include "ipa/metrics.hpp"
#include "ipa/run_config.hpp"
#include "ipa/tokenizer.hpp"
#include "ipa/trainer.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;
constexpr int kExitIo = 4;

int cmd_tokenizer_train(const std::string& corpus, std::size_t vocab, const std::string& out) {
  const std::string text = ipa::read_text_file(corpus);
  const auto tok = ipa::Tokenizer::train(text, vocab);
  tok.save(out);
  std::cout << "vocab " << tok.vocab_size() << " merges " << tok.merges().size() << " fingerprint "
            << tok.fingerprint() << '\n';
  if (tok.vocab_size() < vocab) {
    std::cerr << "note: corpus has no repeated pair left after " << tok.merges().size()
              << " merges; vocabulary is smaller than requested\n";
  }
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& resume) {
  const auto rc = ipa::RunConfig::load(config_path);
  auto corpus = rc.load_data();
  if (!rc.output.tokenizer.empty()) corpus.tokenizer.save(rc.output.tokenizer);
  const auto model_json = rc.resolved_model(corpus.tokenizer.vocab_size());
  auto model = ipa::make_model(rc.kind, model_json, rc.train.seed);

  auto echo = rc.to_json();
  echo["model"] = model_json;
  ipa::TrainOptions options;
  options.metrics_path = rc.output.metrics;
  options.checkpoint_path = rc.output.checkpoint;
  options.last_checkpoint_path = rc.output.checkpoint;
  options.last_checkpoint_path += ".last";
  options.checkpoint_extra = {{"run_config", echo},
                              {"tokenizer", corpus.tokenizer.serialize()},
                              {"tokenizer_hash", corpus.tokenizer.fingerprint()}};
  options.on_record = [](const ipa::MetricsRecord& r) { std::cout << r.to_line() << std::endl; };

  ipa::TrainState state;
  if (!resume.empty()) {
    const auto record = ipa::read_checkpoint(resume);
    if (record.header.value("tokenizer_hash", std::string()) != corpus.tokenizer.fingerprint()) {
      throw ipa::ConfigError("data.tokenizer", "resume checkpoint was trained with another tokenizer");
    }
    if (record.header.value("kind", std::string()) != rc.kind ||
        record.header.value("model", ipa::json()) != model_json) {
      throw ipa::ConfigError("model", "resume checkpoint holds a different model configuration");
    }
    state = ipa::restore_training(record, *model);
    options.append_metrics = true;
  }
  ipa::train(*model, corpus.streams, rc.train, options, state);
  std::cerr << "finished at step " << state.step << ", best test loss " << state.best_test_loss
            << '\n';
  return 0;
}

int cmd_eval(const std::string& checkpoint, const std::string& corpus_path, std::size_t m,
             std::size_t batch, const std::string& metrics) {
  const auto record = ipa::read_checkpoint(checkpoint);
  const auto model = ipa::model_from_checkpoint(record);
  const auto tok = ipa::tokenizer_from_checkpoint(record);
  const auto ids = tok.encode(ipa::read_text_file(corpus_path));
  if (m == 0) m = model->max_length();
  if (m > model->max_length()) throw ipa::ConfigError("m", "exceeds the model's m_max");
  const double loss = ipa::evaluate(*model, ids, m, batch);
  const ipa::MetricsRecord r{record.header.value("step", std::size_t{0}), "eval", loss, 0.0,
                             model->parameter_count()};
  std::cout << r.to_line() << '\n';
  if (!metrics.empty()) ipa::MetricsWriter(metrics, true).write(r);
  return 0;
}

int cmd_generate(const std::string& checkpoint, const std::string& prompt, std::size_t max_new,
                 double temperature, std::uint64_t seed) {
  const auto record = ipa::read_checkpoint(checkpoint);
  const auto model = ipa::model_from_checkpoint(record);
  const auto tok = ipa::tokenizer_from_checkpoint(record);
  const auto ids = ipa::generate(*model, tok.encode(prompt), max_new, temperature, seed);
  std::cout << tok.decode(ids) << '\n';
  return 0;
}

int cmd_gradcheck(const std::string& kind, std::uint64_t seed) {
  const auto report = ipa::tiny_gradcheck(kind, seed);
  std::printf("%s max_relative_error %.3e (worst %s[%zu], %zu elements)\n", kind.c_str(),
              report.max_relative_error, report.worst_parameter.c_str(), report.worst_index,
              report.elements_checked);
  return report.max_relative_error > 1e-4 ? kExitNumeric : 0;
}

// Accepts a run config (kind + model) or {"ipa": {...}, "gpt": {...}}; a
// missing GPT entry is matched to the IPA one.
int cmd_params(const std::string& config_path, const std::vector<std::size_t>& lengths) {
  const std::string text = ipa::read_text_file(config_path);
  ipa::json j;
  try {
    j = ipa::json::parse(text);
  } catch (const ipa::json::parse_error& e) {
    throw ipa::ConfigError("config", std::string("not valid JSON: ") + e.what());
  }
  std::optional<ipa::ModelConfig> ipa_cfg;
  std::optional<ipa::GPTConfig> gpt_cfg;
  if (j.contains("kind")) {
    const auto rc = ipa::RunConfig::from_json(j, std::filesystem::path(config_path).parent_path());
    if (rc.kind == "ipa") ipa_cfg = ipa::ModelConfig::from_json(rc.model);
    else gpt_cfg = ipa::GPTConfig::from_json(rc.model);
  } else {
    for (const auto& [key, value] : j.items()) {
      if (key == "ipa") ipa_cfg = ipa::ModelConfig::from_json(value);
      else if (key == "gpt") gpt_cfg = ipa::GPTConfig::from_json(value);
      else throw ipa::ConfigError(key, "unknown key (expected \"ipa\" and/or \"gpt\")");
    }
  }
  if (ipa_cfg && !gpt_cfg) gpt_cfg = ipa::GPTConfig::matched_to(*ipa_cfg);
  if (ipa_cfg) ipa_cfg->validate();
  if (gpt_cfg) gpt_cfg->validate();

  std::printf("%-6s %8s %14s %14s\n", "model", "m", "params", "delta");
  auto row = [&](const char* name, auto count) {
    const std::size_t first = count(lengths.front());
    for (auto m : lengths) {
      const std::size_t c = count(m);
      std::printf("%-6s %8zu %14zu %+14lld\n", name, m, c,
                  static_cast<long long>(c) - static_cast<long long>(first));
    }
  };
  if (ipa_cfg) row("ipa", [&](std::size_t m) { return ipa::param_count_ipa(*ipa_cfg, m); });
  if (gpt_cfg) row("gpt", [&](std::size_t m) { return ipa::param_count_gpt(*gpt_cfg, m); });
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Iterative piecewise affine language models and a GPT baseline"};
  app.require_subcommand(1);

  std::string corpus, out, config, resume, checkpoint, prompt, kind = "ipa", metrics;
  std::size_t vocab = 1024, m = 0, max_new = 64, batch = 16;
  std::vector<std::size_t> lengths;
  double temperature = 1.0;
  std::uint64_t seed = 0;

  auto* tok = app.add_subcommand("tokenizer-train", "Train a byte-level BPE tokenizer");
  tok->add_option("--corpus", corpus, "UTF-8 text file")->required();
  tok->add_option("--vocab", vocab, "Target vocabulary size (>= 257)")->required();
  tok->add_option("--out", out, "Tokenizer output file")->required();

  auto* train = app.add_subcommand("train", "Train a model from a run config");
  train->add_option("--config", config, "Run config JSON")->required();
  train->add_option("--resume", resume, "Checkpoint to continue from");

  auto* eval = app.add_subcommand("eval", "Mean next-token loss of a checkpoint on a text file");
  eval->add_option("--checkpoint", checkpoint)->required();
  eval->add_option("--corpus", corpus)->required();
  eval->add_option("--m", m, "Window length (default: the model's m_max)");
  eval->add_option("--batch", batch, "Windows per forward batch");
  eval->add_option("--metrics", metrics, "Append the result to this JSONL file");

  auto* gen = app.add_subcommand("generate", "Sample a continuation");
  gen->add_option("--checkpoint", checkpoint)->required();
  gen->add_option("--prompt", prompt)->required();
  gen->add_option("--max-new", max_new);
  gen->add_option("--temperature", temperature, "0 picks the most likely token");
  gen->add_option("--seed", seed);

  auto* gc = app.add_subcommand("gradcheck", "Finite-difference check of a tiny model");
  gc->add_option("--model-kind", kind)->check(CLI::IsMember({"ipa", "gpt"}));
  gc->add_option("--seed", seed);

  auto* params = app.add_subcommand("params", "Parameter counts at given sequence lengths");
  params->add_option("--config", config)->required();
  params->add_option("--m", lengths, "Sequence length(s)")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*tok) return cmd_tokenizer_train(corpus, vocab, out);
    if (*train) return cmd_train(config, resume);
    if (*eval) return cmd_eval(checkpoint, corpus, m, batch, metrics);
    if (*gen) return cmd_generate(checkpoint, prompt, max_new, temperature, seed);
    if (*gc) return cmd_gradcheck(kind, seed);
    if (*params) return cmd_params(config, lengths);
  } catch (const ipa::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const ipa::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const ipa::IoError& e) {
    std::cerr << "i/o error: " << e.what() << '\n';
    return kExitIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  }
  return 0;
}
