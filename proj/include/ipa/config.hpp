#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

#include <nlohmann/json.hpp>

namespace ipa {

using json = nlohmann::json;

// Shape and option flags of an IPA language model.
struct ModelConfig {
  std::size_t n = 120;       // embedding size
  std::size_t m_max = 512;   // longest supported sequence
  std::size_t layers = 4;
  std::size_t p_col = 8;     // column (attention-analog) experts
  std::size_t p_row = 4;     // row (feedforward-analog) experts
  std::size_t k = 15;        // rank of the factored S^p and W^p
  std::size_t vocab = 8192;
  bool tie_head = true;
  bool residual = false;
  bool layernorm = false;
  // Divide column j of the column mixture by (j + 1).
  bool column_mean = false;
  int precision = 64;

  // Throws ConfigError naming the first offending field. A zero-layer stack is
  // only accepted when `allow_empty_stack` is set (test configurations).
  void validate(bool allow_empty_stack = false) const;

  json to_json() const;
  // Rejects unknown keys; missing keys keep their defaults.
  static ModelConfig from_json(const json& j);
};

struct GPTConfig {
  std::size_t n = 120;
  std::size_t heads = 8;
  std::size_t d_ff = 480;
  std::size_t layers = 4;
  std::size_t m_max = 512;
  std::size_t vocab = 8192;
  bool tie_head = true;
  bool layernorm = false;
  int precision = 64;

  void validate(bool allow_empty_stack = false) const;
  json to_json() const;
  static GPTConfig from_json(const json& j);

  // Decoder whose heads, head width and feedforward ratio mirror `ipa`.
  static GPTConfig matched_to(const ModelConfig& ipa);
};

struct TrainConfig {
  double learning_rate = 2e-5;
  // "constant", or "cosine": decay from learning_rate to min_learning_rate
  // over max_steps.
  std::string schedule = "constant";
  double min_learning_rate = 0.0;
  std::size_t batch_size = 16;
  std::size_t seq_len = 100;
  std::size_t max_steps = 1000;
  std::size_t eval_interval = 100;
  // Windows used by the periodic test evaluation; 0 evaluates the full split.
  std::size_t eval_windows = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  // Global gradient-norm clip; 0 disables clipping.
  double grad_clip = 1.0;
  std::uint64_t seed = 0;
  int precision = 64;
  // Stop once the periodic full train-split loss falls below this value (0: never).
  double target_train_loss = 0.0;

  void validate() const;
  json to_json() const;
  static TrainConfig from_json(const json& j);

  // Learning rate used for the update that follows `step` completed steps.
  double learning_rate_at(std::size_t step) const;
};

}  // namespace ipa
