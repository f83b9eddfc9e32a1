#include "ipa/config.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "ipa/errors.hpp"
#include "field_reader.hpp"

namespace ipa {

namespace {

using detail::FieldReader;

void require(bool ok, const std::string& field, const std::string& what) {
  if (!ok) throw ConfigError(field, what);
}

}  // namespace

// ---- ModelConfig ----------------------------------------------------------

void ModelConfig::validate(bool allow_empty_stack) const {
  require(n >= 1, "model.n", "must be at least 1");
  require(k >= 1 && k <= n, "model.k", "must satisfy 1 <= k <= n");
  require(p_col >= 1, "model.p_col", "must be at least 1");
  require(p_row >= 1, "model.p_row", "must be at least 1");
  require(layers >= 1 || allow_empty_stack, "model.layers", "must be at least 1");
  require(m_max >= 1, "model.m_max", "must be at least 1");
  require(vocab >= 1, "model.vocab", "must be at least 1");
  require(precision == 64, "model.precision", "only 64-bit arithmetic is supported");
}

json ModelConfig::to_json() const {
  return json{{"n", n},
              {"m_max", m_max},
              {"layers", layers},
              {"p_col", p_col},
              {"p_row", p_row},
              {"k", k},
              {"vocab", vocab},
              {"tie_head", tie_head},
              {"residual", residual},
              {"layernorm", layernorm},
              {"column_mean", column_mean},
              {"precision", precision}};
}

ModelConfig ModelConfig::from_json(const json& j) {
  ModelConfig c;
  FieldReader(j, "model")
      .size("n", c.n)
      .size("m_max", c.m_max)
      .size("layers", c.layers)
      .size("p_col", c.p_col)
      .size("p_row", c.p_row)
      .size("k", c.k)
      .size("vocab", c.vocab)
      .flag("tie_head", c.tie_head)
      .flag("residual", c.residual)
      .flag("layernorm", c.layernorm)
      .flag("column_mean", c.column_mean)
      .integer("precision", c.precision)
      .finish();
  return c;
}

// ---- GPTConfig ------------------------------------------------------------

void GPTConfig::validate(bool allow_empty_stack) const {
  require(n >= 1, "model.n", "must be at least 1");
  require(heads >= 1 && n % heads == 0, "model.heads", "must divide n");
  require(d_ff >= 1, "model.d_ff", "must be at least 1");
  require(layers >= 1 || allow_empty_stack, "model.layers", "must be at least 1");
  require(m_max >= 1, "model.m_max", "must be at least 1");
  require(vocab >= 1, "model.vocab", "must be at least 1");
  require(precision == 64, "model.precision", "only 64-bit arithmetic is supported");
}

json GPTConfig::to_json() const {
  return json{{"n", n},         {"heads", heads}, {"d_ff", d_ff},
              {"layers", layers}, {"m_max", m_max}, {"vocab", vocab},
              {"tie_head", tie_head}, {"layernorm", layernorm}, {"precision", precision}};
}

GPTConfig GPTConfig::from_json(const json& j) {
  GPTConfig c;
  FieldReader(j, "model")
      .size("n", c.n)
      .size("heads", c.heads)
      .size("d_ff", c.d_ff)
      .size("layers", c.layers)
      .size("m_max", c.m_max)
      .size("vocab", c.vocab)
      .flag("tie_head", c.tie_head)
      .flag("layernorm", c.layernorm)
      .integer("precision", c.precision)
      .finish();
  return c;
}

GPTConfig GPTConfig::matched_to(const ModelConfig& ipa) {
  GPTConfig c;
  c.n = ipa.n;
  c.heads = ipa.p_col;
  c.d_ff = ipa.p_row * ipa.n;
  c.layers = ipa.layers;
  c.m_max = ipa.m_max;
  c.vocab = ipa.vocab;
  c.tie_head = ipa.tie_head;
  c.layernorm = ipa.layernorm;
  c.precision = ipa.precision;
  return c;
}

// ---- TrainConfig ----------------------------------------------------------

void TrainConfig::validate() const {
  require(learning_rate >= 0.0, "train.learning_rate", "must be non-negative");
  require(schedule == "constant" || schedule == "cosine", "train.schedule",
          "must be \"constant\" or \"cosine\"");
  require(min_learning_rate >= 0.0 && min_learning_rate <= learning_rate, "train.min_learning_rate",
          "must lie in [0, learning_rate]");
  require(batch_size >= 1, "train.batch_size", "must be at least 1");
  require(seq_len >= 1, "train.seq_len", "must be at least 1");
  require(eval_interval >= 1, "train.eval_interval", "must be at least 1");
  require(beta1 >= 0.0 && beta1 < 1.0, "train.beta1", "must lie in [0, 1)");
  require(beta2 >= 0.0 && beta2 < 1.0, "train.beta2", "must lie in [0, 1)");
  require(epsilon > 0.0, "train.epsilon", "must be positive");
  require(grad_clip >= 0.0, "train.grad_clip", "must be non-negative");
  require(target_train_loss >= 0.0, "train.target_train_loss", "must be non-negative");
  require(precision == 64, "train.precision", "only 64-bit arithmetic is supported");
}

json TrainConfig::to_json() const {
  return json{{"learning_rate", learning_rate},
              {"schedule", schedule},
              {"min_learning_rate", min_learning_rate},
              {"batch_size", batch_size},
              {"seq_len", seq_len},
              {"max_steps", max_steps},
              {"eval_interval", eval_interval},
              {"eval_windows", eval_windows},
              {"beta1", beta1},
              {"beta2", beta2},
              {"epsilon", epsilon},
              {"grad_clip", grad_clip},
              {"seed", seed},
              {"precision", precision},
              {"target_train_loss", target_train_loss}};
}

double TrainConfig::learning_rate_at(std::size_t step) const {
  if (schedule != "cosine" || max_steps == 0) return learning_rate;
  const double progress = std::min(1.0, static_cast<double>(step) / static_cast<double>(max_steps));
  return min_learning_rate +
         0.5 * (learning_rate - min_learning_rate) * (1.0 + std::cos(std::numbers::pi * progress));
}

TrainConfig TrainConfig::from_json(const json& j) {
  TrainConfig c;
  FieldReader(j, "train")
      .real("learning_rate", c.learning_rate)
      .text("schedule", c.schedule)
      .real("min_learning_rate", c.min_learning_rate)
      .size("batch_size", c.batch_size)
      .size("seq_len", c.seq_len)
      .size("max_steps", c.max_steps)
      .size("eval_interval", c.eval_interval)
      .size("eval_windows", c.eval_windows)
      .real("beta1", c.beta1)
      .real("beta2", c.beta2)
      .real("epsilon", c.epsilon)
      .real("grad_clip", c.grad_clip)
      .u64("seed", c.seed)
      .integer("precision", c.precision)
      .real("target_train_loss", c.target_train_loss)
      .finish();
  return c;
}

}  // namespace ipa
