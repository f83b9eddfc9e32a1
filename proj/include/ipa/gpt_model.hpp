#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "ipa/autodiff.hpp"
#include "ipa/config.hpp"
#include "ipa/language_model.hpp"

namespace ipa {

// Plain decoder-only transformer used as the comparison baseline:
// learned positional embeddings, residual multi-head causal attention and a
// ReLU feedforward block per layer, optional pre-norm.
class GPTModel final : public LanguageModel {
 public:
  struct Norm {
    ad::Var gain;
    ad::Var bias;
  };
  struct Layer {
    ad::Var wq, wk, wv, wo;  // n x n
    ad::Var bq, bk, bv, bo;  // n x 1
    ad::Var ff_in;           // d_ff x n
    ad::Var ff_in_bias;      // d_ff x 1
    ad::Var ff_out;          // n x d_ff
    ad::Var ff_out_bias;     // n x 1
    Norm attn_norm;
    Norm ff_norm;
  };

  GPTModel(const GPTConfig& config, std::uint64_t seed);

  std::string kind() const override { return "gpt"; }
  std::size_t vocab_size() const override { return config_.vocab; }
  std::size_t max_length() const override { return config_.m_max; }
  json config_json() const override { return config_.to_json(); }

  ad::Var hidden(std::span<const std::int32_t> ids) const override;
  ad::Var head(const ad::Var& hidden) const override;

  // Attention weights of one layer for input x (n x m): one m x m matrix per
  // head, indexed [query j, key l], zero for l > j.
  std::vector<ad::Var> attention_weights(const ad::Var& x, const Layer& layer) const;
  // Residual-free attention block output (n x m) for input x.
  ad::Var attention(const ad::Var& x, const Layer& layer) const;

  const GPTConfig& config() const noexcept { return config_; }
  const std::vector<Layer>& layers() const noexcept { return layers_; }
  const ad::Var& embedding() const noexcept { return embedding_; }
  const ad::Var& position_embedding() const noexcept { return position_; }
  const ad::Var& head_weight() const noexcept { return config_.tie_head ? embedding_ : head_weight_; }
  const ad::Var& head_bias() const noexcept { return head_bias_; }

 private:
  GPTConfig config_;
  ad::Var embedding_;
  ad::Var position_;  // n x m_max, column j is the embedding of position j
  ad::Var head_weight_;
  ad::Var head_bias_;
  std::vector<Layer> layers_;
  Norm final_norm_;
};

// Exact scalar parameter count at sequence length m (positional table n*m).
std::size_t param_count_gpt(const GPTConfig& config, std::size_t m);

}  // namespace ipa
