#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ipa/autodiff.hpp"
#include "ipa/config.hpp"
#include "ipa/random.hpp"

namespace ipa {

// Common surface of the IPA model and the GPT baseline: token ids in,
// per-position vocabulary logits out. Hidden states are n x m with one column
// per position. Models own their parameters and are neither copyable nor
// safe to mutate concurrently; concurrent forward passes without gradient
// tracking are fine.
class LanguageModel {
 public:
  LanguageModel() = default;
  LanguageModel(const LanguageModel&) = delete;
  LanguageModel& operator=(const LanguageModel&) = delete;
  virtual ~LanguageModel() = default;

  virtual std::string kind() const = 0;
  virtual std::size_t vocab_size() const = 0;
  virtual std::size_t max_length() const = 0;
  virtual json config_json() const = 0;

  // Final hidden states for `ids`, n x ids.size().
  virtual ad::Var hidden(std::span<const std::int32_t> ids) const = 0;
  // Vocabulary logits V x m for hidden states n x m.
  virtual ad::Var head(const ad::Var& hidden) const = 0;

  ad::Var forward(std::span<const std::int32_t> ids) const { return head(hidden(ids)); }

  std::span<ad::Parameter> parameters() noexcept { return params_; }
  std::span<const ad::Parameter> parameters() const noexcept { return params_; }
  const ad::Parameter& parameter(const std::string& name) const;
  // Scalars actually stored (sequence-dependent tensors sized for m_max).
  std::size_t parameter_count() const;

 protected:
  ad::Var add_parameter(std::string name, Tensor value);
  // Throws IndexError/ContractError for out-of-range ids or lengths.
  void check_input(std::span<const std::int32_t> ids) const;

 private:
  std::vector<ad::Parameter> params_;
};

namespace layers {

// Normalizes every column of x (n x m) to zero mean and unit variance, then
// applies the per-row gain and bias (n x 1 each).
ad::Var layer_norm(const ad::Var& x, const ad::Var& gain, const ad::Var& bias,
                   double eps = 1e-5);

// x + broadcast of the n x 1 column `bias` across all columns.
ad::Var add_column_bias(const ad::Var& x, const ad::Var& bias);

// rows x cols tensor drawn from U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
Tensor uniform_init(std::size_t rows, std::size_t cols, std::size_t fan_in, Rng& rng);
Tensor normal_init(std::size_t rows, std::size_t cols, double stddev, Rng& rng);

}  // namespace layers

}  // namespace ipa
