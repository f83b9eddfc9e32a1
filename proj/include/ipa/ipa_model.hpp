#pragma once

// Iterative piecewise affine (IPA) estimator for causal language modeling.
//
// A layer applies two kernel-weighted mixtures of affine maps in sequence:
//
//   column op:  y_.j = a + sum_{l<=j} sum_p K^p_{j,l}(X) S^p x_.l
//               K^p_{j,l} = exp(x_.l' W^p x_.j) / sum_q exp(x_.l' W^q x_.j)
//   row op:     y_.j = B_.j + sum_p kappa_p(x_.j) A^p x_.j
//               kappa_p(x) = exp(-|x - xi^p|^2 / 2 sigma_p^2) / sum_q (...)
//
// S^p and W^p are stored as rank-k factors (n x k)(k x n) and shared across
// positions. Column weights are normalized over experts only, never over l.

#include <cstdint>
#include <span>
#include <vector>

#include "ipa/autodiff.hpp"
#include "ipa/config.hpp"
#include "ipa/language_model.hpp"

namespace ipa {

// One first-order expansion of a scalar function: F(x) ~ value + slope (x - center).
struct TaylorPoint {
  double center = 0.0;
  double value = 0.0;
  double slope = 0.0;
};

// Kernel-weighted blend of local Taylor lines with normalized Gaussian
// kernels exp(-(x - x_p)^2 / (2 sigma_p^2)). Throws ContractError for an empty
// center list, a bandwidth count mismatch or a non-positive bandwidth.
double piecewise_affine_1d(double x, std::span<const TaylorPoint> centers,
                           std::span<const double> bandwidths);

struct ColumnOpParams {
  std::vector<ad::Var> s_left;   // P x (n x k)
  std::vector<ad::Var> s_right;  // P x (k x n)
  std::vector<ad::Var> w_left;   // P x (n x k)
  std::vector<ad::Var> w_right;  // P x (k x n)
  ad::Var bias;                  // n x 1, shared by all positions
  std::size_t max_length = 0;
  bool prefix_mean = false;      // scale column j by 1/(j+1)

  std::size_t experts() const noexcept { return s_left.size(); }
};

struct RowOpParams {
  std::vector<ad::Var> mix;  // P x (n x n), A^p
  ad::Var centers;           // n x P, column p is xi^p
  ad::Var log_bandwidth;     // P x 1, log sigma_p
  ad::Var position_bias;     // n x m_max, column j is B_.j

  std::size_t experts() const noexcept { return mix.size(); }
  std::size_t max_length() const { return position_bias.cols(); }
};

// Expert weights K[p, j, l] as a P x m x m tensor; entries with l > j are 0.
ad::Var column_kernel(const ad::Var& x, const ColumnOpParams& params);
ad::Var column_forward(const ad::Var& x, const ColumnOpParams& params);

// Radial expert weights for every column of x (n x m): P x m, columns sum to 1.
// For a single position pass x as n x 1.
ad::Var row_kernel(const ad::Var& x, const RowOpParams& params);
ad::Var row_forward(const ad::Var& x, const RowOpParams& params);

class IPAModel final : public LanguageModel {
 public:
  struct Norm {
    ad::Var gain;
    ad::Var bias;
  };
  struct Layer {
    ColumnOpParams column;
    RowOpParams row;
    Norm column_norm;  // set only with layernorm
    Norm row_norm;
  };

  // Zero layers are accepted here so the embedding/head path can be tested alone.
  IPAModel(const ModelConfig& config, std::uint64_t seed);

  std::string kind() const override { return "ipa"; }
  std::size_t vocab_size() const override { return config_.vocab; }
  std::size_t max_length() const override { return config_.m_max; }
  json config_json() const override { return config_.to_json(); }

  ad::Var hidden(std::span<const std::int32_t> ids) const override;
  ad::Var head(const ad::Var& hidden) const override;

  const ModelConfig& config() const noexcept { return config_; }
  const std::vector<Layer>& layers() const noexcept { return layers_; }
  std::vector<Layer>& layers() noexcept { return layers_; }
  const ad::Var& embedding() const noexcept { return embedding_; }
  // V x n projection; the embedding table itself when the head is tied.
  const ad::Var& head_weight() const noexcept { return tie_weight_ ? embedding_ : head_weight_; }
  const ad::Var& head_bias() const noexcept { return head_bias_; }

 private:
  ModelConfig config_;
  ad::Var embedding_;
  ad::Var head_weight_;
  ad::Var head_bias_;
  bool tie_weight_ = true;
  std::vector<Layer> layers_;
  Norm final_norm_;
};

// Exact scalar parameter count of an IPA model evaluated at sequence length m
// (the position bias contributes n*m per layer).
std::size_t param_count_ipa(const ModelConfig& config, std::size_t m);

}  // namespace ipa
