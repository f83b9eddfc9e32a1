#include "ipa/gpt_model.hpp"

#include <cmath>
#include <limits>

namespace ipa {

GPTModel::GPTModel(const GPTConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate(/*allow_empty_stack=*/true);
  Rng rng(seed);
  const std::size_t n = config_.n, v = config_.vocab, f = config_.d_ff;
  using layers::uniform_init;
  const double emb_std = 1.0 / std::sqrt(static_cast<double>(n));
  embedding_ = add_parameter("embedding", layers::normal_init(v, n, emb_std, rng));
  position_ = add_parameter("position_embedding", layers::normal_init(n, config_.m_max, emb_std, rng));
  if (!config_.tie_head) head_weight_ = add_parameter("head.weight", uniform_init(v, n, n, rng));
  head_bias_ = add_parameter("head.bias", Tensor::zeros({v, 1}));

  auto make_norm = [&](const std::string& prefix) {
    return Norm{add_parameter(prefix + ".gain", Tensor::ones({n, 1})),
                add_parameter(prefix + ".bias", Tensor::zeros({n, 1}))};
  };
  for (std::size_t layer = 0; layer < config_.layers; ++layer) {
    const std::string p = "layers." + std::to_string(layer);
    Layer L;
    L.wq = add_parameter(p + ".attn.wq", uniform_init(n, n, n, rng));
    L.wk = add_parameter(p + ".attn.wk", uniform_init(n, n, n, rng));
    L.wv = add_parameter(p + ".attn.wv", uniform_init(n, n, n, rng));
    L.wo = add_parameter(p + ".attn.wo", uniform_init(n, n, n, rng));
    L.bq = add_parameter(p + ".attn.bq", Tensor::zeros({n, 1}));
    L.bk = add_parameter(p + ".attn.bk", Tensor::zeros({n, 1}));
    L.bv = add_parameter(p + ".attn.bv", Tensor::zeros({n, 1}));
    L.bo = add_parameter(p + ".attn.bo", Tensor::zeros({n, 1}));
    L.ff_in = add_parameter(p + ".ff.in", uniform_init(f, n, n, rng));
    L.ff_in_bias = add_parameter(p + ".ff.in_bias", Tensor::zeros({f, 1}));
    L.ff_out = add_parameter(p + ".ff.out", uniform_init(n, f, f, rng));
    L.ff_out_bias = add_parameter(p + ".ff.out_bias", Tensor::zeros({n, 1}));
    if (config_.layernorm) {
      L.attn_norm = make_norm(p + ".attn_norm");
      L.ff_norm = make_norm(p + ".ff_norm");
    }
    layers_.push_back(std::move(L));
  }
  if (config_.layernorm) final_norm_ = make_norm("final_norm");
}

namespace {

Tensor future_mask(std::size_t m) {
  Tensor mask({m, m});
  for (std::size_t j = 0; j < m; ++j) {
    for (std::size_t l = j + 1; l < m; ++l) mask(j, l) = 1.0;
  }
  return mask;
}

}  // namespace

std::vector<ad::Var> GPTModel::attention_weights(const ad::Var& x, const Layer& layer) const {
  const std::size_t d = config_.n / config_.heads, m = x.cols();
  const auto q = layers::add_column_bias(ad::matmul(layer.wq, x), layer.bq);
  const auto k = layers::add_column_bias(ad::matmul(layer.wk, x), layer.bk);
  const Tensor mask = future_mask(m);
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
  std::vector<ad::Var> weights;
  weights.reserve(config_.heads);
  for (std::size_t h = 0; h < config_.heads; ++h) {
    auto qh = ad::slice_rows(q, h * d, (h + 1) * d);
    auto kh = ad::slice_rows(k, h * d, (h + 1) * d);
    auto scores = ad::scale(ad::matmul(ad::transpose(qh), kh), inv_sqrt_d);  // [j, l]
    scores = ad::masked_fill(scores, mask, -std::numeric_limits<double>::infinity());
    weights.push_back(ad::softmax(scores, 1));
  }
  return weights;
}

ad::Var GPTModel::attention(const ad::Var& x, const Layer& layer) const {
  const std::size_t d = config_.n / config_.heads;
  const auto v = layers::add_column_bias(ad::matmul(layer.wv, x), layer.bv);
  const auto weights = attention_weights(x, layer);
  std::vector<ad::Var> heads;
  heads.reserve(config_.heads);
  for (std::size_t h = 0; h < config_.heads; ++h) {
    auto vh = ad::slice_rows(v, h * d, (h + 1) * d);
    heads.push_back(ad::matmul(vh, ad::transpose(weights[h])));  // d x m
  }
  const auto merged = config_.heads == 1 ? heads.front() : ad::concat_rows(heads);
  return layers::add_column_bias(ad::matmul(layer.wo, merged), layer.bo);
}

ad::Var GPTModel::hidden(std::span<const std::int32_t> ids) const {
  check_input(ids);
  const std::size_t m = ids.size();
  auto pos = m == config_.m_max ? position_ : ad::slice_cols(position_, 0, m);
  auto x = ad::add(ad::transpose(ad::gather_rows(embedding_, ids)), pos);
  for (const auto& layer : layers_) {
    auto in = config_.layernorm ? layers::layer_norm(x, layer.attn_norm.gain, layer.attn_norm.bias) : x;
    x = ad::add(x, attention(in, layer));
    in = config_.layernorm ? layers::layer_norm(x, layer.ff_norm.gain, layer.ff_norm.bias) : x;
    auto h = ad::relu(layers::add_column_bias(ad::matmul(layer.ff_in, in), layer.ff_in_bias));
    x = ad::add(x, layers::add_column_bias(ad::matmul(layer.ff_out, h), layer.ff_out_bias));
  }
  if (config_.layernorm) x = layers::layer_norm(x, final_norm_.gain, final_norm_.bias);
  return x;
}

ad::Var GPTModel::head(const ad::Var& hidden) const {
  return layers::add_column_bias(ad::matmul(head_weight(), hidden), head_bias_);
}

std::size_t param_count_gpt(const GPTConfig& c, std::size_t m) {
  const std::size_t n = c.n, v = c.vocab, f = c.d_ff;
  std::size_t total = v * n + v + (c.tie_head ? 0 : v * n) + n * m;
  const std::size_t attention = 4 * n * n + 4 * n;
  const std::size_t feedforward = 2 * n * f + f + n;
  const std::size_t norms = c.layernorm ? 4 * n : 0;
  total += c.layers * (attention + feedforward + norms);
  if (c.layernorm) total += 2 * n;
  return total;
}

}  // namespace ipa
