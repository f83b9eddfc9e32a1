#include "ipa/ipa_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ipa/errors.hpp"

namespace ipa {

double piecewise_affine_1d(double x, std::span<const TaylorPoint> centers,
                           std::span<const double> bandwidths) {
  if (centers.empty()) throw ContractError("piecewise_affine_1d: no centers");
  if (bandwidths.size() != centers.size()) {
    throw ContractError("piecewise_affine_1d: one bandwidth per center required");
  }
  std::vector<double> logits(centers.size());
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t p = 0; p < centers.size(); ++p) {
    if (!(bandwidths[p] > 0.0)) throw ContractError("piecewise_affine_1d: bandwidth must be positive");
    const double d = x - centers[p].center;
    logits[p] = -d * d / (2.0 * bandwidths[p] * bandwidths[p]);
    mx = std::max(mx, logits[p]);
  }
  double z = 0.0, acc = 0.0;
  for (std::size_t p = 0; p < centers.size(); ++p) {
    const double w = std::exp(logits[p] - mx);
    z += w;
    acc += w * (centers[p].value + centers[p].slope * (x - centers[p].center));
  }
  return acc / z;
}

namespace {

void check_length(const char* op, std::size_t m, std::size_t max_length) {
  if (m > max_length) {
    throw ContractError(std::string(op) + ": sequence length " + std::to_string(m) +
                        " exceeds m_max " + std::to_string(max_length));
  }
}

// P x (m*m) weights, row p holding K^p[j, l] at column j*m + l, with the
// strictly upper triangle (l > j) zeroed after normalization over p.
ad::Var column_weights(const ad::Var& x, const ColumnOpParams& params) {
  if (x.shape().size() != 2 || x.rows() != params.bias.rows()) {
    throw ShapeError("column_forward: input " + to_string(x.shape()) + " does not match n = " +
                     std::to_string(params.bias.rows()));
  }
  const std::size_t m = x.cols();
  check_length("column_forward", m, params.max_length);
  const auto xt = ad::transpose(x);  // m x n, row l is x_.l'
  std::vector<ad::Var> logits;
  logits.reserve(params.experts());
  for (std::size_t p = 0; p < params.experts(); ++p) {
    // x_.l' W x_.j = (W_left' x_.l) . (W_right x_.j)
    auto query = ad::matmul(xt, ad::transpose(params.w_right[p]));  // m x k, row j
    auto key = ad::matmul(xt, params.w_left[p]);                     // m x k, row l
    auto scores = ad::matmul(query, ad::transpose(key));             // m x m, [j, l]
    logits.push_back(ad::reshape(scores, {1, m * m}));
  }
  Tensor future({params.experts(), m * m});
  for (std::size_t p = 0; p < params.experts(); ++p) {
    for (std::size_t j = 0; j < m; ++j) {
      for (std::size_t l = j + 1; l < m; ++l) future(p, j * m + l) = 1.0;
    }
  }
  auto weights = ad::softmax(ad::concat_rows(logits), 0);
  return ad::masked_fill(weights, future, 0.0);
}

}  // namespace

ad::Var column_kernel(const ad::Var& x, const ColumnOpParams& params) {
  const std::size_t m = x.cols();
  return ad::reshape(column_weights(x, params), {params.experts(), m, m});
}

ad::Var column_forward(const ad::Var& x, const ColumnOpParams& params) {
  const std::size_t m = x.cols();
  const auto weights = column_weights(x, params);
  ad::Var mixed;
  for (std::size_t p = 0; p < params.experts(); ++p) {
    auto kernel = ad::reshape(ad::slice_rows(weights, p, p + 1), {m, m});  // [j, l]
    auto projected = ad::matmul(params.s_right[p], x);                     // k x m
    auto blended = ad::matmul(projected, ad::transpose(kernel));          // k x m
    auto expert = ad::matmul(params.s_left[p], blended);                   // n x m
    mixed = mixed.defined() ? ad::add(mixed, expert) : expert;
  }
  if (params.prefix_mean) {
    Tensor inv({x.rows(), m});
    for (std::size_t i = 0; i < x.rows(); ++i) {
      for (std::size_t j = 0; j < m; ++j) inv(i, j) = 1.0 / static_cast<double>(j + 1);
    }
    mixed = ad::mul(mixed, ad::constant(std::move(inv)));
  }
  return layers::add_column_bias(mixed, params.bias);
}

ad::Var row_kernel(const ad::Var& x, const RowOpParams& params) {
  if (x.shape().size() != 2 || x.rows() != params.centers.rows()) {
    throw ShapeError("row_kernel: input " + to_string(x.shape()) + " does not match centers " +
                     to_string(params.centers.shape()));
  }
  // -1 / (2 sigma^2) = -0.5 * exp(-2 log sigma)
  auto coef = ad::scale(ad::exp(ad::scale(params.log_bandwidth, -2.0)), -0.5);
  auto logits = ad::mul(ad::sqdist(x, params.centers), ad::broadcast(coef, 1, x.cols()));
  return ad::softmax(logits, 0);
}

ad::Var row_forward(const ad::Var& x, const RowOpParams& params) {
  const std::size_t n = x.rows(), m = x.cols();
  check_length("row_forward", m, params.max_length());
  const auto kappa = row_kernel(x, params);
  ad::Var mixed;
  for (std::size_t p = 0; p < params.experts(); ++p) {
    auto gate = ad::broadcast(ad::slice_rows(kappa, p, p + 1), 0, n);
    auto expert = ad::mul(gate, ad::matmul(params.mix[p], x));
    mixed = mixed.defined() ? ad::add(mixed, expert) : expert;
  }
  auto bias = m == params.max_length() ? params.position_bias
                                       : ad::slice_cols(params.position_bias, 0, m);
  return ad::add(mixed, bias);
}

// ---- model ----------------------------------------------------------------

IPAModel::IPAModel(const ModelConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate(/*allow_empty_stack=*/true);
  Rng rng(seed);
  const std::size_t n = config_.n, k = config_.k, v = config_.vocab;
  using layers::uniform_init;
  embedding_ = add_parameter("embedding", layers::normal_init(v, n, 1.0 / std::sqrt(double(n)), rng));
  tie_weight_ = config_.tie_head;
  if (!tie_weight_) head_weight_ = add_parameter("head.weight", uniform_init(v, n, n, rng));
  head_bias_ = add_parameter("head.bias", Tensor::zeros({v, 1}));

  auto make_norm = [&](const std::string& prefix) {
    return Norm{add_parameter(prefix + ".gain", Tensor::ones({n, 1})),
                add_parameter(prefix + ".bias", Tensor::zeros({n, 1}))};
  };

  for (std::size_t layer = 0; layer < config_.layers; ++layer) {
    const std::string prefix = "layers." + std::to_string(layer);
    Layer L;
    L.column.max_length = config_.m_max;
    L.column.prefix_mean = config_.column_mean;
    for (std::size_t p = 0; p < config_.p_col; ++p) {
      const std::string e = "." + std::to_string(p);
      L.column.s_left.push_back(add_parameter(prefix + ".column.s_left" + e, uniform_init(n, k, k, rng)));
      L.column.s_right.push_back(add_parameter(prefix + ".column.s_right" + e, uniform_init(k, n, n, rng)));
      L.column.w_left.push_back(add_parameter(prefix + ".column.w_left" + e, uniform_init(n, k, k, rng)));
      L.column.w_right.push_back(add_parameter(prefix + ".column.w_right" + e, uniform_init(k, n, n, rng)));
    }
    L.column.bias = add_parameter(prefix + ".column.bias", Tensor::zeros({n, 1}));
    for (std::size_t p = 0; p < config_.p_row; ++p) {
      L.row.mix.push_back(add_parameter(prefix + ".row.mix." + std::to_string(p), uniform_init(n, n, n, rng)));
    }
    L.row.centers = add_parameter(prefix + ".row.centers", layers::normal_init(n, config_.p_row, 1.0, rng));
    L.row.log_bandwidth = add_parameter(prefix + ".row.log_bandwidth",
                                        Tensor({config_.p_row, 1}, std::log(std::sqrt(double(n)))));
    L.row.position_bias = add_parameter(prefix + ".row.position_bias", Tensor::zeros({n, config_.m_max}));
    if (config_.layernorm) {
      L.column_norm = make_norm(prefix + ".column_norm");
      L.row_norm = make_norm(prefix + ".row_norm");
    }
    layers_.push_back(std::move(L));
  }
  if (config_.layernorm) final_norm_ = make_norm("final_norm");
}

ad::Var IPAModel::hidden(std::span<const std::int32_t> ids) const {
  check_input(ids);
  auto x = ad::transpose(ad::gather_rows(embedding_, ids));  // n x m
  for (const auto& layer : layers_) {
    auto in = config_.layernorm ? layers::layer_norm(x, layer.column_norm.gain, layer.column_norm.bias) : x;
    auto y = column_forward(in, layer.column);
    x = config_.residual ? ad::add(x, y) : y;
    in = config_.layernorm ? layers::layer_norm(x, layer.row_norm.gain, layer.row_norm.bias) : x;
    y = row_forward(in, layer.row);
    x = config_.residual ? ad::add(x, y) : y;
  }
  if (config_.layernorm) x = layers::layer_norm(x, final_norm_.gain, final_norm_.bias);
  return x;
}

ad::Var IPAModel::head(const ad::Var& hidden) const {
  return layers::add_column_bias(ad::matmul(head_weight(), hidden), head_bias_);
}

std::size_t param_count_ipa(const ModelConfig& c, std::size_t m) {
  const std::size_t n = c.n, k = c.k, v = c.vocab;
  std::size_t total = v * n + v + (c.tie_head ? 0 : v * n);
  const std::size_t column = c.p_col * (2 * n * k) + c.p_col * (2 * n * k) + n;
  const std::size_t row = c.p_row * (n * n + n + 1) + n * m;
  const std::size_t norms = c.layernorm ? 4 * n : 0;
  total += c.layers * (column + row + norms);
  if (c.layernorm) total += 2 * n;
  return total;
}

}  // namespace ipa
