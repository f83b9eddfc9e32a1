#include "ipa/language_model.hpp"

#include <cmath>

#include "ipa/errors.hpp"

namespace ipa {

const ad::Parameter& LanguageModel::parameter(const std::string& name) const {
  for (const auto& p : params_) {
    if (p.name == name) return p;
  }
  throw IndexError("no parameter named '" + name + "'");
}

std::size_t LanguageModel::parameter_count() const {
  std::size_t total = 0;
  for (const auto& p : params_) total += p.var.value().size();
  return total;
}

ad::Var LanguageModel::add_parameter(std::string name, Tensor value) {
  auto var = ad::parameter(std::move(value));
  params_.push_back({std::move(name), var});
  return var;
}

void LanguageModel::check_input(std::span<const std::int32_t> ids) const {
  if (ids.empty() || ids.size() > max_length()) {
    throw ContractError(kind() + ": sequence length " + std::to_string(ids.size()) +
                        " outside [1, " + std::to_string(max_length()) + "]");
  }
  for (auto id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= vocab_size()) {
      throw IndexError(kind() + ": token id " + std::to_string(id) + " outside [0, " +
                       std::to_string(vocab_size()) + ")");
    }
  }
}

namespace layers {

ad::Var add_column_bias(const ad::Var& x, const ad::Var& bias) {
  return ad::add(x, ad::broadcast(bias, 1, x.cols()));
}

ad::Var layer_norm(const ad::Var& x, const ad::Var& gain, const ad::Var& bias, double eps) {
  const std::size_t n = x.rows(), m = x.cols();
  const double inv_n = 1.0 / static_cast<double>(n);
  auto mean = ad::scale(ad::sum(x, 0), inv_n);
  auto centered = ad::sub(x, ad::broadcast(mean, 0, n));
  auto var = ad::scale(ad::sum(ad::square(centered), 0), inv_n);
  auto inv_std = ad::power(ad::add_scalar(var, eps), -0.5);
  auto normed = ad::mul(centered, ad::broadcast(inv_std, 0, n));
  return ad::add(ad::mul(normed, ad::broadcast(gain, 1, m)), ad::broadcast(bias, 1, m));
}

Tensor uniform_init(std::size_t rows, std::size_t cols, std::size_t fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  Tensor t({rows, cols});
  for (auto& v : t.values()) v = rng.uniform(-bound, bound);
  return t;
}

Tensor normal_init(std::size_t rows, std::size_t cols, double stddev, Rng& rng) {
  Tensor t({rows, cols});
  for (auto& v : t.values()) v = stddev * rng.normal();
  return t;
}

}  // namespace layers

}  // namespace ipa
