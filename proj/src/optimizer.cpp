#include "ipa/optimizer.hpp"

#include <cmath>

#include "ipa/errors.hpp"

namespace ipa {

void adam_step(std::span<ad::Parameter> params, AdamState& state, const AdamHyper& h) {
  for (auto& p : params) {
    if (!p.var.grad_buffer().all_finite()) {
      throw NumericError("adam_step: non-finite gradient in parameter '" + p.name + "'");
    }
  }
  if (state.first.empty()) {
    for (const auto& p : params) {
      state.first.push_back(Tensor::zeros(p.var.shape()));
      state.second.push_back(Tensor::zeros(p.var.shape()));
    }
  }
  if (state.first.size() != params.size()) {
    throw ContractError("adam_step: optimizer state does not match the parameter list");
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(h.beta1, t);
  const double c2 = 1.0 - std::pow(h.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& value = params[k].var.mutable_value();
    const Tensor& grad = params[k].var.grad_buffer();
    auto& m = state.first[k];
    auto& v = state.second[k];
    for (std::size_t i = 0; i < value.size(); ++i) {
      const double g = grad[i];
      m[i] = h.beta1 * m[i] + (1.0 - h.beta1) * g;
      v[i] = h.beta2 * v[i] + (1.0 - h.beta2) * g * g;
      const double m_hat = m[i] / c1;
      const double v_hat = v[i] / c2;
      value[i] -= h.learning_rate * m_hat / (std::sqrt(v_hat) + h.epsilon);
    }
  }
}

double clip_grad_norm(std::span<ad::Parameter> params, double max_norm) {
  double sq = 0.0;
  for (auto& p : params) {
    for (double g : p.var.grad_buffer().values()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double s = max_norm / norm;
    for (auto& p : params) p.var.grad_buffer().scale_(s);
  }
  return norm;
}

}  // namespace ipa
