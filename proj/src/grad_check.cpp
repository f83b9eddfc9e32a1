#include "ipa/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "ipa/errors.hpp"

namespace ipa::ad {

namespace {

double evaluate(const std::function<Var()>& loss) {
  NoGradGuard no_grad;
  const double v = loss().value().item();
  if (!std::isfinite(v)) throw NumericError("grad_check: loss evaluated to a non-finite value");
  return v;
}

}  // namespace

GradCheckReport grad_check(const std::function<Var()>& loss, std::span<Parameter> params,
                           double epsilon) {
  if (!(epsilon >= 1e-7 && epsilon <= 1e-3)) {
    throw ContractError("grad_check: epsilon must lie in [1e-7, 1e-3]");
  }
  zero_grad(params);
  backward(loss());
  std::vector<Tensor> analytic;
  analytic.reserve(params.size());
  for (auto& p : params) {
    analytic.push_back(p.var.grad());
    if (!analytic.back().all_finite()) {
      throw NumericError("grad_check: non-finite analytic gradient for " + p.name);
    }
  }
  zero_grad(params);

  GradCheckReport report;
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor& value = params[k].var.mutable_value();
    for (std::size_t i = 0; i < value.size(); ++i) {
      const double saved = value[i];
      value[i] = saved + epsilon;
      const double up = evaluate(loss);
      value[i] = saved - epsilon;
      const double down = evaluate(loss);
      value[i] = saved;
      const double numeric = (up - down) / (2.0 * epsilon);
      const double a = analytic[k][i];
      const double err =
          std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
      ++report.elements_checked;
      if (report.worst_parameter.empty() || err > report.max_relative_error) {
        report.max_relative_error = err;
        report.worst_parameter = params[k].name;
        report.worst_index = i;
      }
    }
  }
  return report;
}

}  // namespace ipa::ad
