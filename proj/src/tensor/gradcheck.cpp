#include "lit/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "lit/error.hpp"

namespace lit {

GradCheckResult check_gradients(
    std::string name, const std::function<TensorD(const std::vector<TensorD>&)>& loss,
    std::vector<TensorD> inputs, const GradCheckOptions& options) {
  GradCheckResult result;
  result.name = std::move(name);
  auto is_constant = [&](std::size_t i) {
    return std::find(options.constant_inputs.begin(), options.constant_inputs.end(), i) !=
           options.constant_inputs.end();
  };
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    inputs[i] = inputs[i].detach();
    inputs[i].set_requires_grad(!is_constant(i));
  }

  const TensorD value = loss(inputs);
  if (value.numel() != 1) throw ContractError("gradient check needs a scalar loss");
  value.backward();
  ++result.evaluations;

  double worst = 0.0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    if (is_constant(i)) continue;
    const auto analytic_span = inputs[i].grad_data();
    std::vector<double> analytic(analytic_span.begin(), analytic_span.end());
    analytic.resize(static_cast<std::size_t>(inputs[i].numel()), 0.0);
    std::vector<double> numeric(analytic.size());
    {
      NoGradGuard no_grad;
      auto data = inputs[i].mutable_data();
      for (std::size_t j = 0; j < data.size(); ++j) {
        const double saved = data[j];
        data[j] = saved + options.step;
        const double up = loss(inputs).item();
        data[j] = saved - options.step;
        const double down = loss(inputs).item();
        data[j] = saved;
        numeric[j] = (up - down) / (2.0 * options.step);
        result.evaluations += 2;
      }
    }
    double scale = 1e-12, err = 0.0;
    for (std::size_t j = 0; j < analytic.size(); ++j) {
      scale = std::max({scale, std::abs(analytic[j]), std::abs(numeric[j])});
      err = std::max(err, std::abs(analytic[j] - numeric[j]));
    }
    worst = std::max(worst, err / scale);
  }
  result.max_rel_error = worst;
  result.passed = worst < options.tolerance;
  return result;
}

}  // namespace lit
