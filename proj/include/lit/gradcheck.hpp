#pragma once

#include <functional>
#include <string>
#include <vector>

#include "lit/tensor.hpp"

namespace lit {

struct GradCheckResult {
  std::string name;
  // max_i |analytic_i - numeric_i| / max(max|analytic|, max|numeric|), worst input.
  double max_rel_error = 0.0;
  std::int64_t evaluations = 0;
  bool passed = false;
};

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  // Inputs at these positions are held constant (not differentiated).
  std::vector<std::size_t> constant_inputs;
};

// Compares reverse-mode gradients of the scalar `loss(inputs)` against
// central finite differences for every element of every non-constant input.
GradCheckResult check_gradients(
    std::string name, const std::function<TensorD(const std::vector<TensorD>&)>& loss,
    std::vector<TensorD> inputs, const GradCheckOptions& options = {});

}  // namespace lit
