#pragma once

#include <cstdint>
#include <vector>

#include "lit/gradcheck.hpp"

namespace lit {

// Finite-difference checks in 64-bit for every differentiable operation, each
// attention variant and path, an adaLN block, the diffusion losses and a tiny
// full model (L=1, D=8, S=4, p=2).
std::vector<GradCheckResult> run_gradient_suite(std::uint64_t seed = 0, bool include_model = true);

}  // namespace lit
