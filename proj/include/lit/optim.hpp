#pragma once

#include <cstdint>

#include "lit/param_store.hpp"

namespace lit {

struct AdamWConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

// First/second moment estimates mirroring the parameter paths.
template <class T>
struct AdamState {
  ParamStore<T> m;
  ParamStore<T> v;
  std::int64_t step = 0;

  static AdamState zeros_like(const ParamStore<T>& params);
};

// One decoupled-weight-decay Adam update using each parameter's accumulated
// gradient (absent gradients count as zero). Throws ConfigError for lr <= 0
// and StructuralError if the state does not mirror the parameters.
template <class T>
void adamw_step(ParamStore<T>& params, AdamState<T>& state, const AdamWConfig& config);

extern template struct AdamState<float>;
extern template struct AdamState<double>;

}  // namespace lit
