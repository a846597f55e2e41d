#include "lit/optim.hpp"

#include <cmath>

namespace lit {

template <class T>
AdamState<T> AdamState<T>::zeros_like(const ParamStore<T>& params) {
  AdamState s;
  for (const auto& [path, t] : params) {
    s.m.add(path, Tensor<T>::zeros(t.shape()));
    s.v.add(path, Tensor<T>::zeros(t.shape()));
  }
  return s;
}

template <class T>
void adamw_step(ParamStore<T>& params, AdamState<T>& state, const AdamWConfig& config) {
  if (!(config.lr > 0.0)) throw ConfigError("AdamW learning rate must be positive");
  if (config.beta1 < 0.0 || config.beta1 >= 1.0 || config.beta2 < 0.0 || config.beta2 >= 1.0) {
    throw ConfigError("AdamW betas must lie in [0, 1)");
  }
  if (state.m.size() != params.size() || state.v.size() != params.size()) {
    throw StructuralError("AdamW state does not mirror the parameter store");
  }
  state.step += 1;
  const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.step));
  const double step_size = config.lr / bc1;
  const double bc2_sqrt = std::sqrt(bc2);
  const double decay = 1.0 - config.lr * config.weight_decay;

  auto im = state.m.begin();
  auto iv = state.v.begin();
  for (auto& [path, param] : params) {
    if (im->first != path || iv->first != path) {
      throw StructuralError("AdamW state path mismatch at " + path);
    }
    auto p = param.mutable_data();
    auto m = im->second.mutable_data();
    auto v = iv->second.mutable_data();
    const auto g = param.grad_data();
    const bool has_grad = !g.empty();
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double gi = has_grad ? static_cast<double>(g[i]) : 0.0;
      double pi = static_cast<double>(p[i]) * decay;
      const double mi = config.beta1 * static_cast<double>(m[i]) + (1.0 - config.beta1) * gi;
      const double vi = config.beta2 * static_cast<double>(v[i]) + (1.0 - config.beta2) * gi * gi;
      pi -= step_size * mi / (std::sqrt(vi) / bc2_sqrt + config.eps);
      p[i] = static_cast<T>(pi);
      m[i] = static_cast<T>(mi);
      v[i] = static_cast<T>(vi);
    }
    ++im;
    ++iv;
  }
}

template struct AdamState<float>;
template struct AdamState<double>;
template void adamw_step<float>(ParamStore<float>&, AdamState<float>&, const AdamWConfig&);
template void adamw_step<double>(ParamStore<double>&, AdamState<double>&, const AdamWConfig&);

}  // namespace lit
