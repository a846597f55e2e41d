#include <cmath>

#include "lit/diffusion.hpp"
#include "lit/error.hpp"
#include "lit/ops.hpp"

namespace lit {

void DiffusionSchedule::check_index(std::int64_t t) const {
  if (t < 0 || t >= size()) {
    throw ContractError("timestep index " + std::to_string(t) + " outside [0, " +
                        std::to_string(size()) + ")");
  }
}

DiffusionSchedule schedule_from_betas(std::vector<double> betas,
                                      std::vector<std::int64_t> timesteps) {
  if (betas.empty()) throw ConfigError("schedule needs at least one step");
  if (timesteps.size() != betas.size()) throw ConfigError("timestep map length mismatch");
  DiffusionSchedule s;
  const std::size_t n = betas.size();
  s.beta = std::move(betas);
  s.timesteps = std::move(timesteps);
  s.alpha.resize(n);
  s.alpha_bar.resize(n);
  s.alpha_bar_prev.resize(n);
  s.posterior_variance.resize(n);
  s.posterior_mean_coef1.resize(n);
  s.posterior_mean_coef2.resize(n);
  double running = 1.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double b = s.beta[i];
    if (!(b > 0.0 && b < 1.0)) throw ConfigError("beta values must lie in (0, 1)");
    s.alpha[i] = 1.0 - b;
    s.alpha_bar_prev[i] = running;
    running *= s.alpha[i];
    s.alpha_bar[i] = running;
    s.posterior_variance[i] =
        i == 0 ? b : b * (1.0 - s.alpha_bar_prev[i]) / (1.0 - s.alpha_bar[i]);
    s.posterior_mean_coef1[i] = b * std::sqrt(s.alpha_bar_prev[i]) / (1.0 - s.alpha_bar[i]);
    s.posterior_mean_coef2[i] =
        (1.0 - s.alpha_bar_prev[i]) * std::sqrt(s.alpha[i]) / (1.0 - s.alpha_bar[i]);
  }
  return s;
}

DiffusionSchedule make_schedule(std::int64_t steps, double beta_start, double beta_end) {
  if (steps < 1) throw ConfigError("schedule length must be positive");
  if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0)) {
    throw ConfigError("need 0 < beta_start <= beta_end < 1");
  }
  std::vector<double> betas(static_cast<std::size_t>(steps));
  std::vector<std::int64_t> timesteps(static_cast<std::size_t>(steps));
  for (std::int64_t i = 0; i < steps; ++i) {
    const double w = steps == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(steps - 1);
    betas[i] = beta_start + w * (beta_end - beta_start);
    timesteps[i] = i;
  }
  return schedule_from_betas(std::move(betas), std::move(timesteps));
}

std::vector<std::int64_t> uniform_stride_timesteps(std::int64_t total, std::int64_t steps) {
  if (steps < 1 || steps > total) {
    throw ConfigError("cannot take " + std::to_string(steps) + " sampling steps from " +
                      std::to_string(total));
  }
  std::vector<std::int64_t> out;
  out.reserve(static_cast<std::size_t>(steps));
  if (steps == 1) {
    out.push_back(0);
    return out;
  }
  const double stride = static_cast<double>(total - 1) / static_cast<double>(steps - 1);
  for (std::int64_t i = 0; i < steps; ++i) {
    out.push_back(static_cast<std::int64_t>(std::llround(static_cast<double>(i) * stride)));
  }
  return out;
}

DiffusionSchedule respace(const DiffusionSchedule& base, std::int64_t steps) {
  const auto kept = uniform_stride_timesteps(base.size(), steps);
  std::vector<double> betas;
  std::vector<std::int64_t> original;
  double last = 1.0;
  for (const auto i : kept) {
    betas.push_back(1.0 - base.alpha_bar[i] / last);
    last = base.alpha_bar[i];
    original.push_back(base.timesteps[i]);
  }
  return schedule_from_betas(std::move(betas), std::move(original));
}

template <class T>
Tensor<T> per_sample(const std::vector<double>& values, const std::vector<std::int64_t>& t) {
  std::vector<T> out;
  out.reserve(t.size());
  for (const auto ti : t) {
    if (ti < 0 || ti >= static_cast<std::int64_t>(values.size())) {
      throw ContractError("timestep index " + std::to_string(ti) + " outside [0, " +
                          std::to_string(values.size()) + ")");
    }
    out.push_back(static_cast<T>(values[ti]));
  }
  return Tensor<T>({static_cast<std::int64_t>(t.size()), 1, 1, 1}, std::move(out));
}

template <class T>
Tensor<T> q_sample(const Tensor<T>& x0, const std::vector<std::int64_t>& t,
                   const Tensor<T>& noise, const DiffusionSchedule& schedule) {
  if (x0.shape() != noise.shape()) {
    throw DimensionError("q_sample noise " + to_string(noise.shape()) + " does not match x0 " +
                         to_string(x0.shape()));
  }
  if (x0.rank() != 4 || x0.dim(0) != static_cast<std::int64_t>(t.size())) {
    throw DimensionError("q_sample expects [b,C,H,W] with one timestep per sample");
  }
  std::vector<double> a(schedule.alpha_bar.size()), s(schedule.alpha_bar.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    a[i] = std::sqrt(schedule.alpha_bar[i]);
    s[i] = std::sqrt(1.0 - schedule.alpha_bar[i]);
  }
  return add(mul(per_sample<T>(a, t), x0), mul(per_sample<T>(s, t), noise));
}

#define LIT_INSTANTIATE(T)                                                                   \
  template Tensor<T> per_sample<T>(const std::vector<double>&, const std::vector<std::int64_t>&); \
  template Tensor<T> q_sample<T>(const Tensor<T>&, const std::vector<std::int64_t>&,         \
                                 const Tensor<T>&, const DiffusionSchedule&);

LIT_INSTANTIATE(float)
LIT_INSTANTIATE(double)
#undef LIT_INSTANTIATE

}  // namespace lit
