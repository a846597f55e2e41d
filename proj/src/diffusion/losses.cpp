#include <cmath>
#include <numbers>

#include "lit/diffusion.hpp"
#include "lit/error.hpp"
#include "lit/ops.hpp"

namespace lit {

namespace {

std::vector<double> log_of(const std::vector<double>& v) {
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = std::log(v[i]);
  return out;
}

}  // namespace

template <class T>
Tensor<T> l_simple(const Tensor<T>& eps_hat, const Tensor<T>& eps) {
  return mse(eps_hat, eps);
}

template <class T>
Tensor<T> fraction_from_v(const Tensor<T>& v_raw) {
  return scale(add_scalar(clamp(v_raw, T(-1), T(1)), T(1)), T(0.5));
}

template <class T>
Tensor<T> log_variance_from_fraction(const Tensor<T>& frac, const std::vector<std::int64_t>& t,
                                     const DiffusionSchedule& schedule) {
  const Tensor<T> log_beta = per_sample<T>(log_of(schedule.beta), t);
  const Tensor<T> log_tilde = per_sample<T>(log_of(schedule.posterior_variance), t);
  // frac log beta + (1 - frac) log beta_tilde = log beta_tilde + frac (log beta - log beta_tilde)
  return add(log_tilde, mul(frac, sub(log_beta, log_tilde)));
}

template <class T>
Tensor<T> variance_from_fraction(const Tensor<T>& frac, const std::vector<std::int64_t>& t,
                                 const DiffusionSchedule& schedule) {
  return exp(log_variance_from_fraction(frac, t, schedule));
}

template <class T>
Tensor<T> log_variance_from_v(const Tensor<T>& v_raw, const std::vector<std::int64_t>& t,
                              const DiffusionSchedule& schedule) {
  return log_variance_from_fraction(fraction_from_v(v_raw), t, schedule);
}

template <class T>
Tensor<T> variance_from_v(const Tensor<T>& v_raw, const std::vector<std::int64_t>& t,
                          const DiffusionSchedule& schedule) {
  return exp(log_variance_from_v(v_raw, t, schedule));
}

template <class T>
Tensor<T> p_mean(const Tensor<T>& x_t, const std::vector<std::int64_t>& t,
                 const Tensor<T>& eps_hat, const DiffusionSchedule& schedule) {
  std::vector<double> inv_sqrt_alpha(schedule.alpha.size()), eps_coef(schedule.alpha.size());
  for (std::size_t i = 0; i < inv_sqrt_alpha.size(); ++i) {
    inv_sqrt_alpha[i] = 1.0 / std::sqrt(schedule.alpha[i]);
    eps_coef[i] = schedule.beta[i] / std::sqrt(1.0 - schedule.alpha_bar[i]);
  }
  return mul(per_sample<T>(inv_sqrt_alpha, t),
             sub(x_t, mul(per_sample<T>(eps_coef, t), eps_hat)));
}

template <class T>
Tensor<T> p_sample_step(const Tensor<T>& x_t, std::int64_t t, const Tensor<T>& eps_hat,
                        const Tensor<T>& sigma, const DiffusionSchedule& schedule,
                        const Tensor<T>& noise) {
  schedule.check_index(t);
  const std::vector<std::int64_t> ts(static_cast<std::size_t>(x_t.dim(0)), t);
  const Tensor<T> mean = p_mean(x_t, ts, eps_hat, schedule);
  if (t == 0) return mean;
  return add(mean, mul(sqrt(sigma), noise));
}

template <class T>
Tensor<T> vlb_term(const Tensor<T>& x0, const Tensor<T>& x_t, const std::vector<std::int64_t>& t,
                   const Tensor<T>& eps_hat, const Tensor<T>& v_raw,
                   const DiffusionSchedule& schedule) {
  if (!v_raw.defined()) throw ContractError("the variational term needs a variance head");
  Tensor<T> mean_sq_kl, mean_sq_nll;
  {
    NoGradGuard no_grad;
    const Tensor<T> model_mean = p_mean(x_t.detach(), t, eps_hat.detach(), schedule);
    const Tensor<T> true_mean = add(mul(per_sample<T>(schedule.posterior_mean_coef1, t), x0),
                                    mul(per_sample<T>(schedule.posterior_mean_coef2, t), x_t));
    mean_sq_kl = square(sub(true_mean, model_mean)).detach();
    mean_sq_nll = square(sub(x0, model_mean)).detach();
  }
  const Tensor<T> log_var = log_variance_from_v(v_raw, t, schedule);
  const Tensor<T> inv_var = exp(neg(log_var));
  const Tensor<T> log_true = per_sample<T>(log_of(schedule.posterior_variance), t);

  // KL(N(m1, e^l1) || N(m2, e^l2)) = 0.5 (-1 + l2 - l1 + e^(l1 - l2) + (m1 - m2)^2 e^-l2)
  const Tensor<T> kl = scale(add(add_scalar(sub(log_var, log_true), T(-1)),
                                 add(exp(sub(log_true, log_var)), mul(mean_sq_kl, inv_var))),
                             T(0.5));
  const Tensor<T> nll = scale(
      add_scalar(add(log_var, mul(mean_sq_nll, inv_var)), static_cast<T>(std::log(2.0 * std::numbers::pi))),
      T(0.5));

  std::vector<double> at_zero(static_cast<std::size_t>(schedule.size()), 0.0);
  at_zero[0] = 1.0;
  std::vector<double> not_zero(static_cast<std::size_t>(schedule.size()), 1.0);
  not_zero[0] = 0.0;
  const Tensor<T> term = add(mul(per_sample<T>(not_zero, t), kl), mul(per_sample<T>(at_zero, t), nll));
  return scale(mean_all(term), static_cast<T>(1.0 / std::log(2.0)));
}

#define LIT_INSTANTIATE(T)                                                                        \
  template Tensor<T> l_simple<T>(const Tensor<T>&, const Tensor<T>&);                             \
  template Tensor<T> fraction_from_v<T>(const Tensor<T>&);                                        \
  template Tensor<T> log_variance_from_fraction<T>(const Tensor<T>&,                              \
                                                   const std::vector<std::int64_t>&,              \
                                                   const DiffusionSchedule&);                     \
  template Tensor<T> variance_from_fraction<T>(const Tensor<T>&, const std::vector<std::int64_t>&, \
                                               const DiffusionSchedule&);                         \
  template Tensor<T> log_variance_from_v<T>(const Tensor<T>&, const std::vector<std::int64_t>&,   \
                                            const DiffusionSchedule&);                            \
  template Tensor<T> variance_from_v<T>(const Tensor<T>&, const std::vector<std::int64_t>&,       \
                                        const DiffusionSchedule&);                                \
  template Tensor<T> p_mean<T>(const Tensor<T>&, const std::vector<std::int64_t>&,                \
                               const Tensor<T>&, const DiffusionSchedule&);                       \
  template Tensor<T> p_sample_step<T>(const Tensor<T>&, std::int64_t, const Tensor<T>&,           \
                                      const Tensor<T>&, const DiffusionSchedule&,                 \
                                      const Tensor<T>&);                                          \
  template Tensor<T> vlb_term<T>(const Tensor<T>&, const Tensor<T>&,                              \
                                 const std::vector<std::int64_t>&, const Tensor<T>&,              \
                                 const Tensor<T>&, const DiffusionSchedule&);

LIT_INSTANTIATE(float)
LIT_INSTANTIATE(double)
#undef LIT_INSTANTIATE

}  // namespace lit
