#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "lit/model.hpp"
#include "lit/tensor.hpp"

namespace lit {

// Precomputed per-step quantities. For a respaced schedule, index i refers to
// the i-th kept step and `timesteps[i]` is the original step fed to the model.
struct DiffusionSchedule {
  std::vector<double> beta;
  std::vector<double> alpha;
  std::vector<double> alpha_bar;
  std::vector<double> alpha_bar_prev;
  std::vector<double> posterior_variance;  // index 0 holds beta[0]
  std::vector<double> posterior_mean_coef1;  // multiplies x0
  std::vector<double> posterior_mean_coef2;  // multiplies x_t
  std::vector<std::int64_t> timesteps;

  std::int64_t size() const { return static_cast<std::int64_t>(beta.size()); }
  void check_index(std::int64_t t) const;
};

// Linear beta schedule over T steps.
DiffusionSchedule make_schedule(std::int64_t steps, double beta_start = 1e-4,
                                double beta_end = 0.02);
DiffusionSchedule schedule_from_betas(std::vector<double> betas,
                                      std::vector<std::int64_t> timesteps);

// Uniformly strided subset of [0, T): round(i (T-1)/(steps-1)).
std::vector<std::int64_t> uniform_stride_timesteps(std::int64_t total, std::int64_t steps);
// Schedule over the kept steps with betas re-derived from alpha_bar.
DiffusionSchedule respace(const DiffusionSchedule& base, std::int64_t steps);

// [b,1,1,1] tensor holding values[t_i] for each sample.
template <class T>
Tensor<T> per_sample(const std::vector<double>& values, const std::vector<std::int64_t>& t);

// sqrt(abar_t) x0 + sqrt(1 - abar_t) noise, per sample.
template <class T>
Tensor<T> q_sample(const Tensor<T>& x0, const std::vector<std::int64_t>& t,
                   const Tensor<T>& noise, const DiffusionSchedule& schedule);

template <class T>
Tensor<T> l_simple(const Tensor<T>& eps_hat, const Tensor<T>& eps);

// frac in [0,1]: log Sigma = frac log beta_t + (1 - frac) log beta_tilde_t.
template <class T>
Tensor<T> log_variance_from_fraction(const Tensor<T>& frac, const std::vector<std::int64_t>& t,
                                     const DiffusionSchedule& schedule);
template <class T>
Tensor<T> variance_from_fraction(const Tensor<T>& frac, const std::vector<std::int64_t>& t,
                                 const DiffusionSchedule& schedule);
// Raw network output v: frac = (clip(v, -1, 1) + 1) / 2.
template <class T>
Tensor<T> fraction_from_v(const Tensor<T>& v_raw);
template <class T>
Tensor<T> log_variance_from_v(const Tensor<T>& v_raw, const std::vector<std::int64_t>& t,
                              const DiffusionSchedule& schedule);
template <class T>
Tensor<T> variance_from_v(const Tensor<T>& v_raw, const std::vector<std::int64_t>& t,
                          const DiffusionSchedule& schedule);

// (1/sqrt(alpha_t)) (x_t - beta_t / sqrt(1 - abar_t) eps_hat), per sample.
template <class T>
Tensor<T> p_mean(const Tensor<T>& x_t, const std::vector<std::int64_t>& t,
                 const Tensor<T>& eps_hat, const DiffusionSchedule& schedule);

// mean + sqrt(Sigma) noise for t >= 1, the mean alone at t = 0.
template <class T>
Tensor<T> p_sample_step(const Tensor<T>& x_t, std::int64_t t, const Tensor<T>& eps_hat,
                        const Tensor<T>& sigma, const DiffusionSchedule& schedule,
                        const Tensor<T>& noise);

// Variational bound term in bits per dimension, averaged over the batch.
// The model mean is detached so only the variance head learns from it. At
// t = 0 the Gaussian negative log-likelihood of x0 replaces the KL.
template <class T>
Tensor<T> vlb_term(const Tensor<T>& x0, const Tensor<T>& x_t, const std::vector<std::int64_t>& t,
                   const Tensor<T>& eps_hat, const Tensor<T>& v_raw,
                   const DiffusionSchedule& schedule);

template <class T>
using Denoiser = std::function<ModelOutput<T>(const Tensor<T>& x_t,
                                              const std::vector<std::int64_t>& t,
                                              const std::vector<std::int64_t>& y)>;

struct SampleOptions {
  std::int64_t steps = 250;
  double cfg_scale = 1.0;
  std::uint64_t seed = 0;
  std::int64_t null_label = -1;  // required when cfg_scale > 1
};

// Ancestral sampling of len(y) images of shape [C,S,S]. Each sample draws from
// its own noise stream, so results do not depend on batch composition. With
// no variance head the posterior variance is used.
template <class T>
Tensor<T> sample(const Denoiser<T>& model, const DiffusionSchedule& base,
                 const std::vector<std::int64_t>& y, Shape image_shape,
                 const SampleOptions& options);

template <class T>
Tensor<T> sample(const ParamStore<T>& params, const ModelConfig& config,
                 const DiffusionSchedule& base, const std::vector<std::int64_t>& y,
                 SampleOptions options);

// Combined guided prediction eps_null + s (eps_cond - eps_null).
template <class T>
Tensor<T> guided_eps(const Tensor<T>& eps_cond, const Tensor<T>& eps_null, double scale);

}  // namespace lit
