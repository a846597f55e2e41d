#include "lit/diffusion.hpp"
#include "lit/error.hpp"
#include "lit/ops.hpp"
#include "lit/random.hpp"

namespace lit {

namespace {

// Stream (sample, step) of the run seed, so sample i sees the same noise
// regardless of how many other samples share the batch.
template <class T>
Tensor<T> per_sample_noise(std::uint64_t seed, std::uint64_t step, std::int64_t batch,
                           const Shape& image_shape) {
  const std::int64_t per = numel(image_shape);
  std::vector<T> values(static_cast<std::size_t>(batch * per));
  for (std::int64_t i = 0; i < batch; ++i) {
    Rng rng(seed, {static_cast<std::uint64_t>(i), step});
    for (std::int64_t j = 0; j < per; ++j) values[i * per + j] = static_cast<T>(rng.normal());
  }
  Shape shape{batch};
  shape.insert(shape.end(), image_shape.begin(), image_shape.end());
  return Tensor<T>(shape, std::move(values));
}

}  // namespace

template <class T>
Tensor<T> guided_eps(const Tensor<T>& eps_cond, const Tensor<T>& eps_null, double scale_factor) {
  return add(eps_null, scale(sub(eps_cond, eps_null), static_cast<T>(scale_factor)));
}

template <class T>
Tensor<T> sample(const Denoiser<T>& model, const DiffusionSchedule& base,
                 const std::vector<std::int64_t>& y, Shape image_shape,
                 const SampleOptions& options) {
  if (options.steps > base.size()) {
    throw ConfigError("sampling steps " + std::to_string(options.steps) +
                      " exceed the schedule length " + std::to_string(base.size()));
  }
  if (options.cfg_scale < 1.0) throw ConfigError("cfg_scale must be >= 1");
  const bool guided = options.cfg_scale > 1.0;
  if (guided && options.null_label < 0) throw ConfigError("guidance needs a null label");
  NoGradGuard no_grad;

  const DiffusionSchedule schedule = respace(base, options.steps);
  const auto b = static_cast<std::int64_t>(y.size());
  const std::vector<std::int64_t> null_labels(y.size(), options.null_label);
  Tensor<T> x = per_sample_noise<T>(options.seed, 0, b, image_shape);
  for (std::int64_t idx = schedule.size() - 1; idx >= 0; --idx) {
    const std::vector<std::int64_t> t_model(y.size(), schedule.timesteps[idx]);
    const std::vector<std::int64_t> t_index(y.size(), idx);
    const ModelOutput<T> out = model(x, t_model, y);
    Tensor<T> eps = out.eps;
    if (guided) eps = guided_eps(out.eps, model(x, t_model, null_labels).eps, options.cfg_scale);
    const Tensor<T> sigma = out.v.defined()
                                ? variance_from_v(out.v, t_index, schedule)
                                : per_sample<T>(schedule.posterior_variance, t_index);
    const Tensor<T> noise =
        per_sample_noise<T>(options.seed, static_cast<std::uint64_t>(idx) + 1, b, image_shape);
    x = p_sample_step(x, idx, eps, sigma, schedule, noise);
  }
  return x;
}

template <class T>
Tensor<T> sample(const ParamStore<T>& params, const ModelConfig& config,
                 const DiffusionSchedule& base, const std::vector<std::int64_t>& y,
                 SampleOptions options) {
  if (options.null_label < 0) options.null_label = config.num_classes;
  const Denoiser<T> model = [&](const Tensor<T>& x, const std::vector<std::int64_t>& t,
                                const std::vector<std::int64_t>& labels) {
    return model_forward(x, t, labels, params, config);
  };
  return sample(model, base, y, {config.in_channels, config.image_size, config.image_size},
                options);
}

#define LIT_INSTANTIATE(T)                                                                    \
  template Tensor<T> guided_eps<T>(const Tensor<T>&, const Tensor<T>&, double);               \
  template Tensor<T> sample<T>(const Denoiser<T>&, const DiffusionSchedule&,                  \
                               const std::vector<std::int64_t>&, Shape, const SampleOptions&); \
  template Tensor<T> sample<T>(const ParamStore<T>&, const ModelConfig&,                      \
                               const DiffusionSchedule&, const std::vector<std::int64_t>&,    \
                               SampleOptions);

LIT_INSTANTIATE(float)
LIT_INSTANTIATE(double)
#undef LIT_INSTANTIATE

}  // namespace lit
