#include "lit/trainer.hpp"

#include <chrono>
#include <cmath>

#include "lit/error.hpp"
#include "lit/ops.hpp"
#include "lit/random.hpp"
#include "lit/training_log.hpp"

namespace lit {

template <class T>
TrainState<T> make_train_state(ParamStore<T> params, double ema_decay) {
  TrainState<T> s;
  s.optimizer = AdamState<T>::zeros_like(params);
  s.ema = EmaState<T>::init(params, ema_decay);
  s.params = std::move(params);
  return s;
}

template <class T>
TrainingBatch<T> draw_batch(const std::vector<Sample>& data, const DatasetSpec& spec,
                            const DiffusionSchedule& schedule, std::int64_t step,
                            std::int64_t batch, double label_dropout, const Seeds& seeds) {
  if (data.empty()) throw ConfigError("training needs a non-empty dataset");
  Rng rng(seeds.data, {static_cast<std::uint64_t>(step)});
  TrainingBatch<T> out;
  std::vector<std::int64_t> ids(static_cast<std::size_t>(batch));
  for (auto& id : ids) id = rng.uniform_int(0, static_cast<std::int64_t>(data.size()) - 1);
  for (const auto id : ids) {
    out.y.push_back(rng.bernoulli(label_dropout) ? spec.num_classes : data[id].label);
    out.t.push_back(rng.uniform_int(0, schedule.size() - 1));
  }
  out.x0 = stack_images<T>(data, ids, spec);
  Rng noise(seeds.noise, {static_cast<std::uint64_t>(step)});
  out.noise = noise.normal_tensor<T>(out.x0.shape());
  return out;
}

template <class T>
std::vector<LossBreakdown> train(TrainState<T>& state, const ModelConfig& config,
                                 const std::vector<Sample>& data, const DatasetSpec& spec,
                                 const DiffusionSchedule& schedule, const TrainOptions& options,
                                 ModelRef<T> teacher,
                                 const std::function<void(std::int64_t, const LossBreakdown&)>&
                                     on_step) {
  if (options.steps < 0 || options.batch < 1) throw ConfigError("invalid step or batch count");
  if (spec.image_size != config.image_size || spec.channels != config.in_channels ||
      spec.num_classes != config.num_classes) {
    throw ConfigError("dataset geometry does not match the model config");
  }
  if (options.objective == Objective::kStudent && options.distill.needs_teacher()) {
    if (!teacher.params || !teacher.config) {
      throw ConfigError("distillation weights are positive but no teacher was given");
    }
    check_distill_compatible(config, *teacher.config, options.distill);
  }
  if (options.objective == Objective::kTeacher && !config.predicts_variance) {
    throw ConfigError("teacher training needs a variance head");
  }

  std::vector<LossBreakdown> history;
  history.reserve(static_cast<std::size_t>(options.steps));
  const auto start = std::chrono::steady_clock::now();
  const ModelRef<T> student{&state.params, &config};
  for (std::int64_t i = 0; i < options.steps; ++i) {
    const std::int64_t step = state.step + 1;
    const TrainingBatch<T> batch =
        draw_batch<T>(data, spec, schedule, step, options.batch, options.label_dropout, options.seeds);

    Tensor<T> total;
    LossBreakdown values;
    if (options.objective == Objective::kTeacher) {
      std::vector<std::int64_t> t_model(batch.t.size());
      for (std::size_t j = 0; j < t_model.size(); ++j) t_model[j] = schedule.timesteps[batch.t[j]];
      const Tensor<T> x_t = q_sample(batch.x0, batch.t, batch.noise, schedule);
      const ModelOutput<T> out = model_forward(x_t, t_model, batch.y, state.params, config);
      const Tensor<T> simple = l_simple(out.eps, batch.noise);
      const Tensor<T> vlb = vlb_term(batch.x0, x_t, batch.t, out.eps, out.v, schedule);
      total = add(simple, vlb);
      values.l_simple = static_cast<double>(simple.item());
      values.l_var = static_cast<double>(vlb.item());
      values.total = static_cast<double>(total.item());
    } else {
      const ModelRef<T> t = options.distill.needs_teacher() ? teacher : ModelRef<T>{};
      const HybridLoss<T> loss = hybrid_loss(batch, student, t, schedule, options.distill);
      total = loss.total;
      values = loss.values();
    }
    if (!std::isfinite(values.total)) {
      throw NumericFault("loss became non-finite at step " + std::to_string(step));
    }

    state.params.zero_grad();
    total.backward();
    adamw_step(state.params, state.optimizer, options.optimizer);
    ema_update(state.params, state.ema);
    state.step = step;
    history.push_back(values);

    if (!options.log_path.empty() && (step % options.log_every == 0 || i + 1 == options.steps)) {
      TrainingRecord r;
      r.step = step;
      r.l_simple = values.l_simple;
      r.l_noise = values.l_noise;
      r.l_var = values.l_var;
      r.total = values.total;
      r.lr = options.optimizer.lr;
      r.wall_time =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      training_log_append(options.log_path, r);
    }
    if (on_step) on_step(step, values);
  }
  state.params.zero_grad();
  return history;
}

template <class T>
double evaluate_l_simple(const ParamStore<T>& params, const ModelConfig& config,
                         const std::vector<Sample>& data, const DatasetSpec& spec,
                         const DiffusionSchedule& schedule, std::int64_t count, std::uint64_t seed,
                         std::int64_t batch) {
  if (count < 1 || batch < 1) throw ConfigError("evaluation needs a positive sample count");
  NoGradGuard no_grad;
  double sum = 0.0;
  std::int64_t seen = 0;
  for (std::int64_t first = 0; first < count; first += batch) {
    const std::int64_t n = std::min(batch, count - first);
    std::vector<std::int64_t> ids, t, t_model, y;
    for (std::int64_t j = first; j < first + n; ++j) {
      ids.push_back(j % static_cast<std::int64_t>(data.size()));
      y.push_back(data[ids.back()].label);
      // Evenly spaced over the schedule, offset to avoid always hitting t = 0.
      t.push_back(((2 * j + 1) * schedule.size()) / (2 * count));
      t_model.push_back(schedule.timesteps[t.back()]);
    }
    const Tensor<T> x0 = stack_images<T>(data, ids, spec);
    // Noise is keyed by sample index so the score does not depend on batch.
    Tensor<T> noise = Tensor<T>::zeros(x0.shape());
    const std::int64_t per = x0.numel() / n;
    for (std::int64_t j = 0; j < n; ++j) {
      Rng rng(seed, {static_cast<std::uint64_t>(first + j)});
      for (std::int64_t i = 0; i < per; ++i) noise.mutable_data()[j * per + i] = static_cast<T>(rng.normal());
    }
    const Tensor<T> x_t = q_sample(x0, t, noise, schedule);
    const ModelOutput<T> out = model_forward(x_t, t_model, y, params, config);
    sum += static_cast<double>(l_simple(out.eps, noise).item()) * static_cast<double>(n);
    seen += n;
  }
  return sum / static_cast<double>(seen);
}

#define LIT_INSTANTIATE(T)                                                                        \
  template TrainState<T> make_train_state<T>(ParamStore<T>, double);                              \
  template TrainingBatch<T> draw_batch<T>(const std::vector<Sample>&, const DatasetSpec&,         \
                                          const DiffusionSchedule&, std::int64_t, std::int64_t,   \
                                          double, const Seeds&);                                  \
  template std::vector<LossBreakdown> train<T>(                                                   \
      TrainState<T>&, const ModelConfig&, const std::vector<Sample>&, const DatasetSpec&,         \
      const DiffusionSchedule&, const TrainOptions&, ModelRef<T>,                                 \
      const std::function<void(std::int64_t, const LossBreakdown&)>&);                            \
  template double evaluate_l_simple<T>(const ParamStore<T>&, const ModelConfig&,                  \
                                       const std::vector<Sample>&, const DatasetSpec&,            \
                                       const DiffusionSchedule&, std::int64_t, std::uint64_t,     \
                                       std::int64_t);

LIT_INSTANTIATE(float)
LIT_INSTANTIATE(double)
#undef LIT_INSTANTIATE

}  // namespace lit
