#include "lit/distill.hpp"

#include <cmath>

#include "lit/error.hpp"
#include "lit/ops.hpp"

namespace lit {

void DistillConfig::validate() const {
  if (!(lambda1 >= 0.0) || !(lambda2 >= 0.0) || !std::isfinite(lambda1) ||
      !std::isfinite(lambda2)) {
    throw ConfigError("distillation weights must be finite and non-negative");
  }
}

template <class T>
LossBreakdown HybridLoss<T>::values() const {
  LossBreakdown out;
  out.l_simple = static_cast<double>(l_simple.item());
  out.l_noise = l_noise.defined() ? static_cast<double>(l_noise.item()) : 0.0;
  out.l_var = l_var.defined() ? static_cast<double>(l_var.item()) : 0.0;
  out.total = static_cast<double>(total.item());
  return out;
}

template <class T>
Tensor<T> l_noise(const Tensor<T>& eps_teacher, const Tensor<T>& eps_student) {
  return mse(eps_student, eps_teacher);
}

template <class T>
Tensor<T> l_var(const Tensor<T>& sigma_teacher, const Tensor<T>& sigma_student) {
  return mse(sigma_student, sigma_teacher);
}

void check_distill_compatible(const ModelConfig& student, const ModelConfig& teacher,
                              const DistillConfig& config) {
  if (student.in_channels != teacher.in_channels || student.image_size != teacher.image_size) {
    throw ConfigError("teacher and student must share channels and image size");
  }
  if (student.num_classes != teacher.num_classes) {
    throw ConfigError("teacher and student must share the label set");
  }
  if (config.lambda2 > 0.0 && (!student.predicts_variance || !teacher.predicts_variance)) {
    throw ConfigError("variance distillation needs variance heads on both models");
  }
}

template <class T>
HybridLoss<T> hybrid_loss(const TrainingBatch<T>& batch, ModelRef<T> student, ModelRef<T> teacher,
                          const DiffusionSchedule& schedule, const DistillConfig& config) {
  config.validate();
  if (!student.params || !student.config) throw ContractError("hybrid_loss needs a student");
  const bool have_teacher = teacher.params && teacher.config;
  if (config.needs_teacher() && !have_teacher) {
    throw ConfigError("nonzero distillation weights need a teacher");
  }
  if (have_teacher) check_distill_compatible(*student.config, *teacher.config, config);

  std::vector<std::int64_t> t_model(batch.t.size());
  for (std::size_t i = 0; i < batch.t.size(); ++i) {
    schedule.check_index(batch.t[i]);
    t_model[i] = schedule.timesteps[batch.t[i]];
  }
  const Tensor<T> x_t = q_sample(batch.x0, batch.t, batch.noise, schedule);
  const ModelOutput<T> s = model_forward(x_t, t_model, batch.y, *student.params, *student.config);

  HybridLoss<T> out;
  out.l_simple = l_simple(s.eps, batch.noise);
  out.total = out.l_simple;
  if (!have_teacher) return out;

  ModelOutput<T> te;
  Tensor<T> sigma_teacher;
  {
    NoGradGuard no_grad;
    te = model_forward(x_t, t_model, batch.y, *teacher.params, *teacher.config);
    if (te.v.defined()) sigma_teacher = variance_from_v(te.v, batch.t, schedule);
  }
  out.l_noise = l_noise(te.eps, s.eps);
  if (sigma_teacher.defined() && s.v.defined()) {
    out.l_var = l_var(sigma_teacher, variance_from_v(s.v, batch.t, schedule));
  }
  if (config.lambda1 > 0.0) {
    out.total = add(out.total, scale(out.l_noise, static_cast<T>(config.lambda1)));
  }
  if (config.lambda2 > 0.0) {
    out.total = add(out.total, scale(out.l_var, static_cast<T>(config.lambda2)));
  }
  return out;
}

std::vector<LambdaCell> lambda_grid() {
  return {{0.1, 0.0, true},   {0.0, 0.0, false},  {0.1, 0.0, false},
          {0.05, 0.0, false}, {0.5, 0.0, false},  {0.1, 0.05, false},
          {0.0, 0.05, false}, {0.05, 0.05, false}, {0.5, 0.05, false}};
}

#define LIT_INSTANTIATE(T)                                                                       \
  template struct HybridLoss<T>;                                                                 \
  template Tensor<T> l_noise<T>(const Tensor<T>&, const Tensor<T>&);                             \
  template Tensor<T> l_var<T>(const Tensor<T>&, const Tensor<T>&);                               \
  template HybridLoss<T> hybrid_loss<T>(const TrainingBatch<T>&, ModelRef<T>, ModelRef<T>,       \
                                        const DiffusionSchedule&, const DistillConfig&);

LIT_INSTANTIATE(float)
LIT_INSTANTIATE(double)
#undef LIT_INSTANTIATE

}  // namespace lit
