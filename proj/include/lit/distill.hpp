#pragma once

#include <cstdint>
#include <vector>

#include "lit/diffusion.hpp"
#include "lit/model.hpp"

namespace lit {

struct DistillConfig {
  double lambda1 = 0.5;   // noise-prediction distillation weight
  double lambda2 = 0.05;  // variance distillation weight

  void validate() const;
  bool needs_teacher() const { return lambda1 > 0.0 || lambda2 > 0.0; }
};

// One training batch: clean images, the noise draw, timesteps and labels.
template <class T>
struct TrainingBatch {
  Tensor<T> x0;     // [b,C,S,S]
  Tensor<T> noise;  // same shape
  std::vector<std::int64_t> t;
  std::vector<std::int64_t> y;
};

template <class T>
struct ModelRef {
  const ParamStore<T>* params = nullptr;
  const ModelConfig* config = nullptr;
};

struct LossBreakdown {
  double l_simple = 0.0;
  double l_noise = 0.0;
  double l_var = 0.0;
  double total = 0.0;
};

template <class T>
struct HybridLoss {
  Tensor<T> total;
  Tensor<T> l_simple;
  Tensor<T> l_noise;  // undefined without a teacher
  Tensor<T> l_var;    // undefined without a teacher

  LossBreakdown values() const;
};

template <class T>
Tensor<T> l_noise(const Tensor<T>& eps_teacher, const Tensor<T>& eps_student);
template <class T>
Tensor<T> l_var(const Tensor<T>& sigma_teacher, const Tensor<T>& sigma_student);

// L_simple + lambda1 L_noise + lambda2 L_var on a shared x_t. The teacher runs
// without gradient recording. Terms whose weight is zero are left out of the
// total, so lambda1 = lambda2 = 0 gives exactly L_simple. The teacher may be
// omitted when both weights are zero.
template <class T>
HybridLoss<T> hybrid_loss(const TrainingBatch<T>& batch, ModelRef<T> student, ModelRef<T> teacher,
                          const DiffusionSchedule& schedule, const DistillConfig& config);

// Throws ConfigError when the teacher cannot supervise the student.
void check_distill_compatible(const ModelConfig& student, const ModelConfig& teacher,
                              const DistillConfig& config);

// (lambda1, lambda2) cells of the distillation-weight grid. The first cell
// uses a teacher of the student's own size, the rest a larger one.
struct LambdaCell {
  double lambda1;
  double lambda2;
  bool small_teacher;
};
std::vector<LambdaCell> lambda_grid();

}  // namespace lit
