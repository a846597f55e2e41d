#pragma once

#include <cstdint>
#include <vector>

#include "lit/trainer.hpp"

namespace lit {

// The small-scale recipe: a softmax teacher trained on the blob dataset, then
// linear students converted from it and trained with hybrid distillation.
struct DeskRecipe {
  ModelConfig teacher = ModelConfig::preset("dit-micro");
  ModelConfig student = ModelConfig::preset("lit-micro");
  DatasetSpec data;
  std::uint64_t data_seed = 0;
  std::int64_t teacher_steps = 2000;
  std::int64_t student_steps = 500;
  TrainOptions teacher_options;
  TrainOptions student_options;
  InheritSpec inherit;
  std::int64_t eval_count = 512;
  std::uint64_t eval_seed = 99;
  bool eval_ema = true;

  static DeskRecipe standard();
};

// Same depth and geometry as `teacher` at half the width.
ModelConfig small_teacher_config(const ModelConfig& teacher);

TrainState<float> train_desk_teacher(const DeskRecipe& recipe, const ModelConfig& config,
                                     const std::vector<Sample>& data, const Seeds& seeds);

struct StudentRun {
  TrainState<float> state;
  std::vector<LossBreakdown> history;
  ConversionReport report;  // empty when initialised from scratch
  double eval_l_simple = 0.0;
};

// Trains `student` for recipe.student_steps. With `inherit_weights` the
// student starts from `teacher` under recipe.inherit, otherwise from
// init_model(student, seeds.init). The teacher also supervises the
// distillation terms whenever their weights are positive.
StudentRun train_desk_student(const DeskRecipe& recipe, const ModelConfig& student,
                              const std::vector<Sample>& data, ModelRef<float> teacher,
                              bool inherit_weights, const Seeds& seeds,
                              const DistillConfig* distill = nullptr);

double desk_eval(const DeskRecipe& recipe, const TrainState<float>& state,
                 const ModelConfig& config, const std::vector<Sample>& data);

}  // namespace lit
