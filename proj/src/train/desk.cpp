#include "lit/desk.hpp"

#include "lit/error.hpp"
#include "lit/model.hpp"

namespace lit {

DeskRecipe DeskRecipe::standard() {
  DeskRecipe r;
  r.teacher_options.objective = Objective::kTeacher;
  r.teacher_options.steps = r.teacher_steps;
  r.student_options.objective = Objective::kStudent;
  r.student_options.steps = r.student_steps;
  return r;
}

ModelConfig small_teacher_config(const ModelConfig& teacher) {
  ModelConfig c = teacher;
  c.name = teacher.name + "-half";
  c.hidden = teacher.hidden / 2;
  c.validate();
  return c;
}

TrainState<float> train_desk_teacher(const DeskRecipe& recipe, const ModelConfig& config,
                                     const std::vector<Sample>& data, const Seeds& seeds) {
  TrainOptions options = recipe.teacher_options;
  options.objective = Objective::kTeacher;
  options.steps = recipe.teacher_steps;
  options.seeds = seeds;
  TrainState<float> state =
      make_train_state(init_model<float>(config, seeds.init), options.ema_decay);
  train(state, config, data, recipe.data, make_schedule(config.num_timesteps), options);
  return state;
}

double desk_eval(const DeskRecipe& recipe, const TrainState<float>& state,
                 const ModelConfig& config, const std::vector<Sample>& data) {
  const ParamStoreF& weights = recipe.eval_ema ? state.ema.shadow : state.params;
  return evaluate_l_simple(weights, config, data, recipe.data, make_schedule(config.num_timesteps),
                           recipe.eval_count, recipe.eval_seed);
}

StudentRun train_desk_student(const DeskRecipe& recipe, const ModelConfig& student,
                              const std::vector<Sample>& data, ModelRef<float> teacher,
                              bool inherit_weights, const Seeds& seeds,
                              const DistillConfig* distill) {
  TrainOptions options = recipe.student_options;
  options.objective = Objective::kStudent;
  options.steps = recipe.student_steps;
  options.seeds = seeds;
  if (distill) options.distill = *distill;

  StudentRun run;
  ParamStoreF init;
  if (inherit_weights) {
    if (!teacher.params || !teacher.config) throw ConfigError("inheritance needs a teacher");
    init = inherit(*teacher.params, *teacher.config, student, recipe.inherit, seeds.init, &run.report);
  } else {
    init = init_model<float>(student, seeds.init);
  }
  run.state = make_train_state(std::move(init), options.ema_decay);
  run.history = train(run.state, student, data, recipe.data, make_schedule(student.num_timesteps),
                      options, options.distill.needs_teacher() ? teacher : ModelRef<float>{});
  run.eval_l_simple = desk_eval(recipe, run.state, student, data);
  return run;
}

}  // namespace lit
