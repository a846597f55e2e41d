#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "lit/desk.hpp"
#include "lit/error.hpp"
#include "lit/gradcheck_suite.hpp"
#include "lit/model.hpp"
#include "lit/ops.hpp"

using namespace lit;

namespace {

struct Fixture {
  ModelConfig teacher = ModelConfig::preset("dit-micro");
  ModelConfig student = ModelConfig::preset("lit-micro");
  DatasetSpec spec;
  std::vector<Sample> data;
  DiffusionSchedule schedule = make_schedule(1000);

  Fixture() {
    spec.samples = 256;
    data = generate_dataset(spec, 0);
  }
};

}  // namespace

TEST(GradientSuite, AllChecksPass) {
  for (const auto& r : run_gradient_suite(0, true)) {
    EXPECT_TRUE(r.passed) << r.name << " rel error " << r.max_rel_error;
    EXPECT_LT(r.max_rel_error, 1e-4) << r.name;
  }
}

TEST(Trainer, ZeroStepsLeavesInitialisation) {
  Fixture f;
  auto state = make_train_state(init_model<float>(f.teacher, 0), 0.995);
  TrainOptions o;
  o.steps = 0;
  EXPECT_TRUE(train(state, f.teacher, f.data, f.spec, f.schedule, o).empty());
  EXPECT_TRUE(bitwise_equal(state.params, init_model<float>(f.teacher, 0)));
}

TEST(Trainer, RunsAreBitwiseReproducible) {
  Fixture f;
  TrainOptions o;
  o.steps = 5;
  auto a = make_train_state(init_model<float>(f.teacher, 0), 0.995);
  auto b = make_train_state(init_model<float>(f.teacher, 0), 0.995);
  const auto ha = train(a, f.teacher, f.data, f.spec, f.schedule, o);
  const auto hb = train(b, f.teacher, f.data, f.spec, f.schedule, o);
  EXPECT_TRUE(bitwise_equal(a.params, b.params));
  EXPECT_TRUE(bitwise_equal(a.ema.shadow, b.ema.shadow));
  for (std::size_t i = 0; i < ha.size(); ++i) EXPECT_EQ(ha[i].total, hb[i].total);
}

TEST(Trainer, ChunkedTrainingEqualsOneRun) {
  Fixture f;
  TrainOptions o;
  o.steps = 4;
  auto whole = make_train_state(init_model<float>(f.teacher, 1), 0.995);
  train(whole, f.teacher, f.data, f.spec, f.schedule, o);
  auto parts = make_train_state(init_model<float>(f.teacher, 1), 0.995);
  o.steps = 2;
  train(parts, f.teacher, f.data, f.spec, f.schedule, o);
  train(parts, f.teacher, f.data, f.spec, f.schedule, o);
  EXPECT_TRUE(bitwise_equal(whole.params, parts.params));
}

TEST(Trainer, TeacherLossFalls) {
  Fixture f;
  TrainOptions o;
  o.steps = 200;
  auto state = make_train_state(init_model<float>(f.teacher, 0), 0.995);
  const auto h = train(state, f.teacher, f.data, f.spec, f.schedule, o);
  EXPECT_LT(h.back().total, h.front().total);
  EXPECT_LT(h.back().l_simple, 0.5 * h.front().l_simple);
}

TEST(Trainer, ZeroLambdaStudentMatchesNoTeacherRun) {
  Fixture f;
  const auto teacher = init_model<float>(f.teacher, 5);
  TrainOptions o;
  o.objective = Objective::kStudent;
  o.steps = 3;
  o.distill = {0.0, 0.0};
  auto a = make_train_state(init_model<float>(f.student, 2), 0.995);
  auto b = make_train_state(init_model<float>(f.student, 2), 0.995);
  const auto ha = train(a, f.student, f.data, f.spec, f.schedule, o);
  const auto hb = train(b, f.student, f.data, f.spec, f.schedule, o, {&teacher, &f.teacher});
  for (std::size_t i = 0; i < ha.size(); ++i) EXPECT_EQ(ha[i].total, hb[i].total);
  EXPECT_TRUE(bitwise_equal(a.params, b.params));
}

TEST(Trainer, StudentNeedsCompatibleTeacher) {
  Fixture f;
  TrainOptions o;
  o.objective = Objective::kStudent;
  o.steps = 1;
  auto s = make_train_state(init_model<float>(f.student, 0), 0.995);
  EXPECT_THROW(train(s, f.student, f.data, f.spec, f.schedule, o), ConfigError);
  ModelConfig other = f.teacher;
  other.num_classes = 7;
  const auto tp = init_model<float>(other, 0);
  EXPECT_THROW(train(s, f.student, f.data, f.spec, f.schedule, o, {&tp, &other}), ConfigError);
  EXPECT_EQ(s.step, 0);
}

TEST(Trainer, NonFiniteLossKeepsLastGoodState) {
  Fixture f;
  auto state = make_train_state(init_model<float>(f.teacher, 0), 0.995);
  TrainOptions o;
  o.steps = 2;
  train(state, f.teacher, f.data, f.spec, f.schedule, o);
  const ParamStoreF good = state.params;
  state.params.get("final_layer.linear.bias").mutable_data()[0] = std::numeric_limits<float>::quiet_NaN();
  EXPECT_THROW(train(state, f.teacher, f.data, f.spec, f.schedule, o), NumericFault);
  EXPECT_EQ(state.step, 2);
}

TEST(Trainer, DrawBatchDependsOnlyOnStep) {
  Fixture f;
  const auto a = draw_batch<float>(f.data, f.spec, f.schedule, 7, 8, 0.1, {});
  const auto b = draw_batch<float>(f.data, f.spec, f.schedule, 7, 8, 0.1, {});
  const auto c = draw_batch<float>(f.data, f.spec, f.schedule, 8, 8, 0.1, {});
  EXPECT_TRUE(bitwise_equal(a.x0, b.x0));
  EXPECT_TRUE(bitwise_equal(a.noise, b.noise));
  EXPECT_EQ(a.t, b.t);
  EXPECT_FALSE(bitwise_equal(a.noise, c.noise));
  for (auto y : a.y) EXPECT_LE(y, f.spec.num_classes);
}

TEST(Trainer, EvaluationIsDeterministic) {
  Fixture f;
  const auto p = init_model<float>(f.teacher, 3);
  const double a = evaluate_l_simple(p, f.teacher, f.data, f.spec, f.schedule, 40, 1, 16);
  const double b = evaluate_l_simple(p, f.teacher, f.data, f.spec, f.schedule, 40, 1, 7);
  EXPECT_NEAR(a, b, 1e-6);
  // A fresh model predicts zero, so the loss is the noise variance.
  EXPECT_NEAR(a, 1.0, 0.1);
}

TEST(Desk, SmallTeacherConfig) {
  const ModelConfig small = small_teacher_config(ModelConfig::preset("dit-micro"));
  EXPECT_EQ(small.hidden, 32);
  EXPECT_NO_THROW(check_distill_compatible(ModelConfig::preset("lit-micro"), small, {0.5, 0.05}));
}

TEST(Desk, ShortRecipeRuns) {
  DeskRecipe r = DeskRecipe::standard();
  r.teacher_steps = 3;
  r.student_steps = 3;
  r.eval_count = 16;
  const auto data = generate_dataset(r.data, r.data_seed);
  auto teacher = train_desk_teacher(r, r.teacher, data, {});
  const auto run =
      train_desk_student(r, r.student, data, {&teacher.ema.shadow, &r.teacher}, true, {4, 5, 6});
  EXPECT_EQ(run.history.size(), 3u);
  EXPECT_FALSE(run.report.copied.empty());
  EXPECT_TRUE(std::isfinite(run.eval_l_simple));
}
