#include <gtest/gtest.h>

#include <cmath>

#include "lit/distill.hpp"
#include "lit/error.hpp"
#include "lit/ops.hpp"
#include "lit/random.hpp"

using namespace lit;

namespace {

template <class T>
TrainingBatch<T> make_batch(const ModelConfig& c, std::uint64_t seed) {
  Rng rng(seed);
  TrainingBatch<T> b;
  b.x0 = rng.uniform_tensor<T>({4, c.in_channels, c.image_size, c.image_size}, -1, 1);
  b.noise = rng.normal_tensor<T>(b.x0.shape());
  b.t = {0, 10, 500, 999};
  b.y = {0, 1, 2, c.num_classes};
  return b;
}

template <class T>
ParamStore<T> trained_like(const ModelConfig& c, std::uint64_t seed) {
  ParamStore<T> p = init_model<T>(c, seed);
  Rng rng(seed + 100);
  for (auto& [path, t] : p) {
    for (auto& v : t.mutable_data()) v += static_cast<T>(rng.uniform(-0.1, 0.1));
  }
  return p;
}

}  // namespace

TEST(Distill, ConfigValidation) {
  EXPECT_THROW((DistillConfig{-0.1, 0.0}.validate()), ConfigError);
  EXPECT_THROW((DistillConfig{std::nan(""), 0.0}.validate()), ConfigError);
  EXPECT_FALSE((DistillConfig{0.0, 0.0}.needs_teacher()));
  EXPECT_TRUE((DistillConfig{0.0, 0.05}.needs_teacher()));
}

TEST(Distill, ZeroWeightsEqualPlainLoss) {
  const ModelConfig c = ModelConfig::preset("lit-micro");
  const auto params = trained_like<double>(c, 1);
  const auto schedule = make_schedule(1000);
  const auto batch = make_batch<double>(c, 2);
  const auto no_teacher = hybrid_loss(batch, {&params, &c}, {}, schedule, {0.0, 0.0});
  const ModelConfig tc = ModelConfig::preset("dit-micro");
  const auto tparams = trained_like<double>(tc, 3);
  const auto with_teacher = hybrid_loss(batch, {&params, &c}, {&tparams, &tc}, schedule, {0.0, 0.0});
  EXPECT_EQ(no_teacher.total.item(), with_teacher.total.item());
  EXPECT_EQ(no_teacher.total.item(), no_teacher.l_simple.item());
  EXPECT_THROW(hybrid_loss(batch, {&params, &c}, {}, schedule, {0.5, 0.0}), ConfigError);
}

TEST(Distill, SelfDistillationTermsVanish) {
  const ModelConfig c = ModelConfig::preset("lit-micro");
  const auto params = trained_like<double>(c, 4);
  const auto loss = hybrid_loss(make_batch<double>(c, 5), {&params, &c}, {&params, &c},
                                make_schedule(1000), {0.5, 0.05});
  EXPECT_EQ(loss.l_noise.item(), 0.0);
  EXPECT_EQ(loss.l_var.item(), 0.0);
}

TEST(Distill, BreakdownSumsToTotal) {
  const ModelConfig s = ModelConfig::preset("lit-micro");
  const ModelConfig t = ModelConfig::preset("dit-micro");
  const auto sp = trained_like<float>(s, 6);
  const auto tp = trained_like<float>(t, 7);
  for (const auto& cell : lambda_grid()) {
    const DistillConfig cfg{cell.lambda1, cell.lambda2};
    const auto v =
        hybrid_loss(make_batch<float>(s, 8), {&sp, &s}, {&tp, &t}, make_schedule(1000), cfg).values();
    const double sum = v.l_simple + cfg.lambda1 * v.l_noise + cfg.lambda2 * v.l_var;
    EXPECT_NEAR(sum, v.total, 1e-7 * std::max(1.0, std::abs(v.total)));
  }
}

TEST(Distill, TeacherReceivesNoGradient) {
  const ModelConfig s = ModelConfig::preset("lit-micro");
  const ModelConfig t = ModelConfig::preset("dit-micro");
  auto sp = trained_like<double>(s, 9);
  auto tp = trained_like<double>(t, 10);
  for (auto& [path, p] : sp) p.set_requires_grad(true);
  for (auto& [path, p] : tp) p.set_requires_grad(true);
  hybrid_loss(make_batch<double>(s, 11), {&sp, &s}, {&tp, &t}, make_schedule(1000), {0.5, 0.05})
      .total.backward();
  for (const auto& [path, p] : tp) EXPECT_FALSE(p.has_grad()) << path;
  bool any = false;
  for (const auto& [path, p] : sp) any = any || p.has_grad();
  EXPECT_TRUE(any);
}

TEST(Distill, LossesAreMeanSquares) {
  TensorD a({2}, {1.0, 3.0});
  TensorD b({2}, {2.0, 1.0});
  EXPECT_DOUBLE_EQ(l_noise(a, b).item(), 2.5);
  EXPECT_DOUBLE_EQ(l_var(a, b).item(), 2.5);
}

TEST(Distill, Compatibility) {
  ModelConfig s = ModelConfig::preset("lit-micro");
  ModelConfig t = ModelConfig::preset("dit-micro");
  EXPECT_NO_THROW(check_distill_compatible(s, t, {0.5, 0.05}));
  t.num_classes = 10;
  EXPECT_THROW(check_distill_compatible(s, t, {0.5, 0.05}), ConfigError);
  t = ModelConfig::preset("dit-micro");
  t.image_size = 16;
  EXPECT_THROW(check_distill_compatible(s, t, {0.5, 0.0}), ConfigError);
  t = ModelConfig::preset("dit-micro");
  t.predicts_variance = false;
  EXPECT_NO_THROW(check_distill_compatible(s, t, {0.5, 0.0}));
  EXPECT_THROW(check_distill_compatible(s, t, {0.5, 0.05}), ConfigError);
}

TEST(Distill, LambdaGrid) {
  const auto grid = lambda_grid();
  ASSERT_EQ(grid.size(), 9u);
  EXPECT_TRUE(grid.front().small_teacher);
  int with_var = 0;
  for (const auto& c : grid) with_var += c.lambda2 > 0 ? 1 : 0;
  EXPECT_EQ(with_var, 4);
}
