#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "lit/convert.hpp"
#include "lit/dataset.hpp"
#include "lit/diffusion.hpp"
#include "lit/distill.hpp"
#include "lit/optim.hpp"

namespace lit {

struct Seeds {
  std::uint64_t init = 0;
  std::uint64_t data = 1;
  std::uint64_t noise = 2;
};

enum class Objective {
  kTeacher,  // L_simple + variational bound term
  kStudent,  // L_simple + lambda1 L_noise + lambda2 L_var
};

struct TrainOptions {
  Objective objective = Objective::kTeacher;
  std::int64_t steps = 500;
  std::int64_t batch = 16;
  AdamWConfig optimizer{.lr = 1e-3};
  double ema_decay = 0.995;
  double label_dropout = 0.1;
  DistillConfig distill;
  Seeds seeds;
  std::string log_path;  // CSV, empty to disable
  std::int64_t log_every = 1;
};

template <class T>
struct TrainState {
  ParamStore<T> params;
  AdamState<T> optimizer;
  EmaState<T> ema;
  std::int64_t step = 0;
};

template <class T>
TrainState<T> make_train_state(ParamStore<T> params, double ema_decay);

// Batch drawn for `step` from per-step streams of the data and noise seeds,
// so any step's batch is independent of what ran before it.
template <class T>
TrainingBatch<T> draw_batch(const std::vector<Sample>& data, const DatasetSpec& spec,
                            const DiffusionSchedule& schedule, std::int64_t step,
                            std::int64_t batch, double label_dropout, const Seeds& seeds);

// Runs options.steps optimisation steps on state. For kStudent a teacher is
// needed whenever a distillation weight is positive. `on_step` sees each
// step's losses. Throws NumericFault on a non-finite loss, leaving `state`
// as it was after the last good step.
template <class T>
std::vector<LossBreakdown> train(TrainState<T>& state, const ModelConfig& config,
                                 const std::vector<Sample>& data, const DatasetSpec& spec,
                                 const DiffusionSchedule& schedule, const TrainOptions& options,
                                 ModelRef<T> teacher = {},
                                 const std::function<void(std::int64_t, const LossBreakdown&)>&
                                     on_step = nullptr);

// Mean L_simple over a fixed set: `count` samples with evenly spaced
// timesteps and seeded noise, no label dropout.
template <class T>
double evaluate_l_simple(const ParamStore<T>& params, const ModelConfig& config,
                         const std::vector<Sample>& data, const DatasetSpec& spec,
                         const DiffusionSchedule& schedule, std::int64_t count, std::uint64_t seed,
                         std::int64_t batch = 64);

}  // namespace lit
