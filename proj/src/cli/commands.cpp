#include "lit/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <optional>
#include <sstream>

#include "lit/checkpoint.hpp"
#include "lit/complexity.hpp"
#include "lit/config_json.hpp"
#include "lit/desk.hpp"
#include "lit/gradcheck_suite.hpp"
#include "lit/image.hpp"
#include "lit/model.hpp"
#include "lit/ops.hpp"
#include "lit/random.hpp"
#include "lit/training_log.hpp"

namespace fs = std::filesystem;

namespace lit {

std::string with_thousands(std::int64_t value) {
  std::string digits = std::to_string(value < 0 ? -value : value);
  std::string out;
  for (std::size_t i = 0; i < digits.size(); ++i) {
    if (i > 0 && (digits.size() - i) % 3 == 0) out += ',';
    out += digits[i];
  }
  return value < 0 ? "-" + out : out;
}

namespace {

// A flag combination the user can fix; exits with kExitUsage.
class UsageError : public Error {
 public:
  using Error::Error;
};

struct SeedFlags {
  std::uint64_t init = 0;
  std::uint64_t data = 1;
  std::uint64_t noise = 2;

  void add(CLI::App& app) {
    app.add_option("--seed-init", init, "Seed for parameter initialisation")->capture_default_str();
    app.add_option("--seed-data", data, "Seed for batch, label-dropout and timestep draws")
        ->capture_default_str();
    app.add_option("--seed-noise", noise, "Seed for the diffusion noise draws")->capture_default_str();
  }
  Seeds seeds() const { return {init, data, noise}; }
  Json json() const { return {{"init", init}, {"data", data}, {"noise", noise}}; }
};

struct TrainFlags {
  std::int64_t steps = 0;
  std::int64_t batch = 16;
  double lr = 1e-3;
  double ema_decay = 0.995;
  double label_dropout = 0.1;
  std::string dataset;
  std::uint64_t dataset_seed = 0;

  void add(CLI::App& app, std::int64_t default_steps) {
    steps = default_steps;
    app.add_option("--steps", steps, "Optimisation steps")->capture_default_str();
    app.add_option("--batch", batch, "Images per step")->capture_default_str();
    app.add_option("--lr", lr, "AdamW learning rate")->capture_default_str();
    app.add_option("--ema-decay", ema_decay, "Decay of the parameter moving average")
        ->capture_default_str();
    app.add_option("--label-dropout", label_dropout,
                   "Probability of replacing a label with the null class (guidance training)")
        ->capture_default_str();
    app.add_option("--dataset", dataset, "Dataset spec JSON (default: built-in blob dataset)");
    app.add_option("--dataset-seed", dataset_seed, "Seed of the generated dataset")
        ->capture_default_str();
  }
  TrainOptions options() const {
    TrainOptions o;
    o.steps = steps;
    o.batch = batch;
    o.optimizer.lr = lr;
    o.ema_decay = ema_decay;
    o.label_dropout = label_dropout;
    return o;
  }
  DatasetSpec dataset_spec(const ModelConfig& config) const {
    DatasetSpec spec;
    if (!dataset.empty()) {
      spec = dataset_spec_from_json(read_json_file(dataset));
    } else {
      spec.num_classes = config.num_classes;
      spec.image_size = config.image_size;
      spec.channels = config.in_channels;
    }
    spec.validate();
    return spec;
  }
  Json json() const {
    return {{"steps", steps},         {"batch", batch},
            {"lr", lr},               {"ema_decay", ema_decay},
            {"label_dropout", label_dropout}, {"dataset_seed", dataset_seed}};
  }
};

// --config accepts a JSON file or a preset name.
ModelConfig resolve_model(const std::string& value) {
  if (fs::exists(value)) return model_config_from_json(read_json_file(value));
  const auto names = ModelConfig::preset_names();
  if (std::find(names.begin(), names.end(), value) == names.end()) {
    throw UsageError("--config: no such file or preset: " + value);
  }
  return ModelConfig::preset(value);
}

void require_file(const std::string& path, const std::string& flag) {
  if (path.empty()) throw UsageError(flag + " is required");
  if (!fs::exists(path)) throw UsageError(flag + ": no such file: " + path);
}

fs::path prepare_out(const std::string& out) {
  if (out.empty()) throw UsageError("--out is required");
  fs::create_directories(out);
  return fs::path(out);
}

void write_run_config(const fs::path& dir, const std::string& command, Json body) {
  Json j;
  j["command"] = command;
  for (auto& [k, v] : body.items()) j[k] = v;
  write_json_file((dir / "run_config.json").string(), j);
}

Checkpoint to_checkpoint(const TrainState<float>& state, const ModelConfig& config) {
  Checkpoint ck;
  ck.config = config;
  ck.params = state.params;
  ck.ema = state.ema.shadow;
  ck.ema_decay = state.ema.decay;
  ck.optimizer = state.optimizer;
  ck.step = state.step;
  return ck;
}

TrainState<float> from_checkpoint(const Checkpoint& ck, double ema_decay) {
  TrainState<float> state = make_train_state(ck.params, ema_decay);
  if (ck.ema) state.ema.shadow = *ck.ema;
  if (ck.optimizer) state.optimizer = *ck.optimizer;
  state.step = ck.step;
  return state;
}

// Trains in chunks so a checkpoint is written at every milestone. On a
// non-finite loss the last good state is saved before the fault propagates.
void train_with_checkpoints(TrainState<float>& state, const ModelConfig& config,
                            const std::vector<Sample>& data, const DatasetSpec& spec,
                            TrainOptions options, ModelRef<float> teacher, const fs::path& dir,
                            const std::string& stem, std::int64_t every, std::ostream& out) {
  const DiffusionSchedule schedule = make_schedule(config.num_timesteps);
  const std::int64_t total = options.steps;
  std::int64_t done = 0;
  while (done < total) {
    options.steps = every > 0 ? std::min(every, total - done) : total - done;
    try {
      train(state, config, data, spec, schedule, options, teacher);
    } catch (const NumericFault&) {
      save_checkpoint((dir / (stem + "_last_good.ckpt")).string(), to_checkpoint(state, config));
      throw;
    }
    done += options.steps;
    if (every > 0 && done < total) {
      const auto path = dir / (stem + "_step" + std::to_string(state.step) + ".ckpt");
      save_checkpoint(path.string(), to_checkpoint(state, config));
      out << "checkpoint " << path.string() << "\n";
    }
  }
  save_checkpoint((dir / (stem + ".ckpt")).string(), to_checkpoint(state, config));
}

std::string fmt(double v, int precision = 6) {
  std::ostringstream s;
  s << std::setprecision(precision) << v;
  return s.str();
}

// ---- train-teacher ---------------------------------------------------------

void add_train_teacher(CLI::App& app, std::function<void()>& action, std::ostream& out) {
  auto* cmd = app.add_subcommand("train-teacher",
                                 "Train a softmax-attention teacher with L_simple plus the "
                                 "variational bound on its variance head");
  struct Flags {
    std::string config = "dit-micro";
    std::string out;
    std::int64_t checkpoint_every = 0;
    TrainFlags train;
    SeedFlags seeds;
  };
  auto f = std::make_shared<Flags>();
  cmd->add_option("--config", f->config, "Model config JSON or preset name")->capture_default_str();
  cmd->add_option("--out", f->out, "Output directory")->required();
  cmd->add_option("--checkpoint-every", f->checkpoint_every,
                  "Also write a checkpoint every this many steps (0: final only)")
      ->capture_default_str();
  f->train.add(*cmd, 2000);
  f->seeds.add(*cmd);
  cmd->callback([f, &action, &out] {
    action = [f, &out] {
      const ModelConfig config = resolve_model(f->config);
      config.validate();
      if (config.variant != AttentionVariant::kSoftmax) {
        throw UsageError("train-teacher expects a softmax-attention config, got " +
                         to_string(config.variant));
      }
      const fs::path dir = prepare_out(f->out);
      const DatasetSpec spec = f->train.dataset_spec(config);
      write_run_config(dir, "train-teacher",
                       {{"model", to_json(config)},
                        {"dataset", to_json(spec)},
                        {"train", f->train.json()},
                        {"checkpoint_every", f->checkpoint_every},
                        {"seeds", f->seeds.json()}});
      const auto data = generate_dataset(spec, f->train.dataset_seed);
      TrainOptions options = f->train.options();
      options.objective = Objective::kTeacher;
      options.seeds = f->seeds.seeds();
      options.log_path = (dir / "train_log.csv").string();
      fs::remove(options.log_path);
      TrainState<float> state =
          make_train_state(init_model<float>(config, f->seeds.init), options.ema_decay);
      train_with_checkpoints(state, config, data, spec, options, {}, dir, "teacher",
                             f->checkpoint_every, out);
      out << "teacher " << (dir / "teacher.ckpt").string() << " step " << state.step << "\n";
    };
  });
}

// ---- convert ---------------------------------------------------------------

void add_convert(CLI::App& app, std::function<void()>& action, std::ostream& out) {
  auto* cmd = app.add_subcommand(
      "convert", "Build a linear-attention student from a teacher checkpoint by weight inheritance");
  struct Flags {
    std::string teacher;
    std::string config = "lit-micro";
    std::string inherit_spec;
    std::string attention_subset;
    std::string source;
    std::string out;
    std::uint64_t seed_init = 0;
  };
  auto f = std::make_shared<Flags>();
  cmd->add_option("--teacher", f->teacher, "Teacher checkpoint")->required();
  cmd->add_option("--config", f->config, "Student model config JSON or preset name")
      ->capture_default_str();
  cmd->add_option("--inherit-spec", f->inherit_spec,
                  "Inheritance spec JSON (default: everything except attention, from EMA weights)");
  cmd->add_option("--attention-subset", f->attention_subset,
                  "Override the attention projections to inherit, e.g. QKV, KV, O or none");
  cmd->add_option("--source", f->source, "Teacher weights to copy: ema or raw");
  cmd->add_option("--seed-init", f->seed_init, "Seed for the freshly initialised parameters")
      ->capture_default_str();
  cmd->add_option("--out", f->out, "Output directory")->required();
  cmd->callback([f, &action, &out] {
    action = [f, &out] {
      require_file(f->teacher, "--teacher");
      const ModelConfig student = resolve_model(f->config);
      student.validate();
      InheritSpec spec;
      if (!f->inherit_spec.empty()) {
        require_file(f->inherit_spec, "--inherit-spec");
        spec = inherit_spec_from_json(read_json_file(f->inherit_spec));
      }
      if (!f->attention_subset.empty()) spec.attention_subset = parse_attention_subset(f->attention_subset);
      if (!f->source.empty()) spec.source = parse_weight_source(f->source);
      const Checkpoint teacher = load_checkpoint(f->teacher);
      const ParamStoreF weights = checkpoint_weights(teacher, spec.source == WeightSource::kEma);
      const fs::path dir = prepare_out(f->out);
      write_run_config(dir, "convert",
                       {{"teacher", f->teacher},
                        {"teacher_model", to_json(teacher.config)},
                        {"student_model", to_json(student)},
                        {"inherit_spec", to_json(spec)},
                        {"seeds", {{"init", f->seed_init}}}});
      ConversionReport report;
      Checkpoint ck;
      ck.config = student;
      ck.params = inherit(weights, teacher.config, student, spec, f->seed_init, &report);
      save_checkpoint((dir / "student.ckpt").string(), ck);
      write_json_file((dir / "conversion_report.json").string(), to_json(report));
      out << "copied " << report.copied.size() << " fresh " << report.fresh.size() << "\n";
      out << "student " << (dir / "student.ckpt").string() << "\n";
    };
  });
}

// ---- train-student ---------------------------------------------------------

void add_train_student(CLI::App& app, std::function<void()>& action, std::ostream& out) {
  auto* cmd = app.add_subcommand(
      "train-student",
      "Train a student with L_simple + lambda1 L_noise + lambda2 L_var against a teacher");
  struct Flags {
    std::string config;
    std::string init;
    std::string teacher;
    std::string small_teacher;
    bool teacher_raw = false;
    double lambda1 = 0.5;
    double lambda2 = 0.05;
    bool lambda_grid = false;
    std::int64_t eval_count = 512;
    std::uint64_t eval_seed = 99;
    std::string out;
    std::int64_t checkpoint_every = 0;
    TrainFlags train;
    SeedFlags seeds;
  };
  auto f = std::make_shared<Flags>();
  cmd->add_option("--config", f->config,
                  "Student model config JSON or preset name (default: from --init, else lit-micro)");
  cmd->add_option("--init", f->init, "Initial student checkpoint, e.g. the output of convert");
  cmd->add_option("--teacher", f->teacher, "Teacher checkpoint (needed when a lambda is positive)");
  cmd->add_flag("--teacher-raw", f->teacher_raw, "Distil from raw rather than EMA teacher weights");
  cmd->add_option("--lambda1", f->lambda1, "Weight of the noise-prediction distillation term")
      ->capture_default_str();
  cmd->add_option("--lambda2", f->lambda2, "Weight of the variance distillation term")
      ->capture_default_str();
  cmd->add_flag("--lambda-grid", f->lambda_grid,
                "Run every cell of the distillation-weight grid and write summary.csv");
  cmd->add_option("--small-teacher", f->small_teacher,
                  "Half-width teacher checkpoint for the grid's small-teacher cell");
  cmd->add_option("--eval-count", f->eval_count, "Images in the final L_simple evaluation")
      ->capture_default_str();
  cmd->add_option("--eval-seed", f->eval_seed, "Noise seed of the final evaluation")
      ->capture_default_str();
  cmd->add_option("--out", f->out, "Output directory")->required();
  cmd->add_option("--checkpoint-every", f->checkpoint_every,
                  "Also write a checkpoint every this many steps (0: final only)")
      ->capture_default_str();
  f->train.add(*cmd, 500);
  f->seeds.add(*cmd);
  cmd->callback([f, &action, &out] {
    action = [f, &out] {
      std::optional<Checkpoint> init;
      ModelConfig config;
      if (!f->init.empty()) {
        require_file(f->init, "--init");
        init = load_checkpoint(f->init);
        config = init->config;
        if (!f->config.empty() && to_json(resolve_model(f->config)) != to_json(config)) {
          throw UsageError("--config disagrees with the config stored in --init");
        }
      } else {
        config = resolve_model(f->config.empty() ? "lit-micro" : f->config);
      }
      config.validate();

      auto load_teacher = [&](const std::string& path) {
        require_file(path, "--teacher");
        const Checkpoint ck = load_checkpoint(path);
        return std::make_pair(ck.config, checkpoint_weights(ck, !f->teacher_raw));
      };

      const fs::path dir = prepare_out(f->out);
      const DatasetSpec spec = f->train.dataset_spec(config);
      const auto data = generate_dataset(spec, f->train.dataset_seed);

      std::vector<LambdaCell> cells;
      if (f->lambda_grid) {
        cells = lambda_grid();
      } else {
        cells.push_back({f->lambda1, f->lambda2, false});
      }
      Json run;
      run["model"] = to_json(config);
      run["init"] = f->init;
      run["teacher"] = f->teacher;
      run["teacher_weights"] = f->teacher_raw ? "raw" : "ema";
      run["small_teacher"] = f->small_teacher;
      run["dataset"] = to_json(spec);
      run["train"] = f->train.json();
      run["distill"] = Json::array();
      for (const auto& c : cells) run["distill"].push_back(to_json(DistillConfig{c.lambda1, c.lambda2}));
      run["eval"] = {{"count", f->eval_count}, {"seed", f->eval_seed}};
      run["seeds"] = f->seeds.json();
      write_run_config(dir, "train-student", run);

      std::optional<std::pair<ModelConfig, ParamStoreF>> teacher, small;
      std::ofstream summary;
      if (f->lambda_grid) {
        summary.open(dir / "summary.csv");
        summary << "cell,lambda1,lambda2,teacher,final_total,final_l_simple,final_l_noise,final_l_var,"
                   "eval_l_simple\n";
      }
      for (std::size_t i = 0; i < cells.size(); ++i) {
        const DistillConfig distill{cells[i].lambda1, cells[i].lambda2};
        distill.validate();
        ModelRef<float> ref;
        std::string teacher_path;
        if (distill.needs_teacher()) {
          teacher_path = cells[i].small_teacher && !f->small_teacher.empty() ? f->small_teacher
                                                                              : f->teacher;
          auto& slot = teacher_path == f->teacher ? teacher : small;
          if (!slot) slot = load_teacher(teacher_path);
          check_distill_compatible(config, slot->first, distill);
          ref = {&slot->second, &slot->first};
        }
        const fs::path cell_dir = f->lambda_grid ? dir / ("cell_" + std::to_string(i)) : dir;
        fs::create_directories(cell_dir);
        TrainOptions options = f->train.options();
        options.objective = Objective::kStudent;
        options.distill = distill;
        options.seeds = f->seeds.seeds();
        options.log_path = (cell_dir / "train_log.csv").string();
        fs::remove(options.log_path);
        TrainState<float> state =
            init ? from_checkpoint(*init, options.ema_decay)
                 : make_train_state(init_model<float>(config, f->seeds.init), options.ema_decay);
        train_with_checkpoints(state, config, data, spec, options, ref, cell_dir, "student",
                               f->checkpoint_every, out);
        const double eval =
            evaluate_l_simple(state.ema.shadow, config, data, spec, make_schedule(config.num_timesteps),
                              f->eval_count, f->eval_seed);
        const auto log = read_training_log(options.log_path);
        const TrainingRecord last = log.empty() ? TrainingRecord{} : log.back();
        out << "lambda1 " << distill.lambda1 << " lambda2 " << distill.lambda2 << " eval_l_simple "
            << fmt(eval, 9) << "\n";
        if (f->lambda_grid) {
          summary << i << "," << distill.lambda1 << "," << distill.lambda2 << ","
                  << (teacher_path.empty() ? "none" : teacher_path) << "," << fmt(last.total, 9)
                  << "," << fmt(last.l_simple, 9) << "," << fmt(last.l_noise, 9) << ","
                  << fmt(last.l_var, 9) << "," << fmt(eval, 9) << "\n";
        }
      }
    };
  });
}

// ---- sample ----------------------------------------------------------------

void add_sample(CLI::App& app, std::function<void()>& action, std::ostream& out) {
  auto* cmd = app.add_subcommand("sample", "Draw class-conditional samples with the ancestral sampler");
  struct Flags {
    std::string checkpoint;
    std::int64_t n = 16;
    double cfg_scale = 1.0;
    std::int64_t steps = 250;
    std::uint64_t seed = 0;
    std::vector<std::int64_t> labels;
    bool raw = false;
    std::string precision = "f32";
    std::string out;
  };
  auto f = std::make_shared<Flags>();
  cmd->add_option("--checkpoint", f->checkpoint, "Model checkpoint")->required();
  cmd->add_option("-n,--n", f->n, "Number of images")->capture_default_str();
  cmd->add_option("--cfg-scale", f->cfg_scale, "Classifier-free guidance scale (1 disables)")
      ->capture_default_str();
  cmd->add_option("--steps", f->steps, "Sampling steps, uniformly respaced")->capture_default_str();
  cmd->add_option("--seed", f->seed, "Sampling noise seed")->capture_default_str();
  cmd->add_option("--labels", f->labels, "Class labels, cycled (default: 0, 1, ..., K-1)")
      ->delimiter(',');
  cmd->add_flag("--raw", f->raw, "Use raw rather than EMA weights");
  cmd->add_option("--precision", f->precision, "Arithmetic precision")
      ->check(CLI::IsMember({"f32", "f64"}))
      ->capture_default_str();
  cmd->add_option("--out", f->out, "Output directory")->required();
  cmd->callback([f, &action, &out] {
    action = [f, &out] {
      require_file(f->checkpoint, "--checkpoint");
      if (f->n < 1 || f->steps < 1) throw UsageError("--n and --steps must be positive");
      const Checkpoint ck = load_checkpoint(f->checkpoint);
      const bool ema = !f->raw && ck.ema.has_value();
      const ParamStoreF weights = checkpoint_weights(ck, ema);
      std::vector<std::int64_t> y;
      for (std::int64_t i = 0; i < f->n; ++i) {
        if (f->labels.empty()) {
          y.push_back(i % ck.config.num_classes);
        } else {
          y.push_back(f->labels[static_cast<std::size_t>(i) % f->labels.size()]);
        }
        if (y.back() < 0 || y.back() >= ck.config.num_classes) {
          throw UsageError("--labels: label out of range: " + std::to_string(y.back()));
        }
      }
      const fs::path dir = prepare_out(f->out);
      write_run_config(dir, "sample",
                       {{"checkpoint", f->checkpoint},
                        {"weights", ema ? "ema" : "raw"},
                        {"n", f->n},
                        {"cfg_scale", f->cfg_scale},
                        {"steps", f->steps},
                        {"seed", f->seed},
                        {"labels", y},
                        {"precision", f->precision}});
      SampleOptions options;
      options.steps = f->steps;
      options.cfg_scale = f->cfg_scale;
      options.seed = f->seed;
      const DiffusionSchedule schedule = make_schedule(ck.config.num_timesteps);
      const auto path = (dir / (ck.config.in_channels == 1 ? "samples.pgm" : "samples.ppm")).string();
      if (f->precision == "f64") {
        write_image_grid(path, sample(cast_store<double>(weights), ck.config, schedule, y, options));
      } else {
        write_image_grid(path, sample(weights, ck.config, schedule, y, options));
      }
      out << "samples " << path << "\n";
    };
  });
}

// ---- bench / sweep-heads / gmacs -------------------------------------------

struct AttentionFlags {
  std::string variant = "linear_relu_dwc";
  std::int64_t tokens = 256;
  std::int64_t dim = 384;
  std::int64_t kernel = 5;

  void add(CLI::App& app) {
    app.add_option("--variant", variant, "Attention variant")->capture_default_str();
    app.add_option("--tokens", tokens, "Token count N")->capture_default_str();
    app.add_option("--dim", dim, "Hidden dimension D")->capture_default_str();
    app.add_option("--kernel", kernel, "Depthwise convolution kernel size k")->capture_default_str();
  }
  AttentionConfig config(std::int64_t heads) const {
    AttentionConfig c;
    c.variant = parse_attention_variant(variant);
    c.hidden_dim = dim;
    c.num_heads = heads;
    c.dwc_kernel = kernel;
    c.validate();
    return c;
  }
  Json json() const {
    return {{"variant", variant}, {"tokens", tokens}, {"dim", dim}, {"kernel", kernel}};
  }
};

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream file(path, std::ios::trunc);
  file << text;
  if (!file) throw Error("cannot write " + path.string());
}

void add_bench(CLI::App& app, std::function<void()>& action, std::ostream& out) {
  auto* cmd = app.add_subcommand("bench", "Time one attention module on a single thread");
  struct Flags {
    AttentionFlags attn;
    std::int64_t heads = 2;
    std::int64_t batch = 1;
    int trials = 10;
    int warmup = 2;
    std::uint64_t seed = 0;
    std::string out;
  };
  auto f = std::make_shared<Flags>();
  f->attn.add(*cmd);
  cmd->add_option("--heads", f->heads, "Head count h")->capture_default_str();
  cmd->add_option("--batch", f->batch, "Batch size")->capture_default_str();
  cmd->add_option("--trials", f->trials, "Timed trials")->capture_default_str();
  cmd->add_option("--warmup", f->warmup, "Discarded warm-up runs")->capture_default_str();
  cmd->add_option("--seed", f->seed, "Input seed")->capture_default_str();
  cmd->add_option("--out", f->out, "Output directory for bench.csv");
  cmd->callback([f, &action, &out] {
    action = [f, &out] {
      if (f->trials < 1 || f->warmup < 0) throw UsageError("--trials must be positive");
      const CostReport r =
          bench_latency(f->attn.config(f->heads), f->batch, f->attn.tokens, f->trials, f->warmup, f->seed);
      const std::string csv = sweep_csv_header() + "\n" + sweep_csv_row(r) + "\n";
      out << csv;
      if (!f->out.empty()) {
        const fs::path dir = prepare_out(f->out);
        Json j = f->attn.json();
        j["heads"] = f->heads;
        j["batch"] = f->batch;
        j["trials"] = f->trials;
        j["warmup"] = f->warmup;
        j["seed"] = f->seed;
        write_run_config(dir, "bench", j);
        write_text(dir / "bench.csv", csv);
      }
    };
  });
}

void add_sweep_heads(CLI::App& app, std::function<void()>& action, std::ostream& out) {
  auto* cmd = app.add_subcommand("sweep-heads",
                                 "Analytic and counted MACs plus latency of attention across head counts");
  struct Flags {
    AttentionFlags attn;
    std::vector<std::int64_t> heads{1, 2, 3, 6, 48, 96};
    std::int64_t batch = 1;
    int trials = 5;
    int warmup = 1;
    std::uint64_t seed = 0;
    std::string out;
  };
  auto f = std::make_shared<Flags>();
  f->attn.add(*cmd);
  cmd->add_option("--heads-list", f->heads, "Comma-separated head counts")
      ->delimiter(',')
      ->capture_default_str();
  cmd->add_option("--batch", f->batch, "Batch size")->capture_default_str();
  cmd->add_option("--trials", f->trials, "Timed trials per head count")->capture_default_str();
  cmd->add_option("--warmup", f->warmup, "Discarded warm-up runs")->capture_default_str();
  cmd->add_option("--seed", f->seed, "Input seed")->capture_default_str();
  cmd->add_option("--out", f->out, "Output directory for sweep_heads.csv");
  cmd->callback([f, &action, &out] {
    action = [f, &out] {
      if (f->trials < 1 || f->warmup < 0) throw UsageError("--trials must be positive");
      for (const auto h : f->heads) f->attn.config(h);
      const auto rows = sweep_heads(f->attn.config(f->heads.front()), f->attn.tokens, f->heads,
                                    f->batch, f->trials, f->warmup, f->seed);
      std::string csv = sweep_csv_header() + "\n";
      for (const auto& r : rows) csv += sweep_csv_row(r) + "\n";
      out << csv;
      if (!f->out.empty()) {
        const fs::path dir = prepare_out(f->out);
        Json j = f->attn.json();
        j["heads_list"] = f->heads;
        j["batch"] = f->batch;
        j["trials"] = f->trials;
        j["warmup"] = f->warmup;
        j["seed"] = f->seed;
        write_run_config(dir, "sweep-heads", j);
        write_text(dir / "sweep_heads.csv", csv);
      }
    };
  });
}

void add_gmacs(CLI::App& app, std::function<void()>& action, std::ostream& out) {
  auto* cmd = app.add_subcommand("gmacs", "Closed-form MACs of softmax and linear attention");
  struct Flags {
    std::int64_t tokens = 256;
    std::int64_t dim = 384;
    std::int64_t heads = 2;
    std::int64_t kernel = 5;
  };
  auto f = std::make_shared<Flags>();
  cmd->add_option("--tokens", f->tokens, "Token count N")->capture_default_str();
  cmd->add_option("--dim", f->dim, "Hidden dimension D")->capture_default_str();
  cmd->add_option("--heads", f->heads, "Head count h")->capture_default_str();
  cmd->add_option("--kernel", f->kernel, "Depthwise convolution kernel size k")->capture_default_str();
  cmd->callback([f, &action, &out] {
    action = [f, &out] {
      if (f->tokens < 1 || f->dim < 1 || f->heads < 1 || f->kernel < 1) {
        throw UsageError("all sizes must be positive");
      }
      const std::int64_t mhsa = gmacs_mhsa(f->tokens, f->dim);
      const std::int64_t mhla = gmacs_mhla(f->tokens, f->dim, f->heads, f->kernel);
      out << "N=" << f->tokens << " D=" << f->dim << " h=" << f->heads << " k=" << f->kernel << "\n";
      out << "mhsa " << with_thousands(mhsa) << " MACs (" << fmt(to_giga(mhsa), 4) << " GMACs)\n";
      out << "mhla " << with_thousands(mhla) << " MACs (" << fmt(to_giga(mhla), 4) << " GMACs)\n";
    };
  });
}

// ---- gradcheck -------------------------------------------------------------

void add_gradcheck(CLI::App& app, std::function<void()>& action, std::ostream& out) {
  auto* cmd = app.add_subcommand("gradcheck",
                                 "Compare analytic gradients with central finite differences");
  struct Flags {
    std::string precision = "f64";
    std::uint64_t seed = 0;
    bool skip_model = false;
  };
  auto f = std::make_shared<Flags>();
  cmd->add_option("--precision", f->precision, "Arithmetic precision (finite differences need f64)")
      ->check(CLI::IsMember({"f32", "f64"}))
      ->capture_default_str();
  cmd->add_option("--seed", f->seed, "Input seed")->capture_default_str();
  cmd->add_flag("--skip-model", f->skip_model, "Only check single operations and attention");
  cmd->callback([f, &action, &out] {
    action = [f, &out] {
      if (f->precision != "f64") {
        throw UsageError("gradcheck runs in f64; f32 finite differences are too coarse for 1e-4");
      }
      const auto results = run_gradient_suite(f->seed, !f->skip_model);
      double worst = 0.0;
      std::int64_t failed = 0;
      for (const auto& r : results) {
        out << (r.passed ? "ok   " : "FAIL ") << r.name << " " << fmt(r.max_rel_error, 3) << "\n";
        worst = std::max(worst, r.max_rel_error);
        failed += r.passed ? 0 : 1;
      }
      out << "checks " << results.size() << " failed " << failed << " max relative error "
          << fmt(worst, 3) << "\n";
      if (failed > 0) throw NumericFault(std::to_string(failed) + " gradient checks failed");
    };
  });
}

// ---- head-similarity -------------------------------------------------------

void add_head_similarity(CLI::App& app, std::function<void()>& action, std::ostream& out) {
  auto* cmd = app.add_subcommand("head-similarity",
                                 "Mean pairwise cosine similarity between the heads' attention maps");
  struct Flags {
    std::string checkpoint;
    std::int64_t batch = 16;
    std::int64_t t = 500;
    std::uint64_t seed = 0;
    bool raw = false;
  };
  auto f = std::make_shared<Flags>();
  cmd->add_option("--checkpoint", f->checkpoint, "Model checkpoint")->required();
  cmd->add_option("--batch", f->batch, "Noised dataset images to average over")->capture_default_str();
  cmd->add_option("--t", f->t, "Diffusion timestep of the inputs")->capture_default_str();
  cmd->add_option("--seed", f->seed, "Noise seed")->capture_default_str();
  cmd->add_flag("--raw", f->raw, "Use raw rather than EMA weights");
  cmd->callback([f, &action, &out] {
    action = [f, &out] {
      require_file(f->checkpoint, "--checkpoint");
      const Checkpoint ck = load_checkpoint(f->checkpoint);
      const ModelConfig& config = ck.config;
      if (config.heads < 2) throw UsageError("head similarity needs at least two heads");
      if (f->batch < 1 || f->t < 0 || f->t >= config.num_timesteps) {
        throw UsageError("--batch must be positive and --t inside the schedule");
      }
      const ParamStoreF weights = checkpoint_weights(ck, !f->raw && ck.ema.has_value());
      DatasetSpec spec;
      spec.num_classes = config.num_classes;
      spec.image_size = config.image_size;
      spec.channels = config.in_channels;
      spec.samples = f->batch;
      const auto data = generate_dataset(spec, f->seed);
      std::vector<std::int64_t> ids, t(static_cast<std::size_t>(f->batch), f->t), y;
      for (std::int64_t i = 0; i < f->batch; ++i) {
        ids.push_back(i);
        y.push_back(data[i].label);
      }
      const TensorF x0 = stack_images<float>(data, ids, spec);
      Rng rng(f->seed, {1});
      const TensorF x_t = q_sample(x0, t, rng.normal_tensor<float>(x0.shape()),
                                   make_schedule(config.num_timesteps));
      NoGradGuard no_grad;
      const auto maps = collect_attention_maps(x_t, t, y, weights, config);
      double total = 0.0;
      for (std::size_t layer = 0; layer < maps.size(); ++layer) {
        // Average the per-image similarity over the batch.
        double sum = 0.0;
        for (std::int64_t b = 0; b < f->batch; ++b) {
          sum += head_similarity(reshape(slice(maps[layer], 0, b, b + 1),
                                         {config.heads, config.tokens(), config.tokens()}));
        }
        const double mean = sum / static_cast<double>(f->batch);
        total += mean;
        out << "layer " << layer << " mean_cosine " << fmt(mean) << "\n";
      }
      out << "overall mean_cosine " << fmt(total / static_cast<double>(maps.size())) << "\n";
    };
  });
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Linear diffusion transformer toolkit", "lit"};
  app.require_subcommand(1);
  std::function<void()> action;
  add_train_teacher(app, action, out);
  add_convert(app, action, out);
  add_train_student(app, action, out);
  add_sample(app, action, out);
  add_bench(app, action, out);
  add_sweep_heads(app, action, out);
  add_gmacs(app, action, out);
  add_gradcheck(app, action, out);
  add_head_similarity(app, action, out);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }
  try {
    if (action) action();
    return kExitOk;
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ConfigError& e) {
    err << "configuration error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const CheckpointError& e) {
    err << "checkpoint error (" << to_string(e.kind()) << "): " << e.what() << "\n";
    return e.kind() == CheckpointErrorKind::kIo ? kExitUsage : kExitFault;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFault;
  }
}

}  // namespace lit
