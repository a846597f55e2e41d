#include "lit/gradcheck_suite.hpp"

#include <cmath>
#include <map>

#include "lit/attention.hpp"
#include "lit/diffusion.hpp"
#include "lit/distill.hpp"
#include "lit/model.hpp"
#include "lit/ops.hpp"
#include "lit/random.hpp"

namespace lit {

namespace {

using Inputs = std::vector<TensorD>;
using Fn = std::function<TensorD(const Inputs&)>;

class Suite {
 public:
  explicit Suite(std::uint64_t seed) : rng_(seed) {}

  TensorD uniform(Shape s, double lo = -1.0, double hi = 1.0) {
    return rng_.uniform_tensor<double>(std::move(s), lo, hi);
  }
  // Uniform in [-1,-0.05] U [0.05,1], away from kinks at zero.
  TensorD away_from_zero(Shape s) {
    TensorD t = uniform(std::move(s));
    for (auto& v : t.mutable_data()) v = (v < 0 ? -1.0 : 1.0) * (0.05 + 0.95 * std::abs(v));
    return t;
  }

  // Checks sum(f(inputs) * R) for a fixed random R shaped like the output.
  void check(const std::string& name, const Fn& f, Inputs inputs,
             std::vector<std::size_t> constant = {}) {
    TensorD probe;
    {
      NoGradGuard no_grad;
      probe = f(inputs);
    }
    const TensorD weights = uniform(probe.shape());
    GradCheckOptions opt;
    opt.constant_inputs = std::move(constant);
    results_.push_back(check_gradients(
        name, [&](const Inputs& in) { return sum_all(mul(f(in), weights)); }, std::move(inputs),
        opt));
  }

  void check_scalar(const std::string& name, const Fn& f, Inputs inputs) {
    results_.push_back(check_gradients(name, f, std::move(inputs)));
  }

  Rng& rng() { return rng_; }
  std::vector<GradCheckResult> take() { return std::move(results_); }

 private:
  Rng rng_;
  std::vector<GradCheckResult> results_;
};

void elementwise(Suite& s) {
  s.check("add", [](const Inputs& x) { return add(x[0], x[1]); }, {s.uniform({3, 4}), s.uniform({3, 4})});
  s.check("add_broadcast", [](const Inputs& x) { return add(x[0], x[1]); },
          {s.uniform({2, 3, 4}), s.uniform({3, 1})});
  s.check("sub", [](const Inputs& x) { return sub(x[0], x[1]); }, {s.uniform({3, 4}), s.uniform({4})});
  s.check("mul", [](const Inputs& x) { return mul(x[0], x[1]); }, {s.uniform({2, 3}), s.uniform({2, 1})});
  s.check("div", [](const Inputs& x) { return div(x[0], x[1]); },
          {s.uniform({2, 3}), s.uniform({2, 3}, 0.5, 1.5)});
  s.check("scale", [](const Inputs& x) { return scale(x[0], 1.7); }, {s.uniform({5})});
  s.check("add_scalar", [](const Inputs& x) { return add_scalar(x[0], 0.3); }, {s.uniform({5})});
  s.check("neg", [](const Inputs& x) { return neg(x[0]); }, {s.uniform({5})});
  s.check("relu", [](const Inputs& x) { return relu(x[0]); }, {s.away_from_zero({4, 5})});
  s.check("gelu", [](const Inputs& x) { return gelu(x[0]); }, {s.uniform({4, 5}, -3, 3)});
  s.check("silu", [](const Inputs& x) { return silu(x[0]); }, {s.uniform({4, 5}, -3, 3)});
  s.check("exp", [](const Inputs& x) { return exp(x[0]); }, {s.uniform({4, 5})});
  s.check("log", [](const Inputs& x) { return log(x[0]); }, {s.uniform({4, 5}, 0.2, 2.0)});
  s.check("sqrt", [](const Inputs& x) { return sqrt(x[0]); }, {s.uniform({4, 5}, 0.2, 2.0)});
  s.check("square", [](const Inputs& x) { return square(x[0]); }, {s.uniform({4, 5})});
  s.check("pow_int", [](const Inputs& x) { return pow_int(x[0], 3); }, {s.uniform({4, 5})});
  s.check("clamp", [](const Inputs& x) { return clamp(x[0], -0.5, 0.5); },
          {s.uniform({4, 5}, -0.45, 0.45)});
  s.check("guarded_reciprocal", [](const Inputs& x) { return guarded_reciprocal(x[0], 1e-6); },
          {s.uniform({4, 5}, 0.3, 2.0)});
}

void reductions_and_layout(Suite& s) {
  s.check("sum_axis", [](const Inputs& x) { return sum(x[0], 1); }, {s.uniform({2, 3, 4})});
  s.check("mean_axis_keepdim", [](const Inputs& x) { return mean(x[0], -1, true); }, {s.uniform({2, 3, 4})});
  s.check("sum_all", [](const Inputs& x) { return sum_all(x[0]); }, {s.uniform({2, 3})});
  s.check("mean_all", [](const Inputs& x) { return mean_all(x[0]); }, {s.uniform({2, 3})});
  s.check("softmax", [](const Inputs& x) { return softmax(x[0], -1); }, {s.uniform({3, 5}, -2, 2)});
  s.check("softmax_axis0", [](const Inputs& x) { return softmax(x[0], 0); }, {s.uniform({3, 5}, -2, 2)});
  s.check("layernorm", [](const Inputs& x) { return layernorm(x[0], -1, 1e-6); }, {s.uniform({3, 6})});
  s.check("reshape", [](const Inputs& x) { return reshape(x[0], {3, -1}); }, {s.uniform({2, 3, 2})});
  s.check("permute", [](const Inputs& x) { return permute(x[0], {2, 0, 1}); }, {s.uniform({2, 3, 4})});
  s.check("transpose", [](const Inputs& x) { return transpose(x[0], 0, 2); }, {s.uniform({2, 3, 4})});
  s.check("concat", [](const Inputs& x) { return concat<double>({x[0], x[1]}, 1); },
          {s.uniform({2, 3}), s.uniform({2, 2})});
  s.check("slice", [](const Inputs& x) { return slice(x[0], 1, 1, 3); }, {s.uniform({2, 4, 2})});
}

void linear_algebra(Suite& s) {
  s.check("matmul", [](const Inputs& x) { return matmul(x[0], x[1]); }, {s.uniform({3, 4}), s.uniform({4, 2})});
  s.check("matmul_batched", [](const Inputs& x) { return matmul(x[0], x[1]); },
          {s.uniform({2, 3, 4}), s.uniform({2, 4, 5})});
  s.check("matmul_broadcast", [](const Inputs& x) { return matmul(x[0], x[1]); },
          {s.uniform({2, 2, 3, 4}), s.uniform({4, 2})});
  s.check("linear", [](const Inputs& x) { return linear(x[0], x[1], x[2]); },
          {s.uniform({2, 3, 4}), s.uniform({4, 5}), s.uniform({5})});
  s.check("conv2d_depthwise", [](const Inputs& x) { return conv2d_depthwise(x[0], x[1], x[2]); },
          {s.uniform({2, 3, 4, 5}), s.uniform({3, 1, 3, 3}), s.uniform({3})});
  s.check("conv2d_depthwise_k5", [](const Inputs& x) { return conv2d_depthwise(x[0], x[1], x[2]); },
          {s.uniform({1, 2, 4, 4}), s.uniform({2, 1, 5, 5}), s.uniform({2})});
  s.check("embedding", [](const Inputs& x) { return embedding(x[0], {2, 0, 2, 1}); }, {s.uniform({3, 4})});
  s.check("focused_kernel", [](const Inputs& x) { return focused_kernel(x[0], 3); },
          {s.uniform({3, 5}, 0.1, 1.0)});
  s.check_scalar("mse", [](const Inputs& x) { return mse(x[0], x[1]); }, {s.uniform({2, 3}), s.uniform({2, 3})});
}

Inputs attention_inputs(Suite& s, const AttentionConfig& cfg, std::int64_t tokens,
                        std::vector<std::string>* names) {
  ParamStoreD store;
  add_attention_params(store, "", cfg, s.rng());
  Inputs in{s.uniform({2, tokens, cfg.hidden_dim})};
  names->clear();
  for (const auto& [path, t] : store) {
    names->push_back(path);
    // Larger than the 0.02 init so every term carries signal.
    in.push_back(s.uniform(t.shape(), -0.5, 0.5));
  }
  return in;
}

AttentionParams<double> params_from(const Inputs& x, const std::vector<std::string>& names,
                                    const AttentionConfig& cfg) {
  ParamStoreD store;
  for (std::size_t i = 0; i < names.size(); ++i) store.add(names[i], x[i + 1]);
  return AttentionParams<double>::from_store(store, "", cfg);
}

void attention_checks(Suite& s) {
  const std::pair<AttentionVariant, LinearPath> cases[] = {
      {AttentionVariant::kSoftmax, LinearPath::kScaled},
      {AttentionVariant::kLinearRelu, LinearPath::kScaled},
      {AttentionVariant::kLinearReluDwc, LinearPath::kScaled},
      {AttentionVariant::kLinearReluDwc, LinearPath::kFactorized},
      {AttentionVariant::kLinearReluDwc, LinearPath::kQuadratic},
      {AttentionVariant::kFocusedRelu, LinearPath::kScaled},
      {AttentionVariant::kFocusedGelu, LinearPath::kScaled},
  };
  const char* path_names[] = {"quadratic", "factorized", "scaled"};
  for (const auto& [variant, path] : cases) {
    AttentionConfig cfg;
    cfg.hidden_dim = 8;
    cfg.num_heads = 2;
    cfg.variant = variant;
    cfg.dwc_kernel = 3;
    cfg.layout = variant == AttentionVariant::kSoftmax ? ProjectionLayout::kFusedQkv
                                                       : ProjectionLayout::kFusedKv;
    std::vector<std::string> names;
    Inputs in = attention_inputs(s, cfg, 4, &names);
    const TokenGrid grid{2, 2};
    std::string name = "attention_" + to_string(variant);
    if (is_linear(variant)) name += std::string("_") + path_names[static_cast<int>(path)];
    s.check(
        name,
        [cfg, names, grid, path](const Inputs& x) {
          return attention_forward(x[0], params_from(x, names, cfg), cfg, grid, path);
        },
        std::move(in));
  }

  // Attention followed by a feed-forward layer, as inside a block.
  AttentionConfig cfg;
  cfg.hidden_dim = 8;
  cfg.num_heads = 2;
  cfg.dwc_kernel = 3;
  std::vector<std::string> names;
  Inputs in = attention_inputs(s, cfg, 4, &names);
  const std::size_t n_attn = in.size();
  in.push_back(s.uniform({8, 16}, -0.5, 0.5));
  in.push_back(s.uniform({16}, -0.5, 0.5));
  in.push_back(s.uniform({16, 8}, -0.5, 0.5));
  s.check(
      "attention_ffn_composite",
      [cfg, names, n_attn](const Inputs& x) {
        const TensorD a = attention_forward(x[0], params_from(x, names, cfg), cfg, {2, 2});
        const TensorD h = add(x[0], a);
        return add(h, matmul(gelu(linear(h, x[n_attn], x[n_attn + 1])), x[n_attn + 2]));
      },
      std::move(in));
}

ModelConfig tiny_config() {
  ModelConfig c;
  c.layers = 1;
  c.hidden = 8;
  c.heads = 2;
  c.patch = 2;
  c.in_channels = 1;
  c.image_size = 4;
  c.num_classes = 3;
  c.variant = AttentionVariant::kLinearReluDwc;
  c.layout = ProjectionLayout::kFusedKv;
  c.dwc_kernel = 3;
  c.frequency_dim = 8;
  c.mlp_ratio = 2;
  return c;
}

ParamStoreD store_from(const Inputs& x, const std::vector<std::string>& names, std::size_t first) {
  ParamStoreD store;
  for (std::size_t i = 0; i < names.size(); ++i) store.add(names[i], x[first + i]);
  return store;
}

void model_checks(Suite& s) {
  const ModelConfig cfg = tiny_config();
  const ParamStoreD init = init_model<double>(cfg, 7);
  std::vector<std::string> names;
  Inputs params;
  for (const auto& [path, t] : init) {
    names.push_back(path);
    // Perturb the zero-initialised layers so every gradient is nonzero.
    params.push_back(s.uniform(t.shape(), -0.3, 0.3));
  }

  // adaLN block with respect to its input, conditioning and all block parameters.
  {
    Inputs in{s.uniform({2, 4, 8}), s.uniform({2, 8})};
    std::vector<std::string> block_names;
    for (std::size_t i = 0; i < names.size(); ++i) {
      if (names[i].rfind("blocks.0.", 0) == 0) {
        block_names.push_back(names[i]);
        in.push_back(params[i]);
      }
    }
    s.check(
        "adaln_block",
        [cfg, block_names](const Inputs& x) {
          return block_forward(x[0], x[1], store_from(x, block_names, 2), 0, cfg);
        },
        std::move(in));
  }

  const DiffusionSchedule schedule = make_schedule(1000);
  const std::vector<std::int64_t> t{0, 500};
  const std::vector<std::int64_t> y{1, 3};
  const TensorD x_t = s.uniform({2, 1, 4, 4});

  {
    Inputs in{x_t};
    in.insert(in.end(), params.begin(), params.end());
    s.check(
        "model_forward_eps",
        [cfg, names, t, y](const Inputs& x) {
          return model_forward(x[0], t, y, store_from(x, names, 1), cfg).eps;
        },
        in);
    s.check(
        "model_forward_variance",
        [cfg, names, t, y](const Inputs& x) {
          return model_forward(x[0], t, y, store_from(x, names, 1), cfg).v;
        },
        in);
  }

  // Diffusion losses through the variance head.
  {
    Inputs in{s.uniform({2, 1, 4, 4}, -0.9, 0.9)};
    s.check(
        "variance_from_v",
        [schedule, t](const Inputs& x) { return variance_from_v(x[0], t, schedule); }, in);
    const TensorD eps = s.uniform({2, 1, 4, 4});
    // Late in the chain beta and beta_tilde nearly coincide and the term is
    // almost flat in v, so check it where the interpolation matters. x0 sits
    // near the model mean; far from it the t = 0 likelihood is too sharply
    // curved for central differences.
    const std::vector<std::int64_t> early{0, 20};
    const TensorD near_x0 =
        add(p_mean(x_t, early, eps, schedule), s.uniform({2, 1, 4, 4}, -1e-3, 1e-3));
    s.check_scalar(
        "vlb_term",
        [schedule, early, near_x0, x_t, eps](const Inputs& x) {
          return vlb_term(near_x0, x_t, early, eps, x[0], schedule);
        },
        in);
    const TensorD sigma_t = variance_from_v(s.uniform({2, 1, 4, 4}, -0.9, 0.9), t, schedule);
    s.check_scalar(
        "l_var",
        [schedule, t, sigma_t](const Inputs& x) {
          return l_var(sigma_t, variance_from_v(x[0], t, schedule));
        },
        in);
  }
}

}  // namespace

std::vector<GradCheckResult> run_gradient_suite(std::uint64_t seed, bool include_model) {
  Suite s(seed);
  elementwise(s);
  reductions_and_layout(s);
  linear_algebra(s);
  attention_checks(s);
  if (include_model) model_checks(s);
  return s.take();
}

}  // namespace lit
