#include "lit/model.hpp"

#include <cmath>

#include "lit/error.hpp"
#include "lit/ops.hpp"
#include "lit/random.hpp"

namespace lit {

namespace {

template <class T>
void add_leaf(ParamStore<T>& store, const std::string& path, Tensor<T> value) {
  value.set_requires_grad(true);
  store.add(path, std::move(value));
}

template <class T>
void add_linear(ParamStore<T>& store, const std::string& path, std::int64_t in,
                std::int64_t out, Rng& rng, bool zero) {
  add_leaf(store, path + ".weight",
           zero ? Tensor<T>::zeros({in, out}) : rng.truncated_normal_tensor<T>({in, out}, 0.02));
  add_leaf(store, path + ".bias", Tensor<T>::zeros({out}));
}

template <class T>
Tensor<T> apply_linear(const Tensor<T>& x, const ParamStore<T>& params, const std::string& path) {
  return linear(x, params.get(path + ".weight"), params.get(path + ".bias"));
}

// [b, k*D] -> k chunks of [b, 1, D].
template <class T>
std::vector<Tensor<T>> chunk_rows(const Tensor<T>& m, std::int64_t chunks, std::int64_t hidden) {
  std::vector<Tensor<T>> out;
  out.reserve(static_cast<std::size_t>(chunks));
  for (std::int64_t i = 0; i < chunks; ++i) {
    out.push_back(reshape(slice(m, 1, i * hidden, (i + 1) * hidden), {m.dim(0), 1, hidden}));
  }
  return out;
}

template <class T>
Tensor<T> final_layer(const Tensor<T>& x, const Tensor<T>& c, const ParamStore<T>& params,
                      const ModelConfig& config) {
  const Tensor<T> m = apply_linear(silu(c), params, "final_layer.adaLN_modulation");
  const auto parts = chunk_rows(m, 2, config.hidden);
  const Tensor<T> h = modulate(layernorm(x, -1, static_cast<T>(1e-6)), parts[0], parts[1]);
  return apply_linear(h, params, "final_layer.linear");
}

}  // namespace

std::string block_prefix(std::int64_t layer) { return "blocks." + std::to_string(layer) + "."; }

bool is_attention_path(const std::string& path) {
  return path.rfind("blocks.", 0) == 0 && path.find(".attn.") != std::string::npos;
}

template <class T>
ParamStore<T> init_model(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(seed);
  ParamStore<T> store;
  const std::int64_t d = config.hidden;
  add_linear(store, "x_embedder.proj", config.patch_dim(), d, rng, false);
  add_linear(store, "t_embedder.mlp.0", config.frequency_dim, d, rng, false);
  add_linear(store, "t_embedder.mlp.2", d, d, rng, false);
  add_leaf(store, "y_embedder.embedding_table",
           rng.truncated_normal_tensor<T>({config.num_classes + 1, d}, 0.02));
  const AttentionConfig attn = config.attention();
  for (std::int64_t i = 0; i < config.layers; ++i) {
    const std::string p = block_prefix(i);
    add_linear(store, p + "adaLN_modulation", d, 6 * d, rng, true);
    add_attention_params(store, p + "attn.", attn, rng);
    add_linear(store, p + "mlp.fc1", d, config.mlp_ratio * d, rng, false);
    add_linear(store, p + "mlp.fc2", config.mlp_ratio * d, d, rng, false);
  }
  add_linear(store, "final_layer.adaLN_modulation", d, 2 * d, rng, true);
  add_linear(store, "final_layer.linear", d, config.patch * config.patch * config.out_channels(),
             rng, true);
  return store;
}

template <class T>
Tensor<T> patchify(const Tensor<T>& x, std::int64_t patch) {
  if (x.rank() != 4 || x.dim(2) != x.dim(3)) {
    throw DimensionError("patchify expects square [b,C,S,S], got " + to_string(x.shape()));
  }
  const std::int64_t b = x.dim(0), c = x.dim(1), s = x.dim(2);
  if (patch < 1 || s % patch != 0) {
    throw ConfigError("image side " + std::to_string(s) + " is not divisible by patch " +
                      std::to_string(patch));
  }
  const std::int64_t g = s / patch;
  const Tensor<T> r = reshape(x, {b, c, g, patch, g, patch});
  const Tensor<T> p = permute(r, {0, 2, 4, 3, 5, 1});
  return reshape(p, {b, g * g, patch * patch * c});
}

template <class T>
Tensor<T> unpatchify(const Tensor<T>& tokens, std::int64_t patch, std::int64_t channels,
                     std::int64_t image_size) {
  if (patch < 1 || image_size % patch != 0) {
    throw ConfigError("image side " + std::to_string(image_size) +
                      " is not divisible by patch " + std::to_string(patch));
  }
  const std::int64_t g = image_size / patch;
  if (tokens.rank() != 3 || tokens.dim(1) != g * g || tokens.dim(2) != patch * patch * channels) {
    throw DimensionError("unpatchify cannot map " + to_string(tokens.shape()) + " to " +
                         std::to_string(channels) + "x" + std::to_string(image_size) + "^2");
  }
  const std::int64_t b = tokens.dim(0);
  const Tensor<T> r = reshape(tokens, {b, g, g, patch, patch, channels});
  const Tensor<T> p = permute(r, {0, 5, 1, 3, 2, 4});
  return reshape(p, {b, channels, image_size, image_size});
}

template <class T>
Tensor<T> positional_embedding(std::int64_t grid_side, std::int64_t dim) {
  if (dim % 4 != 0) throw ConfigError("positional embedding width must be a multiple of 4");
  const std::int64_t quarter = dim / 4;
  const std::int64_t n = grid_side * grid_side;
  std::vector<T> values(static_cast<std::size_t>(n * dim));
  for (std::int64_t row = 0; row < grid_side; ++row) {
    for (std::int64_t col = 0; col < grid_side; ++col) {
      T* out = values.data() + (row * grid_side + col) * dim;
      // First half encodes the column, second half the row.
      const double pos[2] = {static_cast<double>(col), static_cast<double>(row)};
      for (int half = 0; half < 2; ++half) {
        for (std::int64_t i = 0; i < quarter; ++i) {
          const double omega = 1.0 / std::pow(10000.0, static_cast<double>(i) / quarter);
          out[half * 2 * quarter + i] = static_cast<T>(std::sin(pos[half] * omega));
          out[half * 2 * quarter + quarter + i] = static_cast<T>(std::cos(pos[half] * omega));
        }
      }
    }
  }
  return Tensor<T>({n, dim}, std::move(values));
}

template <class T>
Tensor<T> timestep_frequencies(const std::vector<std::int64_t>& t, std::int64_t dim,
                               std::int64_t max_t) {
  if (dim < 2 || dim % 2 != 0) throw ConfigError("timestep embedding width must be even");
  const std::int64_t half = dim / 2;
  const auto b = static_cast<std::int64_t>(t.size());
  std::vector<T> values(static_cast<std::size_t>(b * dim));
  for (std::int64_t i = 0; i < b; ++i) {
    if (t[i] < 0 || t[i] >= max_t) {
      throw ContractError("timestep " + std::to_string(t[i]) + " outside [0, " +
                          std::to_string(max_t) + ")");
    }
    for (std::int64_t j = 0; j < half; ++j) {
      const double f = std::exp(-std::log(10000.0) * static_cast<double>(j) / half);
      const double arg = static_cast<double>(t[i]) * f;
      values[i * dim + j] = static_cast<T>(std::sin(arg));
      values[i * dim + half + j] = static_cast<T>(std::cos(arg));
    }
  }
  return Tensor<T>({b, dim}, std::move(values));
}

template <class T>
Tensor<T> timestep_embedding(const std::vector<std::int64_t>& t, const ParamStore<T>& params,
                             const ModelConfig& config) {
  const Tensor<T> f = timestep_frequencies<T>(t, config.frequency_dim, config.num_timesteps);
  return apply_linear(silu(apply_linear(f, params, "t_embedder.mlp.0")), params,
                      "t_embedder.mlp.2");
}

template <class T>
Tensor<T> label_embedding(const std::vector<std::int64_t>& y, const ParamStore<T>& params,
                          const ModelConfig& config) {
  for (const auto label : y) {
    if (label < 0 || label > config.num_classes) {
      throw ContractError("label " + std::to_string(label) + " outside [0, " +
                          std::to_string(config.num_classes) + "]");
    }
  }
  return embedding(params.get("y_embedder.embedding_table"), y);
}

template <class T>
Tensor<T> modulate(const Tensor<T>& x, const Tensor<T>& shift, const Tensor<T>& scale) {
  return add(mul(x, add_scalar(scale, T(1))), shift);
}

template <class T>
Modulation<T> adaln_modulate(const Tensor<T>& c, const ParamStore<T>& params,
                             const std::string& prefix, std::int64_t hidden) {
  const Tensor<T> m = apply_linear(silu(c), params, prefix + "adaLN_modulation");
  auto p = chunk_rows(m, 6, hidden);
  return {p[0], p[1], p[2], p[3], p[4], p[5]};
}

template <class T>
Tensor<T> block_forward(const Tensor<T>& x, const Tensor<T>& c, const ParamStore<T>& params,
                        std::int64_t layer, const ModelConfig& config,
                        const ForwardOptions<T>& options) {
  const std::string prefix = block_prefix(layer);
  const T ln_eps = static_cast<T>(1e-6);
  const Modulation<T> m = adaln_modulate(c, params, prefix, config.hidden);
  const AttentionConfig attn_cfg = config.attention();
  const auto attn_params = AttentionParams<T>::from_store(params, prefix + "attn.", attn_cfg);

  const Tensor<T> h = modulate(layernorm(x, -1, ln_eps), m.shift_msa, m.scale_msa);
  if (options.on_attention_input) options.on_attention_input(layer, h);
  const Tensor<T> a =
      attention_forward(h, attn_params, attn_cfg, config.grid(), options.path, options.diagnostics);
  const Tensor<T> x1 = add(x, mul(m.gate_msa, a));

  const Tensor<T> h2 = modulate(layernorm(x1, -1, ln_eps), m.shift_mlp, m.scale_mlp);
  const Tensor<T> f = apply_linear(gelu(apply_linear(h2, params, prefix + "mlp.fc1")), params,
                                   prefix + "mlp.fc2");
  return add(x1, mul(m.gate_mlp, f));
}

template <class T>
ModelOutput<T> model_forward(const Tensor<T>& x_t, const std::vector<std::int64_t>& t,
                             const std::vector<std::int64_t>& y, const ParamStore<T>& params,
                             const ModelConfig& config, const ForwardOptions<T>& options) {
  const Shape expected{x_t.rank() > 0 ? x_t.dim(0) : 0, config.in_channels, config.image_size,
                       config.image_size};
  if (x_t.shape() != expected) {
    throw DimensionError("model input must be " + to_string(expected) + ", got " +
                         to_string(x_t.shape()));
  }
  const auto b = x_t.dim(0);
  if (static_cast<std::int64_t>(t.size()) != b || static_cast<std::int64_t>(y.size()) != b) {
    throw DimensionError("timestep and label counts must equal the batch size");
  }

  Tensor<T> x = add(apply_linear(patchify(x_t, config.patch), params, "x_embedder.proj"),
                    positional_embedding<T>(config.grid_side(), config.hidden));
  const Tensor<T> c = add(timestep_embedding(t, params, config), label_embedding(y, params, config));
  for (std::int64_t i = 0; i < config.layers; ++i) {
    x = block_forward(x, c, params, i, config, options);
    if (!all_finite(x)) {
      throw NumericFault("non-finite activation after block " + std::to_string(i));
    }
  }
  const Tensor<T> out = unpatchify(final_layer(x, c, params, config), config.patch,
                                   config.out_channels(), config.image_size);
  if (!all_finite(out)) throw NumericFault("non-finite activation in the final layer");

  ModelOutput<T> result;
  if (config.predicts_variance) {
    result.eps = slice(out, 1, 0, config.in_channels);
    result.v = slice(out, 1, config.in_channels, 2 * config.in_channels);
  } else {
    result.eps = out;
  }
  return result;
}

template <class T>
std::vector<Tensor<T>> collect_attention_maps(const Tensor<T>& x_t,
                                              const std::vector<std::int64_t>& t,
                                              const std::vector<std::int64_t>& y,
                                              const ParamStore<T>& params,
                                              const ModelConfig& config) {
  NoGradGuard no_grad;
  std::vector<Tensor<T>> maps;
  const AttentionConfig attn_cfg = config.attention();
  ForwardOptions<T> options;
  options.on_attention_input = [&](std::int64_t layer, const Tensor<T>& h) {
    const auto p = AttentionParams<T>::from_store(params, block_prefix(layer) + "attn.", attn_cfg);
    maps.push_back(attention_maps(h, p, attn_cfg));
  };
  model_forward(x_t, t, y, params, config, options);
  return maps;
}

#define LIT_INSTANTIATE(T)                                                                       \
  template ParamStore<T> init_model<T>(const ModelConfig&, std::uint64_t);                       \
  template Tensor<T> patchify<T>(const Tensor<T>&, std::int64_t);                                \
  template Tensor<T> unpatchify<T>(const Tensor<T>&, std::int64_t, std::int64_t, std::int64_t);  \
  template Tensor<T> positional_embedding<T>(std::int64_t, std::int64_t);                        \
  template Tensor<T> timestep_frequencies<T>(const std::vector<std::int64_t>&, std::int64_t,     \
                                             std::int64_t);                                      \
  template Tensor<T> timestep_embedding<T>(const std::vector<std::int64_t>&,                     \
                                           const ParamStore<T>&, const ModelConfig&);            \
  template Tensor<T> label_embedding<T>(const std::vector<std::int64_t>&, const ParamStore<T>&,  \
                                        const ModelConfig&);                                     \
  template Tensor<T> modulate<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);          \
  template Modulation<T> adaln_modulate<T>(const Tensor<T>&, const ParamStore<T>&,               \
                                           const std::string&, std::int64_t);                    \
  template Tensor<T> block_forward<T>(const Tensor<T>&, const Tensor<T>&, const ParamStore<T>&,  \
                                      std::int64_t, const ModelConfig&,                          \
                                      const ForwardOptions<T>&);                                 \
  template ModelOutput<T> model_forward<T>(const Tensor<T>&, const std::vector<std::int64_t>&,   \
                                           const std::vector<std::int64_t>&,                     \
                                           const ParamStore<T>&, const ModelConfig&,             \
                                           const ForwardOptions<T>&);                            \
  template std::vector<Tensor<T>> collect_attention_maps<T>(                                     \
      const Tensor<T>&, const std::vector<std::int64_t>&, const std::vector<std::int64_t>&,      \
      const ParamStore<T>&, const ModelConfig&);

LIT_INSTANTIATE(float)
LIT_INSTANTIATE(double)
#undef LIT_INSTANTIATE

}  // namespace lit
