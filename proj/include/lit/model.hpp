#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "lit/attention.hpp"
#include "lit/model_config.hpp"
#include "lit/param_store.hpp"
#include "lit/tensor.hpp"

namespace lit {

// Fresh parameters for `config`. Projections use truncated normal (std 0.02)
// with zero biases; every adaLN modulation layer and the final linear layer
// are zero (adaLN-Zero), so a fresh model predicts exactly zero.
template <class T>
ParamStore<T> init_model(const ModelConfig& config, std::uint64_t seed);

// Path prefixes used by the store.
std::string block_prefix(std::int64_t layer);  // "blocks.<i>."

// [b,C,S,S] -> [b, N, p*p*C] with per-token feature order (row, col, channel).
template <class T>
Tensor<T> patchify(const Tensor<T>& x, std::int64_t patch);
// Inverse of patchify for `channels` output channels.
template <class T>
Tensor<T> unpatchify(const Tensor<T>& tokens, std::int64_t patch, std::int64_t channels,
                     std::int64_t image_size);

// Fixed 2D sin-cos table [N, D] for a square grid.
template <class T>
Tensor<T> positional_embedding(std::int64_t grid_side, std::int64_t dim);

// [sin(t f_0) .. sin(t f_{n-1}), cos(t f_0) .. cos(t f_{n-1})], f_i = 10000^(-i/n),
// n = dim/2. Returns [len(t), dim]. Throws ContractError for t outside [0, max_t).
template <class T>
Tensor<T> timestep_frequencies(const std::vector<std::int64_t>& t, std::int64_t dim,
                               std::int64_t max_t);

template <class T>
Tensor<T> timestep_embedding(const std::vector<std::int64_t>& t, const ParamStore<T>& params,
                             const ModelConfig& config);

// y == num_classes selects the null (unconditional) row.
template <class T>
Tensor<T> label_embedding(const std::vector<std::int64_t>& y, const ParamStore<T>& params,
                          const ModelConfig& config);

template <class T>
struct Modulation {
  Tensor<T> shift_msa, scale_msa, gate_msa, shift_mlp, scale_mlp, gate_mlp;  // [b, 1, D]
};

// x * (1 + scale) + shift.
template <class T>
Tensor<T> modulate(const Tensor<T>& x, const Tensor<T>& shift, const Tensor<T>& scale);

template <class T>
Modulation<T> adaln_modulate(const Tensor<T>& c, const ParamStore<T>& params,
                             const std::string& prefix, std::int64_t hidden);

template <class T>
struct ForwardOptions {
  LinearPath path = LinearPath::kScaled;
  AttentionDiagnostics* diagnostics = nullptr;
  // Called with each block's attention input (after norm and modulation).
  std::function<void(std::int64_t layer, const Tensor<T>& attn_input)> on_attention_input;
};

template <class T>
Tensor<T> block_forward(const Tensor<T>& x, const Tensor<T>& c, const ParamStore<T>& params,
                        std::int64_t layer, const ModelConfig& config,
                        const ForwardOptions<T>& options = {});

template <class T>
struct ModelOutput {
  Tensor<T> eps;  // [b, C, S, S]
  Tensor<T> v;    // raw variance interpolation output; undefined without a variance head
};

// Throws NumericFault naming the block index if an activation turns non-finite.
template <class T>
ModelOutput<T> model_forward(const Tensor<T>& x_t, const std::vector<std::int64_t>& t,
                             const std::vector<std::int64_t>& y, const ParamStore<T>& params,
                             const ModelConfig& config, const ForwardOptions<T>& options = {});

// Per-layer attention maps [b, h, N, N] for one forward pass.
template <class T>
std::vector<Tensor<T>> collect_attention_maps(const Tensor<T>& x_t,
                                              const std::vector<std::int64_t>& t,
                                              const std::vector<std::int64_t>& y,
                                              const ParamStore<T>& params,
                                              const ModelConfig& config);

// Paths that belong to attention modules (blocks.<i>.attn.*).
bool is_attention_path(const std::string& path);

}  // namespace lit
