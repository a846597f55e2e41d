#pragma once

#include <cstdint>
#include <string>

#include "lit/param_store.hpp"
#include "lit/random.hpp"
#include "lit/tensor.hpp"

namespace lit {

enum class AttentionVariant {
  kSoftmax,
  kLinearRelu,     // ReLU kernel, no DWC
  kLinearReluDwc,  // ReLU kernel + depthwise conv on values
  kFocusedRelu,    // focused ReLU kernel + DWC
  kFocusedGelu,    // focused GELU kernel + DWC
};

std::string to_string(AttentionVariant variant);
AttentionVariant parse_attention_variant(const std::string& name);
bool is_linear(AttentionVariant variant);
bool uses_dwc(AttentionVariant variant);
bool is_focused(AttentionVariant variant);

// How the query/key/value projections are stored.
enum class ProjectionLayout {
  kFusedKv,   // q: D->D, kv: D->2D
  kFusedQkv,  // qkv: D->3D
  kSeparate,  // q, k, v: D->D each
};

std::string to_string(ProjectionLayout layout);
ProjectionLayout parse_projection_layout(const std::string& name);

struct AttentionConfig {
  std::int64_t hidden_dim = 64;
  std::int64_t num_heads = 2;
  AttentionVariant variant = AttentionVariant::kLinearReluDwc;
  std::int64_t dwc_kernel = 5;
  double kernel_eps = 1e-6;
  int focused_power = 3;
  ProjectionLayout layout = ProjectionLayout::kFusedKv;

  std::int64_t head_dim() const { return hidden_dim / num_heads; }
  // Throws ConfigError on D % h != 0, even DWC kernel, eps <= 0, power < 1.
  void validate() const;
};

// Evaluation order for the linear-attention core. All three are algebraically
// identical; the model uses kScaled.
enum class LinearPath {
  kQuadratic,   // explicit normalised N x N map, then map @ V
  kFactorized,  // phi(Q) (phi(K)^T V) over phi(Q) sum_j phi(K_j)
  kScaled,      // kv = (K^T N^-1/2)(V N^-1/2), z = 1 / (Q mean(K)^T + eps)
};

struct AttentionDiagnostics {
  // Denominators whose magnitude fell under the floor and were clamped.
  std::int64_t clamped_denominators = 0;
};

// Spatial token grid; height * width must equal the sequence length.
struct TokenGrid {
  std::int64_t height = 0;
  std::int64_t width = 0;

  // Square grid for n tokens; throws DimensionError if n is not a square.
  static TokenGrid square(std::int64_t tokens);
};

template <class T>
struct AttentionParams {
  ProjectionLayout layout = ProjectionLayout::kFusedKv;
  Tensor<T> qkv_w, qkv_b;                // kFusedQkv
  Tensor<T> q_w, q_b;                    // kFusedKv, kSeparate
  Tensor<T> kv_w, kv_b;                  // kFusedKv
  Tensor<T> k_w, k_b, v_w, v_b;          // kSeparate
  Tensor<T> proj_w, proj_b;
  Tensor<T> dwc_w, dwc_b;                // [d,1,k,k], [d] when the variant uses DWC

  // Looks up `<prefix>q.weight`, `<prefix>kv.weight`, ... for config.layout.
  static AttentionParams from_store(const ParamStore<T>& store, const std::string& prefix,
                                    const AttentionConfig& config);
};

// Appends freshly initialised attention parameters under `prefix`.
// Projections: truncated normal (std 0.02), zero bias. DWC: uniform in
// +-1/k for weight and bias.
template <class T>
void add_attention_params(ParamStore<T>& store, const std::string& prefix,
                          const AttentionConfig& config, Rng& rng);

std::int64_t attention_parameter_count(const AttentionConfig& config);

// Projected per-head tensors [b, h, N, d] before any kernel function.
template <class T>
struct HeadProjections {
  Tensor<T> q, k, v;
};

template <class T>
HeadProjections<T> project_heads(const Tensor<T>& x, const AttentionParams<T>& params,
                                 const AttentionConfig& config);

// [b,N,D] -> [b,h,N,d] and back.
template <class T>
Tensor<T> split_heads(const Tensor<T>& x, std::int64_t heads);
template <class T>
Tensor<T> merge_heads(const Tensor<T>& x);

// phi(x) + eps for linear variants (ReLU or GELU), then the focused map when
// the variant asks for it. Operates per token on [b, N, D].
template <class T>
Tensor<T> feature_map(const Tensor<T>& x, const AttentionConfig& config);

// Core on per-head tensors (already feature-mapped): [b,h,N,d] -> [b,h,N,d].
template <class T>
Tensor<T> linear_attention_core(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
                                T eps, LinearPath path, AttentionDiagnostics* diag = nullptr);

// attn_out [b,N,D] + DWC(v) where v is [b,h,N,d] laid out on `grid`; the
// kernel [d,1,k,k] is shared across heads.
template <class T>
Tensor<T> dwc_value_augment(const Tensor<T>& attn_out, const Tensor<T>& v,
                            const Tensor<T>& dwc_weight, const Tensor<T>& dwc_bias,
                            TokenGrid grid);

// Full attention modules: x [b,N,D] -> [b,N,D] (projections included).
template <class T>
Tensor<T> softmax_attention(const Tensor<T>& x, const AttentionParams<T>& params,
                            const AttentionConfig& config);
template <class T>
Tensor<T> linear_attention(const Tensor<T>& x, const AttentionParams<T>& params,
                           const AttentionConfig& config, TokenGrid grid, LinearPath path,
                           AttentionDiagnostics* diag = nullptr);
template <class T>
Tensor<T> linear_attention_quadratic(const Tensor<T>& x, const AttentionParams<T>& params,
                                     const AttentionConfig& config, TokenGrid grid,
                                     AttentionDiagnostics* diag = nullptr);
template <class T>
Tensor<T> linear_attention_factorized(const Tensor<T>& x, const AttentionParams<T>& params,
                                      const AttentionConfig& config, TokenGrid grid,
                                      AttentionDiagnostics* diag = nullptr);

// Dispatches on config.variant.
template <class T>
Tensor<T> attention_forward(const Tensor<T>& x, const AttentionParams<T>& params,
                            const AttentionConfig& config, TokenGrid grid,
                            LinearPath path = LinearPath::kScaled,
                            AttentionDiagnostics* diag = nullptr);

// Per-head row-normalised attention maps [b, h, N, N]: softmax maps, or
// phi(Q)phi(K)^T normalised by its row sums for linear variants.
template <class T>
Tensor<T> attention_maps(const Tensor<T>& x, const AttentionParams<T>& params,
                         const AttentionConfig& config);

// Mean pairwise cosine similarity between flattened per-head maps [h, N, N].
// Throws ContractError when h < 2.
template <class T>
double head_similarity(const Tensor<T>& maps);

}  // namespace lit
