#include "lit/attention.hpp"

#include <cmath>

#include "lit/error.hpp"
#include "lit/ops.hpp"

namespace lit {

namespace {

// Smallest denominator magnitude allowed before clamping (scaled form).
constexpr double kDenominatorFloor = 1e-6;

struct VariantName {
  AttentionVariant variant;
  const char* name;
};

constexpr VariantName kVariantNames[] = {
    {AttentionVariant::kSoftmax, "softmax"},
    {AttentionVariant::kLinearRelu, "linear_relu"},
    {AttentionVariant::kLinearReluDwc, "linear_relu_dwc"},
    {AttentionVariant::kFocusedRelu, "focused_relu"},
    {AttentionVariant::kFocusedGelu, "focused_gelu"},
};

template <class T>
struct TokenProjections {
  Tensor<T> q, k, v;  // [b, N, D]
};

template <class T>
TokenProjections<T> project_tokens(const Tensor<T>& x, const AttentionParams<T>& p,
                                   const AttentionConfig& config) {
  if (x.rank() != 3 || x.dim(2) != config.hidden_dim) {
    throw DimensionError("attention input must be [b, N, " + std::to_string(config.hidden_dim) +
                         "], got " + to_string(x.shape()));
  }
  const std::int64_t d_model = config.hidden_dim;
  TokenProjections<T> out;
  switch (p.layout) {
    case ProjectionLayout::kFusedKv: {
      out.q = linear(x, p.q_w, p.q_b);
      const Tensor<T> kv = linear(x, p.kv_w, p.kv_b);
      out.k = slice(kv, 2, 0, d_model);
      out.v = slice(kv, 2, d_model, 2 * d_model);
      break;
    }
    case ProjectionLayout::kFusedQkv: {
      const Tensor<T> qkv = linear(x, p.qkv_w, p.qkv_b);
      out.q = slice(qkv, 2, 0, d_model);
      out.k = slice(qkv, 2, d_model, 2 * d_model);
      out.v = slice(qkv, 2, 2 * d_model, 3 * d_model);
      break;
    }
    case ProjectionLayout::kSeparate:
      out.q = linear(x, p.q_w, p.q_b);
      out.k = linear(x, p.k_w, p.k_b);
      out.v = linear(x, p.v_w, p.v_b);
      break;
  }
  return out;
}

template <class T>
void add_projection(ParamStore<T>& store, const std::string& path, std::int64_t in,
                         std::int64_t out, Rng& rng) {
  Tensor<T> w = rng.truncated_normal_tensor<T>({in, out}, 0.02);
  w.set_requires_grad(true);
  store.add(path + ".weight", w);
  Tensor<T> b = Tensor<T>::zeros({out});
  b.set_requires_grad(true);
  store.add(path + ".bias", b);
}

}  // namespace

std::string to_string(AttentionVariant variant) {
  for (const auto& v : kVariantNames) {
    if (v.variant == variant) return v.name;
  }
  return "unknown";
}

AttentionVariant parse_attention_variant(const std::string& name) {
  for (const auto& v : kVariantNames) {
    if (name == v.name) return v.variant;
  }
  throw ConfigError("unknown attention variant: " + name);
}

bool is_linear(AttentionVariant variant) { return variant != AttentionVariant::kSoftmax; }

bool uses_dwc(AttentionVariant variant) {
  return variant == AttentionVariant::kLinearReluDwc || variant == AttentionVariant::kFocusedRelu ||
         variant == AttentionVariant::kFocusedGelu;
}

bool is_focused(AttentionVariant variant) {
  return variant == AttentionVariant::kFocusedRelu || variant == AttentionVariant::kFocusedGelu;
}

std::string to_string(ProjectionLayout layout) {
  switch (layout) {
    case ProjectionLayout::kFusedKv: return "fused_kv";
    case ProjectionLayout::kFusedQkv: return "fused_qkv";
    case ProjectionLayout::kSeparate: return "separate";
  }
  return "unknown";
}

ProjectionLayout parse_projection_layout(const std::string& name) {
  if (name == "fused_kv") return ProjectionLayout::kFusedKv;
  if (name == "fused_qkv") return ProjectionLayout::kFusedQkv;
  if (name == "separate") return ProjectionLayout::kSeparate;
  throw ConfigError("unknown projection layout: " + name);
}

void AttentionConfig::validate() const {
  if (hidden_dim < 1 || num_heads < 1) {
    throw ConfigError("hidden_dim and num_heads must be positive");
  }
  if (hidden_dim % num_heads != 0) {
    throw ConfigError("hidden_dim " + std::to_string(hidden_dim) + " is not divisible by " +
                      std::to_string(num_heads) + " heads");
  }
  if (uses_dwc(variant) && (dwc_kernel < 1 || dwc_kernel % 2 == 0)) {
    throw ConfigError("DWC kernel size must be odd and positive, got " +
                      std::to_string(dwc_kernel));
  }
  if (!(kernel_eps > 0.0)) throw ConfigError("kernel_eps must be positive");
  if (focused_power < 1) throw ConfigError("focused_power must be >= 1");
}

TokenGrid TokenGrid::square(std::int64_t tokens) {
  auto side = static_cast<std::int64_t>(std::llround(std::sqrt(static_cast<double>(tokens))));
  if (tokens < 1 || side * side != tokens) {
    throw DimensionError(std::to_string(tokens) + " tokens do not form a square grid");
  }
  return {side, side};
}

template <class T>
AttentionParams<T> AttentionParams<T>::from_store(const ParamStore<T>& store,
                                                  const std::string& prefix,
                                                  const AttentionConfig& config) {
  AttentionParams p;
  p.layout = config.layout;
  switch (config.layout) {
    case ProjectionLayout::kFusedKv:
      p.q_w = store.get(prefix + "q.weight");
      p.q_b = store.get(prefix + "q.bias");
      p.kv_w = store.get(prefix + "kv.weight");
      p.kv_b = store.get(prefix + "kv.bias");
      break;
    case ProjectionLayout::kFusedQkv:
      p.qkv_w = store.get(prefix + "qkv.weight");
      p.qkv_b = store.get(prefix + "qkv.bias");
      break;
    case ProjectionLayout::kSeparate:
      p.q_w = store.get(prefix + "q.weight");
      p.q_b = store.get(prefix + "q.bias");
      p.k_w = store.get(prefix + "k.weight");
      p.k_b = store.get(prefix + "k.bias");
      p.v_w = store.get(prefix + "v.weight");
      p.v_b = store.get(prefix + "v.bias");
      break;
  }
  p.proj_w = store.get(prefix + "proj.weight");
  p.proj_b = store.get(prefix + "proj.bias");
  if (uses_dwc(config.variant)) {
    p.dwc_w = store.get(prefix + "dwc.weight");
    p.dwc_b = store.get(prefix + "dwc.bias");
  }
  return p;
}

template <class T>
void add_attention_params(ParamStore<T>& store, const std::string& prefix,
                          const AttentionConfig& config, Rng& rng) {
  config.validate();
  const std::int64_t d_model = config.hidden_dim;
  switch (config.layout) {
    case ProjectionLayout::kFusedKv:
      add_projection(store, prefix + "q", d_model, d_model, rng);
      add_projection(store, prefix + "kv", d_model, 2 * d_model, rng);
      break;
    case ProjectionLayout::kFusedQkv:
      add_projection(store, prefix + "qkv", d_model, 3 * d_model, rng);
      break;
    case ProjectionLayout::kSeparate:
      add_projection(store, prefix + "q", d_model, d_model, rng);
      add_projection(store, prefix + "k", d_model, d_model, rng);
      add_projection(store, prefix + "v", d_model, d_model, rng);
      break;
  }
  add_projection(store, prefix + "proj", d_model, d_model, rng);
  if (uses_dwc(config.variant)) {
    const std::int64_t d = config.head_dim();
    const std::int64_t k = config.dwc_kernel;
    const double bound = 1.0 / static_cast<double>(k);
    Tensor<T> w = rng.uniform_tensor<T>({d, 1, k, k}, -bound, bound);
    w.set_requires_grad(true);
    store.add(prefix + "dwc.weight", w);
    Tensor<T> b = rng.uniform_tensor<T>({d}, -bound, bound);
    b.set_requires_grad(true);
    store.add(prefix + "dwc.bias", b);
  }
}

std::int64_t attention_parameter_count(const AttentionConfig& config) {
  const std::int64_t d_model = config.hidden_dim;
  std::int64_t n = 4 * d_model * d_model + 4 * d_model;
  if (uses_dwc(config.variant)) {
    const std::int64_t d = config.head_dim();
    n += d * config.dwc_kernel * config.dwc_kernel + d;
  }
  return n;
}

template <class T>
Tensor<T> split_heads(const Tensor<T>& x, std::int64_t heads) {
  if (x.rank() != 3 || x.dim(2) % heads != 0) {
    throw DimensionError("cannot split " + to_string(x.shape()) + " into " +
                         std::to_string(heads) + " heads");
  }
  const Tensor<T> r = reshape(x, {x.dim(0), x.dim(1), heads, x.dim(2) / heads});
  return permute(r, {0, 2, 1, 3});
}

template <class T>
Tensor<T> merge_heads(const Tensor<T>& x) {
  if (x.rank() != 4) throw DimensionError("merge_heads expects [b,h,N,d], got " + to_string(x.shape()));
  const Tensor<T> p = permute(x, {0, 2, 1, 3});
  return reshape(p, {x.dim(0), x.dim(2), x.dim(1) * x.dim(3)});
}

template <class T>
HeadProjections<T> project_heads(const Tensor<T>& x, const AttentionParams<T>& params,
                                 const AttentionConfig& config) {
  const auto tok = project_tokens(x, params, config);
  return {split_heads(tok.q, config.num_heads), split_heads(tok.k, config.num_heads),
          split_heads(tok.v, config.num_heads)};
}

template <class T>
Tensor<T> feature_map(const Tensor<T>& x, const AttentionConfig& config) {
  const T eps = static_cast<T>(config.kernel_eps);
  Tensor<T> phi;
  switch (config.variant) {
    case AttentionVariant::kSoftmax:
      throw ContractError("softmax attention has no feature map");
    case AttentionVariant::kFocusedGelu:
      phi = add_scalar(gelu(x), eps);
      break;
    default:
      phi = add_scalar(relu(x), eps);
      break;
  }
  if (is_focused(config.variant)) phi = focused_kernel(phi, config.focused_power);
  return phi;
}

template <class T>
Tensor<T> linear_attention_core(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
                                T eps, LinearPath path, AttentionDiagnostics* diag) {
  if (q.rank() != 4 || q.shape() != k.shape() || k.shape() != v.shape()) {
    throw DimensionError("linear attention expects equal [b,h,N,d] inputs, got " +
                         to_string(q.shape()) + ", " + to_string(k.shape()) + ", " +
                         to_string(v.shape()));
  }
  const std::int64_t n = q.dim(2);
  const T tokens = static_cast<T>(n);
  std::int64_t* clamped = diag ? &diag->clamped_denominators : nullptr;
  const T floor = static_cast<T>(kDenominatorFloor);

  switch (path) {
    case LinearPath::kQuadratic: {
      const Tensor<T> a = matmul(q, transpose(k, 2, 3));  // [b,h,N,N]
      const Tensor<T> denom = add_scalar(sum(a, 3, true), tokens * eps);
      const Tensor<T> weights = mul(a, guarded_reciprocal(denom, tokens * floor, clamped));
      return matmul(weights, v);
    }
    case LinearPath::kFactorized: {
      const Tensor<T> kt = transpose(k, 2, 3);                          // [b,h,d,N]
      const Tensor<T> kv = matmul(kt, v);                               // [b,h,d,d]
      const Tensor<T> ksum = sum(k, 2, true);                           // [b,h,1,d]
      const Tensor<T> denom = add_scalar(matmul(q, transpose(ksum, 2, 3)), tokens * eps);
      return mul(matmul(q, kv), guarded_reciprocal(denom, tokens * floor, clamped));
    }
    case LinearPath::kScaled: {
      const T s = static_cast<T>(1.0 / std::sqrt(static_cast<double>(n)));
      const Tensor<T> kv = matmul(scale(transpose(k, 2, 3), s), scale(v, s));
      const Tensor<T> kmean = mean(k, 2, true);
      const Tensor<T> denom = add_scalar(matmul(q, transpose(kmean, 2, 3)), eps);
      return mul(matmul(q, kv), guarded_reciprocal(denom, floor, clamped));
    }
  }
  throw ContractError("unknown linear attention path");
}

template <class T>
Tensor<T> dwc_value_augment(const Tensor<T>& attn_out, const Tensor<T>& v,
                            const Tensor<T>& dwc_weight, const Tensor<T>& dwc_bias,
                            TokenGrid grid) {
  if (v.rank() != 4 || attn_out.rank() != 3) {
    throw DimensionError("dwc_value_augment expects attn_out [b,N,D] and v [b,h,N,d]");
  }
  const std::int64_t b = v.dim(0), h = v.dim(1), n = v.dim(2), d = v.dim(3);
  if (grid.height * grid.width != n) {
    throw DimensionError(std::to_string(n) + " tokens do not match a " +
                         std::to_string(grid.height) + "x" + std::to_string(grid.width) +
                         " grid");
  }
  if (attn_out.shape() != Shape{b, n, h * d}) {
    throw DimensionError("attention output " + to_string(attn_out.shape()) +
                         " does not match value " + to_string(v.shape()));
  }
  Tensor<T> field = reshape(v, {b * h, grid.height, grid.width, d});
  field = permute(field, {0, 3, 1, 2});
  field = conv2d_depthwise(field, dwc_weight, dwc_bias);  // [b*h, d, H, W]
  field = reshape(field, {b, h * d, n});
  field = permute(field, {0, 2, 1});
  return add(attn_out, field);
}

template <class T>
Tensor<T> softmax_attention(const Tensor<T>& x, const AttentionParams<T>& params,
                            const AttentionConfig& config) {
  const auto heads = project_heads(x, params, config);
  const T s = static_cast<T>(1.0 / std::sqrt(static_cast<double>(config.head_dim())));
  const Tensor<T> logits = scale(matmul(heads.q, transpose(heads.k, 2, 3)), s);
  const Tensor<T> out = matmul(softmax(logits, 3), heads.v);
  return linear(merge_heads(out), params.proj_w, params.proj_b);
}

template <class T>
Tensor<T> linear_attention(const Tensor<T>& x, const AttentionParams<T>& params,
                           const AttentionConfig& config, TokenGrid grid, LinearPath path,
                           AttentionDiagnostics* diag) {
  if (!is_linear(config.variant)) {
    throw ContractError("linear_attention called with the softmax variant");
  }
  const auto tok = project_tokens(x, params, config);
  const Tensor<T> q = split_heads(feature_map(tok.q, config), config.num_heads);
  const Tensor<T> k = split_heads(feature_map(tok.k, config), config.num_heads);
  const Tensor<T> v = split_heads(tok.v, config.num_heads);
  Tensor<T> out =
      merge_heads(linear_attention_core(q, k, v, static_cast<T>(config.kernel_eps), path, diag));
  if (uses_dwc(config.variant)) out = dwc_value_augment(out, v, params.dwc_w, params.dwc_b, grid);
  return linear(out, params.proj_w, params.proj_b);
}

template <class T>
Tensor<T> linear_attention_quadratic(const Tensor<T>& x, const AttentionParams<T>& params,
                                     const AttentionConfig& config, TokenGrid grid,
                                     AttentionDiagnostics* diag) {
  return linear_attention(x, params, config, grid, LinearPath::kQuadratic, diag);
}

template <class T>
Tensor<T> linear_attention_factorized(const Tensor<T>& x, const AttentionParams<T>& params,
                                      const AttentionConfig& config, TokenGrid grid,
                                      AttentionDiagnostics* diag) {
  return linear_attention(x, params, config, grid, LinearPath::kScaled, diag);
}

template <class T>
Tensor<T> attention_forward(const Tensor<T>& x, const AttentionParams<T>& params,
                            const AttentionConfig& config, TokenGrid grid, LinearPath path,
                            AttentionDiagnostics* diag) {
  if (config.variant == AttentionVariant::kSoftmax) return softmax_attention(x, params, config);
  return linear_attention(x, params, config, grid, path, diag);
}

template <class T>
Tensor<T> attention_maps(const Tensor<T>& x, const AttentionParams<T>& params,
                         const AttentionConfig& config) {
  NoGradGuard no_grad;
  if (config.variant == AttentionVariant::kSoftmax) {
    const auto heads = project_heads(x, params, config);
    const T s = static_cast<T>(1.0 / std::sqrt(static_cast<double>(config.head_dim())));
    return softmax(scale(matmul(heads.q, transpose(heads.k, 2, 3)), s), 3);
  }
  const auto tok = project_tokens(x, params, config);
  const Tensor<T> q = split_heads(feature_map(tok.q, config), config.num_heads);
  const Tensor<T> k = split_heads(feature_map(tok.k, config), config.num_heads);
  const T tokens = static_cast<T>(q.dim(2));
  const T eps = static_cast<T>(config.kernel_eps);
  const Tensor<T> a = matmul(q, transpose(k, 2, 3));
  const Tensor<T> denom = add_scalar(sum(a, 3, true), tokens * eps);
  return mul(a, guarded_reciprocal(denom, tokens * static_cast<T>(kDenominatorFloor)));
}

#define LIT_INSTANTIATE(T)                                                                      \
  template struct AttentionParams<T>;                                                           \
  template void add_attention_params<T>(ParamStore<T>&, const std::string&,                     \
                                        const AttentionConfig&, Rng&);                          \
  template HeadProjections<T> project_heads<T>(const Tensor<T>&, const AttentionParams<T>&,     \
                                               const AttentionConfig&);                         \
  template Tensor<T> split_heads<T>(const Tensor<T>&, std::int64_t);                            \
  template Tensor<T> merge_heads<T>(const Tensor<T>&);                                          \
  template Tensor<T> feature_map<T>(const Tensor<T>&, const AttentionConfig&);                  \
  template Tensor<T> linear_attention_core<T>(const Tensor<T>&, const Tensor<T>&,               \
                                              const Tensor<T>&, T, LinearPath,                  \
                                              AttentionDiagnostics*);                           \
  template Tensor<T> dwc_value_augment<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, \
                                          const Tensor<T>&, TokenGrid);                         \
  template Tensor<T> softmax_attention<T>(const Tensor<T>&, const AttentionParams<T>&,          \
                                          const AttentionConfig&);                              \
  template Tensor<T> linear_attention<T>(const Tensor<T>&, const AttentionParams<T>&,           \
                                         const AttentionConfig&, TokenGrid, LinearPath,         \
                                         AttentionDiagnostics*);                                \
  template Tensor<T> linear_attention_quadratic<T>(const Tensor<T>&, const AttentionParams<T>&, \
                                                   const AttentionConfig&, TokenGrid,           \
                                                   AttentionDiagnostics*);                      \
  template Tensor<T> linear_attention_factorized<T>(                                            \
      const Tensor<T>&, const AttentionParams<T>&, const AttentionConfig&, TokenGrid,           \
      AttentionDiagnostics*);                                                                   \
  template Tensor<T> attention_forward<T>(const Tensor<T>&, const AttentionParams<T>&,          \
                                          const AttentionConfig&, TokenGrid, LinearPath,        \
                                          AttentionDiagnostics*);                               \
  template Tensor<T> attention_maps<T>(const Tensor<T>&, const AttentionParams<T>&,             \
                                       const AttentionConfig&);

LIT_INSTANTIATE(float)
LIT_INSTANTIATE(double)
#undef LIT_INSTANTIATE

}  // namespace lit
