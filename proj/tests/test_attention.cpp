#include <gtest/gtest.h>

#include <cmath>

#include "lit/attention.hpp"
#include "lit/error.hpp"
#include "lit/ops.hpp"

using namespace lit;

namespace {

AttentionConfig make_config(AttentionVariant variant, std::int64_t dim, std::int64_t heads,
                            ProjectionLayout layout = ProjectionLayout::kFusedKv) {
  AttentionConfig c;
  c.hidden_dim = dim;
  c.num_heads = heads;
  c.variant = variant;
  c.dwc_kernel = 3;
  c.layout = layout;
  return c;
}

template <class T>
ParamStore<T> make_params(const AttentionConfig& c, std::uint64_t seed, double spread = 0.3) {
  ParamStore<T> s;
  Rng rng(seed);
  add_attention_params(s, "", c, rng);
  // Widen the 0.02 init so the test exercises non-trivial maps.
  for (auto& [path, t] : s) {
    for (auto& v : t.mutable_data()) v = static_cast<T>(rng.uniform(-spread, spread));
  }
  return s;
}

double rel_diff(const TensorD& a, const TensorD& b) {
  double num = 0.0, den = 0.0;
  for (std::int64_t i = 0; i < a.numel(); ++i) {
    num = std::max(num, std::abs(a[i] - b[i]));
    den = std::max(den, std::abs(b[i]));
  }
  return num / std::max(den, 1e-300);
}

}  // namespace

TEST(AttentionConfig, Validation) {
  auto c = make_config(AttentionVariant::kLinearReluDwc, 8, 3);
  EXPECT_THROW(c.validate(), ConfigError);
  c = make_config(AttentionVariant::kLinearReluDwc, 8, 2);
  c.dwc_kernel = 4;
  EXPECT_THROW(c.validate(), ConfigError);
  c.dwc_kernel = 3;
  c.kernel_eps = 0.0;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(AttentionConfig, VariantNamesRoundTrip) {
  for (auto v : {AttentionVariant::kSoftmax, AttentionVariant::kLinearRelu,
                 AttentionVariant::kLinearReluDwc, AttentionVariant::kFocusedRelu,
                 AttentionVariant::kFocusedGelu}) {
    EXPECT_EQ(parse_attention_variant(to_string(v)), v);
  }
  EXPECT_THROW(parse_attention_variant("cosine"), ConfigError);
  EXPECT_TRUE(uses_dwc(AttentionVariant::kFocusedGelu));
  EXPECT_FALSE(uses_dwc(AttentionVariant::kLinearRelu));
  EXPECT_FALSE(is_linear(AttentionVariant::kSoftmax));
}

TEST(TokenGrid, Square) {
  EXPECT_EQ(TokenGrid::square(16).height, 4);
  EXPECT_THROW(TokenGrid::square(15), DimensionError);
}

TEST(Attention, ParameterCountMatchesStore) {
  for (auto layout : {ProjectionLayout::kFusedKv, ProjectionLayout::kFusedQkv,
                      ProjectionLayout::kSeparate}) {
    for (auto v : {AttentionVariant::kSoftmax, AttentionVariant::kLinearReluDwc}) {
      const auto c = make_config(v, 16, 4, layout);
      const auto s = make_params<float>(c, 1);
      std::int64_t n = 0;
      for (const auto& [p, t] : s) n += t.numel();
      EXPECT_EQ(n, attention_parameter_count(c));
    }
  }
}

TEST(Attention, SplitMergeRoundTrip) {
  Rng rng(2);
  const TensorD x = rng.normal_tensor<double>({2, 5, 12});
  EXPECT_TRUE(bitwise_equal(merge_heads(split_heads(x, 3)), x));
}

TEST(Attention, LayoutsAgreeWithSameProjections) {
  // Copy fused_kv weights into the separate layout; outputs must match.
  const auto fused = make_config(AttentionVariant::kLinearReluDwc, 8, 2);
  auto separate = fused;
  separate.layout = ProjectionLayout::kSeparate;
  const auto fs = make_params<double>(fused, 3);
  ParamStoreD ss;
  ss.add("q.weight", fs.get("q.weight"));
  ss.add("q.bias", fs.get("q.bias"));
  ss.add("k.weight", slice(fs.get("kv.weight"), 1, 0, 8));
  ss.add("k.bias", slice(fs.get("kv.bias"), 0, 0, 8));
  ss.add("v.weight", slice(fs.get("kv.weight"), 1, 8, 16));
  ss.add("v.bias", slice(fs.get("kv.bias"), 0, 8, 16));
  for (const char* p : {"proj.weight", "proj.bias", "dwc.weight", "dwc.bias"}) ss.add(p, fs.get(p));
  Rng rng(4);
  const TensorD x = rng.normal_tensor<double>({2, 4, 8});
  const TensorD a = attention_forward(x, AttentionParams<double>::from_store(fs, "", fused), fused, {2, 2});
  const TensorD b =
      attention_forward(x, AttentionParams<double>::from_store(ss, "", separate), separate, {2, 2});
  EXPECT_LT(max_abs_diff(a, b), 1e-14);
}

TEST(Attention, ZeroDwcKernelAddsNothingButBias) {
  const auto c = make_config(AttentionVariant::kLinearReluDwc, 8, 2);
  auto s = make_params<double>(c, 5);
  auto plain_cfg = c;
  plain_cfg.variant = AttentionVariant::kLinearRelu;
  for (auto& v : s.get("dwc.weight").mutable_data()) v = 0.0;
  for (auto& v : s.get("dwc.bias").mutable_data()) v = 0.0;
  Rng rng(6);
  const TensorD x = rng.normal_tensor<double>({1, 4, 8});
  const TensorD with = attention_forward(x, AttentionParams<double>::from_store(s, "", c), c, {2, 2});
  const TensorD without =
      attention_forward(x, AttentionParams<double>::from_store(s, "", plain_cfg), plain_cfg, {2, 2});
  EXPECT_LT(max_abs_diff(with, without), 1e-14);
}

TEST(Attention, LinearPathsAgreeAcrossShapes) {
  for (std::int64_t n : {1, 4, 9, 16}) {
    for (std::int64_t h : {1, 2, 4}) {
      for (auto v : {AttentionVariant::kLinearRelu, AttentionVariant::kLinearReluDwc,
                     AttentionVariant::kFocusedRelu, AttentionVariant::kFocusedGelu}) {
        const auto c = make_config(v, 8, h);
        const auto s = make_params<double>(c, static_cast<std::uint64_t>(n * 10 + h));
        const auto p = AttentionParams<double>::from_store(s, "", c);
        Rng rng(n + h);
        const TensorD x = rng.normal_tensor<double>({2, n, 8});
        const TokenGrid g = TokenGrid::square(n);
        const TensorD scaled = linear_attention(x, p, c, g, LinearPath::kScaled);
        const TensorD quad = linear_attention(x, p, c, g, LinearPath::kQuadratic);
        const TensorD fact = linear_attention(x, p, c, g, LinearPath::kFactorized);
        EXPECT_LT(rel_diff(quad, scaled), 1e-10) << to_string(v) << " N=" << n << " h=" << h;
        EXPECT_LT(rel_diff(fact, scaled), 1e-10) << to_string(v) << " N=" << n << " h=" << h;
      }
    }
  }
}

TEST(Attention, CoreRowsAreConvexCombinations) {
  // With a positive kernel and no offset every output is a convex combination
  // of values; the offset only shrinks the weights slightly.
  Rng rng(7);
  const TensorD q = rng.uniform_tensor<double>({1, 2, 6, 4}, 0.0, 1.0);
  const TensorD k = rng.uniform_tensor<double>({1, 2, 6, 4}, 0.0, 1.0);
  const TensorD v = TensorD::full({1, 2, 6, 4}, 3.0);
  const TensorD out = linear_attention_core(q, k, v, 0.0, LinearPath::kScaled);
  for (double x : out.data()) EXPECT_NEAR(x, 3.0, 1e-9);
  const TensorD shrunk = linear_attention_core(q, k, v, 1e-6, LinearPath::kScaled);
  for (double x : shrunk.data()) {
    EXPECT_LT(x, 3.0);
    EXPECT_GT(x, 3.0 - 1e-4);
  }
}

TEST(Attention, DenominatorFloorIsReported) {
  const TensorD zeros = TensorD::zeros({1, 1, 3, 2});
  Rng rng(8);
  const TensorD v = rng.normal_tensor<double>({1, 1, 3, 2});
  AttentionDiagnostics diag;
  const TensorD out = linear_attention_core(zeros, zeros, v, 0.0, LinearPath::kScaled, &diag);
  EXPECT_EQ(diag.clamped_denominators, 3);
  EXPECT_TRUE(all_finite(out));
}

TEST(Attention, MapRowsAreNormalised) {
  for (auto v : {AttentionVariant::kSoftmax, AttentionVariant::kLinearReluDwc}) {
    const auto c = make_config(v, 8, 2, ProjectionLayout::kFusedQkv);
    const auto s = make_params<double>(c, 9);
    Rng rng(10);
    const TensorD x = rng.normal_tensor<double>({2, 4, 8});
    const TensorD maps = attention_maps(x, AttentionParams<double>::from_store(s, "", c), c);
    EXPECT_EQ(maps.shape(), (Shape{2, 2, 4, 4}));
    const TensorD rows = sum(maps, -1);
    // The kernel offset in the linear denominator only ever removes mass.
    for (double r : rows.data()) {
      if (v == AttentionVariant::kSoftmax) {
        EXPECT_NEAR(r, 1.0, 1e-12);
      } else {
        EXPECT_LE(r, 1.0);
        EXPECT_GT(r, 0.0);
      }
    }
  }
}

TEST(Attention, FeatureMapIsPositive) {
  Rng rng(11);
  const TensorD x = rng.normal_tensor<double>({2, 5, 8});
  for (auto v : {AttentionVariant::kLinearRelu, AttentionVariant::kFocusedRelu}) {
    const TensorD phi = feature_map(x, make_config(v, 8, 2));
    for (double p : phi.data()) EXPECT_GT(p, 0.0) << to_string(v);
  }
  // GELU dips below zero, so its map is only bounded, not positive.
  const TensorD phi = feature_map(x, make_config(AttentionVariant::kFocusedGelu, 8, 2));
  EXPECT_LT(*std::min_element(phi.data().begin(), phi.data().end()), 0.0);
  EXPECT_TRUE(all_finite(phi));
}

TEST(HeadSimilarity, IdenticalAndOrthogonalHeads) {
  TensorD same({2, 2, 2}, {1, 0, 0, 1, 1, 0, 0, 1});
  EXPECT_NEAR(head_similarity(same), 1.0, 1e-12);
  TensorD ortho({2, 2, 2}, {1, 0, 0, 0, 0, 1, 0, 0});
  EXPECT_NEAR(head_similarity(ortho), 0.0, 1e-12);
  EXPECT_THROW(head_similarity(TensorD::ones({1, 2, 2})), ContractError);
}

TEST(Attention, OutputShapeAndFinite32Bit) {
  const auto c = make_config(AttentionVariant::kLinearReluDwc, 16, 2);
  const auto s = make_params<float>(c, 12);
  Rng rng(13);
  const TensorF x = rng.normal_tensor<float>({3, 16, 16});
  const TensorF y = attention_forward(x, AttentionParams<float>::from_store(s, "", c), c, {4, 4});
  EXPECT_EQ(y.shape(), x.shape());
  EXPECT_TRUE(all_finite(y));
}
