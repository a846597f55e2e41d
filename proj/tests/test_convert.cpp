#include <gtest/gtest.h>

#include <algorithm>
#include <set>

#include "lit/convert.hpp"
#include "lit/error.hpp"
#include "lit/ops.hpp"
#include "lit/random.hpp"

using namespace lit;

namespace {

ParamStoreF trained_teacher(const ModelConfig& c) {
  ParamStoreF p = init_model<float>(c, 1);
  Rng rng(2);
  for (auto& [path, t] : p) {
    for (auto& v : t.mutable_data()) v += static_cast<float>(rng.uniform(-0.2, 0.2));
  }
  return p;
}

// Columns [begin, end) of a [in, out] weight or entries of a bias.
TensorF columns(const TensorF& t, std::int64_t begin, std::int64_t end) {
  return slice(t, t.rank() - 1, begin, end);
}

// "blocks.0.attn.kv.weight[k]" -> "blocks.0.attn.kv.weight"
std::string base_path(const std::string& unit) {
  const auto bracket = unit.find('[');
  return bracket == std::string::npos ? unit : unit.substr(0, bracket);
}

}  // namespace

TEST(Convert, SubsetParsing) {
  EXPECT_TRUE(parse_attention_subset("none").empty());
  EXPECT_EQ(parse_attention_subset("QKV").size(), 3u);
  EXPECT_EQ(format_attention_subset(parse_attention_subset("VQ")), "QV");
  EXPECT_THROW(parse_attention_subset("QX"), ConfigError);
  EXPECT_EQ(parse_weight_source("raw"), WeightSource::kRaw);
  EXPECT_THROW(parse_weight_source("best"), ConfigError);
}

TEST(Convert, DefaultSpecPartition) {
  const ModelConfig tc = ModelConfig::preset("dit-micro");
  const ModelConfig sc = ModelConfig::preset("lit-micro");
  const ParamStoreF teacher = trained_teacher(tc);
  ConversionReport report;
  const ParamStoreF student = inherit(teacher, tc, sc, InheritSpec{}, 7, &report);
  const ParamStoreF fresh = init_model<float>(sc, 7);

  std::set<std::string> copied, fresh_set, units;
  for (const auto& u : report.copied) {
    EXPECT_EQ(u.find('['), std::string::npos) << u;
    copied.insert(u);
    units.insert(u);
  }
  for (const auto& u : report.fresh) {
    EXPECT_FALSE(copied.count(base_path(u))) << u;
    fresh_set.insert(base_path(u));
    EXPECT_TRUE(units.insert(u).second) << u;
  }
  EXPECT_EQ(copied.size() + fresh_set.size(), student.size());
  for (const auto& [path, t] : student) {
    if (copied.count(path)) {
      EXPECT_TRUE(bitwise_equal(t, teacher.get(path))) << path;
    } else {
      ASSERT_TRUE(fresh_set.count(path)) << path;
      EXPECT_TRUE(is_attention_path(path)) << path;
      EXPECT_TRUE(bitwise_equal(t, fresh.get(path))) << path;
    }
  }
}

TEST(Convert, FusedSegmentsAreCopiedByColumns) {
  const ModelConfig tc = ModelConfig::preset("dit-micro");  // fused qkv
  const ModelConfig sc = ModelConfig::preset("lit-micro");  // q + fused kv
  const ParamStoreF teacher = trained_teacher(tc);
  InheritSpec spec;
  spec.attention_subset = parse_attention_subset("V");
  ConversionReport report;
  const ParamStoreF student = inherit(teacher, tc, sc, spec, 3, &report);
  const ParamStoreF fresh = init_model<float>(sc, 3);
  const std::int64_t d = tc.hidden;
  const TensorF& kv = student.get("blocks.0.attn.kv.weight");
  const TensorF& qkv = teacher.get("blocks.0.attn.qkv.weight");
  EXPECT_TRUE(bitwise_equal(columns(kv, d, 2 * d), columns(qkv, 2 * d, 3 * d)));
  EXPECT_TRUE(bitwise_equal(columns(kv, 0, d), columns(fresh.get("blocks.0.attn.kv.weight"), 0, d)));
  EXPECT_TRUE(std::count(report.copied.begin(), report.copied.end(), "blocks.0.attn.kv.weight[v]"));
  EXPECT_TRUE(std::count(report.fresh.begin(), report.fresh.end(), "blocks.0.attn.kv.weight[k]"));
  EXPECT_TRUE(std::count(report.fresh.begin(), report.fresh.end(), "blocks.0.attn.dwc.weight"));
}

TEST(Convert, AllCopySameArchitectureReproducesTeacher) {
  const ModelConfig tc = ModelConfig::preset("dit-micro");
  const ParamStoreF teacher = trained_teacher(tc);
  InheritSpec spec = InheritSpec::everything();
  spec.attention_subset = parse_attention_subset("QKVO");
  const ParamStoreF student = inherit(teacher, tc, tc, spec, 5);
  EXPECT_TRUE(bitwise_equal(student, teacher));
  Rng rng(6);
  const TensorF x = rng.normal_tensor<float>({2, 1, 8, 8});
  EXPECT_TRUE(bitwise_equal(model_forward(x, {3, 4}, {0, 1}, teacher, tc).eps,
                            model_forward(x, {3, 4}, {0, 1}, student, tc).eps));
}

TEST(Convert, NothingSpecEqualsFreshInit) {
  const ModelConfig tc = ModelConfig::preset("dit-micro");
  const ModelConfig sc = ModelConfig::preset("lit-micro");
  const ParamStoreF student = inherit(trained_teacher(tc), tc, sc, InheritSpec::nothing(), 9);
  EXPECT_TRUE(bitwise_equal(student, init_model<float>(sc, 9)));
}

TEST(Convert, RepeatedConversionIsIdentical) {
  const ModelConfig tc = ModelConfig::preset("dit-micro");
  const ModelConfig sc = ModelConfig::preset("lit-micro");
  const ParamStoreF teacher = trained_teacher(tc);
  EXPECT_TRUE(bitwise_equal(inherit(teacher, tc, sc, InheritSpec{}, 4),
                            inherit(teacher, tc, sc, InheritSpec{}, 4)));
}

TEST(Convert, GeometryMismatchRejected) {
  const ModelConfig tc = ModelConfig::preset("dit-micro");
  ModelConfig sc = ModelConfig::preset("lit-micro");
  sc.layers = 3;
  EXPECT_THROW(inherit(trained_teacher(tc), tc, sc, InheritSpec{}, 1), StructuralError);
}

TEST(Convert, InheritanceRows) {
  const auto rows = inheritance_rows();
  ASSERT_EQ(rows.size(), 6u);
  EXPECT_EQ(rows.front().label, "none");
  EXPECT_EQ(rows[1].attention_subset.size(), 3u);
}

TEST(Ema, UpdateRule) {
  ParamStoreD live;
  live.add("w", TensorD({2}, {1.0, 2.0}));
  auto ema = EmaState<double>::init(live, 0.9);
  live.get("w").mutable_data()[0] = 11.0;
  ema_update(live, ema);
  EXPECT_NEAR(ema.shadow.get("w")[0], 0.9 * 1.0 + 0.1 * 11.0, 1e-15);
  EXPECT_EQ(ema.shadow.get("w")[1], 2.0);
  ParamStoreD other;
  other.add("u", TensorD({2}, {0.0, 0.0}));
  EXPECT_THROW(ema_update(other, ema), StructuralError);
  EXPECT_THROW(EmaState<double>::init(live, 1.5), ConfigError);
}
