#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>

#include "lit/checkpoint.hpp"
#include "lit/config_json.hpp"
#include "lit/dataset.hpp"
#include "lit/image.hpp"
#include "lit/model.hpp"
#include "lit/ops.hpp"
#include "lit/random.hpp"
#include "lit/training_log.hpp"

using namespace lit;
namespace fs = std::filesystem;

namespace {

class TempDir {
 public:
  TempDir() {
    path_ = fs::temp_directory_path() /
            ("lit_io_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) + "_" +
             ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  fs::path path_;
};

std::vector<char> read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const std::string& path, const std::vector<char>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

Checkpoint sample_checkpoint() {
  Checkpoint ck;
  ck.config = ModelConfig::preset("lit-micro");
  ck.params = init_model<float>(ck.config, 3);
  Rng rng(4);
  for (auto& [p, t] : ck.params) {
    for (auto& v : t.mutable_data()) v = static_cast<float>(rng.normal());
  }
  ck.ema = ck.params;
  for (auto& [p, t] : *ck.ema) {
    for (auto& v : t.mutable_data()) v *= 0.5f;
  }
  ck.ema_decay = 0.995;
  ck.optimizer = AdamState<float>::zeros_like(ck.params);
  for (auto& [p, t] : ck.optimizer->v) {
    for (auto& v : t.mutable_data()) v = static_cast<float>(rng.uniform(0, 1));
  }
  ck.optimizer->step = 17;
  ck.step = 17;
  return ck;
}

CheckpointErrorKind load_error(const std::string& path) {
  try {
    load_checkpoint(path);
  } catch (const CheckpointError& e) {
    return e.kind();
  }
  ADD_FAILURE() << "load succeeded unexpectedly";
  return CheckpointErrorKind::kIo;
}

}  // namespace

TEST(Checkpoint, RoundTripIsBitwise) {
  TempDir dir;
  const Checkpoint ck = sample_checkpoint();
  save_checkpoint(dir.file("a.ckpt"), ck);
  const Checkpoint back = load_checkpoint(dir.file("a.ckpt"));
  EXPECT_EQ(to_json(back.config), to_json(ck.config));
  EXPECT_TRUE(bitwise_equal(back.params, ck.params));
  ASSERT_TRUE(back.ema && back.optimizer);
  EXPECT_TRUE(bitwise_equal(*back.ema, *ck.ema));
  EXPECT_TRUE(bitwise_equal(back.optimizer->m, ck.optimizer->m));
  EXPECT_TRUE(bitwise_equal(back.optimizer->v, ck.optimizer->v));
  EXPECT_EQ(back.optimizer->step, 17);
  EXPECT_EQ(back.step, 17);
  EXPECT_DOUBLE_EQ(back.ema_decay, 0.995);
  // Saving again reproduces the same bytes.
  save_checkpoint(dir.file("b.ckpt"), back);
  EXPECT_EQ(read_bytes(dir.file("a.ckpt")), read_bytes(dir.file("b.ckpt")));
}

TEST(Checkpoint, HeaderOnlyRead) {
  TempDir dir;
  const Checkpoint ck = sample_checkpoint();
  save_checkpoint(dir.file("a.ckpt"), ck);
  // Truncate the payload: the header is still readable.
  auto bytes = read_bytes(dir.file("a.ckpt"));
  bytes.resize(bytes.size() - 1000);
  write_bytes(dir.file("a.ckpt"), bytes);
  const CheckpointHeader h = read_checkpoint_header(dir.file("a.ckpt"));
  EXPECT_EQ(h.format_version, kCheckpointVersion);
  EXPECT_EQ(h.config.name, "lit-micro");
  EXPECT_TRUE(h.optimizer_state_present);
  EXPECT_EQ(h.index.size(), 4 * ck.params.size());
  std::uint64_t cursor = 0;
  for (const auto& e : h.index) {
    EXPECT_EQ(e.offset, cursor);
    cursor += e.length;
  }
  EXPECT_EQ(cursor, h.payload_bytes);
  EXPECT_EQ(load_error(dir.file("a.ckpt")), CheckpointErrorKind::kTruncated);
}

TEST(Checkpoint, FaultInjection) {
  TempDir dir;
  save_checkpoint(dir.file("good.ckpt"), sample_checkpoint());
  const auto good = read_bytes(dir.file("good.ckpt"));

  auto bad_magic = good;
  bad_magic[0] = 'X';
  write_bytes(dir.file("magic.ckpt"), bad_magic);
  EXPECT_EQ(load_error(dir.file("magic.ckpt")), CheckpointErrorKind::kBadMagic);

  auto flipped = good;
  flipped[flipped.size() - 3] ^= 0x40;
  write_bytes(dir.file("flip.ckpt"), flipped);
  EXPECT_EQ(load_error(dir.file("flip.ckpt")), CheckpointErrorKind::kChecksum);
  EXPECT_NO_THROW(load_checkpoint(dir.file("flip.ckpt"), false));

  auto trailing = good;
  trailing.push_back(0);
  write_bytes(dir.file("trail.ckpt"), trailing);
  EXPECT_EQ(load_error(dir.file("trail.ckpt")), CheckpointErrorKind::kIndexMismatch);

  auto header = good;
  header[20] = '#';  // inside the JSON text
  write_bytes(dir.file("header.ckpt"), header);
  EXPECT_EQ(load_error(dir.file("header.ckpt")), CheckpointErrorKind::kBadHeader);

  write_bytes(dir.file("short.ckpt"), {good.begin(), good.begin() + 10});
  EXPECT_EQ(load_error(dir.file("short.ckpt")), CheckpointErrorKind::kTruncated);

  EXPECT_EQ(load_error(dir.file("missing.ckpt")), CheckpointErrorKind::kIo);
}

TEST(Checkpoint, StructureMustMatchConfig) {
  TempDir dir;
  Checkpoint ck = sample_checkpoint();
  ck.config.layers = 3;
  EXPECT_THROW(save_checkpoint(dir.file("x.ckpt"), ck), Error);
}

TEST(Checkpoint, EmaWeightsRequired) {
  Checkpoint ck = sample_checkpoint();
  ck.ema.reset();
  EXPECT_NO_THROW(checkpoint_weights(ck, false));
  try {
    checkpoint_weights(ck, true);
    FAIL();
  } catch (const CheckpointError& e) {
    EXPECT_EQ(e.kind(), CheckpointErrorKind::kIndexMismatch);
  }
}

TEST(Checkpoint, Fnv1a) {
  const unsigned char a[] = {'a'};
  EXPECT_EQ(fnv1a64(a, 1), 0xaf63dc4c8601ec8cULL);
  EXPECT_EQ(fnv1a64(nullptr, 0), 0xcbf29ce484222325ULL);
}

TEST(Dataset, DeterministicAndBounded) {
  DatasetSpec spec;
  spec.samples = 64;
  const auto a = generate_dataset(spec, 5), b = generate_dataset(spec, 5), c = generate_dataset(spec, 6);
  bool differs = false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].image, b[i].image);
    EXPECT_EQ(a[i].label, static_cast<std::int64_t>(i) % spec.num_classes);
    differs = differs || a[i].image != c[i].image;
    for (float v : a[i].image) {
      EXPECT_GE(v, -1.0f);
      EXPECT_LE(v, 1.0f);
    }
  }
  EXPECT_TRUE(differs);
  const Sample single = generate_sample(spec, 5, 17);
  EXPECT_EQ(single.image, a[17].image);
}

TEST(Dataset, ZeroAmplitudeIsBlank) {
  DatasetSpec spec;
  spec.samples = 8;
  spec.amplitude = 0.0;
  for (const auto& s : generate_dataset(spec, 1)) {
    for (float v : s.image) EXPECT_EQ(v, -1.0f);
  }
}

TEST(Dataset, ClassMeansAreSeparable) {
  DatasetSpec spec;
  spec.samples = 2048;
  const auto data = generate_dataset(spec, 0);
  const auto dim = static_cast<std::size_t>(spec.channels * spec.image_size * spec.image_size);
  std::vector<std::vector<double>> means(spec.num_classes, std::vector<double>(dim, 0.0));
  std::vector<int> counts(spec.num_classes, 0);
  for (const auto& s : data) {
    for (std::size_t j = 0; j < dim; ++j) means[s.label][j] += s.image[j];
    ++counts[s.label];
  }
  for (std::int64_t c = 0; c < spec.num_classes; ++c) {
    for (auto& v : means[c]) v /= counts[c];
  }
  // Within-class std: root mean squared distance to the class mean.
  double within = 0.0;
  for (const auto& s : data) {
    for (std::size_t j = 0; j < dim; ++j) within += std::pow(s.image[j] - means[s.label][j], 2);
  }
  within = std::sqrt(within / static_cast<double>(data.size()));
  double closest = 1e300;
  for (std::int64_t a = 0; a < spec.num_classes; ++a) {
    for (std::int64_t b = a + 1; b < spec.num_classes; ++b) {
      double d = 0.0;
      for (std::size_t j = 0; j < dim; ++j) d += std::pow(means[a][j] - means[b][j], 2);
      closest = std::min(closest, std::sqrt(d));
    }
  }
  EXPECT_GT(closest, 3.0 * within) << closest << " vs " << within;
}

TEST(Dataset, StackImages) {
  DatasetSpec spec;
  spec.samples = 4;
  const auto data = generate_dataset(spec, 2);
  const TensorF x = stack_images<float>(data, {3, 1}, spec);
  EXPECT_EQ(x.shape(), (Shape{2, 1, 8, 8}));
  EXPECT_EQ(x[0], data[3].image[0]);
  EXPECT_EQ(x[64], data[1].image[0]);
}

TEST(TrainingLog, AppendAndParse) {
  TempDir dir;
  const std::string path = dir.file("log.csv");
  for (int i = 1; i <= 100; ++i) {
    TrainingRecord r;
    r.step = i;
    r.l_simple = 1.0 / 3.0 + i;
    r.l_noise = 1e-7 * i;
    r.l_var = std::sqrt(2.0);
    r.total = r.l_simple + r.l_noise;
    r.lr = 1e-3;
    r.wall_time = 0.25 * i;
    training_log_append(path, r);
  }
  std::ifstream in(path);
  std::string line;
  int lines = 0;
  std::getline(in, line);
  EXPECT_EQ(line, training_log_header());
  ++lines;
  while (std::getline(in, line)) ++lines;
  EXPECT_EQ(lines, 101);
  const auto records = read_training_log(path);
  ASSERT_EQ(records.size(), 100u);
  EXPECT_EQ(records[41].step, 42);
  EXPECT_NEAR(records[41].l_simple, 1.0 / 3.0 + 42, 1e-7 * 42);
  EXPECT_NEAR(records[41].l_var, std::sqrt(2.0), 1e-8);
}

TEST(ConfigJson, RoundTrips) {
  const ModelConfig c = ModelConfig::preset("lit-micro");
  EXPECT_EQ(to_json(model_config_from_json(to_json(c))), to_json(c));
  const Json preset = Json::parse(R"({"preset": "dit-micro", "layers": 2})");
  const ModelConfig p = model_config_from_json(preset);
  EXPECT_EQ(p.layers, 2);
  EXPECT_EQ(p.variant, AttentionVariant::kSoftmax);
  EXPECT_THROW(model_config_from_json(Json::parse(R"({"layerz": 2})")), ConfigError);

  InheritSpec spec;
  spec.attention_subset = parse_attention_subset("KV");
  spec.load_ffn = false;
  const InheritSpec back = inherit_spec_from_json(to_json(spec));
  EXPECT_EQ(back.attention_subset, spec.attention_subset);
  EXPECT_FALSE(back.load_ffn);
  EXPECT_EQ(inherit_spec_from_json(Json::parse(R"({"attention_subset": ["Q", "O"]})")).attention_subset,
            parse_attention_subset("QO"));

  const DistillConfig d = distill_config_from_json(Json::parse(R"({"lambda1": 0.1})"));
  EXPECT_DOUBLE_EQ(d.lambda1, 0.1);
  EXPECT_DOUBLE_EQ(d.lambda2, 0.05);
  DatasetSpec ds;
  ds.samples = 12;
  EXPECT_EQ(dataset_spec_from_json(to_json(ds)).samples, 12);
}

TEST(Image, EncodesGrid) {
  TensorF imgs = TensorF::full({3, 1, 2, 2}, -1.0f);
  imgs.mutable_data()[4] = 1.0f;  // first pixel of the second image
  const auto bytes = encode_image_grid(imgs);
  const std::string header = "P5\n4 4\n255\n";
  ASSERT_EQ(bytes.size(), header.size() + 16);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + header.size()), header);
  EXPECT_EQ(bytes[header.size() + 2], 255);
  EXPECT_EQ(bytes[header.size() + 0], 0);
  EXPECT_EQ(to_byte(0.0), 128);
}
