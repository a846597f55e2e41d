#include "lit/model_config.hpp"

#include "lit/error.hpp"

namespace lit {

AttentionConfig ModelConfig::attention() const {
  AttentionConfig a;
  a.hidden_dim = hidden;
  a.num_heads = heads;
  a.variant = variant;
  a.dwc_kernel = dwc_kernel;
  a.kernel_eps = kernel_eps;
  a.focused_power = focused_power;
  a.layout = layout;
  return a;
}

void ModelConfig::validate() const {
  if (layers < 1) throw ConfigError("layers must be positive");
  if (hidden < 4 || hidden % 4 != 0) {
    throw ConfigError("hidden size must be a positive multiple of 4 (2D positional embedding)");
  }
  if (patch < 1 || in_channels < 1 || image_size < 1) {
    throw ConfigError("patch, channels and image size must be positive");
  }
  if (image_size % patch != 0) {
    throw ConfigError("image size " + std::to_string(image_size) + " is not divisible by patch " +
                      std::to_string(patch));
  }
  if (num_classes < 1) throw ConfigError("num_classes must be positive");
  if (mlp_ratio < 1) throw ConfigError("mlp_ratio must be positive");
  if (frequency_dim < 2 || frequency_dim % 2 != 0) {
    throw ConfigError("frequency_dim must be even and >= 2");
  }
  if (num_timesteps < 1) throw ConfigError("num_timesteps must be positive");
  attention().validate();
}

namespace {

ModelConfig make(const std::string& name, std::int64_t layers, std::int64_t hidden,
                 std::int64_t heads, bool linear) {
  ModelConfig c;
  c.name = name;
  c.layers = layers;
  c.hidden = hidden;
  c.heads = heads;
  if (linear) {
    c.variant = AttentionVariant::kLinearReluDwc;
    c.layout = ProjectionLayout::kFusedKv;
  }
  return c;
}

ModelConfig latent(ModelConfig c) {
  c.patch = 2;
  c.in_channels = 4;
  c.image_size = 32;
  c.num_classes = 1000;
  return c;
}

}  // namespace

ModelConfig ModelConfig::preset(const std::string& name) {
  if (name == "dit-micro") return make(name, 4, 64, 4, false);
  if (name == "lit-micro") return make(name, 4, 64, 2, true);
  if (name == "dit-s") return latent(make(name, 12, 384, 6, false));
  if (name == "dit-b") return latent(make(name, 12, 768, 12, false));
  if (name == "dit-l") return latent(make(name, 24, 1024, 16, false));
  if (name == "dit-xl") return latent(make(name, 28, 1152, 16, false));
  if (name == "lit-s") return latent(make(name, 12, 384, 2, true));
  if (name == "lit-b") return latent(make(name, 12, 768, 3, true));
  if (name == "lit-l") return latent(make(name, 24, 1024, 4, true));
  if (name == "lit-xl") return latent(make(name, 28, 1152, 4, true));
  throw ConfigError("unknown model preset: " + name);
}

std::vector<std::string> ModelConfig::preset_names() {
  return {"dit-micro", "lit-micro", "dit-s", "dit-b", "dit-l",
          "dit-xl",    "lit-s",     "lit-b", "lit-l", "lit-xl"};
}

bool same_geometry(const ModelConfig& a, const ModelConfig& b) {
  return a.layers == b.layers && a.hidden == b.hidden && a.patch == b.patch &&
         a.in_channels == b.in_channels && a.image_size == b.image_size &&
         a.num_classes == b.num_classes && a.predicts_variance == b.predicts_variance &&
         a.mlp_ratio == b.mlp_ratio && a.frequency_dim == b.frequency_dim;
}

std::int64_t parameter_count_formula(const ModelConfig& c) {
  const std::int64_t d = c.hidden;
  const std::int64_t out = c.patch * c.patch * c.out_channels();
  const std::int64_t x_embed = c.patch_dim() * d + d;
  const std::int64_t t_embed = c.frequency_dim * d + d + d * d + d;
  const std::int64_t y_embed = (c.num_classes + 1) * d;
  const std::int64_t adaln = d * 6 * d + 6 * d;
  const std::int64_t mlp = 2 * c.mlp_ratio * d * d + c.mlp_ratio * d + d;
  const std::int64_t block = adaln + attention_parameter_count(c.attention()) + mlp;
  const std::int64_t final_layer = d * 2 * d + 2 * d + d * out + out;
  return x_embed + t_embed + y_embed + c.layers * block + final_layer;
}

}  // namespace lit
