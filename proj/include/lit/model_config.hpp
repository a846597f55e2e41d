#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lit/attention.hpp"

namespace lit {

struct ModelConfig {
  std::string name = "custom";
  std::int64_t layers = 4;
  std::int64_t hidden = 64;
  std::int64_t heads = 4;
  std::int64_t patch = 2;
  std::int64_t in_channels = 1;
  std::int64_t image_size = 8;
  std::int64_t num_classes = 4;
  AttentionVariant variant = AttentionVariant::kSoftmax;
  std::int64_t dwc_kernel = 5;
  bool predicts_variance = true;
  ProjectionLayout layout = ProjectionLayout::kFusedQkv;
  std::int64_t mlp_ratio = 4;
  std::int64_t frequency_dim = 256;
  std::int64_t num_timesteps = 1000;
  double kernel_eps = 1e-6;
  int focused_power = 3;

  std::int64_t grid_side() const { return image_size / patch; }
  std::int64_t tokens() const { return grid_side() * grid_side(); }
  std::int64_t patch_dim() const { return patch * patch * in_channels; }
  std::int64_t out_channels() const { return predicts_variance ? 2 * in_channels : in_channels; }
  TokenGrid grid() const { return {grid_side(), grid_side()}; }
  AttentionConfig attention() const;

  // Throws ConfigError on any inconsistent field.
  void validate() const;

  // dit-micro, lit-micro, dit-{s,b,l,xl}, lit-{s,b,l,xl}.
  static ModelConfig preset(const std::string& name);
  static std::vector<std::string> preset_names();
};

bool same_geometry(const ModelConfig& a, const ModelConfig& b);

// Closed-form trainable parameter count for a config.
std::int64_t parameter_count_formula(const ModelConfig& config);

}  // namespace lit
