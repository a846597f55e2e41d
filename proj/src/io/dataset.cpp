#include "lit/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "lit/error.hpp"
#include "lit/random.hpp"

namespace lit {

void DatasetSpec::validate() const {
  if (num_classes < 1 || image_size < 1 || channels < 1 || samples < 1) {
    throw ConfigError("dataset sizes must be positive");
  }
  if (!(radius > 0.0)) throw ConfigError("blob radius must be positive");
  if (amplitude < 0.0 || amplitude > 1.0) throw ConfigError("amplitude must lie in [0, 1]");
  if (center_jitter < 0.0) throw ConfigError("center jitter must be non-negative");
  if (amplitude_jitter < 0.0 || amplitude_jitter > 1.0) {
    throw ConfigError("amplitude jitter must lie in [0, 1]");
  }
}

Sample generate_sample(const DatasetSpec& spec, std::uint64_t seed, std::int64_t index) {
  spec.validate();
  Rng rng(seed, {static_cast<std::uint64_t>(index)});
  Sample s;
  s.label = index % spec.num_classes;

  // Ring through the quadrant centres; class c sits at angle pi/4 + 2 pi c / K.
  const double side = static_cast<double>(spec.image_size);
  const double mid = (side - 1.0) / 2.0;
  const double ring = side / 4.0 * std::numbers::sqrt2;
  const double angle = std::numbers::pi / 4.0 +
                       2.0 * std::numbers::pi * static_cast<double>(s.label) /
                           static_cast<double>(spec.num_classes);
  const double cy = mid - ring * std::sin(angle) + rng.uniform(-spec.center_jitter, spec.center_jitter);
  const double cx = mid + ring * std::cos(angle) + rng.uniform(-spec.center_jitter, spec.center_jitter);
  const double amp = spec.amplitude * rng.uniform(1.0 - spec.amplitude_jitter, 1.0);

  const std::int64_t plane = spec.image_size * spec.image_size;
  s.image.resize(static_cast<std::size_t>(spec.channels * plane));
  const double inv = 1.0 / (2.0 * spec.radius * spec.radius);
  for (std::int64_t r = 0; r < spec.image_size; ++r) {
    for (std::int64_t c = 0; c < spec.image_size; ++c) {
      const double dy = static_cast<double>(r) - cy;
      const double dx = static_cast<double>(c) - cx;
      const double blob = amp * std::exp(-(dx * dx + dy * dy) * inv);
      const auto value = static_cast<float>(std::clamp(2.0 * blob - 1.0, -1.0, 1.0));
      for (std::int64_t ch = 0; ch < spec.channels; ++ch) {
        s.image[ch * plane + r * spec.image_size + c] = value;
      }
    }
  }
  return s;
}

std::vector<Sample> generate_dataset(const DatasetSpec& spec, std::uint64_t seed) {
  std::vector<Sample> out;
  out.reserve(static_cast<std::size_t>(spec.samples));
  for (std::int64_t i = 0; i < spec.samples; ++i) out.push_back(generate_sample(spec, seed, i));
  return out;
}

template <class T>
Tensor<T> stack_images(const std::vector<Sample>& samples, const std::vector<std::int64_t>& ids,
                       const DatasetSpec& spec) {
  const std::int64_t per = spec.channels * spec.image_size * spec.image_size;
  std::vector<T> values;
  values.reserve(ids.size() * static_cast<std::size_t>(per));
  for (const auto id : ids) {
    if (id < 0 || id >= static_cast<std::int64_t>(samples.size())) {
      throw ContractError("sample index " + std::to_string(id) + " out of range");
    }
    const auto& img = samples[id].image;
    if (static_cast<std::int64_t>(img.size()) != per) {
      throw DimensionError("sample image size does not match the dataset spec");
    }
    for (float v : img) values.push_back(static_cast<T>(v));
  }
  return Tensor<T>({static_cast<std::int64_t>(ids.size()), spec.channels, spec.image_size,
                    spec.image_size},
                   std::move(values));
}

template TensorF stack_images<float>(const std::vector<Sample>&, const std::vector<std::int64_t>&,
                                     const DatasetSpec&);
template TensorD stack_images<double>(const std::vector<Sample>&, const std::vector<std::int64_t>&,
                                      const DatasetSpec&);

}  // namespace lit
