#pragma once

#include <cstdint>
#include <vector>

#include "lit/tensor.hpp"

namespace lit {

// Class-conditional Gaussian blobs. Class c is centred on a ring around the
// image centre (the four quadrants for four classes); each sample jitters the
// centre and amplitude. Pixels are 2 * blob - 1, so values lie in [-1, 1].
struct DatasetSpec {
  std::int64_t num_classes = 4;
  std::int64_t image_size = 8;
  std::int64_t channels = 1;
  std::int64_t samples = 4096;
  double radius = 1.2;            // blob standard deviation in pixels
  double amplitude = 1.0;         // peak height in [0, 1]
  double center_jitter = 0.5;     // uniform +- pixels
  double amplitude_jitter = 0.2;  // amplitude scaled by U(1 - j, 1)

  void validate() const;
};

struct Sample {
  std::vector<float> image;  // [C, S, S]
  std::int64_t label = 0;
};

// Deterministic in (spec, seed, index); label = index mod num_classes.
Sample generate_sample(const DatasetSpec& spec, std::uint64_t seed, std::int64_t index);
std::vector<Sample> generate_dataset(const DatasetSpec& spec, std::uint64_t seed);

// Stacks samples[ids[i]] into [len(ids), C, S, S].
template <class T>
Tensor<T> stack_images(const std::vector<Sample>& samples, const std::vector<std::int64_t>& ids,
                       const DatasetSpec& spec);

}  // namespace lit
