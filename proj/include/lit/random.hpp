#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

#include "lit/tensor.hpp"

namespace lit {

// Seeded generator used everywhere randomness enters. Streams derived with
// `fork` are independent of the order in which other streams are consumed.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);
  Rng(std::uint64_t seed, std::initializer_list<std::uint64_t> stream);

  double normal();
  double uniform(double lo, double hi);
  // Normal(0, std) resampled until |z| <= 2 std.
  double truncated_normal(double std);
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi_inclusive);
  bool bernoulli(double p);

  Rng fork(std::uint64_t stream) const;

  template <class T>
  Tensor<T> normal_tensor(Shape shape, double std = 1.0);
  template <class T>
  Tensor<T> uniform_tensor(Shape shape, double lo, double hi);
  template <class T>
  Tensor<T> truncated_normal_tensor(Shape shape, double std);

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace lit
