#include "lit/random.hpp"

#include <cmath>
#include <vector>

namespace lit {

namespace {

std::mt19937_64 seeded(std::uint64_t seed, std::initializer_list<std::uint64_t> stream) {
  std::vector<std::uint32_t> words;
  words.push_back(static_cast<std::uint32_t>(seed));
  words.push_back(static_cast<std::uint32_t>(seed >> 32));
  for (auto s : stream) {
    words.push_back(static_cast<std::uint32_t>(s));
    words.push_back(static_cast<std::uint32_t>(s >> 32));
  }
  std::seed_seq seq(words.begin(), words.end());
  return std::mt19937_64(seq);
}

}  // namespace

Rng::Rng(std::uint64_t seed) : seed_(seed), engine_(seeded(seed, {})) {}

Rng::Rng(std::uint64_t seed, std::initializer_list<std::uint64_t> stream)
    : seed_(seed), engine_(seeded(seed, stream)) {}

double Rng::normal() { return normal_(engine_); }

double Rng::uniform(double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(engine_);
}

double Rng::truncated_normal(double std) {
  while (true) {
    const double z = normal();
    if (std::abs(z) <= 2.0) return z * std;
  }
}

std::int64_t Rng::uniform_int(std::int64_t lo, std::int64_t hi_inclusive) {
  return std::uniform_int_distribution<std::int64_t>(lo, hi_inclusive)(engine_);
}

bool Rng::bernoulli(double p) { return uniform(0.0, 1.0) < p; }

Rng Rng::fork(std::uint64_t stream) const {
  // Derived from the construction seed, not the current engine state.
  return Rng(seed_, {0x9e3779b97f4a7c15ULL, stream});
}

template <class T>
Tensor<T> Rng::normal_tensor(Shape shape, double std) {
  std::vector<T> v(static_cast<std::size_t>(numel(shape)));
  for (auto& x : v) x = static_cast<T>(normal() * std);
  return Tensor<T>(std::move(shape), std::move(v));
}

template <class T>
Tensor<T> Rng::uniform_tensor(Shape shape, double lo, double hi) {
  std::vector<T> v(static_cast<std::size_t>(numel(shape)));
  for (auto& x : v) x = static_cast<T>(uniform(lo, hi));
  return Tensor<T>(std::move(shape), std::move(v));
}

template <class T>
Tensor<T> Rng::truncated_normal_tensor(Shape shape, double std) {
  std::vector<T> v(static_cast<std::size_t>(numel(shape)));
  for (auto& x : v) x = static_cast<T>(truncated_normal(std));
  return Tensor<T>(std::move(shape), std::move(v));
}

template Tensor<float> Rng::normal_tensor<float>(Shape, double);
template Tensor<double> Rng::normal_tensor<double>(Shape, double);
template Tensor<float> Rng::uniform_tensor<float>(Shape, double, double);
template Tensor<double> Rng::uniform_tensor<double>(Shape, double, double);
template Tensor<float> Rng::truncated_normal_tensor<float>(Shape, double);
template Tensor<double> Rng::truncated_normal_tensor<double>(Shape, double);

}  // namespace lit
