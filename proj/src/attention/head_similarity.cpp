#include <cmath>

#include "lit/attention.hpp"
#include "lit/error.hpp"

namespace lit {

template <class T>
double head_similarity(const Tensor<T>& maps) {
  if (maps.rank() != 3) {
    throw DimensionError("head_similarity expects [h, N, N], got " + to_string(maps.shape()));
  }
  const std::int64_t heads = maps.dim(0);
  if (heads < 2) throw ContractError("head_similarity needs at least two heads");
  const std::int64_t len = maps.dim(1) * maps.dim(2);
  const auto data = maps.data();

  std::vector<double> norms(static_cast<std::size_t>(heads), 0.0);
  for (std::int64_t i = 0; i < heads; ++i) {
    double s = 0.0;
    for (std::int64_t j = 0; j < len; ++j) {
      const double v = data[i * len + j];
      s += v * v;
    }
    norms[i] = std::sqrt(s);
  }

  double total = 0.0;
  std::int64_t pairs = 0;
  for (std::int64_t a = 0; a < heads; ++a) {
    for (std::int64_t b = a + 1; b < heads; ++b) {
      double dot = 0.0;
      for (std::int64_t j = 0; j < len; ++j) {
        dot += static_cast<double>(data[a * len + j]) * static_cast<double>(data[b * len + j]);
      }
      // A zero map has no direction; count the pair as orthogonal.
      const double denom = norms[a] * norms[b];
      total += denom > 0.0 ? dot / denom : 0.0;
      ++pairs;
    }
  }
  return total / static_cast<double>(pairs);
}

template double head_similarity<float>(const TensorF&);
template double head_similarity<double>(const TensorD&);

}  // namespace lit
