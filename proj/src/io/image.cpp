#include "lit/image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "lit/error.hpp"

namespace lit {

std::uint8_t to_byte(double value) {
  const double scaled = std::round((value + 1.0) * 127.5);
  return static_cast<std::uint8_t>(std::clamp(scaled, 0.0, 255.0));
}

template <class T>
std::vector<std::uint8_t> encode_image_grid(const Tensor<T>& images) {
  if (images.rank() != 4) {
    throw DimensionError("image grid expects [n,C,H,W], got " + to_string(images.shape()));
  }
  const std::int64_t n = images.dim(0), c = images.dim(1), h = images.dim(2), w = images.dim(3);
  if (c != 1 && c != 3) throw ConfigError("image grids support 1 or 3 channels");
  const auto cols = static_cast<std::int64_t>(std::ceil(std::sqrt(static_cast<double>(n))));
  const std::int64_t rows = (n + cols - 1) / cols;
  const std::int64_t width = cols * w, height = rows * h;

  const std::string header = std::string(c == 1 ? "P5" : "P6") + "\n" + std::to_string(width) +
                             " " + std::to_string(height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  const std::size_t base = out.size();
  out.resize(base + static_cast<std::size_t>(width * height * c), 0);
  const auto data = images.data();
  for (std::int64_t i = 0; i < n; ++i) {
    const std::int64_t r0 = (i / cols) * h, c0 = (i % cols) * w;
    for (std::int64_t y = 0; y < h; ++y) {
      for (std::int64_t x = 0; x < w; ++x) {
        for (std::int64_t ch = 0; ch < c; ++ch) {
          const double v = data[((i * c + ch) * h + y) * w + x];
          out[base + static_cast<std::size_t>(((r0 + y) * width + c0 + x) * c + ch)] = to_byte(v);
        }
      }
    }
  }
  return out;
}

template <class T>
void write_image_grid(const std::string& path, const Tensor<T>& images) {
  const auto bytes = encode_image_grid(images);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write failed for " + path);
}

template std::vector<std::uint8_t> encode_image_grid<float>(const TensorF&);
template std::vector<std::uint8_t> encode_image_grid<double>(const TensorD&);
template void write_image_grid<float>(const std::string&, const TensorF&);
template void write_image_grid<double>(const std::string&, const TensorD&);

}  // namespace lit
