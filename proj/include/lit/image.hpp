#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lit/tensor.hpp"

namespace lit {

// [-1, 1] -> [0, 255], rounded and clipped.
std::uint8_t to_byte(double value);

// Tiles [n,C,S,S] images into a near-square grid and writes a binary PGM
// (C = 1) or PPM (C = 3) with maximal value 255.
template <class T>
void write_image_grid(const std::string& path, const Tensor<T>& images);

// Encoded file bytes, for hashing and tests.
template <class T>
std::vector<std::uint8_t> encode_image_grid(const Tensor<T>& images);

}  // namespace lit
