#pragma once

// Work units shared by the serial and OpenMP kernels. Keeping one definition
// of the inner loops is what makes the two backends agree bitwise.

#include <algorithm>
#include <cstdint>

#include "lit/kernels.hpp"

namespace lit::kernels::detail {

inline constexpr std::int64_t kRowBlock = 32;
inline constexpr std::int64_t kDepthBlock = 256;

// Rows [i0, i1) of C. For each C[i,j] the products are summed over p in
// ascending order regardless of blocking.
template <class T>
void gemm_rows(const GemmArgs& g, const T* a, const T* b, T* c, std::int64_t i0,
               std::int64_t i1) {
  const std::int64_t m = g.m, k = g.k, n = g.n;
  if (!g.accumulate) std::fill(c + i0 * n, c + i1 * n, T(0));
  for (std::int64_t ib = i0; ib < i1; ib += kRowBlock) {
    const std::int64_t ie = std::min(ib + kRowBlock, i1);
    for (std::int64_t pb = 0; pb < k; pb += kDepthBlock) {
      const std::int64_t pe = std::min(pb + kDepthBlock, k);
      for (std::int64_t i = ib; i < ie; ++i) {
        T* __restrict crow = c + i * n;
        for (std::int64_t p = pb; p < pe; ++p) {
          const T av = g.trans_a ? a[p * m + i] : a[i * k + p];
          const T* __restrict brow = b + p * n;
          for (std::int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
      }
    }
  }
}

// One (batch, channel) plane of the depthwise cross-correlation.
template <class T>
void dwconv_plane(const DwConvArgs& d, const T* x, const T* w, T bias, T* y) {
  const std::int64_t H = d.height, W = d.width, K = d.kernel, r = K / 2;
  for (std::int64_t i = 0; i < H; ++i) {
    for (std::int64_t j = 0; j < W; ++j) {
      T acc = bias;
      for (std::int64_t di = 0; di < K; ++di) {
        const std::int64_t si = i + di - r;
        if (si < 0 || si >= H) continue;
        for (std::int64_t dj = 0; dj < K; ++dj) {
          const std::int64_t sj = j + dj - r;
          if (sj < 0 || sj >= W) continue;
          acc += w[di * K + dj] * x[si * W + sj];
        }
      }
      y[i * W + j] = acc;
    }
  }
}

// gx += adjoint of dwconv_plane applied to gy (gather form).
template <class T>
void dwconv_plane_backward_input(const DwConvArgs& d, const T* gy, const T* w, T* gx) {
  const std::int64_t H = d.height, W = d.width, K = d.kernel, r = K / 2;
  for (std::int64_t i = 0; i < H; ++i) {
    for (std::int64_t j = 0; j < W; ++j) {
      T acc = T(0);
      for (std::int64_t di = 0; di < K; ++di) {
        const std::int64_t oi = i - di + r;
        if (oi < 0 || oi >= H) continue;
        for (std::int64_t dj = 0; dj < K; ++dj) {
          const std::int64_t oj = j - dj + r;
          if (oj < 0 || oj >= W) continue;
          acc += w[di * K + dj] * gy[oi * W + oj];
        }
      }
      gx[i * W + j] += acc;
    }
  }
}

// Weight and bias gradients for channel c, summed over the batch in order.
template <class T>
void dwconv_channel_backward_weight(const DwConvArgs& d, std::int64_t c, const T* gy,
                                    const T* x, T* gw, T* gb) {
  const std::int64_t H = d.height, W = d.width, K = d.kernel, r = K / 2;
  const std::int64_t plane = H * W;
  T* gwc = gw + c * K * K;
  for (std::int64_t b = 0; b < d.batch; ++b) {
    const T* gyp = gy + (b * d.channels + c) * plane;
    const T* xp = x + (b * d.channels + c) * plane;
    for (std::int64_t di = 0; di < K; ++di) {
      for (std::int64_t dj = 0; dj < K; ++dj) {
        T acc = T(0);
        for (std::int64_t i = 0; i < H; ++i) {
          const std::int64_t si = i + di - r;
          if (si < 0 || si >= H) continue;
          for (std::int64_t j = 0; j < W; ++j) {
            const std::int64_t sj = j + dj - r;
            if (sj < 0 || sj >= W) continue;
            acc += gyp[i * W + j] * xp[si * W + sj];
          }
        }
        gwc[di * K + dj] += acc;
      }
    }
    if (gb) {
      T acc = T(0);
      for (std::int64_t q = 0; q < plane; ++q) acc += gyp[q];
      gb[c] += acc;
    }
  }
}

}  // namespace lit::kernels::detail
