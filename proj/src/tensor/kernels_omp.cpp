#include <atomic>

#include "kernel_rows.hpp"

#ifdef LIT_HAVE_OPENMP
#include <omp.h>
#endif

namespace lit::kernels {

namespace {

// Below this many MACs the fork/join cost dominates.
constexpr std::int64_t kParallelGrain = 1 << 15;

std::atomic<Backend> g_backend{
#ifdef LIT_HAVE_OPENMP
    Backend::kParallel
#else
    Backend::kSerial
#endif
};

}  // namespace

void set_backend(Backend backend) { g_backend.store(backend); }
Backend backend() { return g_backend.load(); }

bool openmp_available() {
#ifdef LIT_HAVE_OPENMP
  return true;
#else
  return false;
#endif
}

int max_threads() {
#ifdef LIT_HAVE_OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void set_num_threads(int threads) {
#ifdef LIT_HAVE_OPENMP
  omp_set_num_threads(threads < 1 ? 1 : threads);
#else
  (void)threads;
#endif
}

namespace parallel {

template <class T>
void gemm(const GemmArgs& args, const T* a, const T* b, T* c) {
  const std::int64_t blocks = (args.m + detail::kRowBlock - 1) / detail::kRowBlock;
#pragma omp parallel for schedule(static) if (args.m * args.k * args.n >= kParallelGrain)
  for (std::int64_t blk = 0; blk < blocks; ++blk) {
    const std::int64_t i0 = blk * detail::kRowBlock;
    const std::int64_t i1 = std::min(i0 + detail::kRowBlock, args.m);
    detail::gemm_rows(args, a, b, c, i0, i1);
  }
}

template <class T>
void dwconv_forward(const DwConvArgs& args, const T* x, const T* w, const T* bias, T* y) {
  const std::int64_t plane = args.height * args.width;
  const std::int64_t kk = args.kernel * args.kernel;
  const std::int64_t planes = args.batch * args.channels;
#pragma omp parallel for schedule(static) if (planes * plane * kk >= kParallelGrain)
  for (std::int64_t p = 0; p < planes; ++p) {
    const std::int64_t c = p % args.channels;
    detail::dwconv_plane(args, x + p * plane, w + c * kk, bias ? bias[c] : T(0), y + p * plane);
  }
}

template <class T>
void dwconv_backward_input(const DwConvArgs& args, const T* gy, const T* w, T* gx) {
  const std::int64_t plane = args.height * args.width;
  const std::int64_t kk = args.kernel * args.kernel;
  const std::int64_t planes = args.batch * args.channels;
#pragma omp parallel for schedule(static) if (planes * plane * kk >= kParallelGrain)
  for (std::int64_t p = 0; p < planes; ++p) {
    const std::int64_t c = p % args.channels;
    detail::dwconv_plane_backward_input(args, gy + p * plane, w + c * kk, gx + p * plane);
  }
}

template <class T>
void dwconv_backward_weight(const DwConvArgs& args, const T* gy, const T* x, T* gw, T* gb) {
  const std::int64_t work = args.batch * args.channels * args.height * args.width *
                            args.kernel * args.kernel;
#pragma omp parallel for schedule(static) if (work >= kParallelGrain)
  for (std::int64_t c = 0; c < args.channels; ++c) {
    detail::dwconv_channel_backward_weight(args, c, gy, x, gw, gb);
  }
}

#define LIT_INSTANTIATE(T)                                                                 \
  template void gemm<T>(const GemmArgs&, const T*, const T*, T*);                          \
  template void dwconv_forward<T>(const DwConvArgs&, const T*, const T*, const T*, T*);    \
  template void dwconv_backward_input<T>(const DwConvArgs&, const T*, const T*, T*);       \
  template void dwconv_backward_weight<T>(const DwConvArgs&, const T*, const T*, T*, T*);

LIT_INSTANTIATE(float)
LIT_INSTANTIATE(double)
#undef LIT_INSTANTIATE

}  // namespace parallel

template <class T>
void gemm(const GemmArgs& args, const T* a, const T* b, T* c) {
  if (backend() == Backend::kParallel) {
    parallel::gemm(args, a, b, c);
  } else {
    serial::gemm(args, a, b, c);
  }
}

template <class T>
void dwconv_forward(const DwConvArgs& args, const T* x, const T* w, const T* bias, T* y) {
  if (backend() == Backend::kParallel) {
    parallel::dwconv_forward(args, x, w, bias, y);
  } else {
    serial::dwconv_forward(args, x, w, bias, y);
  }
}

template <class T>
void dwconv_backward_input(const DwConvArgs& args, const T* gy, const T* w, T* gx) {
  if (backend() == Backend::kParallel) {
    parallel::dwconv_backward_input(args, gy, w, gx);
  } else {
    serial::dwconv_backward_input(args, gy, w, gx);
  }
}

template <class T>
void dwconv_backward_weight(const DwConvArgs& args, const T* gy, const T* x, T* gw, T* gb) {
  if (backend() == Backend::kParallel) {
    parallel::dwconv_backward_weight(args, gy, x, gw, gb);
  } else {
    serial::dwconv_backward_weight(args, gy, x, gw, gb);
  }
}

template <class T>
void transpose2d(const T* in, T* out, std::int64_t rows, std::int64_t cols) {
  constexpr std::int64_t kTile = 32;
  for (std::int64_t ib = 0; ib < rows; ib += kTile) {
    for (std::int64_t jb = 0; jb < cols; jb += kTile) {
      const std::int64_t ie = std::min(ib + kTile, rows);
      const std::int64_t je = std::min(jb + kTile, cols);
      for (std::int64_t i = ib; i < ie; ++i) {
        for (std::int64_t j = jb; j < je; ++j) out[j * rows + i] = in[i * cols + j];
      }
    }
  }
}

#define LIT_INSTANTIATE(T)                                                                 \
  template void gemm<T>(const GemmArgs&, const T*, const T*, T*);                          \
  template void dwconv_forward<T>(const DwConvArgs&, const T*, const T*, const T*, T*);    \
  template void dwconv_backward_input<T>(const DwConvArgs&, const T*, const T*, T*);       \
  template void dwconv_backward_weight<T>(const DwConvArgs&, const T*, const T*, T*, T*);  \
  template void transpose2d<T>(const T*, T*, std::int64_t, std::int64_t);

LIT_INSTANTIATE(float)
LIT_INSTANTIATE(double)
#undef LIT_INSTANTIATE

}  // namespace lit::kernels
