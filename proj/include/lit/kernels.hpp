#pragma once

// Compute kernels behind the tensor ops. Every kernel exists twice: a plain
// serial reference and an OpenMP version that partitions the same per-row (or
// per-plane) work across threads. Each output element is produced by exactly
// one thread with the serial summation order, so both versions agree bitwise.

#include <cstdint>

namespace lit::kernels {

struct GemmArgs {
  std::int64_t m = 0;
  std::int64_t k = 0;
  std::int64_t n = 0;
  // A is [m,k] row-major, or [k,m] when trans_a is set.
  bool trans_a = false;
  // C += A*B instead of C = A*B.
  bool accumulate = false;
};

struct DwConvArgs {
  std::int64_t batch = 0;
  std::int64_t channels = 0;
  std::int64_t height = 0;
  std::int64_t width = 0;
  std::int64_t kernel = 0;  // odd; zero padding of kernel/2 keeps H,W
};

namespace serial {

template <class T>
void gemm(const GemmArgs& args, const T* a, const T* b, T* c);
template <class T>
void dwconv_forward(const DwConvArgs& args, const T* x, const T* w, const T* bias, T* y);
// gx += conv_transpose(gy)
template <class T>
void dwconv_backward_input(const DwConvArgs& args, const T* gy, const T* w, T* gx);
// gw += sum over batch of correlation(gy, x); gb += sum of gy
template <class T>
void dwconv_backward_weight(const DwConvArgs& args, const T* gy, const T* x, T* gw, T* gb);

}  // namespace serial

namespace parallel {

template <class T>
void gemm(const GemmArgs& args, const T* a, const T* b, T* c);
template <class T>
void dwconv_forward(const DwConvArgs& args, const T* x, const T* w, const T* bias, T* y);
template <class T>
void dwconv_backward_input(const DwConvArgs& args, const T* gy, const T* w, T* gx);
template <class T>
void dwconv_backward_weight(const DwConvArgs& args, const T* gy, const T* x, T* gw, T* gb);

}  // namespace parallel

// Selects between the two implementations for the dispatching entry points
// below. Defaults to parallel when the library was built with OpenMP.
enum class Backend { kSerial, kParallel };
void set_backend(Backend backend);
Backend backend();
bool openmp_available();
int max_threads();
void set_num_threads(int threads);

template <class T>
void gemm(const GemmArgs& args, const T* a, const T* b, T* c);
template <class T>
void dwconv_forward(const DwConvArgs& args, const T* x, const T* w, const T* bias, T* y);
template <class T>
void dwconv_backward_input(const DwConvArgs& args, const T* gy, const T* w, T* gx);
template <class T>
void dwconv_backward_weight(const DwConvArgs& args, const T* gy, const T* x, T* gw, T* gb);

// out[j*rows + i] = in[i*cols + j]
template <class T>
void transpose2d(const T* in, T* out, std::int64_t rows, std::int64_t cols);

}  // namespace lit::kernels
