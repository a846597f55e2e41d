#include "kernel_rows.hpp"

namespace lit::kernels::serial {

template <class T>
void gemm(const GemmArgs& args, const T* a, const T* b, T* c) {
  detail::gemm_rows(args, a, b, c, 0, args.m);
}

template <class T>
void dwconv_forward(const DwConvArgs& args, const T* x, const T* w, const T* bias, T* y) {
  const std::int64_t plane = args.height * args.width;
  const std::int64_t kk = args.kernel * args.kernel;
  for (std::int64_t p = 0; p < args.batch * args.channels; ++p) {
    const std::int64_t c = p % args.channels;
    detail::dwconv_plane(args, x + p * plane, w + c * kk, bias ? bias[c] : T(0), y + p * plane);
  }
}

template <class T>
void dwconv_backward_input(const DwConvArgs& args, const T* gy, const T* w, T* gx) {
  const std::int64_t plane = args.height * args.width;
  const std::int64_t kk = args.kernel * args.kernel;
  for (std::int64_t p = 0; p < args.batch * args.channels; ++p) {
    const std::int64_t c = p % args.channels;
    detail::dwconv_plane_backward_input(args, gy + p * plane, w + c * kk, gx + p * plane);
  }
}

template <class T>
void dwconv_backward_weight(const DwConvArgs& args, const T* gy, const T* x, T* gw, T* gb) {
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

}  // namespace lit::kernels::serial
