#include "lit/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numbers>
#include <string>

#include "lit/error.hpp"
#include "lit/kernels.hpp"
#include "lit/mac_counter.hpp"

namespace lit {

namespace {

template <class T>
using NodePtr = std::shared_ptr<detail::Node<T>>;
template <class T>
using BackwardFn = std::function<void(detail::Node<T>&)>;

template <class T>
Tensor<T> make_result(const char* op, Shape shape, std::vector<T> value,
                      std::vector<NodePtr<T>> inputs, BackwardFn<T> backward) {
  auto node = std::make_shared<detail::Node<T>>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  node->op = op;
  bool needs_grad = false;
  if (grad_enabled()) {
    for (const auto& in : inputs) needs_grad = needs_grad || in->requires_grad;
  }
  if (needs_grad) {
    node->requires_grad = true;
    node->inputs = std::move(inputs);
    node->backward = std::move(backward);
  }
  return Tensor<T>::from_node(std::move(node));
}

std::int64_t normalize_axis(std::int64_t axis, std::int64_t rank, const char* op) {
  const std::int64_t a = axis < 0 ? axis + rank : axis;
  if (a < 0 || a >= rank) {
    throw DimensionError(std::string(op) + ": axis " + std::to_string(axis) +
                         " out of range for rank " + std::to_string(rank));
  }
  return a;
}

std::vector<std::int64_t> contiguous_strides(const Shape& s) {
  std::vector<std::int64_t> st(s.size(), 1);
  for (std::int64_t d = static_cast<std::int64_t>(s.size()) - 2; d >= 0; --d) {
    st[d] = st[d + 1] * s[d + 1];
  }
  return st;
}

// Strides of `in` expressed over the dimensions of `out` (right-aligned);
// broadcast dimensions get stride 0.
std::vector<std::int64_t> aligned_strides(const Shape& in, const Shape& out) {
  const auto st = contiguous_strides(in);
  const std::size_t r = out.size(), ri = in.size();
  std::vector<std::int64_t> res(r, 0);
  for (std::size_t d = 0; d < r; ++d) {
    if (d + ri < r) continue;
    const std::size_t di = d + ri - r;
    res[d] = (in[di] == 1 && out[d] != 1) ? 0 : st[di];
  }
  return res;
}

Shape broadcast_shape(const Shape& a, const Shape& b, const char* op) {
  const std::size_t r = std::max(a.size(), b.size());
  Shape out(r, 1);
  for (std::size_t d = 0; d < r; ++d) {
    const std::int64_t da = d + a.size() >= r ? a[d + a.size() - r] : 1;
    const std::int64_t db = d + b.size() >= r ? b[d + b.size() - r] : 1;
    if (da != db && da != 1 && db != 1) {
      throw DimensionError(std::string(op) + ": shapes " + to_string(a) + " and " +
                           to_string(b) + " do not broadcast");
    }
    out[d] = da == 1 ? db : da;
  }
  return out;
}

// Calls f(out_index, a_offset, b_offset) for every element of `out` in
// row-major order.
template <class F>
void broadcast_loop(const Shape& out, const std::vector<std::int64_t>& sa,
                    const std::vector<std::int64_t>& sb, F&& f) {
  const std::int64_t total = numel(out);
  if (total == 0) return;
  const std::int64_t r = static_cast<std::int64_t>(out.size());
  if (r == 0) {
    f(std::int64_t{0}, std::int64_t{0}, std::int64_t{0});
    return;
  }
  std::vector<std::int64_t> idx(static_cast<std::size_t>(r), 0);
  const std::int64_t inner = out[r - 1], isa = sa[r - 1], isb = sb[r - 1];
  std::int64_t ia = 0, ib = 0, io = 0;
  while (true) {
    for (std::int64_t j = 0; j < inner; ++j) f(io + j, ia + j * isa, ib + j * isb);
    io += inner;
    std::int64_t d = r - 2;
    for (; d >= 0; --d) {
      ++idx[d];
      ia += sa[d];
      ib += sb[d];
      if (idx[d] < out[d]) break;
      ia -= sa[d] * out[d];
      ib -= sb[d] * out[d];
      idx[d] = 0;
    }
    if (d < 0) break;
  }
}

struct AxisSplit {
  std::int64_t outer = 1, len = 1, inner = 1;
};

AxisSplit split_at(const Shape& s, std::int64_t axis) {
  AxisSplit sp;
  for (std::int64_t d = 0; d < axis; ++d) sp.outer *= s[d];
  sp.len = s[axis];
  for (std::size_t d = static_cast<std::size_t>(axis) + 1; d < s.size(); ++d) sp.inner *= s[d];
  return sp;
}

// Elementwise binary op with broadcasting. `df` returns (d/da, d/db) given
// (a, b, out) values.
template <class T, class F, class DF>
Tensor<T> binary(const char* op, const Tensor<T>& a, const Tensor<T>& b, F f, DF df) {
  const Shape out_shape = broadcast_shape(a.shape(), b.shape(), op);
  const auto sa = aligned_strides(a.shape(), out_shape);
  const auto sb = aligned_strides(b.shape(), out_shape);
  std::vector<T> out(static_cast<std::size_t>(numel(out_shape)));
  const T* pa = a.data().data();
  const T* pb = b.data().data();
  if (a.shape() == b.shape()) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(pa[i], pb[i]);
  } else {
    broadcast_loop(out_shape, sa, sb, [&](std::int64_t io, std::int64_t ia, std::int64_t ib) {
      out[io] = f(pa[ia], pb[ib]);
    });
  }
  return make_result<T>(
      op, out_shape, std::move(out), {a.node(), b.node()},
      [out_shape, sa, sb, df](detail::Node<T>& self) {
        auto& na = *self.inputs[0];
        auto& nb = *self.inputs[1];
        const T* g = self.grad.data();
        const T* va = na.value.data();
        const T* vb = nb.value.data();
        const T* vo = self.value.data();
        T* ga = na.requires_grad ? na.grad_buffer().data() : nullptr;
        T* gb = nb.requires_grad ? nb.grad_buffer().data() : nullptr;
        broadcast_loop(out_shape, sa, sb, [&](std::int64_t io, std::int64_t ia, std::int64_t ib) {
          const auto [da, db] = df(va[ia], vb[ib], vo[io]);
          if (ga) ga[ia] += g[io] * da;
          if (gb) gb[ib] += g[io] * db;
        });
      });
}

// Elementwise unary op; df(x, y) is dy/dx.
template <class T, class F, class DF>
Tensor<T> unary(const char* op, const Tensor<T>& x, F f, DF df) {
  const auto in = x.data();
  std::vector<T> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = f(in[i]);
  return make_result<T>(op, x.shape(), std::move(out), {x.node()},
                        [df](detail::Node<T>& self) {
                          auto& nx = *self.inputs[0];
                          auto gx = nx.grad_buffer();
                          for (std::size_t i = 0; i < gx.size(); ++i) {
                            gx[i] += self.grad[i] * df(nx.value[i], self.value[i]);
                          }
                        });
}

}  // namespace

// ---- elementwise ----------------------------------------------------------

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return binary<T>(
      "add", a, b, [](T x, T y) { return x + y; },
      [](T, T, T) { return std::pair<T, T>{T(1), T(1)}; });
}

template <class T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return binary<T>(
      "sub", a, b, [](T x, T y) { return x - y; },
      [](T, T, T) { return std::pair<T, T>{T(1), T(-1)}; });
}

template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  return binary<T>(
      "mul", a, b, [](T x, T y) { return x * y; },
      [](T x, T y, T) { return std::pair<T, T>{y, x}; });
}

template <class T>
Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b) {
  return binary<T>(
      "div", a, b, [](T x, T y) { return x / y; },
      [](T x, T y, T) { return std::pair<T, T>{T(1) / y, -x / (y * y)}; });
}

template <class T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
  return unary<T>(
      "scale", a, [factor](T x) { return x * factor; }, [factor](T, T) { return factor; });
}

template <class T>
Tensor<T> add_scalar(const Tensor<T>& a, T value) {
  return unary<T>(
      "add_scalar", a, [value](T x) { return x + value; }, [](T, T) { return T(1); });
}

template <class T>
Tensor<T> neg(const Tensor<T>& a) {
  return scale(a, T(-1));
}

template <class T>
Tensor<T> relu(const Tensor<T>& x) {
  return unary<T>(
      "relu", x, [](T v) { return v > T(0) ? v : T(0); },
      [](T v, T) { return v > T(0) ? T(1) : T(0); });
}

template <class T>
Tensor<T> gelu(const Tensor<T>& x) {
  constexpr T kC = T(0.7978845608028654);  // sqrt(2/pi)
  constexpr T kA = T(0.044715);
  return unary<T>(
      "gelu", x,
      [](T v) { return T(0.5) * v * (T(1) + std::tanh(kC * (v + kA * v * v * v))); },
      [](T v, T) {
        const T th = std::tanh(kC * (v + kA * v * v * v));
        return T(0.5) * (T(1) + th) +
               T(0.5) * v * (T(1) - th * th) * kC * (T(1) + T(3) * kA * v * v);
      });
}

template <class T>
Tensor<T> silu(const Tensor<T>& x) {
  return unary<T>(
      "silu", x, [](T v) { return v / (T(1) + std::exp(-v)); },
      [](T v, T) {
        const T s = T(1) / (T(1) + std::exp(-v));
        return s + v * s * (T(1) - s);
      });
}

template <class T>
Tensor<T> exp(const Tensor<T>& x) {
  return unary<T>(
      "exp", x, [](T v) { return std::exp(v); }, [](T, T y) { return y; });
}

template <class T>
Tensor<T> log(const Tensor<T>& x) {
  return unary<T>(
      "log", x, [](T v) { return std::log(v); }, [](T v, T) { return T(1) / v; });
}

template <class T>
Tensor<T> sqrt(const Tensor<T>& x) {
  return unary<T>(
      "sqrt", x, [](T v) { return std::sqrt(v); }, [](T, T y) { return T(0.5) / y; });
}

template <class T>
Tensor<T> square(const Tensor<T>& x) {
  return unary<T>(
      "square", x, [](T v) { return v * v; }, [](T v, T) { return T(2) * v; });
}

template <class T>
Tensor<T> pow_int(const Tensor<T>& x, int power) {
  if (power < 1) throw ContractError("pow_int: power must be >= 1");
  auto ipow = [](T v, int p) {
    T r = T(1);
    for (int i = 0; i < p; ++i) r *= v;
    return r;
  };
  return unary<T>(
      "pow_int", x, [=](T v) { return ipow(v, power); },
      [=](T v, T) { return T(power) * ipow(v, power - 1); });
}

template <class T>
Tensor<T> clamp(const Tensor<T>& x, T lo, T hi) {
  if (lo > hi) throw ContractError("clamp: lo > hi");
  return unary<T>(
      "clamp", x, [=](T v) { return std::min(std::max(v, lo), hi); },
      [=](T v, T) { return (v >= lo && v <= hi) ? T(1) : T(0); });
}

template <class T>
Tensor<T> guarded_reciprocal(const Tensor<T>& x, T floor, std::int64_t* clamped) {
  if (!(floor > T(0))) throw ContractError("guarded_reciprocal: floor must be positive");
  std::int64_t count = 0;
  for (T v : x.data()) {
    if (std::abs(v) < floor) ++count;
  }
  if (clamped) *clamped += count;
  return unary<T>(
      "guarded_reciprocal", x,
      [=](T v) {
        if (std::abs(v) < floor) return v < T(0) ? -T(1) / floor : T(1) / floor;
        return T(1) / v;
      },
      [=](T v, T y) { return std::abs(v) < floor ? T(0) : -y * y; });
}

// ---- reductions -----------------------------------------------------------

template <class T>
Tensor<T> sum(const Tensor<T>& x, std::int64_t axis, bool keepdim) {
  const std::int64_t ax = normalize_axis(axis, x.rank(), "sum");
  const AxisSplit sp = split_at(x.shape(), ax);
  Shape out_shape = x.shape();
  if (keepdim) {
    out_shape[ax] = 1;
  } else {
    out_shape.erase(out_shape.begin() + ax);
  }
  std::vector<T> out(static_cast<std::size_t>(sp.outer * sp.inner), T(0));
  const T* in = x.data().data();
  for (std::int64_t o = 0; o < sp.outer; ++o) {
    for (std::int64_t l = 0; l < sp.len; ++l) {
      const T* row = in + (o * sp.len + l) * sp.inner;
      T* dst = out.data() + o * sp.inner;
      for (std::int64_t i = 0; i < sp.inner; ++i) dst[i] += row[i];
    }
  }
  return make_result<T>("sum", std::move(out_shape), std::move(out), {x.node()},
                        [sp](detail::Node<T>& self) {
                          auto gx = self.inputs[0]->grad_buffer();
                          for (std::int64_t o = 0; o < sp.outer; ++o) {
                            for (std::int64_t l = 0; l < sp.len; ++l) {
                              T* dst = gx.data() + (o * sp.len + l) * sp.inner;
                              const T* g = self.grad.data() + o * sp.inner;
                              for (std::int64_t i = 0; i < sp.inner; ++i) dst[i] += g[i];
                            }
                          }
                        });
}

template <class T>
Tensor<T> mean(const Tensor<T>& x, std::int64_t axis, bool keepdim) {
  const std::int64_t ax = normalize_axis(axis, x.rank(), "mean");
  return scale(sum(x, ax, keepdim), T(1) / static_cast<T>(x.shape()[ax]));
}

template <class T>
Tensor<T> sum_all(const Tensor<T>& x) {
  T acc = T(0);
  for (T v : x.data()) acc += v;
  return make_result<T>("sum_all", Shape{}, std::vector<T>{acc}, {x.node()},
                        [](detail::Node<T>& self) {
                          auto gx = self.inputs[0]->grad_buffer();
                          const T g = self.grad[0];
                          for (auto& v : gx) v += g;
                        });
}

template <class T>
Tensor<T> mean_all(const Tensor<T>& x) {
  if (x.numel() == 0) throw ContractError("mean_all of an empty tensor");
  return scale(sum_all(x), T(1) / static_cast<T>(x.numel()));
}

// ---- normalisation --------------------------------------------------------

template <class T>
Tensor<T> softmax(const Tensor<T>& x, std::int64_t axis) {
  const std::int64_t ax = normalize_axis(axis, x.rank(), "softmax");
  const AxisSplit sp = split_at(x.shape(), ax);
  std::vector<T> out(x.data().size());
  const T* in = x.data().data();
  for (std::int64_t o = 0; o < sp.outer; ++o) {
    for (std::int64_t i = 0; i < sp.inner; ++i) {
      const std::int64_t base = o * sp.len * sp.inner + i;
      T mx = in[base];
      for (std::int64_t l = 1; l < sp.len; ++l) mx = std::max(mx, in[base + l * sp.inner]);
      T total = T(0);
      for (std::int64_t l = 0; l < sp.len; ++l) {
        const T e = std::exp(in[base + l * sp.inner] - mx);
        out[base + l * sp.inner] = e;
        total += e;
      }
      for (std::int64_t l = 0; l < sp.len; ++l) out[base + l * sp.inner] /= total;
    }
  }
  return make_result<T>("softmax", x.shape(), std::move(out), {x.node()},
                        [sp](detail::Node<T>& self) {
                          auto gx = self.inputs[0]->grad_buffer();
                          const T* y = self.value.data();
                          const T* g = self.grad.data();
                          for (std::int64_t o = 0; o < sp.outer; ++o) {
                            for (std::int64_t i = 0; i < sp.inner; ++i) {
                              const std::int64_t base = o * sp.len * sp.inner + i;
                              T dot = T(0);
                              for (std::int64_t l = 0; l < sp.len; ++l) {
                                dot += g[base + l * sp.inner] * y[base + l * sp.inner];
                              }
                              for (std::int64_t l = 0; l < sp.len; ++l) {
                                const std::int64_t q = base + l * sp.inner;
                                gx[q] += y[q] * (g[q] - dot);
                              }
                            }
                          }
                        });
}

template <class T>
Tensor<T> layernorm(const Tensor<T>& x, std::int64_t axis, T eps) {
  if (!(eps > T(0))) throw ContractError("layernorm: eps must be positive");
  const std::int64_t ax = normalize_axis(axis, x.rank(), "layernorm");
  const AxisSplit sp = split_at(x.shape(), ax);
  std::vector<T> out(x.data().size());
  std::vector<T> rstd(static_cast<std::size_t>(sp.outer * sp.inner));
  const T* in = x.data().data();
  const T n = static_cast<T>(sp.len);
  for (std::int64_t o = 0; o < sp.outer; ++o) {
    for (std::int64_t i = 0; i < sp.inner; ++i) {
      const std::int64_t base = o * sp.len * sp.inner + i;
      T mu = T(0);
      for (std::int64_t l = 0; l < sp.len; ++l) mu += in[base + l * sp.inner];
      mu /= n;
      T var = T(0);
      for (std::int64_t l = 0; l < sp.len; ++l) {
        const T d = in[base + l * sp.inner] - mu;
        var += d * d;
      }
      var /= n;
      const T r = T(1) / std::sqrt(var + eps);
      rstd[o * sp.inner + i] = r;
      for (std::int64_t l = 0; l < sp.len; ++l) {
        out[base + l * sp.inner] = (in[base + l * sp.inner] - mu) * r;
      }
    }
  }
  return make_result<T>(
      "layernorm", x.shape(), std::move(out), {x.node()},
      [sp, rstd = std::move(rstd)](detail::Node<T>& self) {
        auto gx = self.inputs[0]->grad_buffer();
        const T* y = self.value.data();
        const T* g = self.grad.data();
        const T n = static_cast<T>(sp.len);
        for (std::int64_t o = 0; o < sp.outer; ++o) {
          for (std::int64_t i = 0; i < sp.inner; ++i) {
            const std::int64_t base = o * sp.len * sp.inner + i;
            T gmean = T(0), gymean = T(0);
            for (std::int64_t l = 0; l < sp.len; ++l) {
              const std::int64_t q = base + l * sp.inner;
              gmean += g[q];
              gymean += g[q] * y[q];
            }
            gmean /= n;
            gymean /= n;
            const T r = rstd[o * sp.inner + i];
            for (std::int64_t l = 0; l < sp.len; ++l) {
              const std::int64_t q = base + l * sp.inner;
              gx[q] += r * (g[q] - gmean - y[q] * gymean);
            }
          }
        }
      });
}

// ---- layout ---------------------------------------------------------------

template <class T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  std::int64_t known = 1;
  int infer = -1;
  for (std::size_t d = 0; d < shape.size(); ++d) {
    if (shape[d] == -1) {
      if (infer >= 0) throw DimensionError("reshape: more than one -1 in " + to_string(shape));
      infer = static_cast<int>(d);
    } else {
      known *= shape[d];
    }
  }
  if (infer >= 0 && known > 0) shape[infer] = x.numel() / known;
  if (numel(shape) != x.numel()) {
    throw DimensionError("reshape: cannot view " + to_string(x.shape()) + " as " +
                         to_string(shape));
  }
  std::vector<T> out(x.data().begin(), x.data().end());
  return make_result<T>("reshape", std::move(shape), std::move(out), {x.node()},
                        [](detail::Node<T>& self) {
                          auto gx = self.inputs[0]->grad_buffer();
                          for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += self.grad[i];
                        });
}

template <class T>
Tensor<T> permute(const Tensor<T>& x, const std::vector<std::int64_t>& order) {
  const std::int64_t r = x.rank();
  if (static_cast<std::int64_t>(order.size()) != r) {
    throw DimensionError("permute: order length does not match shape " + to_string(x.shape()));
  }
  std::vector<bool> seen(static_cast<std::size_t>(r), false);
  Shape out_shape(static_cast<std::size_t>(r));
  const auto in_strides = contiguous_strides(x.shape());
  std::vector<std::int64_t> src(static_cast<std::size_t>(r));
  for (std::int64_t d = 0; d < r; ++d) {
    const std::int64_t ax = normalize_axis(order[d], r, "permute");
    if (seen[ax]) throw DimensionError("permute: repeated axis");
    seen[ax] = true;
    out_shape[d] = x.shape()[ax];
    src[d] = in_strides[ax];
  }
  const std::vector<std::int64_t> zero(static_cast<std::size_t>(r), 0);
  std::vector<T> out(x.data().size());
  const T* in = x.data().data();
  broadcast_loop(out_shape, src, zero,
                 [&](std::int64_t io, std::int64_t is, std::int64_t) { out[io] = in[is]; });
  return make_result<T>("permute", out_shape, std::move(out), {x.node()},
                        [out_shape, src, zero](detail::Node<T>& self) {
                          auto gx = self.inputs[0]->grad_buffer();
                          broadcast_loop(out_shape, src, zero,
                                         [&](std::int64_t io, std::int64_t is, std::int64_t) {
                                           gx[is] += self.grad[io];
                                         });
                        });
}

template <class T>
Tensor<T> transpose(const Tensor<T>& x, std::int64_t axis0, std::int64_t axis1) {
  const std::int64_t r = x.rank();
  std::vector<std::int64_t> order(static_cast<std::size_t>(r));
  for (std::int64_t d = 0; d < r; ++d) order[d] = d;
  std::swap(order[normalize_axis(axis0, r, "transpose")],
            order[normalize_axis(axis1, r, "transpose")]);
  return permute(x, order);
}

template <class T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, std::int64_t axis) {
  if (parts.empty()) throw ContractError("concat of zero tensors");
  const Shape& first = parts[0].shape();
  const std::int64_t ax = normalize_axis(axis, static_cast<std::int64_t>(first.size()), "concat");
  Shape out_shape = first;
  out_shape[ax] = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    bool ok = s.size() == first.size();
    for (std::size_t d = 0; ok && d < s.size(); ++d) {
      if (static_cast<std::int64_t>(d) != ax && s[d] != first[d]) ok = false;
    }
    if (!ok) {
      throw DimensionError("concat: shape " + to_string(s) + " incompatible with " +
                           to_string(first));
    }
    out_shape[ax] += s[ax];
  }
  const AxisSplit osp = split_at(out_shape, ax);
  std::vector<T> out(static_cast<std::size_t>(numel(out_shape)));
  std::vector<std::int64_t> lens, offsets;
  std::vector<NodePtr<T>> inputs;
  std::int64_t offset = 0;
  for (const auto& p : parts) {
    const std::int64_t len = p.shape()[ax];
    const T* in = p.data().data();
    for (std::int64_t o = 0; o < osp.outer; ++o) {
      std::copy(in + o * len * osp.inner, in + (o + 1) * len * osp.inner,
                out.data() + (o * osp.len + offset) * osp.inner);
    }
    lens.push_back(len);
    offsets.push_back(offset);
    inputs.push_back(p.node());
    offset += len;
  }
  return make_result<T>("concat", out_shape, std::move(out), std::move(inputs),
                        [osp, lens, offsets](detail::Node<T>& self) {
                          for (std::size_t k = 0; k < self.inputs.size(); ++k) {
                            auto& in = *self.inputs[k];
                            if (!in.requires_grad) continue;
                            auto gx = in.grad_buffer();
                            const std::int64_t len = lens[k];
                            for (std::int64_t o = 0; o < osp.outer; ++o) {
                              const T* g = self.grad.data() + (o * osp.len + offsets[k]) * osp.inner;
                              T* dst = gx.data() + o * len * osp.inner;
                              for (std::int64_t i = 0; i < len * osp.inner; ++i) dst[i] += g[i];
                            }
                          }
                        });
}

template <class T>
Tensor<T> slice(const Tensor<T>& x, std::int64_t axis, std::int64_t begin, std::int64_t end) {
  const std::int64_t ax = normalize_axis(axis, x.rank(), "slice");
  const AxisSplit sp = split_at(x.shape(), ax);
  if (begin < 0 || end > sp.len || begin > end) {
    throw DimensionError("slice: range [" + std::to_string(begin) + "," + std::to_string(end) +
                         ") out of bounds for shape " + to_string(x.shape()));
  }
  Shape out_shape = x.shape();
  const std::int64_t len = end - begin;
  out_shape[ax] = len;
  std::vector<T> out(static_cast<std::size_t>(numel(out_shape)));
  const T* in = x.data().data();
  for (std::int64_t o = 0; o < sp.outer; ++o) {
    std::copy(in + (o * sp.len + begin) * sp.inner, in + (o * sp.len + end) * sp.inner,
              out.data() + o * len * sp.inner);
  }
  return make_result<T>("slice", std::move(out_shape), std::move(out), {x.node()},
                        [sp, begin, len](detail::Node<T>& self) {
                          auto gx = self.inputs[0]->grad_buffer();
                          for (std::int64_t o = 0; o < sp.outer; ++o) {
                            const T* g = self.grad.data() + o * len * sp.inner;
                            T* dst = gx.data() + (o * sp.len + begin) * sp.inner;
                            for (std::int64_t i = 0; i < len * sp.inner; ++i) dst[i] += g[i];
                          }
                        });
}

// ---- linear algebra -------------------------------------------------------

template <class T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() < 2 || b.rank() < 2) {
    throw DimensionError("matmul needs rank >= 2 operands, got " + to_string(a.shape()) +
                         " and " + to_string(b.shape()));
  }
  const std::int64_t m = a.dim(-2), k = a.dim(-1), n = b.dim(-1);
  if (b.dim(-2) != k) {
    throw DimensionError("matmul: inner dimensions differ for " + to_string(a.shape()) +
                         " @ " + to_string(b.shape()));
  }
  const Shape batch_a(a.shape().begin(), a.shape().end() - 2);
  const Shape batch_b(b.shape().begin(), b.shape().end() - 2);
  Shape batch_out;
  try {
    batch_out = broadcast_shape(batch_a, batch_b, "matmul");
  } catch (const DimensionError&) {
    throw DimensionError("matmul: batch dimensions of " + to_string(a.shape()) + " and " +
                         to_string(b.shape()) + " do not broadcast");
  }

  // (out, a, b) matrix indices for every output batch entry.
  struct Triple {
    std::int64_t o, a, b;
  };
  std::vector<Triple> pairs;
  pairs.reserve(static_cast<std::size_t>(numel(batch_out)));
  broadcast_loop(batch_out, aligned_strides(batch_a, batch_out),
                 aligned_strides(batch_b, batch_out),
                 [&](std::int64_t io, std::int64_t ia, std::int64_t ib) {
                   pairs.push_back({io, ia, ib});
                 });
  // A single weight matrix shared by every batch entry: fold the batch into M.
  const bool fold = numel(batch_b) == 1 && batch_a == batch_out;

  Shape out_shape = batch_out;
  out_shape.push_back(m);
  out_shape.push_back(n);
  std::vector<T> out(static_cast<std::size_t>(numel(out_shape)));
  const T* pa = a.data().data();
  const T* pb = b.data().data();
  if (fold) {
    kernels::gemm<T>({numel(batch_out) * m, k, n, false, false}, pa, pb, out.data());
  } else {
    for (const auto& t : pairs) {
      kernels::gemm<T>({m, k, n, false, false}, pa + t.a * m * k, pb + t.b * k * n,
                       out.data() + t.o * m * n);
    }
  }
  detail::record_matmul_macs(static_cast<std::int64_t>(pairs.size()) * m * k * n);

  return make_result<T>(
      "matmul", std::move(out_shape), std::move(out), {a.node(), b.node()},
      [pairs = std::move(pairs), fold, m, k, n](detail::Node<T>& self) {
        auto& na = *self.inputs[0];
        auto& nb = *self.inputs[1];
        const T* g = self.grad.data();
        const std::int64_t rows = fold ? static_cast<std::int64_t>(pairs.size()) * m : m;
        if (na.requires_grad) {
          // dA = dC * B^T
          T* ga = na.grad_buffer().data();
          const std::int64_t nb_mats = static_cast<std::int64_t>(nb.value.size()) / (k * n);
          std::vector<T> bt(nb.value.size());
          for (std::int64_t q = 0; q < nb_mats; ++q) {
            kernels::transpose2d(nb.value.data() + q * k * n, bt.data() + q * k * n, k, n);
          }
          if (fold) {
            kernels::gemm<T>({rows, n, k, false, true}, g, bt.data(), ga);
          } else {
            for (const auto& t : pairs) {
              kernels::gemm<T>({m, n, k, false, true}, g + t.o * m * n, bt.data() + t.b * k * n,
                               ga + t.a * m * k);
            }
          }
        }
        if (nb.requires_grad) {
          // dB = A^T * dC
          T* gb = nb.grad_buffer().data();
          if (fold) {
            kernels::gemm<T>({k, rows, n, true, true}, na.value.data(), g, gb);
          } else {
            for (const auto& t : pairs) {
              kernels::gemm<T>({k, m, n, true, true}, na.value.data() + t.a * m * k,
                               g + t.o * m * n, gb + t.b * k * n);
            }
          }
        }
      });
}

template <class T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
  if (weight.rank() != 2) {
    throw DimensionError("linear: weight must be [in, out], got " + to_string(weight.shape()));
  }
  auto y = matmul(x, weight);
  return bias.defined() ? add(y, bias) : y;
}

template <class T>
Tensor<T> conv2d_depthwise(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
  if (x.rank() != 4) {
    throw DimensionError("conv2d_depthwise: input must be [b,c,h,w], got " + to_string(x.shape()));
  }
  if (weight.rank() != 4 || weight.dim(1) != 1 || weight.dim(2) != weight.dim(3)) {
    throw DimensionError("conv2d_depthwise: weight must be [c,1,k,k], got " +
                         to_string(weight.shape()));
  }
  const std::int64_t c = x.dim(1), kk = weight.dim(2);
  if (kk % 2 == 0) {
    throw ConfigError("conv2d_depthwise: kernel size must be odd, got " + std::to_string(kk));
  }
  if (weight.dim(0) != c) {
    throw DimensionError("conv2d_depthwise: weight " + to_string(weight.shape()) +
                         " does not match channels of " + to_string(x.shape()));
  }
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != c)) {
    throw DimensionError("conv2d_depthwise: bias must be [c], got " + to_string(bias.shape()));
  }
  const kernels::DwConvArgs args{x.dim(0), c, x.dim(2), x.dim(3), kk};
  std::vector<T> out(x.data().size());
  kernels::dwconv_forward<T>(args, x.data().data(), weight.data().data(),
                             bias.defined() ? bias.data().data() : nullptr, out.data());
  detail::record_conv_macs(args.batch * args.channels * args.height * args.width * kk * kk);

  std::vector<NodePtr<T>> inputs{x.node(), weight.node()};
  if (bias.defined()) inputs.push_back(bias.node());
  return make_result<T>("conv2d_depthwise", x.shape(), std::move(out), std::move(inputs),
                        [args](detail::Node<T>& self) {
                          auto& nx = *self.inputs[0];
                          auto& nw = *self.inputs[1];
                          detail::Node<T>* nb =
                              self.inputs.size() > 2 ? self.inputs[2].get() : nullptr;
                          const T* g = self.grad.data();
                          if (nx.requires_grad) {
                            kernels::dwconv_backward_input<T>(args, g, nw.value.data(),
                                                              nx.grad_buffer().data());
                          }
                          const bool want_w = nw.requires_grad;
                          const bool want_b = nb && nb->requires_grad;
                          if (want_w || want_b) {
                            std::vector<T> gw(nw.value.size(), T(0));
                            std::vector<T> gb(static_cast<std::size_t>(args.channels), T(0));
                            kernels::dwconv_backward_weight<T>(args, g, nx.value.data(), gw.data(),
                                                               gb.data());
                            if (want_w) {
                              auto dst = nw.grad_buffer();
                              for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += gw[i];
                            }
                            if (want_b) {
                              auto dst = nb->grad_buffer();
                              for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += gb[i];
                            }
                          }
                        });
}

template <class T>
Tensor<T> embedding(const Tensor<T>& table, const std::vector<std::int64_t>& indices) {
  if (table.rank() != 2) {
    throw DimensionError("embedding: table must be [V, D], got " + to_string(table.shape()));
  }
  const std::int64_t rows = table.dim(0), width = table.dim(1);
  for (auto i : indices) {
    if (i < 0 || i >= rows) {
      throw ContractError("embedding: index " + std::to_string(i) + " outside table of " +
                          std::to_string(rows) + " rows");
    }
  }
  std::vector<T> out(indices.size() * static_cast<std::size_t>(width));
  const T* src = table.data().data();
  for (std::size_t r = 0; r < indices.size(); ++r) {
    std::copy(src + indices[r] * width, src + (indices[r] + 1) * width, out.data() + r * width);
  }
  return make_result<T>("embedding", Shape{static_cast<std::int64_t>(indices.size()), width},
                        std::move(out), {table.node()},
                        [indices, width](detail::Node<T>& self) {
                          auto gt = self.inputs[0]->grad_buffer();
                          for (std::size_t r = 0; r < indices.size(); ++r) {
                            const T* g = self.grad.data() + r * width;
                            T* dst = gt.data() + indices[r] * width;
                            for (std::int64_t j = 0; j < width; ++j) dst[j] += g[j];
                          }
                        });
}

template <class T>
Tensor<T> focused_kernel(const Tensor<T>& x, int power) {
  if (power < 1) throw ContractError("focused_kernel: power must be >= 1");
  if (x.rank() < 1) throw DimensionError("focused_kernel needs rank >= 1");
  const std::int64_t width = x.dim(-1);
  const std::int64_t rows = width == 0 ? 0 : x.numel() / width;
  auto ipow = [](T v, int p) {
    T r = T(1);
    for (int i = 0; i < p; ++i) r *= v;
    return r;
  };
  const T* in = x.data().data();
  std::vector<T> out(x.data().size());
  // Per row: ||x||, ||x^p||.
  std::vector<T> norms(static_cast<std::size_t>(rows) * 2);
  for (std::int64_t r = 0; r < rows; ++r) {
    const T* row = in + r * width;
    T nx2 = T(0), np2 = T(0);
    for (std::int64_t j = 0; j < width; ++j) {
      const T xp = ipow(row[j], power);
      nx2 += row[j] * row[j];
      np2 += xp * xp;
    }
    const T nx = std::sqrt(nx2), np = std::sqrt(np2);
    norms[2 * r] = nx;
    norms[2 * r + 1] = np;
    T* dst = out.data() + r * width;
    if (np == T(0)) {
      std::copy(row, row + width, dst);
    } else {
      const T s = nx / np;
      for (std::int64_t j = 0; j < width; ++j) dst[j] = s * ipow(row[j], power);
    }
  }
  return make_result<T>(
      "focused_kernel", x.shape(), std::move(out), {x.node()},
      [rows, width, power, ipow, norms = std::move(norms)](detail::Node<T>& self) {
        auto gx = self.inputs[0]->grad_buffer();
        const T* xin = self.inputs[0]->value.data();
        const T p = static_cast<T>(power);
        for (std::int64_t r = 0; r < rows; ++r) {
          const T* row = xin + r * width;
          const T* g = self.grad.data() + r * width;
          T* dst = gx.data() + r * width;
          const T nx = norms[2 * r], np = norms[2 * r + 1];
          if (np == T(0)) {
            for (std::int64_t j = 0; j < width; ++j) dst[j] += g[j];
            continue;
          }
          T big_g = T(0);
          for (std::int64_t j = 0; j < width; ++j) big_g += g[j] * ipow(row[j], power);
          const T ratio = nx / np;
          const T c1 = big_g / (nx * np);
          const T c3 = ratio * p * big_g / (np * np);
          for (std::int64_t j = 0; j < width; ++j) {
            const T xpm1 = ipow(row[j], power - 1);
            const T x2pm1 = xpm1 * xpm1 * row[j];
            dst[j] += row[j] * c1 + ratio * p * xpm1 * g[j] - c3 * x2pm1;
          }
        }
      });
}

template <class T>
Tensor<T> mse(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError("mse: shapes " + to_string(a.shape()) + " and " + to_string(b.shape()) +
                         " differ");
  }
  return mean_all(square(sub(a, b)));
}

// ---- value helpers --------------------------------------------------------

template <class U, class T>
Tensor<U> cast(const Tensor<T>& x) {
  std::vector<U> out(x.data().begin(), x.data().end());
  Tensor<U> r(x.shape(), std::move(out));
  if (x.is_leaf() && x.requires_grad()) r.set_requires_grad(true);
  return r;
}

template <class T>
bool all_finite(const Tensor<T>& x) {
  for (T v : x.data()) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

template <class T>
bool bitwise_equal(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) return false;
  return std::memcmp(a.data().data(), b.data().data(), a.data().size() * sizeof(T)) == 0;
}

template <class T>
T max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError("max_abs_diff: shapes " + to_string(a.shape()) + " and " +
                         to_string(b.shape()) + " differ");
  }
  T m = T(0);
  for (std::size_t i = 0; i < a.data().size(); ++i) {
    m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  }
  return m;
}

#define LIT_INSTANTIATE(T)                                                                  \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                               \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                               \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                               \
  template Tensor<T> div(const Tensor<T>&, const Tensor<T>&);                               \
  template Tensor<T> scale(const Tensor<T>&, T);                                            \
  template Tensor<T> add_scalar(const Tensor<T>&, T);                                       \
  template Tensor<T> neg(const Tensor<T>&);                                                 \
  template Tensor<T> relu(const Tensor<T>&);                                                \
  template Tensor<T> gelu(const Tensor<T>&);                                                \
  template Tensor<T> silu(const Tensor<T>&);                                                \
  template Tensor<T> exp(const Tensor<T>&);                                                 \
  template Tensor<T> log(const Tensor<T>&);                                                 \
  template Tensor<T> sqrt(const Tensor<T>&);                                                \
  template Tensor<T> square(const Tensor<T>&);                                              \
  template Tensor<T> pow_int(const Tensor<T>&, int);                                        \
  template Tensor<T> clamp(const Tensor<T>&, T, T);                                         \
  template Tensor<T> guarded_reciprocal(const Tensor<T>&, T, std::int64_t*);                \
  template Tensor<T> sum(const Tensor<T>&, std::int64_t, bool);                             \
  template Tensor<T> mean(const Tensor<T>&, std::int64_t, bool);                            \
  template Tensor<T> sum_all(const Tensor<T>&);                                             \
  template Tensor<T> mean_all(const Tensor<T>&);                                            \
  template Tensor<T> softmax(const Tensor<T>&, std::int64_t);                               \
  template Tensor<T> layernorm(const Tensor<T>&, std::int64_t, T);                          \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                                      \
  template Tensor<T> permute(const Tensor<T>&, const std::vector<std::int64_t>&);           \
  template Tensor<T> transpose(const Tensor<T>&, std::int64_t, std::int64_t);               \
  template Tensor<T> concat(const std::vector<Tensor<T>>&, std::int64_t);                   \
  template Tensor<T> slice(const Tensor<T>&, std::int64_t, std::int64_t, std::int64_t);     \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                            \
  template Tensor<T> linear(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);          \
  template Tensor<T> conv2d_depthwise(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&); \
  template Tensor<T> embedding(const Tensor<T>&, const std::vector<std::int64_t>&);         \
  template Tensor<T> focused_kernel(const Tensor<T>&, int);                                 \
  template Tensor<T> mse(const Tensor<T>&, const Tensor<T>&);                               \
  template bool all_finite(const Tensor<T>&);                                               \
  template bool bitwise_equal(const Tensor<T>&, const Tensor<T>&);                          \
  template T max_abs_diff(const Tensor<T>&, const Tensor<T>&);

LIT_INSTANTIATE(float)
LIT_INSTANTIATE(double)
#undef LIT_INSTANTIATE

template Tensor<float> cast<float, float>(const Tensor<float>&);
template Tensor<double> cast<double, float>(const Tensor<float>&);
template Tensor<float> cast<float, double>(const Tensor<double>&);
template Tensor<double> cast<double, double>(const Tensor<double>&);

}  // namespace lit
