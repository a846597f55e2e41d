#pragma once

// Differentiable operations over Tensor<T>. Binary elementwise ops follow
// NumPy broadcasting. Negative axes count from the end.

#include <cstdint>
#include <vector>

#include "lit/tensor.hpp"

namespace lit {

// ---- elementwise ----------------------------------------------------------

template <class T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <class T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <class T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <class T> Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b);
template <class T> Tensor<T> scale(const Tensor<T>& a, T factor);
template <class T> Tensor<T> add_scalar(const Tensor<T>& a, T value);
template <class T> Tensor<T> neg(const Tensor<T>& a);

template <class T> Tensor<T> relu(const Tensor<T>& x);
// tanh approximation: 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3)))
template <class T> Tensor<T> gelu(const Tensor<T>& x);
template <class T> Tensor<T> silu(const Tensor<T>& x);
template <class T> Tensor<T> exp(const Tensor<T>& x);
template <class T> Tensor<T> log(const Tensor<T>& x);
template <class T> Tensor<T> sqrt(const Tensor<T>& x);
template <class T> Tensor<T> square(const Tensor<T>& x);
template <class T> Tensor<T> pow_int(const Tensor<T>& x, int power);
// Gradient passes where lo <= x <= hi and is zero elsewhere.
template <class T> Tensor<T> clamp(const Tensor<T>& x, T lo, T hi);
// 1/x with |x| floored at `floor` (sign kept, zero maps to +floor). Floored
// entries get zero gradient; their count is added to *clamped when given.
template <class T>
Tensor<T> guarded_reciprocal(const Tensor<T>& x, T floor, std::int64_t* clamped = nullptr);

// ---- reductions -----------------------------------------------------------

template <class T> Tensor<T> sum(const Tensor<T>& x, std::int64_t axis, bool keepdim = false);
template <class T> Tensor<T> mean(const Tensor<T>& x, std::int64_t axis, bool keepdim = false);
template <class T> Tensor<T> sum_all(const Tensor<T>& x);
template <class T> Tensor<T> mean_all(const Tensor<T>& x);

// ---- normalisation --------------------------------------------------------

template <class T> Tensor<T> softmax(const Tensor<T>& x, std::int64_t axis);
// Zero mean, unit (biased) variance along `axis`; no affine parameters.
template <class T> Tensor<T> layernorm(const Tensor<T>& x, std::int64_t axis, T eps);

// ---- layout ---------------------------------------------------------------

// One dimension may be -1 and is inferred.
template <class T> Tensor<T> reshape(const Tensor<T>& x, Shape shape);
template <class T> Tensor<T> permute(const Tensor<T>& x, const std::vector<std::int64_t>& order);
template <class T> Tensor<T> transpose(const Tensor<T>& x, std::int64_t axis0, std::int64_t axis1);
template <class T> Tensor<T> concat(const std::vector<Tensor<T>>& parts, std::int64_t axis);
// Elements [begin, end) along axis.
template <class T>
Tensor<T> slice(const Tensor<T>& x, std::int64_t axis, std::int64_t begin, std::int64_t end);

// ---- linear algebra -------------------------------------------------------

// [..., m, k] @ [..., k, n] with broadcast batch dimensions.
template <class T> Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);
// x @ weight + bias with weight stored [in, out]; bias may be undefined.
template <class T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias);

// x [b,c,h,w], weight [c,1,k,k], bias [c] (may be undefined). Same-size output.
template <class T>
Tensor<T> conv2d_depthwise(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias);

// Rows of table [V, D] selected by indices -> [len(indices), D].
template <class T>
Tensor<T> embedding(const Tensor<T>& table, const std::vector<std::int64_t>& indices);

// Per last-axis row: ||x|| * x^p / ||x^p||. Rows whose x^p has zero norm are
// passed through unchanged.
template <class T> Tensor<T> focused_kernel(const Tensor<T>& x, int power);

// Mean squared error over all elements.
template <class T> Tensor<T> mse(const Tensor<T>& a, const Tensor<T>& b);

// ---- value helpers (no graph) ---------------------------------------------

template <class U, class T> Tensor<U> cast(const Tensor<T>& x);
template <class T> bool all_finite(const Tensor<T>& x);
template <class T> bool bitwise_equal(const Tensor<T>& a, const Tensor<T>& b);
template <class T> T max_abs_diff(const Tensor<T>& a, const Tensor<T>& b);

template <class T> Tensor<T> operator+(const Tensor<T>& a, const Tensor<T>& b) { return add(a, b); }
template <class T> Tensor<T> operator-(const Tensor<T>& a, const Tensor<T>& b) { return sub(a, b); }
template <class T> Tensor<T> operator*(const Tensor<T>& a, const Tensor<T>& b) { return mul(a, b); }
template <class T> Tensor<T> operator/(const Tensor<T>& a, const Tensor<T>& b) { return div(a, b); }
template <class T> Tensor<T> operator*(const Tensor<T>& a, T s) { return scale(a, s); }
template <class T> Tensor<T> operator*(T s, const Tensor<T>& a) { return scale(a, s); }
template <class T> Tensor<T> operator-(const Tensor<T>& a) { return neg(a); }

}  // namespace lit
