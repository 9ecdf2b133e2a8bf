#pragma once

// Differentiable primitives. Binary elementwise ops require identical shapes;
// there is no general broadcasting, only the explicit per-channel and scalar
// expansions below.

#include <cstdint>

#include "earthgan/autodiff.hpp"
#include "earthgan/kernels.hpp"

namespace earthgan::ad::ops {

using kernels::Index4;

template <typename T> Var<T> add(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> sub(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> mul(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> div(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> scale(const Var<T>& a, double factor);
template <typename T> Var<T> add_scalar(const Var<T>& a, double value);
template <typename T> Var<T> sqrt(const Var<T>& a);
template <typename T> Var<T> square(const Var<T>& a) { return mul(a, a); }

// Reductions to shape {1}.
template <typename T> Var<T> sum(const Var<T>& a);
template <typename T> Var<T> mean(const Var<T>& a);
template <typename T> Var<T> dot(const Var<T>& a, const Var<T>& b) {
  return sum(mul(a, b));
}
// Expands a single-element tensor to `shape`.
template <typename T> Var<T> expand(const Var<T>& scalar, const Shape& shape);

// max(x, slope * x), slope in [0, 1).
template <typename T> Var<T> leaky_relu(const Var<T>& x, double slope);

// Valid 3-D correlation with optional bias (pass an undefined Var to skip).
template <typename T>
Var<T> conv3d(const Var<T>& input, const Var<T>& kernel, const Var<T>& bias);
template <typename T>
Var<T> conv3d_input_grad(const Var<T>& grad_out, const Var<T>& kernel,
                         const Shape& input_shape);
template <typename T>
Var<T> conv3d_kernel_grad(const Var<T>& input, const Var<T>& grad_out,
                          std::size_t k);

template <typename T>
Var<T> trilinear_resize(const Var<T>& input, std::size_t factor);
template <typename T>
Var<T> trilinear_resize_adjoint(const Var<T>& grad_out, std::size_t factor,
                                const Shape& input_shape);

template <typename T> Var<T> avg_pool2(const Var<T>& input);
template <typename T>
Var<T> avg_pool2_adjoint(const Var<T>& grad_out, const Shape& input_shape);

template <typename T>
Var<T> crop(const Var<T>& input, const Index4& offset, const Index4& extent);
// Symmetric crop of `margin` voxels from both ends of every spatial axis.
template <typename T>
Var<T> center_crop(const Var<T>& input, std::size_t margin);
template <typename T>
Var<T> uncrop(const Var<T>& block, const Index4& offset, const Shape& full_shape);

// Channel-axis concatenation.
template <typename T> Var<T> concat_channels(const Var<T>& a, const Var<T>& b);

// y[c, ...] = x[c, ...] * s[c]
template <typename T>
Var<T> channel_scale(const Var<T>& input, const Var<T>& per_channel);
// y[c, ...] = x[c, ...] + b[c]
template <typename T>
Var<T> channel_add(const Var<T>& input, const Var<T>& per_channel);
template <typename T> Var<T> channel_sum(const Var<T>& input);
template <typename T> Var<T> channel_mean(const Var<T>& input);
template <typename T> Var<T> channel_dot(const Var<T>& a, const Var<T>& b);
template <typename T>
Var<T> channel_broadcast(const Var<T>& per_channel, const Shape& shape);

// Standard-normal constant keyed by (seed, stream); see rng.hpp.
template <typename T>
Var<T> gaussian_noise(const Shape& shape, std::uint64_t seed,
                      std::uint64_t stream);

}  // namespace earthgan::ad::ops
