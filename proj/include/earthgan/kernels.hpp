#pragma once

// Non-differentiable numeric kernels over C x D x H x W volumes. The autodiff
// layer composes these; each linear kernel has its adjoint here as well so
// that backward rules stay closed under differentiation.

#include <array>
#include <cstddef>

#include "earthgan/tensor.hpp"

namespace earthgan::kernels {

using Index4 = std::array<std::size_t, 4>;

// Valid (unpadded) 3-D cross-correlation. `bias` may be null.
// input C_in x D x H x W, kernel C_out x C_in x k x k x k.
template <typename T>
Tensor<T> conv3d_valid(const Tensor<T>& input, const Tensor<T>& kernel,
                       const Tensor<T>* bias);

// Adjoint of conv3d_valid with respect to its input.
template <typename T>
Tensor<T> conv3d_input_grad(const Tensor<T>& grad_out, const Tensor<T>& kernel,
                            const Shape& input_shape);

// Adjoint of conv3d_valid with respect to its kernel (the correlation of the
// input with the upstream gradient).
template <typename T>
Tensor<T> conv3d_kernel_grad(const Tensor<T>& input, const Tensor<T>& grad_out,
                             std::size_t k);

// Linear resampling along one axis with half-voxel alignment: output sample i
// reads source coordinate (i + 0.5) * n_in / n_out - 0.5. Out-of-range
// coordinates are clamped, or wrapped when `circular`.
template <typename T>
Tensor<T> resample_axis(const Tensor<T>& input, std::size_t axis,
                        std::size_t n_out, bool circular);

template <typename T>
Tensor<T> resample_axis_adjoint(const Tensor<T>& grad_out, std::size_t axis,
                                std::size_t n_in, bool circular);

// Trilinear upsampling of the three spatial axes of a C x D x H x W volume by
// an integer factor. Factor 1 returns a copy.
template <typename T>
Tensor<T> trilinear_resize(const Tensor<T>& input, std::size_t factor);

template <typename T>
Tensor<T> trilinear_resize_adjoint(const Tensor<T>& grad_out,
                                   std::size_t factor, const Shape& input_shape);

// 2x2x2 mean pooling; odd trailing samples are dropped.
template <typename T>
Tensor<T> avg_pool2(const Tensor<T>& input);

template <typename T>
Tensor<T> avg_pool2_adjoint(const Tensor<T>& grad_out, const Shape& input_shape);

// Sub-block of a rank-4 tensor.
template <typename T>
Tensor<T> crop(const Tensor<T>& input, const Index4& offset,
               const Index4& extent);

// Zero tensor of `full_shape` with `block` written at `offset`.
template <typename T>
Tensor<T> uncrop(const Tensor<T>& block, const Index4& offset,
                 const Shape& full_shape);

// Concatenation along axis 0.
template <typename T>
Tensor<T> concat0(const Tensor<T>& a, const Tensor<T>& b);

// Per-channel (axis 0) helpers. `per_channel` has shape {C}.
template <typename T>
Tensor<T> channel_scale(const Tensor<T>& input, const Tensor<T>& per_channel);

template <typename T>
Tensor<T> channel_add(const Tensor<T>& input, const Tensor<T>& per_channel);

template <typename T>
Tensor<T> channel_sum(const Tensor<T>& input);

// Sum over non-channel axes of the elementwise product.
template <typename T>
Tensor<T> channel_dot(const Tensor<T>& a, const Tensor<T>& b);

// Broadcasts a {C} vector over `shape` (shape[0] == C).
template <typename T>
Tensor<T> channel_broadcast(const Tensor<T>& per_channel, const Shape& shape);

}  // namespace earthgan::kernels
