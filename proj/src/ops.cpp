#include "earthgan/ops.hpp"

#include <cmath>
#include <string>

#include "earthgan/rng.hpp"

namespace earthgan::ad::ops {
namespace {

template <typename T>
void require_same_shape(const Var<T>& a, const Var<T>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " +
                     to_string(a.shape()) + " vs " + to_string(b.shape()));
  }
}

template <typename T, typename F>
Tensor<T> zip(const Tensor<T>& a, const Tensor<T>& b, F f) {
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(a[i], b[i]);
  return out;
}

template <typename T, typename F>
Tensor<T> map(const Tensor<T>& a, F f) {
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(a[i]);
  return out;
}

template <typename T>
using Grads = std::vector<Var<T>>;

}  // namespace

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a, b, "add");
  return make_result<T>(
      zip(a.value(), b.value(), [](T x, T y) { return x + y; }), {a, b},
      [](const Var<T>& g) { return Grads<T>{g, g}; }, "add");
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a, b, "sub");
  return make_result<T>(
      zip(a.value(), b.value(), [](T x, T y) { return x - y; }), {a, b},
      [](const Var<T>& g) { return Grads<T>{g, scale(g, -1.0)}; }, "sub");
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a, b, "mul");
  return make_result<T>(
      zip(a.value(), b.value(), [](T x, T y) { return x * y; }), {a, b},
      [a, b](const Var<T>& g) { return Grads<T>{mul(g, b), mul(g, a)}; },
      "mul");
}

template <typename T>
Var<T> div(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a, b, "div");
  return make_result<T>(
      zip(a.value(), b.value(), [](T x, T y) { return x / y; }), {a, b},
      [a, b](const Var<T>& g) {
        return Grads<T>{div(g, b), scale(div(mul(g, a), mul(b, b)), -1.0)};
      },
      "div");
}

template <typename T>
Var<T> scale(const Var<T>& a, double factor) {
  const T f = static_cast<T>(factor);
  return make_result<T>(
      map(a.value(), [f](T x) { return x * f; }), {a},
      [factor](const Var<T>& g) { return Grads<T>{scale(g, factor)}; },
      "scale");
}

template <typename T>
Var<T> add_scalar(const Var<T>& a, double value) {
  const T v = static_cast<T>(value);
  return make_result<T>(
      map(a.value(), [v](T x) { return x + v; }), {a},
      [](const Var<T>& g) { return Grads<T>{g}; }, "add_scalar");
}

template <typename T>
Var<T> sqrt(const Var<T>& a) {
  return make_result<T>(
      map(a.value(), [](T x) { return std::sqrt(x); }), {a},
      [a](const Var<T>& g) { return Grads<T>{div(g, scale(sqrt(a), 2.0))}; },
      "sqrt");
}

template <typename T>
Var<T> sum(const Var<T>& a) {
  T acc = 0;
  for (T v : a.value().values()) acc += v;
  const Shape shape = a.shape();
  return make_result<T>(
      Tensor<T>::scalar(acc), {a},
      [shape](const Var<T>& g) { return Grads<T>{expand(g, shape)}; }, "sum");
}

template <typename T>
Var<T> mean(const Var<T>& a) {
  return scale(sum(a), 1.0 / static_cast<double>(a.value().size()));
}

template <typename T>
Var<T> expand(const Var<T>& scalar, const Shape& shape) {
  if (scalar.value().size() != 1) {
    throw ShapeError("expand: source must hold one element, got " +
                     to_string(scalar.shape()));
  }
  return make_result<T>(
      Tensor<T>(shape, scalar.value()[0]), {scalar},
      [](const Var<T>& g) { return Grads<T>{sum(g)}; }, "expand");
}

template <typename T>
Var<T> leaky_relu(const Var<T>& x, double slope) {
  if (!(slope >= 0.0 && slope < 1.0)) {
    throw ValidationError("leaky_relu: slope must lie in [0, 1), got " +
                          std::to_string(slope));
  }
  // The mask is a constant of the graph, so second derivatives vanish
  // piecewise as they should.
  const T s = static_cast<T>(slope);
  auto mask = Var<T>::constant(
      map(x.value(), [s](T v) { return v > T(0) ? T(1) : s; }));
  return make_result<T>(
      zip(x.value(), mask.value(), [](T v, T m) { return v * m; }), {x},
      [mask](const Var<T>& g) { return Grads<T>{mul(g, mask)}; },
      "leaky_relu");
}

template <typename T>
Var<T> conv3d(const Var<T>& input, const Var<T>& kernel, const Var<T>& bias) {
  const Tensor<T>* b = bias.defined() ? &bias.value() : nullptr;
  Tensor<T> out = kernels::conv3d_valid(input.value(), kernel.value(), b);
  const Shape in_shape = input.shape();
  const std::size_t k = kernel.shape().at(2);
  std::vector<Var<T>> parents{input, kernel};
  if (bias.defined()) parents.push_back(bias);
  return make_result<T>(
      std::move(out), std::move(parents),
      [input, kernel, in_shape, k, has_bias = bias.defined()](const Var<T>& g) {
        Grads<T> grads{conv3d_input_grad(g, kernel, in_shape),
                       conv3d_kernel_grad(input, g, k)};
        if (has_bias) grads.push_back(channel_sum(g));
        return grads;
      },
      "conv3d");
}

template <typename T>
Var<T> conv3d_input_grad(const Var<T>& grad_out, const Var<T>& kernel,
                         const Shape& input_shape) {
  const std::size_t k = kernel.shape().at(2);
  return make_result<T>(
      kernels::conv3d_input_grad(grad_out.value(), kernel.value(), input_shape),
      {grad_out, kernel},
      [grad_out, kernel, k](const Var<T>& g) {
        return Grads<T>{conv3d(g, kernel, Var<T>()),
                        conv3d_kernel_grad(g, grad_out, k)};
      },
      "conv3d_input_grad");
}

template <typename T>
Var<T> conv3d_kernel_grad(const Var<T>& input, const Var<T>& grad_out,
                          std::size_t k) {
  const Shape in_shape = input.shape();
  return make_result<T>(
      kernels::conv3d_kernel_grad(input.value(), grad_out.value(), k),
      {input, grad_out},
      [input, grad_out, in_shape](const Var<T>& g) {
        return Grads<T>{conv3d_input_grad(grad_out, g, in_shape),
                        conv3d(input, g, Var<T>())};
      },
      "conv3d_kernel_grad");
}

template <typename T>
Var<T> trilinear_resize(const Var<T>& input, std::size_t factor) {
  const Shape in_shape = input.shape();
  return make_result<T>(
      kernels::trilinear_resize(input.value(), factor), {input},
      [factor, in_shape](const Var<T>& g) {
        return Grads<T>{trilinear_resize_adjoint(g, factor, in_shape)};
      },
      "trilinear_resize");
}

template <typename T>
Var<T> trilinear_resize_adjoint(const Var<T>& grad_out, std::size_t factor,
                                const Shape& input_shape) {
  return make_result<T>(
      kernels::trilinear_resize_adjoint(grad_out.value(), factor, input_shape),
      {grad_out},
      [factor](const Var<T>& g) {
        return Grads<T>{trilinear_resize(g, factor)};
      },
      "trilinear_resize_adjoint");
}

template <typename T>
Var<T> avg_pool2(const Var<T>& input) {
  const Shape in_shape = input.shape();
  return make_result<T>(
      kernels::avg_pool2(input.value()), {input},
      [in_shape](const Var<T>& g) {
        return Grads<T>{avg_pool2_adjoint(g, in_shape)};
      },
      "avg_pool2");
}

template <typename T>
Var<T> avg_pool2_adjoint(const Var<T>& grad_out, const Shape& input_shape) {
  return make_result<T>(
      kernels::avg_pool2_adjoint(grad_out.value(), input_shape), {grad_out},
      [](const Var<T>& g) { return Grads<T>{avg_pool2(g)}; },
      "avg_pool2_adjoint");
}

template <typename T>
Var<T> crop(const Var<T>& input, const Index4& offset, const Index4& extent) {
  const Shape in_shape = input.shape();
  return make_result<T>(
      kernels::crop(input.value(), offset, extent), {input},
      [offset, in_shape](const Var<T>& g) {
        return Grads<T>{uncrop(g, offset, in_shape)};
      },
      "crop");
}

template <typename T>
Var<T> center_crop(const Var<T>& input, std::size_t margin) {
  const Shape& s = input.shape();
  if (s.size() != 4 || s[1] <= 2 * margin || s[2] <= 2 * margin ||
      s[3] <= 2 * margin) {
    throw ShapeError("center_crop: margin " + std::to_string(margin) +
                     " too large for " + to_string(s));
  }
  return crop(input, {0, margin, margin, margin},
              {s[0], s[1] - 2 * margin, s[2] - 2 * margin, s[3] - 2 * margin});
}

template <typename T>
Var<T> uncrop(const Var<T>& block, const Index4& offset,
              const Shape& full_shape) {
  const Shape b = block.shape();
  return make_result<T>(
      kernels::uncrop(block.value(), offset, full_shape), {block},
      [offset, b](const Var<T>& g) {
        return Grads<T>{crop(g, offset, {b[0], b[1], b[2], b[3]})};
      },
      "uncrop");
}

template <typename T>
Var<T> concat_channels(const Var<T>& a, const Var<T>& b) {
  const Shape sa = a.shape();
  const Shape sb = b.shape();
  if (sa.size() != 4) throw ShapeError("concat_channels: expected rank 4");
  return make_result<T>(
      kernels::concat0(a.value(), b.value()), {a, b},
      [sa, sb](const Var<T>& g) {
        return Grads<T>{crop(g, {0, 0, 0, 0}, {sa[0], sa[1], sa[2], sa[3]}),
                        crop(g, {sa[0], 0, 0, 0}, {sb[0], sb[1], sb[2], sb[3]})};
      },
      "concat_channels");
}

template <typename T>
Var<T> channel_scale(const Var<T>& input, const Var<T>& per_channel) {
  return make_result<T>(
      kernels::channel_scale(input.value(), per_channel.value()),
      {input, per_channel},
      [input, per_channel](const Var<T>& g) {
        return Grads<T>{channel_scale(g, per_channel), channel_dot(g, input)};
      },
      "channel_scale");
}

template <typename T>
Var<T> channel_add(const Var<T>& input, const Var<T>& per_channel) {
  return make_result<T>(
      kernels::channel_add(input.value(), per_channel.value()),
      {input, per_channel},
      [](const Var<T>& g) { return Grads<T>{g, channel_sum(g)}; },
      "channel_add");
}

template <typename T>
Var<T> channel_sum(const Var<T>& input) {
  const Shape in_shape = input.shape();
  return make_result<T>(
      kernels::channel_sum(input.value()), {input},
      [in_shape](const Var<T>& g) {
        return Grads<T>{channel_broadcast(g, in_shape)};
      },
      "channel_sum");
}

template <typename T>
Var<T> channel_mean(const Var<T>& input) {
  const double n = static_cast<double>(input.value().size() / input.shape()[0]);
  return scale(channel_sum(input), 1.0 / n);
}

template <typename T>
Var<T> channel_dot(const Var<T>& a, const Var<T>& b) {
  return make_result<T>(
      kernels::channel_dot(a.value(), b.value()), {a, b},
      [a, b](const Var<T>& g) {
        return Grads<T>{channel_scale(b, g), channel_scale(a, g)};
      },
      "channel_dot");
}

template <typename T>
Var<T> channel_broadcast(const Var<T>& per_channel, const Shape& shape) {
  return make_result<T>(
      kernels::channel_broadcast(per_channel.value(), shape), {per_channel},
      [](const Var<T>& g) { return Grads<T>{channel_sum(g)}; },
      "channel_broadcast");
}

template <typename T>
Var<T> gaussian_noise(const Shape& shape, std::uint64_t seed,
                      std::uint64_t stream) {
  return Var<T>::constant(normal_tensor<T>(shape, seed, stream));
}

#define EARTHGAN_INSTANTIATE(T)                                               \
  template Var<T> add(const Var<T>&, const Var<T>&);                          \
  template Var<T> sub(const Var<T>&, const Var<T>&);                          \
  template Var<T> mul(const Var<T>&, const Var<T>&);                          \
  template Var<T> div(const Var<T>&, const Var<T>&);                          \
  template Var<T> scale(const Var<T>&, double);                               \
  template Var<T> add_scalar(const Var<T>&, double);                          \
  template Var<T> sqrt(const Var<T>&);                                        \
  template Var<T> sum(const Var<T>&);                                         \
  template Var<T> mean(const Var<T>&);                                        \
  template Var<T> expand(const Var<T>&, const Shape&);                        \
  template Var<T> leaky_relu(const Var<T>&, double);                          \
  template Var<T> conv3d(const Var<T>&, const Var<T>&, const Var<T>&);        \
  template Var<T> conv3d_input_grad(const Var<T>&, const Var<T>&,             \
                                    const Shape&);                            \
  template Var<T> conv3d_kernel_grad(const Var<T>&, const Var<T>&,            \
                                     std::size_t);                            \
  template Var<T> trilinear_resize(const Var<T>&, std::size_t);               \
  template Var<T> trilinear_resize_adjoint(const Var<T>&, std::size_t,        \
                                           const Shape&);                     \
  template Var<T> avg_pool2(const Var<T>&);                                   \
  template Var<T> avg_pool2_adjoint(const Var<T>&, const Shape&);             \
  template Var<T> crop(const Var<T>&, const Index4&, const Index4&);          \
  template Var<T> center_crop(const Var<T>&, std::size_t);                    \
  template Var<T> uncrop(const Var<T>&, const Index4&, const Shape&);         \
  template Var<T> concat_channels(const Var<T>&, const Var<T>&);              \
  template Var<T> channel_scale(const Var<T>&, const Var<T>&);                \
  template Var<T> channel_add(const Var<T>&, const Var<T>&);                  \
  template Var<T> channel_sum(const Var<T>&);                                 \
  template Var<T> channel_mean(const Var<T>&);                                \
  template Var<T> channel_dot(const Var<T>&, const Var<T>&);                  \
  template Var<T> channel_broadcast(const Var<T>&, const Shape&);             \
  template Var<T> gaussian_noise(const Shape&, std::uint64_t, std::uint64_t);

EARTHGAN_INSTANTIATE(float)
EARTHGAN_INSTANTIATE(double)

#undef EARTHGAN_INSTANTIATE

}  // namespace earthgan::ad::ops
