#include "earthgan/kernels.hpp"

#include <Eigen/Core>
#include <cmath>
#include <string>
#include <vector>

namespace earthgan::kernels {
namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using ConstRowMap = Eigen::Map<const RowMat<T>>;
template <typename T>
using RowMap = Eigen::Map<RowMat<T>>;
template <typename T>
using StridedKernel =
    Eigen::Map<const RowMat<T>, 0, Eigen::Stride<Eigen::Dynamic, Eigen::Dynamic>>;

void require_rank4(const Shape& s, const char* what) {
  if (s.size() != 4) {
    throw ShapeError(std::string(what) + ": expected rank-4 C x D x H x W, got " +
                     to_string(s));
  }
}

// The valid correlation is evaluated over the flattened input grid: for a
// kernel offset with linear displacement `off`, output position p reads input
// p + off. Positions p that wrap across a row or plane are computed and then
// discarded, which turns every offset into one dense GEMM without an im2col
// buffer.
struct ConvGeometry {
  std::size_t c_in, c_out, k, d, h, w, d_out, h_out, w_out, span;
  std::vector<std::size_t> offsets;

  ConvGeometry(const Shape& input, const Shape& kernel) {
    require_rank4(input, "conv3d");
    if (kernel.size() != 5 || kernel[2] != kernel[3] || kernel[2] != kernel[4]) {
      throw ShapeError("conv3d: kernel must be C_out x C_in x k x k x k, got " +
                       to_string(kernel));
    }
    c_in = input[0];
    c_out = kernel[0];
    k = kernel[2];
    if (kernel[1] != c_in) {
      throw ShapeError("conv3d: kernel expects " + std::to_string(kernel[1]) +
                       " input channels, input has " + std::to_string(c_in));
    }
    if (k % 2 == 0) {
      throw ShapeError("conv3d: kernel extent must be odd, got " +
                       std::to_string(k));
    }
    d = input[1];
    h = input[2];
    w = input[3];
    if (d < k || h < k || w < k) {
      throw ShapeError("conv3d: spatial extents " + to_string(input) +
                       " smaller than kernel " + std::to_string(k));
    }
    d_out = d - k + 1;
    h_out = h - k + 1;
    w_out = w - k + 1;
    span = (d_out - 1) * h * w + (h_out - 1) * w + w_out;
    offsets.reserve(k * k * k);
    for (std::size_t a = 0; a < k; ++a)
      for (std::size_t b = 0; b < k; ++b)
        for (std::size_t c = 0; c < k; ++c) offsets.push_back((a * h + b) * w + c);
  }

  Shape output_shape() const { return {c_out, d_out, h_out, w_out}; }
  std::size_t taps() const { return k * k * k; }

  template <typename T>
  StridedKernel<T> tap(const T* kernel, std::size_t o) const {
    return StridedKernel<T>(
        kernel + o, static_cast<Eigen::Index>(c_out),
        static_cast<Eigen::Index>(c_in),
        Eigen::Stride<Eigen::Dynamic, Eigen::Dynamic>(
            static_cast<Eigen::Index>(c_in * taps()),
            static_cast<Eigen::Index>(taps())));
  }

  // Scatters a compact C_out x D_out x H_out x W_out gradient onto the
  // flattened grid used by the GEMM formulation.
  template <typename T>
  RowMat<T> expand(const Tensor<T>& compact) const {
    RowMat<T> full = RowMat<T>::Zero(static_cast<Eigen::Index>(c_out),
                                     static_cast<Eigen::Index>(span));
    const T* src = compact.data();
    for (std::size_t co = 0; co < c_out; ++co)
      for (std::size_t z = 0; z < d_out; ++z)
        for (std::size_t y = 0; y < h_out; ++y) {
          T* dst = full.data() + co * span + (z * h + y) * w;
          for (std::size_t x = 0; x < w_out; ++x) dst[x] = *src++;
        }
    return full;
  }
};

struct Taps1d {
  std::vector<std::size_t> lo, hi;
  std::vector<double> frac;
};

Taps1d linear_taps(std::size_t n_in, std::size_t n_out, bool circular) {
  Taps1d taps;
  taps.lo.resize(n_out);
  taps.hi.resize(n_out);
  taps.frac.resize(n_out);
  const double ratio = static_cast<double>(n_in) / static_cast<double>(n_out);
  const double last = static_cast<double>(n_in - 1);
  for (std::size_t i = 0; i < n_out; ++i) {
    double s = (static_cast<double>(i) + 0.5) * ratio - 0.5;
    if (circular) {
      const double fl = std::floor(s);
      const double t = s - fl;
      auto lo = static_cast<long long>(fl) % static_cast<long long>(n_in);
      if (lo < 0) lo += static_cast<long long>(n_in);
      taps.lo[i] = static_cast<std::size_t>(lo);
      taps.hi[i] = (taps.lo[i] + 1) % n_in;
      taps.frac[i] = t;
    } else {
      s = std::clamp(s, 0.0, last);
      const double fl = std::floor(s);
      taps.lo[i] = static_cast<std::size_t>(fl);
      taps.hi[i] = std::min(taps.lo[i] + 1, n_in - 1);
      taps.frac[i] = s - fl;
    }
  }
  return taps;
}

// (outer, axis, inner) factorisation of a row-major shape.
struct AxisView {
  std::size_t outer = 1, inner = 1;
  AxisView(const Shape& s, std::size_t axis) {
    for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
    for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  }
};

}  // namespace

template <typename T>
Tensor<T> conv3d_valid(const Tensor<T>& input, const Tensor<T>& kernel,
                       const Tensor<T>* bias) {
  const ConvGeometry g(input.shape(), kernel.shape());
  if (bias && (bias->rank() != 1 || bias->dim(0) != g.c_out)) {
    throw ShapeError("conv3d: bias shape " + to_string(bias->shape()) +
                     " does not match " + std::to_string(g.c_out) +
                     " output channels");
  }
  const std::size_t n = g.d * g.h * g.w;
  ConstRowMap<T> x(input.data(), static_cast<Eigen::Index>(g.c_in),
                   static_cast<Eigen::Index>(n));
  RowMat<T> full = RowMat<T>::Zero(static_cast<Eigen::Index>(g.c_out),
                                   static_cast<Eigen::Index>(g.span));
  for (std::size_t o = 0; o < g.taps(); ++o) {
    full.noalias() += g.tap(kernel.data(), o) *
                      x.middleCols(static_cast<Eigen::Index>(g.offsets[o]),
                                   static_cast<Eigen::Index>(g.span));
  }
  Tensor<T> out(g.output_shape());
  T* dst = out.data();
  for (std::size_t co = 0; co < g.c_out; ++co) {
    const T b = bias ? (*bias)[co] : T(0);
    for (std::size_t z = 0; z < g.d_out; ++z)
      for (std::size_t y = 0; y < g.h_out; ++y) {
        const T* src = full.data() + co * g.span + (z * g.h + y) * g.w;
        for (std::size_t xw = 0; xw < g.w_out; ++xw) *dst++ = src[xw] + b;
      }
  }
  return out;
}

template <typename T>
Tensor<T> conv3d_input_grad(const Tensor<T>& grad_out, const Tensor<T>& kernel,
                            const Shape& input_shape) {
  const ConvGeometry g(input_shape, kernel.shape());
  if (grad_out.shape() != g.output_shape()) {
    throw ShapeError("conv3d_input_grad: gradient shape " +
                     to_string(grad_out.shape()) + " expected " +
                     to_string(g.output_shape()));
  }
  const RowMat<T> full = g.expand(grad_out);
  Tensor<T> out(input_shape);
  RowMap<T> xg(out.data(), static_cast<Eigen::Index>(g.c_in),
               static_cast<Eigen::Index>(g.d * g.h * g.w));
  for (std::size_t o = 0; o < g.taps(); ++o) {
    xg.middleCols(static_cast<Eigen::Index>(g.offsets[o]),
                  static_cast<Eigen::Index>(g.span))
        .noalias() += g.tap(kernel.data(), o).transpose() * full;
  }
  return out;
}

template <typename T>
Tensor<T> conv3d_kernel_grad(const Tensor<T>& input, const Tensor<T>& grad_out,
                             std::size_t k) {
  require_rank4(grad_out.shape(), "conv3d_kernel_grad");
  const Shape kshape{grad_out.dim(0), input.shape().at(0), k, k, k};
  const ConvGeometry g(input.shape(), kshape);
  if (grad_out.shape() != g.output_shape()) {
    throw ShapeError("conv3d_kernel_grad: gradient shape " +
                     to_string(grad_out.shape()) + " expected " +
                     to_string(g.output_shape()));
  }
  const RowMat<T> full = g.expand(grad_out);
  ConstRowMap<T> x(input.data(), static_cast<Eigen::Index>(g.c_in),
                   static_cast<Eigen::Index>(g.d * g.h * g.w));
  Tensor<T> out(kshape);
  const std::size_t taps = g.taps();
  for (std::size_t o = 0; o < taps; ++o) {
    const RowMat<T> tap =
        full * x.middleCols(static_cast<Eigen::Index>(g.offsets[o]),
                            static_cast<Eigen::Index>(g.span))
                   .transpose();
    for (std::size_t co = 0; co < g.c_out; ++co)
      for (std::size_t ci = 0; ci < g.c_in; ++ci)
        out[(co * g.c_in + ci) * taps + o] =
            tap(static_cast<Eigen::Index>(co), static_cast<Eigen::Index>(ci));
  }
  return out;
}

template <typename T>
Tensor<T> resample_axis(const Tensor<T>& input, std::size_t axis,
                        std::size_t n_out, bool circular) {
  const Shape& s = input.shape();
  if (axis >= s.size()) throw ShapeError("resample_axis: axis out of range");
  if (n_out == 0) throw ShapeError("resample_axis: zero output extent");
  const std::size_t n_in = s[axis];
  Shape out_shape = s;
  out_shape[axis] = n_out;
  if (n_out == n_in) return input;
  const AxisView v(s, axis);
  const Taps1d taps = linear_taps(n_in, n_out, circular);
  Tensor<T> out(out_shape);
  for (std::size_t o = 0; o < v.outer; ++o) {
    const T* src = input.data() + o * n_in * v.inner;
    T* dst = out.data() + o * n_out * v.inner;
    for (std::size_t i = 0; i < n_out; ++i) {
      const T* a = src + taps.lo[i] * v.inner;
      const T* b = src + taps.hi[i] * v.inner;
      const T t = static_cast<T>(taps.frac[i]);
      T* d = dst + i * v.inner;
      // a + t (b - a) keeps constants exact.
      for (std::size_t j = 0; j < v.inner; ++j) d[j] = a[j] + t * (b[j] - a[j]);
    }
  }
  return out;
}

template <typename T>
Tensor<T> resample_axis_adjoint(const Tensor<T>& grad_out, std::size_t axis,
                                std::size_t n_in, bool circular) {
  const Shape& s = grad_out.shape();
  if (axis >= s.size()) throw ShapeError("resample_axis: axis out of range");
  const std::size_t n_out = s[axis];
  if (n_out == n_in) return grad_out;
  Shape in_shape = s;
  in_shape[axis] = n_in;
  const AxisView v(s, axis);
  const Taps1d taps = linear_taps(n_in, n_out, circular);
  Tensor<T> out(in_shape);
  for (std::size_t o = 0; o < v.outer; ++o) {
    const T* src = grad_out.data() + o * n_out * v.inner;
    T* dst = out.data() + o * n_in * v.inner;
    for (std::size_t i = 0; i < n_out; ++i) {
      const T t = static_cast<T>(taps.frac[i]);
      const T* g = src + i * v.inner;
      T* a = dst + taps.lo[i] * v.inner;
      T* b = dst + taps.hi[i] * v.inner;
      for (std::size_t j = 0; j < v.inner; ++j) {
        a[j] += g[j] - t * g[j];
        b[j] += t * g[j];
      }
    }
  }
  return out;
}

template <typename T>
Tensor<T> trilinear_resize(const Tensor<T>& input, std::size_t factor) {
  require_rank4(input.shape(), "trilinear_resize");
  if (factor == 0) throw ValidationError("trilinear_resize: factor must be >= 1");
  if (factor == 1) return input;
  Tensor<T> out = resample_axis(input, 1, input.dim(1) * factor, false);
  out = resample_axis(out, 2, input.dim(2) * factor, false);
  return resample_axis(out, 3, input.dim(3) * factor, false);
}

template <typename T>
Tensor<T> trilinear_resize_adjoint(const Tensor<T>& grad_out, std::size_t factor,
                                   const Shape& input_shape) {
  require_rank4(input_shape, "trilinear_resize_adjoint");
  if (factor == 0) throw ValidationError("trilinear_resize: factor must be >= 1");
  const Shape expect{input_shape[0], input_shape[1] * factor,
                     input_shape[2] * factor, input_shape[3] * factor};
  if (grad_out.shape() != expect) {
    throw ShapeError("trilinear_resize_adjoint: gradient shape " +
                     to_string(grad_out.shape()) + " expected " +
                     to_string(expect));
  }
  if (factor == 1) return grad_out;
  Tensor<T> out = resample_axis_adjoint(grad_out, 3, input_shape[3], false);
  out = resample_axis_adjoint(out, 2, input_shape[2], false);
  return resample_axis_adjoint(out, 1, input_shape[1], false);
}

template <typename T>
Tensor<T> avg_pool2(const Tensor<T>& input) {
  require_rank4(input.shape(), "avg_pool2");
  const Shape& s = input.shape();
  if (s[1] < 2 || s[2] < 2 || s[3] < 2) {
    throw ShapeError("avg_pool2: spatial extents " + to_string(s) +
                     " too small to pool");
  }
  const Shape os{s[0], s[1] / 2, s[2] / 2, s[3] / 2};
  Tensor<T> out(os);
  for (std::size_t c = 0; c < os[0]; ++c)
    for (std::size_t z = 0; z < os[1]; ++z)
      for (std::size_t y = 0; y < os[2]; ++y)
        for (std::size_t x = 0; x < os[3]; ++x) {
          T acc = 0;
          for (std::size_t dz = 0; dz < 2; ++dz)
            for (std::size_t dy = 0; dy < 2; ++dy)
              for (std::size_t dx = 0; dx < 2; ++dx)
                acc += input.at(c, 2 * z + dz, 2 * y + dy, 2 * x + dx);
          out.at(c, z, y, x) = acc / T(8);
        }
  return out;
}

template <typename T>
Tensor<T> avg_pool2_adjoint(const Tensor<T>& grad_out, const Shape& input_shape) {
  require_rank4(input_shape, "avg_pool2_adjoint");
  const Shape& os = grad_out.shape();
  const Shape expect{input_shape[0], input_shape[1] / 2, input_shape[2] / 2,
                     input_shape[3] / 2};
  if (os != expect) {
    throw ShapeError("avg_pool2_adjoint: gradient shape " + to_string(os) +
                     " expected " + to_string(expect));
  }
  Tensor<T> out(input_shape);
  for (std::size_t c = 0; c < os[0]; ++c)
    for (std::size_t z = 0; z < os[1]; ++z)
      for (std::size_t y = 0; y < os[2]; ++y)
        for (std::size_t x = 0; x < os[3]; ++x) {
          const T g = grad_out.at(c, z, y, x) / T(8);
          for (std::size_t dz = 0; dz < 2; ++dz)
            for (std::size_t dy = 0; dy < 2; ++dy)
              for (std::size_t dx = 0; dx < 2; ++dx)
                out.at(c, 2 * z + dz, 2 * y + dy, 2 * x + dx) = g;
        }
  return out;
}

template <typename T>
Tensor<T> crop(const Tensor<T>& input, const Index4& offset,
               const Index4& extent) {
  require_rank4(input.shape(), "crop");
  const Shape& s = input.shape();
  for (std::size_t a = 0; a < 4; ++a) {
    if (extent[a] == 0 || offset[a] + extent[a] > s[a]) {
      throw ShapeError("crop: block exceeds source shape " + to_string(s) +
                       " on axis " + std::to_string(a));
    }
  }
  Tensor<T> out(Shape(extent.begin(), extent.end()));
  T* dst = out.data();
  for (std::size_t c = 0; c < extent[0]; ++c)
    for (std::size_t z = 0; z < extent[1]; ++z)
      for (std::size_t y = 0; y < extent[2]; ++y) {
        const T* src = &input.at(c + offset[0], z + offset[1], y + offset[2],
                                 offset[3]);
        std::copy(src, src + extent[3], dst);
        dst += extent[3];
      }
  return out;
}

template <typename T>
Tensor<T> uncrop(const Tensor<T>& block, const Index4& offset,
                 const Shape& full_shape) {
  require_rank4(full_shape, "uncrop");
  const Shape& e = block.shape();
  require_rank4(e, "uncrop");
  for (std::size_t a = 0; a < 4; ++a) {
    if (offset[a] + e[a] > full_shape[a]) {
      throw ShapeError("uncrop: block exceeds target shape " +
                       to_string(full_shape));
    }
  }
  Tensor<T> out(full_shape);
  const T* src = block.data();
  for (std::size_t c = 0; c < e[0]; ++c)
    for (std::size_t z = 0; z < e[1]; ++z)
      for (std::size_t y = 0; y < e[2]; ++y) {
        T* dst = &out.at(c + offset[0], z + offset[1], y + offset[2], offset[3]);
        std::copy(src, src + e[3], dst);
        src += e[3];
      }
  return out;
}

template <typename T>
Tensor<T> concat0(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != b.rank() || a.rank() == 0 ||
      !std::equal(a.shape().begin() + 1, a.shape().end(), b.shape().begin() + 1)) {
    throw ShapeError("concat: incompatible shapes " + to_string(a.shape()) +
                     " and " + to_string(b.shape()));
  }
  Shape s = a.shape();
  s[0] += b.dim(0);
  std::vector<T> data;
  data.reserve(a.size() + b.size());
  data.insert(data.end(), a.storage().begin(), a.storage().end());
  data.insert(data.end(), b.storage().begin(), b.storage().end());
  return Tensor<T>(std::move(s), std::move(data));
}

namespace {

template <typename T>
void require_channel_vector(const Tensor<T>& x, const Tensor<T>& v,
                            const char* what) {
  if (x.rank() == 0 || v.rank() != 1 || v.dim(0) != x.dim(0)) {
    throw ShapeError(std::string(what) + ": per-channel shape " +
                     to_string(v.shape()) + " does not match " +
                     to_string(x.shape()));
  }
}

}  // namespace

template <typename T>
Tensor<T> channel_scale(const Tensor<T>& input, const Tensor<T>& per_channel) {
  require_channel_vector(input, per_channel, "channel_scale");
  Tensor<T> out = input;
  const std::size_t n = input.size() / input.dim(0);
  for (std::size_t c = 0; c < input.dim(0); ++c) {
    T* p = out.data() + c * n;
    for (std::size_t i = 0; i < n; ++i) p[i] *= per_channel[c];
  }
  return out;
}

template <typename T>
Tensor<T> channel_add(const Tensor<T>& input, const Tensor<T>& per_channel) {
  require_channel_vector(input, per_channel, "channel_add");
  Tensor<T> out = input;
  const std::size_t n = input.size() / input.dim(0);
  for (std::size_t c = 0; c < input.dim(0); ++c) {
    T* p = out.data() + c * n;
    for (std::size_t i = 0; i < n; ++i) p[i] += per_channel[c];
  }
  return out;
}

template <typename T>
Tensor<T> channel_sum(const Tensor<T>& input) {
  Tensor<T> out({input.dim(0)});
  const std::size_t n = input.size() / input.dim(0);
  for (std::size_t c = 0; c < input.dim(0); ++c) {
    const T* p = input.data() + c * n;
    T acc = 0;
    for (std::size_t i = 0; i < n; ++i) acc += p[i];
    out[c] = acc;
  }
  return out;
}

template <typename T>
Tensor<T> channel_dot(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("channel_dot: shape mismatch " + to_string(a.shape()) +
                     " vs " + to_string(b.shape()));
  }
  Tensor<T> out({a.dim(0)});
  const std::size_t n = a.size() / a.dim(0);
  for (std::size_t c = 0; c < a.dim(0); ++c) {
    const T* p = a.data() + c * n;
    const T* q = b.data() + c * n;
    T acc = 0;
    for (std::size_t i = 0; i < n; ++i) acc += p[i] * q[i];
    out[c] = acc;
  }
  return out;
}

template <typename T>
Tensor<T> channel_broadcast(const Tensor<T>& per_channel, const Shape& shape) {
  Tensor<T> zeros(shape);
  return channel_add(zeros, per_channel);
}

#define EARTHGAN_INSTANTIATE(T)                                                \
  template Tensor<T> conv3d_valid(const Tensor<T>&, const Tensor<T>&,          \
                                  const Tensor<T>*);                           \
  template Tensor<T> conv3d_input_grad(const Tensor<T>&, const Tensor<T>&,     \
                                       const Shape&);                          \
  template Tensor<T> conv3d_kernel_grad(const Tensor<T>&, const Tensor<T>&,    \
                                        std::size_t);                          \
  template Tensor<T> resample_axis(const Tensor<T>&, std::size_t, std::size_t, \
                                   bool);                                      \
  template Tensor<T> resample_axis_adjoint(const Tensor<T>&, std::size_t,      \
                                           std::size_t, bool);                 \
  template Tensor<T> trilinear_resize(const Tensor<T>&, std::size_t);          \
  template Tensor<T> trilinear_resize_adjoint(const Tensor<T>&, std::size_t,   \
                                              const Shape&);                   \
  template Tensor<T> avg_pool2(const Tensor<T>&);                              \
  template Tensor<T> avg_pool2_adjoint(const Tensor<T>&, const Shape&);        \
  template Tensor<T> crop(const Tensor<T>&, const Index4&, const Index4&);     \
  template Tensor<T> uncrop(const Tensor<T>&, const Index4&, const Shape&);    \
  template Tensor<T> concat0(const Tensor<T>&, const Tensor<T>&);              \
  template Tensor<T> channel_scale(const Tensor<T>&, const Tensor<T>&);        \
  template Tensor<T> channel_add(const Tensor<T>&, const Tensor<T>&);          \
  template Tensor<T> channel_sum(const Tensor<T>&);                            \
  template Tensor<T> channel_dot(const Tensor<T>&, const Tensor<T>&);          \
  template Tensor<T> channel_broadcast(const Tensor<T>&, const Shape&);

EARTHGAN_INSTANTIATE(float)
EARTHGAN_INSTANTIATE(double)

#undef EARTHGAN_INSTANTIATE

}  // namespace earthgan::kernels
