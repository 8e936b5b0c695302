#include "adfnet/static_ops.hpp"

#include <algorithm>
#include <string>
#include <vector>

#include "adfnet/parallel.hpp"
#include "gemm.hpp"

namespace adfnet {

std::size_t conv_output_extent(std::size_t in, std::size_t k, const ConvGeometry& g) {
  const std::size_t span = g.dilation * (k - 1) + 1;
  if (in + 2 * g.pad < span) throw ShapeError("convolution window larger than padded input");
  return (in + 2 * g.pad - span) / g.stride + 1;
}

std::size_t conv_transposed_output_extent(std::size_t in, std::size_t k, const ConvGeometry& g) {
  const std::size_t full = (in - 1) * g.stride + g.dilation * (k - 1) + 1;
  if (full < 2 * g.pad) throw ShapeError("transposed convolution padding exceeds output");
  return full - 2 * g.pad;
}

namespace {

struct ConvDims {
  std::size_t batch, c_in, c_out, k, h, w, ho, wo, groups, cin_g, cout_g;
  std::size_t cols_rows() const { return cin_g * k * k; }
  std::size_t pixels() const { return ho * wo; }
};

void check_geometry(const ConvGeometry& g) {
  if (g.stride == 0 || g.dilation == 0 || g.groups == 0)
    throw std::invalid_argument("convolution stride, dilation and groups must be >= 1");
}

ConvDims conv_dims(const Shape& in, const Shape& weight, const ConvGeometry& g) {
  check_geometry(g);
  if (weight.h != weight.w) throw ShapeError("only square kernels are supported");
  ConvDims d{};
  d.batch = in.n;
  d.c_in = in.c;
  d.c_out = weight.n;
  d.k = weight.h;
  d.h = in.h;
  d.w = in.w;
  d.groups = g.groups;
  if (d.c_in % g.groups != 0 || d.c_out % g.groups != 0)
    throw ChannelMismatch("channels " + std::to_string(d.c_in) + "->" + std::to_string(d.c_out) +
                          " not divisible by groups " + std::to_string(g.groups));
  d.cin_g = d.c_in / g.groups;
  d.cout_g = d.c_out / g.groups;
  if (weight.c != d.cin_g)
    throw ChannelMismatch("conv2d: input has " + std::to_string(d.c_in) + " channels, weight " +
                          weight.str() + " expects " + std::to_string(weight.c * g.groups));
  d.ho = conv_output_extent(d.h, d.k, g);
  d.wo = conv_output_extent(d.w, d.k, g);
  return d;
}

bool is_pointwise(const ConvDims& d, const ConvGeometry& g) {
  return d.k == 1 && g.stride == 1 && g.pad == 0;
}

// Rows are (ci, ky, kx) for the channels of group `grp`; columns are output pixels.
template <class T>
void im2col(const BasicTensor<T>& x, std::size_t n, std::size_t grp, const ConvDims& d,
            const ConvGeometry& g, T* cols) {
  const auto k = d.k;
  parallel_for(d.cols_rows(), [&](std::size_t row) {
    const std::size_t ci = row / (k * k), ky = (row / k) % k, kx = row % k;
    const T* src = x.plane(n, grp * d.cin_g + ci);
    T* dst = cols + row * d.pixels();
    const long off_y = static_cast<long>(ky * g.dilation) - static_cast<long>(g.pad);
    const long off_x = static_cast<long>(kx * g.dilation) - static_cast<long>(g.pad);
    for (std::size_t oy = 0; oy < d.ho; ++oy) {
      const long iy = static_cast<long>(oy * g.stride) + off_y;
      T* out = dst + oy * d.wo;
      if (iy < 0 || iy >= static_cast<long>(d.h)) {
        std::fill_n(out, d.wo, T(0));
        continue;
      }
      const T* in_row = src + iy * static_cast<long>(d.w);
      if (g.stride == 1) {
        // Valid ox range: 0 <= ox + off_x < w.
        const long lo = std::clamp(-off_x, 0L, static_cast<long>(d.wo));
        const long hi = std::clamp(static_cast<long>(d.w) - off_x, lo, static_cast<long>(d.wo));
        std::fill(out, out + lo, T(0));
        std::copy(in_row + lo + off_x, in_row + hi + off_x, out + lo);
        std::fill(out + hi, out + d.wo, T(0));
      } else {
        for (std::size_t ox = 0; ox < d.wo; ++ox) {
          const long ix = static_cast<long>(ox * g.stride) + off_x;
          out[ox] = (ix >= 0 && ix < static_cast<long>(d.w)) ? in_row[ix] : T(0);
        }
      }
    }
  });
}

// Adjoint of im2col: accumulates columns into the input-gradient planes of one group.
template <class T>
void col2im(const T* cols, std::size_t n, std::size_t grp, const ConvDims& d,
            const ConvGeometry& g, BasicTensor<T>& grad_in) {
  const auto k = d.k;
  parallel_for(d.cin_g, [&](std::size_t ci) {
    T* dst = grad_in.plane(n, grp * d.cin_g + ci);
    for (std::size_t ky = 0; ky < k; ++ky)
      for (std::size_t kx = 0; kx < k; ++kx) {
        const T* src = cols + ((ci * k + ky) * k + kx) * d.pixels();
        const long off_y = static_cast<long>(ky * g.dilation) - static_cast<long>(g.pad);
        const long off_x = static_cast<long>(kx * g.dilation) - static_cast<long>(g.pad);
        for (std::size_t oy = 0; oy < d.ho; ++oy) {
          const long iy = static_cast<long>(oy * g.stride) + off_y;
          if (iy < 0 || iy >= static_cast<long>(d.h)) continue;
          T* row = dst + iy * static_cast<long>(d.w);
          const T* s = src + oy * d.wo;
          for (std::size_t ox = 0; ox < d.wo; ++ox) {
            const long ix = static_cast<long>(ox * g.stride) + off_x;
            if (ix >= 0 && ix < static_cast<long>(d.w)) row[ix] += s[ox];
          }
        }
      }
  });
}

}  // namespace

template <class T>
BasicTensor<T> conv2d(const BasicTensor<T>& x, const BasicTensor<T>& weight,
                      const BasicTensor<T>* bias, const ConvGeometry& g) {
  const ConvDims d = conv_dims(x.shape(), weight.shape(), g);
  if (bias && bias->shape() != Shape{1, d.c_out, 1, 1})
    throw ShapeError("conv2d: bias must be 1x" + std::to_string(d.c_out) + "x1x1");
  BasicTensor<T> out({d.batch, d.c_out, d.ho, d.wo});
  if (bias)
    for (std::size_t n = 0; n < d.batch; ++n)
      for (std::size_t co = 0; co < d.c_out; ++co)
        std::fill_n(out.plane(n, co), d.pixels(), (*bias)[co]);

  const bool direct = is_pointwise(d, g);
  std::vector<T> cols(direct ? 0 : d.cols_rows() * d.pixels());
  const std::size_t kk = d.cols_rows();
  for (std::size_t n = 0; n < d.batch; ++n)
    for (std::size_t grp = 0; grp < d.groups; ++grp) {
      const T* b = direct ? x.plane(n, grp * d.cin_g) : cols.data();
      if (!direct) im2col(x, n, grp, d, g, cols.data());
      detail::gemm_nn(d.cout_g, d.pixels(), kk, weight.data() + grp * d.cout_g * kk, kk, b,
                      d.pixels(), out.plane(n, grp * d.cout_g), d.pixels());
    }
  return out;
}

template <class T>
BasicTensor<T> conv2d_backward_input(const BasicTensor<T>& grad_out, const BasicTensor<T>& weight,
                                     const ConvGeometry& g, const Shape& input_shape) {
  const ConvDims d = conv_dims(input_shape, weight.shape(), g);
  if (grad_out.shape() != Shape{d.batch, d.c_out, d.ho, d.wo})
    throw ShapeError("conv2d_backward_input: gradient " + grad_out.shape().str() +
                     " does not match output extent");
  BasicTensor<T> grad_in(input_shape);
  const bool direct = is_pointwise(d, g);
  const std::size_t kk = d.cols_rows();
  std::vector<T> cols(kk * d.pixels());
  for (std::size_t n = 0; n < d.batch; ++n)
    for (std::size_t grp = 0; grp < d.groups; ++grp) {
      T* dst = direct ? grad_in.plane(n, grp * d.cin_g) : cols.data();
      if (!direct) std::fill(cols.begin(), cols.end(), T(0));
      detail::gemm_tn(kk, d.pixels(), d.cout_g, weight.data() + grp * d.cout_g * kk, kk,
                      grad_out.plane(n, grp * d.cout_g), d.pixels(), dst, d.pixels());
      if (!direct) col2im(cols.data(), n, grp, d, g, grad_in);
    }
  return grad_in;
}

template <class T>
BasicTensor<T> conv2d_backward_weight(const BasicTensor<T>& x, const BasicTensor<T>& grad_out,
                                      const ConvGeometry& g, const Shape& weight_shape) {
  const ConvDims d = conv_dims(x.shape(), weight_shape, g);
  if (grad_out.shape() != Shape{d.batch, d.c_out, d.ho, d.wo})
    throw ShapeError("conv2d_backward_weight: gradient " + grad_out.shape().str() +
                     " does not match output extent");
  BasicTensor<T> grad_w(weight_shape);
  const bool direct = is_pointwise(d, g);
  const std::size_t kk = d.cols_rows();
  std::vector<T> cols(direct ? 0 : kk * d.pixels());
  for (std::size_t n = 0; n < d.batch; ++n)
    for (std::size_t grp = 0; grp < d.groups; ++grp) {
      const T* b = direct ? x.plane(n, grp * d.cin_g) : cols.data();
      if (!direct) im2col(x, n, grp, d, g, cols.data());
      detail::gemm_nt(d.cout_g, kk, d.pixels(), grad_out.plane(n, grp * d.cout_g), d.pixels(), b,
                      d.pixels(), grad_w.data() + grp * d.cout_g * kk, kk);
    }
  return grad_w;
}

template <class T>
BasicTensor<T> bias_grad(const BasicTensor<T>& grad_out) {
  return reduce_sum_to(grad_out, Shape{1, grad_out.shape().c, 1, 1});
}

namespace {

Shape transposed_input_shape(const Shape& x, const Shape& weight, const ConvGeometry& g) {
  check_geometry(g);
  if (x.c != weight.n)
    throw ChannelMismatch("conv2d_transposed: input has " + std::to_string(x.c) +
                          " channels, weight " + weight.str() + " expects " +
                          std::to_string(weight.n));
  return {x.n, weight.c * g.groups, conv_transposed_output_extent(x.h, weight.h, g),
          conv_transposed_output_extent(x.w, weight.w, g)};
}

}  // namespace

template <class T>
BasicTensor<T> conv2d_transposed(const BasicTensor<T>& x, const BasicTensor<T>& weight,
                                 const BasicTensor<T>* bias, const ConvGeometry& g) {
  const Shape out_shape = transposed_input_shape(x.shape(), weight.shape(), g);
  BasicTensor<T> out = conv2d_backward_input(x, weight, g, out_shape);
  if (bias) {
    if (bias->shape() != Shape{1, out_shape.c, 1, 1})
      throw ShapeError("conv2d_transposed: bias must be 1x" + std::to_string(out_shape.c) + "x1x1");
    out = add(out, *bias);
  }
  return out;
}

template <class T>
BasicTensor<T> conv2d_transposed_backward_weight(const BasicTensor<T>& x,
                                                 const BasicTensor<T>& grad_out,
                                                 const ConvGeometry& g, const Shape& weight_shape) {
  // <g, C^T x> = <C g, x>: the forward convolution of grad_out against x.
  return conv2d_backward_weight(grad_out, x, g, weight_shape);
}

template <class T>
BasicTensor<T> depthwise_separable_conv(const BasicTensor<T>& x, const ConvParams<T>& depthwise,
                                        const ConvParams<T>& pointwise) {
  if (depthwise.geometry.groups != x.shape().c)
    throw ChannelMismatch("depthwise stage must have groups == channels");
  return conv2d(conv2d(x, depthwise), pointwise);
}

template <class T>
BasicTensor<T> global_avg_pool(const BasicTensor<T>& x) {
  return reduce_mean(x, {Axis::H, Axis::W});
}

template <class T>
UnfoldedPatches<T> unfold(const BasicTensor<T>& x, std::size_t k, std::size_t stride,
                          std::size_t dilation) {
  if (stride != 1) throw std::invalid_argument("unfold: only stride 1 is supported");
  if (k % 2 == 0 || dilation == 0) throw std::invalid_argument("unfold: k must be odd, dilation >= 1");
  const Shape& s = x.shape();
  const std::size_t taps = k * k;
  const long half = static_cast<long>(k / 2);
  BasicTensor<T> out({s.n, s.c * taps, s.h, s.w});
  parallel_for(s.n * s.c * taps, [&](std::size_t idx) {
    const std::size_t j = idx % taps, c = (idx / taps) % s.c, n = idx / (taps * s.c);
    const long dy = (static_cast<long>(j / k) - half) * static_cast<long>(dilation);
    const long dx = (static_cast<long>(j % k) - half) * static_cast<long>(dilation);
    const T* src = x.plane(n, c);
    T* dst = out.plane(n, c * taps + j);
    const long h = static_cast<long>(s.h), w = static_cast<long>(s.w);
    const long x_lo = std::clamp(-dx, 0L, w), x_hi = std::clamp(w - dx, x_lo, w);
    for (long y = 0; y < h; ++y) {
      const long sy = y + dy;
      if (sy < 0 || sy >= h) continue;
      std::copy(src + sy * w + x_lo + dx, src + sy * w + x_hi + dx, dst + y * w + x_lo);
    }
  });
  return {std::move(out), k, dilation};
}

template <class T>
BasicTensor<T> fold(const BasicTensor<T>& patches, std::size_t k, std::size_t dilation) {
  const Shape& s = patches.shape();
  const std::size_t taps = k * k;
  if (s.c % taps != 0) throw ShapeError("fold: channel count not a multiple of k*k");
  const std::size_t channels = s.c / taps;
  const long half = static_cast<long>(k / 2);
  BasicTensor<T> out({s.n, channels, s.h, s.w});
  parallel_for(s.n * channels, [&](std::size_t nc) {
    const std::size_t n = nc / channels, c = nc % channels;
    T* dst = out.plane(n, c);
    const long h = static_cast<long>(s.h), w = static_cast<long>(s.w);
    for (std::size_t j = 0; j < taps; ++j) {
      const long dy = (static_cast<long>(j / k) - half) * static_cast<long>(dilation);
      const long dx = (static_cast<long>(j % k) - half) * static_cast<long>(dilation);
      const T* src = patches.plane(n, c * taps + j);
      const long x_lo = std::clamp(-dx, 0L, w), x_hi = std::clamp(w - dx, x_lo, w);
      for (long y = 0; y < h; ++y) {
        const long sy = y + dy;
        if (sy < 0 || sy >= h) continue;
        T* drow = dst + sy * w + dx;
        const T* srow = src + y * w;
        for (long xx = x_lo; xx < x_hi; ++xx) drow[xx] += srow[xx];
      }
    }
  });
  return out;
}

#define ADFNET_INSTANTIATE(T)                                                                     \
  template BasicTensor<T> conv2d(const BasicTensor<T>&, const BasicTensor<T>&,                    \
                                 const BasicTensor<T>*, const ConvGeometry&);                     \
  template BasicTensor<T> conv2d_backward_input(const BasicTensor<T>&, const BasicTensor<T>&,     \
                                                const ConvGeometry&, const Shape&);               \
  template BasicTensor<T> conv2d_backward_weight(const BasicTensor<T>&, const BasicTensor<T>&,    \
                                                 const ConvGeometry&, const Shape&);              \
  template BasicTensor<T> bias_grad(const BasicTensor<T>&);                                       \
  template BasicTensor<T> conv2d_transposed(const BasicTensor<T>&, const BasicTensor<T>&,         \
                                            const BasicTensor<T>*, const ConvGeometry&);          \
  template BasicTensor<T> conv2d_transposed_backward_weight(                                      \
      const BasicTensor<T>&, const BasicTensor<T>&, const ConvGeometry&, const Shape&);           \
  template BasicTensor<T> depthwise_separable_conv(const BasicTensor<T>&, const ConvParams<T>&,   \
                                                   const ConvParams<T>&);                         \
  template BasicTensor<T> global_avg_pool(const BasicTensor<T>&);                                 \
  template UnfoldedPatches<T> unfold(const BasicTensor<T>&, std::size_t, std::size_t,             \
                                     std::size_t);                                                \
  template BasicTensor<T> fold(const BasicTensor<T>&, std::size_t, std::size_t);

ADFNET_INSTANTIATE(float)
ADFNET_INSTANTIATE(double)
#undef ADFNET_INSTANTIATE

}  // namespace adfnet
