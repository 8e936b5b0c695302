#include "naive_ops.hpp"

#include <cmath>
#include <stdexcept>

namespace adfnet::reference {

template <class T>
BasicTensor<T> conv2d(const BasicTensor<T>& x, const BasicTensor<T>& w, const BasicTensor<T>* bias,
                      std::size_t stride, std::size_t pad, std::size_t dilation,
                      std::size_t groups) {
  const Shape xs = x.shape(), ws = w.shape();
  const std::size_t cout = ws.n, cin_g = ws.c, k = ws.h;
  if (xs.c != cin_g * groups) throw std::invalid_argument("reference conv2d: channel mismatch");
  const std::size_t cout_g = cout / groups;
  const long span = static_cast<long>(dilation * (k - 1) + 1);
  const long ho = (static_cast<long>(xs.h + 2 * pad) - span) / static_cast<long>(stride) + 1;
  const long wo = (static_cast<long>(xs.w + 2 * pad) - span) / static_cast<long>(stride) + 1;
  BasicTensor<T> out({xs.n, cout, static_cast<std::size_t>(ho), static_cast<std::size_t>(wo)});
  for (std::size_t n = 0; n < xs.n; ++n)
    for (std::size_t o = 0; o < cout; ++o)
      for (long y = 0; y < ho; ++y)
        for (long xo = 0; xo < wo; ++xo) {
          double acc = bias ? static_cast<double>((*bias)[o]) : 0.0;
          const std::size_t g = o / cout_g;
          for (std::size_t ci = 0; ci < cin_g; ++ci)
            for (std::size_t ky = 0; ky < k; ++ky)
              for (std::size_t kx = 0; kx < k; ++kx) {
                const long iy = y * static_cast<long>(stride) - static_cast<long>(pad) +
                                static_cast<long>(ky * dilation);
                const long ix = xo * static_cast<long>(stride) - static_cast<long>(pad) +
                                static_cast<long>(kx * dilation);
                if (iy < 0 || ix < 0 || iy >= static_cast<long>(xs.h) ||
                    ix >= static_cast<long>(xs.w))
                  continue;
                acc += static_cast<double>(w(o, ci, ky, kx)) *
                       static_cast<double>(x(n, g * cin_g + ci, static_cast<std::size_t>(iy),
                                             static_cast<std::size_t>(ix)));
              }
          out(n, o, static_cast<std::size_t>(y), static_cast<std::size_t>(xo)) =
              static_cast<T>(acc);
        }
  return out;
}

template <class T>
BasicTensor<T> conv2d_transposed(const BasicTensor<T>& x, const BasicTensor<T>& w,
                                 const BasicTensor<T>* bias, std::size_t stride, std::size_t pad,
                                 std::size_t dilation, std::size_t groups) {
  const Shape xs = x.shape(), ws = w.shape();
  const std::size_t cin = ws.n, cout_g = ws.c, k = ws.h;
  if (xs.c != cin) throw std::invalid_argument("reference conv2d_transposed: channel mismatch");
  const std::size_t cin_g = cin / groups;
  const std::size_t cout = cout_g * groups;
  const std::size_t ho = (xs.h - 1) * stride + dilation * (k - 1) + 1 - 2 * pad;
  const std::size_t wo = (xs.w - 1) * stride + dilation * (k - 1) + 1 - 2 * pad;
  std::vector<double> acc(xs.n * cout * ho * wo, 0.0);
  for (std::size_t n = 0; n < xs.n; ++n)
    for (std::size_t ci = 0; ci < cin; ++ci) {
      const std::size_t g = ci / cin_g;
      for (std::size_t y = 0; y < xs.h; ++y)
        for (std::size_t xi = 0; xi < xs.w; ++xi)
          for (std::size_t oc = 0; oc < cout_g; ++oc)
            for (std::size_t ky = 0; ky < k; ++ky)
              for (std::size_t kx = 0; kx < k; ++kx) {
                const long oy = static_cast<long>(y * stride + ky * dilation) -
                                static_cast<long>(pad);
                const long ox = static_cast<long>(xi * stride + kx * dilation) -
                                static_cast<long>(pad);
                if (oy < 0 || ox < 0 || oy >= static_cast<long>(ho) ||
                    ox >= static_cast<long>(wo))
                  continue;
                const std::size_t o = g * cout_g + oc;
                acc[((n * cout + o) * ho + static_cast<std::size_t>(oy)) * wo +
                    static_cast<std::size_t>(ox)] +=
                    static_cast<double>(x(n, ci, y, xi)) * static_cast<double>(w(ci, oc, ky, kx));
              }
    }
  BasicTensor<T> out({xs.n, cout, ho, wo});
  for (std::size_t n = 0; n < xs.n; ++n)
    for (std::size_t o = 0; o < cout; ++o)
      for (std::size_t i = 0; i < ho * wo; ++i) {
        const double b = bias ? static_cast<double>((*bias)[o]) : 0.0;
        out.plane(n, o)[i] = static_cast<T>(acc[(n * cout + o) * ho * wo + i] + b);
      }
  return out;
}

namespace {

template <class T>
T at_or_zero(const BasicTensor<T>& x, std::size_t n, std::size_t c, long y, long xx) {
  if (y < 0 || xx < 0 || y >= static_cast<long>(x.shape().h) ||
      xx >= static_cast<long>(x.shape().w))
    return T(0);
  return x(n, c, static_cast<std::size_t>(y), static_cast<std::size_t>(xx));
}

}  // namespace

template <class T>
BasicTensor<T> unfold(const BasicTensor<T>& x, std::size_t k, std::size_t dilation) {
  const Shape s = x.shape();
  const long half = static_cast<long>(k / 2);
  const long d = static_cast<long>(dilation);
  BasicTensor<T> out({s.n, s.c * k * k, s.h, s.w});
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t c = 0; c < s.c; ++c)
      for (std::size_t j = 0; j < k * k; ++j) {
        const long dy = (static_cast<long>(j / k) - half) * d;
        const long dx = (static_cast<long>(j % k) - half) * d;
        for (std::size_t y = 0; y < s.h; ++y)
          for (std::size_t xx = 0; xx < s.w; ++xx)
            out(n, c * k * k + j, y, xx) =
                at_or_zero(x, n, c, static_cast<long>(y) + dy, static_cast<long>(xx) + dx);
      }
  return out;
}

template <class T>
BasicTensor<T> dconv(const BasicTensor<T>& f, const BasicTensor<T>& kernels, std::size_t k,
                     std::size_t dilation) {
  const Shape s = f.shape();
  if (kernels.shape() != Shape{s.n, k * k * s.c, s.h, s.w})
    throw std::invalid_argument("reference dconv: kernel field shape");
  const long half = static_cast<long>(k / 2);
  const long d = static_cast<long>(dilation);
  BasicTensor<T> out(s);
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t c = 0; c < s.c; ++c)
      for (std::size_t y = 0; y < s.h; ++y)
        for (std::size_t x = 0; x < s.w; ++x) {
          double acc = 0.0;
          for (std::size_t ky = 0; ky < k; ++ky)
            for (std::size_t kx = 0; kx < k; ++kx) {
              const std::size_t j = ky * k + kx;
              const long iy = static_cast<long>(y) + (static_cast<long>(ky) - half) * d;
              const long ix = static_cast<long>(x) + (static_cast<long>(kx) - half) * d;
              acc += static_cast<double>(at_or_zero(f, n, c, iy, ix)) *
                     static_cast<double>(kernels(n, j * s.c + c, y, x));
            }
          out(n, c, y, x) = static_cast<T>(acc);
        }
  return out;
}

template <class T>
T bilinear(const BasicTensor<T>& x, std::size_t n, std::size_t c, double row, double col) {
  const double fy = std::floor(row), fx = std::floor(col);
  const long y0 = static_cast<long>(fy), x0 = static_cast<long>(fx);
  const double wy = row - fy, wx = col - fx;
  double v = 0.0;
  v += (1 - wy) * (1 - wx) * static_cast<double>(at_or_zero(x, n, c, y0, x0));
  v += (1 - wy) * wx * static_cast<double>(at_or_zero(x, n, c, y0, x0 + 1));
  v += wy * (1 - wx) * static_cast<double>(at_or_zero(x, n, c, y0 + 1, x0));
  v += wy * wx * static_cast<double>(at_or_zero(x, n, c, y0 + 1, x0 + 1));
  return static_cast<T>(v);
}

template <class T>
BasicTensor<T> deform_conv(const BasicTensor<T>& f, const BasicTensor<T>& offsets,
                           const BasicTensor<T>& modulation, const BasicTensor<T>& weight,
                           const BasicTensor<T>* bias) {
  const Shape s = f.shape();
  const std::size_t cout = weight.shape().n, k = weight.shape().h;
  const long half = static_cast<long>(k / 2);
  BasicTensor<T> out({s.n, cout, s.h, s.w});
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t o = 0; o < cout; ++o)
      for (std::size_t y = 0; y < s.h; ++y)
        for (std::size_t x = 0; x < s.w; ++x) {
          double acc = bias ? static_cast<double>((*bias)[o]) : 0.0;
          for (std::size_t c = 0; c < s.c; ++c)
            for (std::size_t j = 0; j < k * k; ++j) {
              const double row = static_cast<double>(y) +
                                 static_cast<double>(static_cast<long>(j / k) - half) +
                                 static_cast<double>(offsets(n, 2 * j + 1, y, x));
              const double col = static_cast<double>(x) +
                                 static_cast<double>(static_cast<long>(j % k) - half) +
                                 static_cast<double>(offsets(n, 2 * j, y, x));
              acc += static_cast<double>(weight(o, c, j / k, j % k)) *
                     static_cast<double>(modulation(n, j, y, x)) *
                     static_cast<double>(bilinear(f, n, c, row, col));
            }
          out(n, o, y, x) = static_cast<T>(acc);
        }
  return out;
}

template <class T>
BasicTensor<T> mdconv(const BasicTensor<T>& f, const BasicTensor<T>& offset_weight,
                      const BasicTensor<T>* offset_bias, const BasicTensor<T>& main_weight,
                      const BasicTensor<T>* main_bias) {
  const std::size_t k = main_weight.shape().h;
  const std::size_t taps = k * k;
  const std::size_t ko = offset_weight.shape().h;
  const BasicTensor<T> raw = conv2d(f, offset_weight, offset_bias, 1, ko / 2, 1, 1);
  const Shape s = raw.shape();
  BasicTensor<T> offsets({s.n, 2 * taps, s.h, s.w});
  BasicTensor<T> modulation({s.n, taps, s.h, s.w});
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t y = 0; y < s.h; ++y)
      for (std::size_t x = 0; x < s.w; ++x) {
        for (std::size_t ch = 0; ch < 2 * taps; ++ch) offsets(n, ch, y, x) = raw(n, ch, y, x);
        for (std::size_t j = 0; j < taps; ++j) {
          const double v = static_cast<double>(raw(n, 2 * taps + j, y, x));
          modulation(n, j, y, x) = static_cast<T>(1.0 / (1.0 + std::exp(-v)));
        }
      }
  return deform_conv(f, offsets, modulation, main_weight, main_bias);
}

#define ADFNET_INSTANTIATE(T)                                                                    \
  template BasicTensor<T> conv2d(const BasicTensor<T>&, const BasicTensor<T>&,                   \
                                 const BasicTensor<T>*, std::size_t, std::size_t, std::size_t,   \
                                 std::size_t);                                                   \
  template BasicTensor<T> conv2d_transposed(const BasicTensor<T>&, const BasicTensor<T>&,        \
                                            const BasicTensor<T>*, std::size_t, std::size_t,     \
                                            std::size_t, std::size_t);                           \
  template BasicTensor<T> unfold(const BasicTensor<T>&, std::size_t, std::size_t);               \
  template BasicTensor<T> dconv(const BasicTensor<T>&, const BasicTensor<T>&, std::size_t,       \
                                std::size_t);                                                    \
  template T bilinear(const BasicTensor<T>&, std::size_t, std::size_t, double, double);          \
  template BasicTensor<T> deform_conv(const BasicTensor<T>&, const BasicTensor<T>&,              \
                                      const BasicTensor<T>&, const BasicTensor<T>&,              \
                                      const BasicTensor<T>*);                                    \
  template BasicTensor<T> mdconv(const BasicTensor<T>&, const BasicTensor<T>&,                   \
                                 const BasicTensor<T>*, const BasicTensor<T>&,                   \
                                 const BasicTensor<T>*);

ADFNET_INSTANTIATE(float)
ADFNET_INSTANTIATE(double)
#undef ADFNET_INSTANTIATE

}  // namespace adfnet::reference
