#include "adfnet/dynamic_ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "adfnet/kink_tracker.hpp"
#include "adfnet/parallel.hpp"
#include "gemm.hpp"

namespace adfnet {
namespace {

template <class T>
void check_field(const Shape& f, const BasicTensor<T>& kernels, std::size_t k) {
  const Shape& s = kernels.shape();
  if (s != Shape{f.n, k * k * f.c, f.h, f.w})
    throw ShapeError("kernel field " + s.str() + " does not match features " + f.str() +
                     " for k=" + std::to_string(k));
}

struct TapShift {
  long dy, dx;
};

TapShift tap_shift(std::size_t tap, std::size_t k, std::size_t dilation) {
  const long half = static_cast<long>(k / 2);
  return {(static_cast<long>(tap / k) - half) * static_cast<long>(dilation),
          (static_cast<long>(tap % k) - half) * static_cast<long>(dilation)};
}

// Output columns x in [lo, hi) read source column x + dx inside [0, w).
std::pair<long, long> valid_cols(long dx, long w) {
  const long lo = std::clamp(-dx, 0L, w);
  return {lo, std::clamp(w - dx, lo, w)};
}

}  // namespace

template <class T>
BasicTensor<T> dconv_apply(const BasicTensor<T>& f, const BasicTensor<T>& kernels, std::size_t k,
                           std::size_t dilation) {
  const Shape& s = f.shape();
  check_field(s, kernels, k);
  BasicTensor<T> out(s);
  const long h = static_cast<long>(s.h), wd = static_cast<long>(s.w);
  parallel_for(s.n * s.c, [&](std::size_t nc) {
    const std::size_t n = nc / s.c, c = nc % s.c;
    const T* src = f.plane(n, c);
    T* dst = out.plane(n, c);
    for (std::size_t j = 0; j < k * k; ++j) {
      const auto [dy, dx] = tap_shift(j, k, dilation);
      const auto [lo, hi] = valid_cols(dx, wd);
      const T* ker = kernels.plane(n, j * s.c + c);
      for (long y = std::max(0L, -dy); y < std::min(h, h - dy); ++y) {
        const T* srow = src + (y + dy) * wd + dx;
        const T* krow = ker + y * wd;
        T* drow = dst + y * wd;
        for (long x = lo; x < hi; ++x) drow[x] += srow[x] * krow[x];
      }
    }
  });
  return out;
}

template <class T>
BasicTensor<T> dconv_apply_backward_input(const BasicTensor<T>& grad_out,
                                          const BasicTensor<T>& kernels, std::size_t k,
                                          std::size_t dilation) {
  const Shape& s = grad_out.shape();
  check_field(s, kernels, k);
  BasicTensor<T> grad(s);
  const long h = static_cast<long>(s.h), wd = static_cast<long>(s.w);
  parallel_for(s.n * s.c, [&](std::size_t nc) {
    const std::size_t n = nc / s.c, c = nc % s.c;
    const T* g = grad_out.plane(n, c);
    T* dst = grad.plane(n, c);
    for (std::size_t j = 0; j < k * k; ++j) {
      const auto [dy, dx] = tap_shift(j, k, dilation);
      const auto [lo, hi] = valid_cols(dx, wd);
      const T* ker = kernels.plane(n, j * s.c + c);
      for (long y = std::max(0L, -dy); y < std::min(h, h - dy); ++y) {
        T* drow = dst + (y + dy) * wd + dx;
        const T* grow = g + y * wd;
        const T* krow = ker + y * wd;
        for (long x = lo; x < hi; ++x) drow[x] += grow[x] * krow[x];
      }
    }
  });
  return grad;
}

template <class T>
BasicTensor<T> dconv_apply_backward_kernel(const BasicTensor<T>& f, const BasicTensor<T>& grad_out,
                                           std::size_t k, std::size_t dilation) {
  const Shape& s = f.shape();
  if (grad_out.shape() != s) throw ShapeError("dconv_apply_backward_kernel: shape mismatch");
  const std::size_t taps = k * k;
  BasicTensor<T> grad({s.n, taps * s.c, s.h, s.w});
  const long h = static_cast<long>(s.h), wd = static_cast<long>(s.w);
  parallel_for(s.n * s.c * taps, [&](std::size_t idx) {
    const std::size_t j = idx % taps, c = (idx / taps) % s.c, n = idx / (taps * s.c);
    const auto [dy, dx] = tap_shift(j, k, dilation);
    const auto [lo, hi] = valid_cols(dx, wd);
    const T* src = f.plane(n, c);
    const T* g = grad_out.plane(n, c);
    T* dst = grad.plane(n, j * s.c + c);
    for (long y = std::max(0L, -dy); y < std::min(h, h - dy); ++y) {
      const T* srow = src + (y + dy) * wd + dx;
      const T* grow = g + y * wd;
      T* drow = dst + y * wd;
      for (long x = lo; x < hi; ++x) drow[x] = grow[x] * srow[x];
    }
  });
  return grad;
}

template <class T>
OffsetField<T> split_offset_head(const BasicTensor<T>& raw, std::size_t k) {
  const std::size_t taps = k * k;
  if (raw.shape().c != 3 * taps)
    throw ChannelMismatch("offset head must emit 3*k*k = " + std::to_string(3 * taps) +
                          " channels, got " + std::to_string(raw.shape().c));
  return {slice_channels(raw, 0, 2 * taps), sigmoid(slice_channels(raw, 2 * taps, taps))};
}

namespace {

// Bilinear interpolation weights and their derivatives for one fractional site.
template <class T>
struct Bilinear {
  long y0 = 0, x0 = 0;
  T ly = 0, lx = 0;
  bool inside = false;

  Bilinear(T row, T col, long h, long w) {
    inside = row > T(-1) && col > T(-1) && row < T(h) && col < T(w);
    if (!inside) return;
    const T fy = std::floor(row), fx = std::floor(col);
    y0 = static_cast<long>(fy);
    x0 = static_cast<long>(fx);
    ly = row - fy;
    lx = col - fx;
  }
};

template <class T>
struct Corners {
  T v00, v01, v10, v11;
};

template <class T>
Corners<T> corners(const T* plane, const Bilinear<T>& b, long h, long w) {
  auto tap = [&](long y, long x) {
    return (y >= 0 && y < h && x >= 0 && x < w) ? plane[y * w + x] : T(0);
  };
  return {tap(b.y0, b.x0), tap(b.y0, b.x0 + 1), tap(b.y0 + 1, b.x0), tap(b.y0 + 1, b.x0 + 1)};
}

template <class T>
T interpolate(const Corners<T>& q, const Bilinear<T>& b) {
  const T hy = T(1) - b.ly, hx = T(1) - b.lx;
  return hy * hx * q.v00 + hy * b.lx * q.v01 + b.ly * hx * q.v10 + b.ly * b.lx * q.v11;
}

struct DeformDims {
  std::size_t n, c, h, w, k, taps, c_out;
  std::size_t pixels() const { return h * w; }
};

template <class T>
struct FieldView {
  const BasicTensor<T>& offsets;
  const BasicTensor<T>& modulation;
};

template <class T>
DeformDims deform_dims(const BasicTensor<T>& f, const FieldView<T>& field,
                       const BasicTensor<T>& weight) {
  const Shape& s = f.shape();
  const Shape& ws = weight.shape();
  if (ws.h != ws.w || ws.h % 2 == 0) throw ShapeError("deform_conv: kernel must be odd and square");
  if (ws.c != s.c)
    throw ChannelMismatch("deform_conv: input has " + std::to_string(s.c) + " channels, weight " +
                          ws.str());
  DeformDims d{s.n, s.c, s.h, s.w, ws.h, ws.h * ws.h, ws.n};
  if (field.offsets.shape() != Shape{s.n, 2 * d.taps, s.h, s.w} ||
      field.modulation.shape() != Shape{s.n, d.taps, s.h, s.w})
    throw ShapeError("deform_conv: offset field does not match features " + s.str());
  return d;
}

template <class T>
Bilinear<T> site(const DeformDims& d, const FieldView<T>& field, std::size_t n, std::size_t j,
                 std::size_t p) {
  const long half = static_cast<long>(d.k / 2);
  const long y = static_cast<long>(p / d.w), x = static_cast<long>(p % d.w);
  const T off_x = field.offsets.plane(n, 2 * j)[p];
  const T off_y = field.offsets.plane(n, 2 * j + 1)[p];
  const T row = T(y + static_cast<long>(j / d.k) - half) + off_y;
  const T col = T(x + static_cast<long>(j % d.k) - half) + off_x;
  return Bilinear<T>(row, col, static_cast<long>(d.h), static_cast<long>(d.w));
}

// Modulated samples, rows (c, j), columns = pixels.
template <class T>
std::vector<T> deform_columns(const BasicTensor<T>& f, const FieldView<T>& field,
                              const DeformDims& d, std::size_t n) {
  std::vector<T> cols(d.c * d.taps * d.pixels());
  const long h = static_cast<long>(d.h), w = static_cast<long>(d.w);
  parallel_for(d.taps, [&](std::size_t j) {
    const T* mod = field.modulation.plane(n, j);
    for (std::size_t p = 0; p < d.pixels(); ++p) {
      const Bilinear<T> b = site(d, field, n, j, p);
      for (std::size_t c = 0; c < d.c; ++c) {
        T& dst = cols[(c * d.taps + j) * d.pixels() + p];
        dst = b.inside ? mod[p] * interpolate(corners(f.plane(n, c), b, h, w), b) : T(0);
      }
    }
  });
  return cols;
}

template <class T>
void fold_lattice_state(const FieldView<T>& field, const DeformDims& d, std::size_t n) {
  if (!KinkTracker::active()) return;
  std::uint64_t acc = 0;
  for (std::size_t j = 0; j < d.taps; ++j)
    for (std::size_t p = 0; p < d.pixels(); ++p) {
      const Bilinear<T> b = site(d, field, n, j, p);
      const std::uint64_t cell =
          b.inside ? (static_cast<std::uint64_t>(b.y0 + 8) << 32) ^ static_cast<std::uint64_t>(b.x0 + 8)
                   : ~0ull;
      acc += KinkTracker::mix((n * d.taps + j) * d.pixels() + p, cell);
    }
  KinkTracker::fold(acc);
}

}  // namespace

template <class T>
BasicTensor<T> deform_conv(const BasicTensor<T>& f, const BasicTensor<T>& offsets,
                           const BasicTensor<T>& modulation, const BasicTensor<T>& weight,
                           const BasicTensor<T>* bias) {
  const FieldView<T> field{offsets, modulation};
  const DeformDims d = deform_dims(f, field, weight);
  BasicTensor<T> out({d.n, d.c_out, d.h, d.w});
  if (bias) {
    if (bias->shape() != Shape{1, d.c_out, 1, 1}) throw ShapeError("deform_conv: bias shape");
    for (std::size_t n = 0; n < d.n; ++n)
      for (std::size_t o = 0; o < d.c_out; ++o) std::fill_n(out.plane(n, o), d.pixels(), (*bias)[o]);
  }
  const std::size_t kk = d.c * d.taps;
  for (std::size_t n = 0; n < d.n; ++n) {
    fold_lattice_state(field, d, n);
    const std::vector<T> cols = deform_columns(f, field, d, n);
    detail::gemm_nn(d.c_out, d.pixels(), kk, weight.data(), kk, cols.data(), d.pixels(),
                    out.plane(n, 0), d.pixels());
  }
  return out;
}

template <class T>
DeformConvGrads<T> deform_conv_backward(const BasicTensor<T>& f, const BasicTensor<T>& offsets,
                                        const BasicTensor<T>& modulation,
                                        const BasicTensor<T>& weight,
                                        const BasicTensor<T>& grad_out) {
  const FieldView<T> field{offsets, modulation};
  const DeformDims d = deform_dims(f, field, weight);
  if (grad_out.shape() != Shape{d.n, d.c_out, d.h, d.w})
    throw ShapeError("deform_conv_backward: gradient shape " + grad_out.shape().str());
  DeformConvGrads<T> g{BasicTensor<T>(f.shape()), BasicTensor<T>(field.offsets.shape()),
                       BasicTensor<T>(field.modulation.shape()), BasicTensor<T>(weight.shape()),
                       bias_grad(grad_out)};
  const std::size_t kk = d.c * d.taps, px = d.pixels();
  const long h = static_cast<long>(d.h), w = static_cast<long>(d.w);
  std::vector<T> grad_cols(kk * px);
  for (std::size_t n = 0; n < d.n; ++n) {
    const std::vector<T> cols = deform_columns(f, field, d, n);
    detail::gemm_nt(d.c_out, kk, px, grad_out.plane(n, 0), px, cols.data(), px, g.weight.data(), kk);
    std::fill(grad_cols.begin(), grad_cols.end(), T(0));
    detail::gemm_tn(kk, px, d.c_out, weight.data(), kk, grad_out.plane(n, 0), px, grad_cols.data(), px);

    // Input gradient: each channel scatters into its own plane.
    parallel_for(d.c, [&](std::size_t c) {
      T* dst = g.input.plane(n, c);
      auto add = [&](long y, long x, T v) {
        if (y >= 0 && y < h && x >= 0 && x < w) dst[y * w + x] += v;
      };
      for (std::size_t j = 0; j < d.taps; ++j) {
        const T* mod = field.modulation.plane(n, j);
        const T* gc = grad_cols.data() + (c * d.taps + j) * px;
        for (std::size_t p = 0; p < px; ++p) {
          const Bilinear<T> b = site(d, field, n, j, p);
          if (!b.inside) continue;
          const T v = gc[p] * mod[p];
          const T hy = T(1) - b.ly, hx = T(1) - b.lx;
          add(b.y0, b.x0, v * hy * hx);
          add(b.y0, b.x0 + 1, v * hy * b.lx);
          add(b.y0 + 1, b.x0, v * b.ly * hx);
          add(b.y0 + 1, b.x0 + 1, v * b.ly * b.lx);
        }
      }
    });

    // Offset and modulation gradients: each (tap, pixel) sums over channels.
    parallel_for(d.taps, [&](std::size_t j) {
      const T* mod = field.modulation.plane(n, j);
      T* g_mod = g.modulation.plane(n, j);
      T* g_off_x = g.offsets.plane(n, 2 * j);
      T* g_off_y = g.offsets.plane(n, 2 * j + 1);
      for (std::size_t p = 0; p < px; ++p) {
        const Bilinear<T> b = site(d, field, n, j, p);
        if (!b.inside) continue;
        const T hy = T(1) - b.ly, hx = T(1) - b.lx;
        T acc_m = 0, acc_y = 0, acc_x = 0;
        for (std::size_t c = 0; c < d.c; ++c) {
          const T gc = grad_cols[(c * d.taps + j) * px + p];
          const Corners<T> q = corners(f.plane(n, c), b, h, w);
          acc_m += gc * interpolate(q, b);
          acc_y += gc * (hx * (q.v10 - q.v00) + b.lx * (q.v11 - q.v01));
          acc_x += gc * (hy * (q.v01 - q.v00) + b.ly * (q.v11 - q.v10));
        }
        g_mod[p] = acc_m;
        g_off_y[p] = acc_y * mod[p];
        g_off_x[p] = acc_x * mod[p];
      }
    });
  }
  return g;
}

template <class T>
KernelField<T> sekg_generate(const BasicTensor<T>& f, const SekgParams<T>& p, std::size_t k) {
  const BasicTensor<T> spatial = depthwise_separable_conv(f, p.depthwise, p.pointwise);
  const BasicTensor<T> channel = conv2d(global_avg_pool(f), p.channel_map);
  BasicTensor<T> raw = conv2d(add(spatial, channel), p.head);
  if (raw.shape().c != k * k * f.shape().c)
    throw ChannelMismatch("kernel head emits " + std::to_string(raw.shape().c) +
                          " maps, expected k*k*c = " + std::to_string(k * k * f.shape().c));
  return {std::move(raw), k};
}

template <class T>
BasicTensor<T> mdconv(const BasicTensor<T>& f, const MdconvParams<T>& p) {
  const std::size_t k = p.main.weight.shape().h;
  const OffsetField<T> field = split_offset_head(conv2d(f, p.offset_head), k);
  return deform_conv(f, field, p.main.weight, p.main.bias_ptr());
}

template <class T>
SharedKernels<T> shared_kernel_generate(const BasicTensor<T>& f, const MdconvParams<T>& mp,
                                        const ConvParams<T>& reduce, const SekgParams<T>& sp,
                                        std::size_t k) {
  BasicTensor<T> fm = mdconv(f, mp);
  BasicTensor<T> fr = conv2d(fm, reduce);
  KernelField<T> w = sekg_generate(fr, sp, k);
  return {std::move(fm), std::move(fr), std::move(w)};
}

#define ADFNET_INSTANTIATE(T)                                                                   \
  template BasicTensor<T> dconv_apply(const BasicTensor<T>&, const BasicTensor<T>&, std::size_t, \
                                      std::size_t);                                             \
  template BasicTensor<T> dconv_apply_backward_input(const BasicTensor<T>&,                     \
                                                     const BasicTensor<T>&, std::size_t,        \
                                                     std::size_t);                              \
  template BasicTensor<T> dconv_apply_backward_kernel(const BasicTensor<T>&,                    \
                                                      const BasicTensor<T>&, std::size_t,       \
                                                      std::size_t);                             \
  template OffsetField<T> split_offset_head(const BasicTensor<T>&, std::size_t);                \
  template BasicTensor<T> deform_conv(const BasicTensor<T>&, const BasicTensor<T>&,             \
                                      const BasicTensor<T>&, const BasicTensor<T>&,             \
                                      const BasicTensor<T>*);                                   \
  template DeformConvGrads<T> deform_conv_backward(const BasicTensor<T>&, const BasicTensor<T>&, \
                                                   const BasicTensor<T>&, const BasicTensor<T>&, \
                                                   const BasicTensor<T>&);                      \
  template KernelField<T> sekg_generate(const BasicTensor<T>&, const SekgParams<T>&,            \
                                        std::size_t);                                           \
  template BasicTensor<T> mdconv(const BasicTensor<T>&, const MdconvParams<T>&);                \
  template SharedKernels<T> shared_kernel_generate(const BasicTensor<T>&,                       \
                                                   const MdconvParams<T>&, const ConvParams<T>&, \
                                                   const SekgParams<T>&, std::size_t);

ADFNET_INSTANTIATE(float)
ADFNET_INSTANTIATE(double)
#undef ADFNET_INSTANTIATE

}  // namespace adfnet
