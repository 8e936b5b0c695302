#include "adfnet/tensor.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <istream>
#include <ostream>
#include <sstream>

#include "adfnet/kink_tracker.hpp"
#include "adfnet/parallel.hpp"

namespace adfnet {

std::string Shape::str() const {
  std::ostringstream os;
  os << n << "x" << c << "x" << h << "x" << w;
  return os.str();
}

template <class T>
BasicTensor<T>::BasicTensor(Shape shape, T fill) : shape_(shape), data_(shape.numel(), fill) {}

template <class T>
BasicTensor<T>::BasicTensor(Shape shape, std::vector<T> values)
    : shape_(shape), data_(std::move(values)) {
  if (data_.size() != shape_.numel())
    throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                     " does not match shape " + shape_.str());
}

template <class T>
T& BasicTensor<T>::at(std::size_t n, std::size_t c, std::size_t y, std::size_t x) {
  if (n >= shape_.n || c >= shape_.c || y >= shape_.h || x >= shape_.w)
    throw std::out_of_range("tensor index out of range for shape " + shape_.str());
  return data_[offset(n, c, y, x)];
}

template <class T>
T BasicTensor<T>::at(std::size_t n, std::size_t c, std::size_t y, std::size_t x) const {
  return const_cast<BasicTensor*>(this)->at(n, c, y, x);
}

template <class T>
BasicTensor<T> BasicTensor<T>::reshaped(Shape shape) const {
  if (shape.numel() != shape_.numel())
    throw ShapeError("cannot reshape " + shape_.str() + " to " + shape.str());
  return BasicTensor(shape, data_);
}

Shape reduced_shape(const Shape& s, Axes axes) {
  return {axes.has(Axis::N) ? 1 : s.n, axes.has(Axis::C) ? 1 : s.c, axes.has(Axis::H) ? 1 : s.h,
          axes.has(Axis::W) ? 1 : s.w};
}

bool broadcastable(const Shape& target, const Shape& operand) {
  auto ok = [](std::size_t t, std::size_t o) { return o == t || o == 1; };
  return ok(target.n, operand.n) && ok(target.c, operand.c) && ok(target.h, operand.h) &&
         ok(target.w, operand.w);
}

namespace {

template <class T, class Op>
BasicTensor<T> binary(const BasicTensor<T>& a, const BasicTensor<T>& b, Op op, const char* name) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  BasicTensor<T> out(sa);
  if (sa == sb) {
    const T* pa = a.data();
    const T* pb = b.data();
    T* po = out.data();
    parallel_for((sa.numel() + 4095) / 4096, [&](std::size_t blk) {
      const std::size_t lo = blk * 4096, hi = std::min(sa.numel(), lo + 4096);
      for (std::size_t i = lo; i < hi; ++i) po[i] = op(pa[i], pb[i]);
    });
    return out;
  }
  if (!broadcastable(sa, sb))
    throw ShapeError(std::string(name) + ": cannot broadcast " + sb.str() + " onto " + sa.str());
  const std::size_t bn = sb.n == 1 ? 0 : 1, bc = sb.c == 1 ? 0 : 1, bh = sb.h == 1 ? 0 : 1,
                    bw = sb.w == 1 ? 0 : 1;
  parallel_for(sa.n * sa.c, [&](std::size_t nc) {
    const std::size_t n = nc / sa.c, c = nc % sa.c;
    for (std::size_t y = 0; y < sa.h; ++y) {
      const T* pa = a.data() + a.offset(n, c, y, 0);
      T* po = out.data() + out.offset(n, c, y, 0);
      const T* pb = b.data() + b.offset(n * bn, c * bc, y * bh, 0);
      if (bw)
        for (std::size_t x = 0; x < sa.w; ++x) po[x] = op(pa[x], pb[x]);
      else
        for (std::size_t x = 0; x < sa.w; ++x) po[x] = op(pa[x], pb[0]);
    }
  });
  return out;
}

template <class T, class Op>
BasicTensor<T> unary(const BasicTensor<T>& a, Op op) {
  BasicTensor<T> out(a.shape());
  const T* pa = a.data();
  T* po = out.data();
  const std::size_t total = a.size();
  parallel_for((total + 4095) / 4096, [&](std::size_t blk) {
    const std::size_t lo = blk * 4096, hi = std::min(total, lo + 4096);
    for (std::size_t i = lo; i < hi; ++i) po[i] = op(pa[i]);
  });
  return out;
}

template <class T>
T sigmoid_scalar(T v) {
  // Split by sign so exp never overflows.
  if (v >= T(0)) return T(1) / (T(1) + std::exp(-v));
  const T e = std::exp(v);
  return e / (T(1) + e);
}

}  // namespace

template <class T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  return binary(a, b, [](T x, T y) { return x + y; }, "add");
}
template <class T>
BasicTensor<T> sub(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  return binary(a, b, [](T x, T y) { return x - y; }, "sub");
}
template <class T>
BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  return binary(a, b, [](T x, T y) { return x * y; }, "mul");
}
template <class T>
BasicTensor<T> add_scalar(const BasicTensor<T>& a, T s) {
  return unary(a, [s](T x) { return x + s; });
}
template <class T>
BasicTensor<T> scale(const BasicTensor<T>& a, T s) {
  return unary(a, [s](T x) { return x * s; });
}
template <class T>
BasicTensor<T> sigmoid(const BasicTensor<T>& a) {
  return unary(a, [](T x) { return sigmoid_scalar(x); });
}
namespace {
template <class T>
void fold_sign_pattern(const BasicTensor<T>& a) {
  if (!KinkTracker::active()) return;
  std::uint64_t acc = 0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += KinkTracker::mix(i, a[i] > T(0));
  KinkTracker::fold(acc);
}
}  // namespace

template <class T>
BasicTensor<T> relu(const BasicTensor<T>& a) {
  fold_sign_pattern(a);
  return unary(a, [](T x) { return x > T(0) ? x : T(0); });
}
template <class T>
BasicTensor<T> leaky_relu(const BasicTensor<T>& a, T slope) {
  fold_sign_pattern(a);
  return unary(a, [slope](T x) { return x > T(0) ? x : x * slope; });
}
template <class T>
BasicTensor<T> clamp(const BasicTensor<T>& a, T lo, T hi) {
  return unary(a, [lo, hi](T x) { return std::clamp(x, lo, hi); });
}

namespace {

// Each output element sums its preimage in a fixed (n, c, y, x) order in
// double precision, then divides by `divisor`.
template <class T>
BasicTensor<T> reduce_to(const BasicTensor<T>& g, const Shape& target, double divisor) {
  const Shape& s = g.shape();
  if (!broadcastable(s, target))
    throw ShapeError("cannot reduce " + s.str() + " to " + target.str());
  BasicTensor<T> out(target);
  parallel_for(target.numel(), [&](std::size_t idx) {
    const std::size_t tx = idx % target.w, ty = (idx / target.w) % target.h,
                      tc = (idx / target.plane()) % target.c, tn = idx / (target.plane() * target.c);
    const std::size_t n0 = target.n == 1 ? 0 : tn, n1 = target.n == 1 ? s.n : tn + 1;
    const std::size_t c0 = target.c == 1 ? 0 : tc, c1 = target.c == 1 ? s.c : tc + 1;
    const std::size_t y0 = target.h == 1 ? 0 : ty, y1 = target.h == 1 ? s.h : ty + 1;
    const std::size_t x0 = target.w == 1 ? 0 : tx, x1 = target.w == 1 ? s.w : tx + 1;
    double acc = 0.0;
    for (std::size_t n = n0; n < n1; ++n)
      for (std::size_t c = c0; c < c1; ++c)
        for (std::size_t y = y0; y < y1; ++y) {
          const T* row = g.data() + g.offset(n, c, y, 0);
          for (std::size_t x = x0; x < x1; ++x) acc += static_cast<double>(row[x]);
        }
    out[idx] = static_cast<T>(acc / divisor);
  });
  return out;
}

}  // namespace

template <class T>
BasicTensor<T> reduce_sum_to(const BasicTensor<T>& g, const Shape& target) {
  if (g.shape() == target) return g;
  return reduce_to(g, target, 1.0);
}

template <class T>
BasicTensor<T> reduce_mean(const BasicTensor<T>& x, Axes axes) {
  if (axes.empty()) throw std::invalid_argument("reduce_mean: axes must be non-empty");
  const Shape target = reduced_shape(x.shape(), axes);
  const double count = static_cast<double>(x.size()) / static_cast<double>(target.numel());
  return reduce_to(x, target, count);
}

template <class T>
BasicTensor<T> broadcast_to(const BasicTensor<T>& x, const Shape& target) {
  if (!broadcastable(target, x.shape()))
    throw ShapeError("broadcast_to: cannot expand " + x.shape().str() + " to " + target.str());
  return add(BasicTensor<T>(target), x);
}

template <class T>
BasicTensor<T> pad_zero(const BasicTensor<T>& x, std::size_t pad) {
  if (pad == 0) return x;
  const Shape& s = x.shape();
  BasicTensor<T> out({s.n, s.c, s.h + 2 * pad, s.w + 2 * pad});
  parallel_for(s.n * s.c, [&](std::size_t nc) {
    const std::size_t n = nc / s.c, c = nc % s.c;
    for (std::size_t y = 0; y < s.h; ++y)
      std::copy_n(x.data() + x.offset(n, c, y, 0), s.w, out.data() + out.offset(n, c, y + pad, pad));
  });
  return out;
}

template <class T>
BasicTensor<T> crop_region(const BasicTensor<T>& x, std::size_t y0, std::size_t x0, std::size_t h,
                           std::size_t w) {
  const Shape& s = x.shape();
  if (y0 + h > s.h || x0 + w > s.w) throw ShapeError("crop_region outside " + s.str());
  BasicTensor<T> out({s.n, s.c, h, w});
  parallel_for(s.n * s.c, [&](std::size_t nc) {
    const std::size_t n = nc / s.c, c = nc % s.c;
    for (std::size_t y = 0; y < h; ++y)
      std::copy_n(x.data() + x.offset(n, c, y0 + y, x0), w, out.data() + out.offset(n, c, y, 0));
  });
  return out;
}

template <class T>
BasicTensor<T> crop(const BasicTensor<T>& x, std::size_t pad) {
  const Shape& s = x.shape();
  if (2 * pad > s.h || 2 * pad > s.w) throw ShapeError("crop larger than " + s.str());
  return crop_region(x, pad, pad, s.h - 2 * pad, s.w - 2 * pad);
}

template <class T>
BasicTensor<T> reflect_pad(const BasicTensor<T>& x, std::size_t bottom, std::size_t right) {
  const Shape& s = x.shape();
  if (bottom == 0 && right == 0) return x;
  if (s.numel() == 0) throw ShapeError("reflect_pad: empty input " + s.str());
  BasicTensor<T> out({s.n, s.c, s.h + bottom, s.w + right});
  // Reflection without edge repeat, applied repeatedly for pads past the edge.
  auto mirror = [](std::size_t i, std::size_t len) {
    if (len == 1) return std::size_t{0};
    const std::size_t period = 2 * (len - 1);
    i %= period;
    return i < len ? i : period - i;
  };
  parallel_for(s.n * s.c, [&](std::size_t nc) {
    const std::size_t n = nc / s.c, c = nc % s.c;
    for (std::size_t y = 0; y < s.h + bottom; ++y)
      for (std::size_t xx = 0; xx < s.w + right; ++xx)
        out(n, c, y, xx) = x(n, c, mirror(y, s.h), mirror(xx, s.w));
  });
  return out;
}

template <class T>
BasicTensor<T> concat_channels(std::span<const BasicTensor<T>> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_channels: no inputs");
  const Shape& s0 = parts.front().shape();
  std::size_t channels = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    if (s.n != s0.n || s.h != s0.h || s.w != s0.w)
      throw ShapeError("concat_channels: spatial mismatch " + s.str() + " vs " + s0.str());
    channels += s.c;
  }
  BasicTensor<T> out({s0.n, channels, s0.h, s0.w});
  for (std::size_t n = 0; n < s0.n; ++n) {
    std::size_t c0 = 0;
    for (const auto& p : parts) {
      const std::size_t len = p.shape().c * s0.plane();
      std::copy_n(p.data() + p.offset(n, 0, 0, 0), len, out.data() + out.offset(n, c0, 0, 0));
      c0 += p.shape().c;
    }
  }
  return out;
}

template <class T>
BasicTensor<T> slice_channels(const BasicTensor<T>& x, std::size_t begin, std::size_t count) {
  const Shape& s = x.shape();
  if (begin + count > s.c) throw ShapeError("slice_channels beyond " + s.str());
  BasicTensor<T> out({s.n, count, s.h, s.w});
  for (std::size_t n = 0; n < s.n; ++n)
    std::copy_n(x.data() + x.offset(n, begin, 0, 0), count * s.plane(),
                out.data() + out.offset(n, 0, 0, 0));
  return out;
}

template <class T>
BasicTensor<T> slice_batch(const BasicTensor<T>& x, std::size_t index) {
  const Shape& s = x.shape();
  if (index >= s.n) throw ShapeError("slice_batch beyond " + s.str());
  const std::size_t len = s.c * s.plane();
  std::vector<T> v(x.data() + index * len, x.data() + (index + 1) * len);
  return BasicTensor<T>({1, s.c, s.h, s.w}, std::move(v));
}

template <class T>
BasicTensor<T> stack_batch(std::span<const BasicTensor<T>> items) {
  if (items.empty()) throw std::invalid_argument("stack_batch: no inputs");
  const Shape s0 = items.front().shape();
  std::vector<T> v;
  v.reserve(items.size() * s0.numel());
  for (const auto& t : items) {
    if (t.shape() != s0) throw ShapeError("stack_batch: shape mismatch");
    v.insert(v.end(), t.values().begin(), t.values().end());
  }
  return BasicTensor<T>({s0.n * items.size(), s0.c, s0.h, s0.w}, std::move(v));
}

template <class T>
T bilinear_sample(const BasicTensor<T>& x, std::size_t n, std::size_t c, T row, T col) {
  const auto h = static_cast<long>(x.shape().h), w = static_cast<long>(x.shape().w);
  if (!(row > T(-1) && col > T(-1) && row < T(h) && col < T(w))) return T(0);
  const T fy = std::floor(row), fx = std::floor(col);
  const long y0 = static_cast<long>(fy), x0 = static_cast<long>(fx);
  const T ly = row - fy, lx = col - fx, hy = T(1) - ly, hx = T(1) - lx;
  const T* p = x.plane(n, c);
  auto tap = [&](long y, long xx) {
    return (y >= 0 && y < h && xx >= 0 && xx < w) ? p[y * w + xx] : T(0);
  };
  return hy * hx * tap(y0, x0) + hy * lx * tap(y0, x0 + 1) + ly * hx * tap(y0 + 1, x0) +
         ly * lx * tap(y0 + 1, x0 + 1);
}

template <class T>
double sum(const BasicTensor<T>& x) {
  double acc = 0.0;
  for (T v : x.values()) acc += static_cast<double>(v);
  return acc;
}

template <class T>
double dot(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  if (a.shape() != b.shape()) throw ShapeError("dot: shape mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    acc += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  return acc;
}

template <class T>
double max_abs_diff(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  if (a.shape() != b.shape())
    throw ShapeError("max_abs_diff: " + a.shape().str() + " vs " + b.shape().str());
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    m = std::max(m, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
  return m;
}

template <class T>
bool all_finite(const BasicTensor<T>& x) {
  return std::all_of(x.values().begin(), x.values().end(), [](T v) { return std::isfinite(v); });
}

namespace {

void put_u32(std::ostream& os, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16),
                              static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) throw std::runtime_error("tensor stream truncated");
  return std::uint32_t(b[0]) | std::uint32_t(b[1]) << 8 | std::uint32_t(b[2]) << 16 |
         std::uint32_t(b[3]) << 24;
}

}  // namespace

template <class T>
void write_tensor(std::ostream& os, const BasicTensor<T>& x) {
  const Shape& s = x.shape();
  for (std::size_t d : {s.n, s.c, s.h, s.w}) put_u32(os, static_cast<std::uint32_t>(d));
  std::vector<unsigned char> buf(4 * x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(x[i]));
    for (int k = 0; k < 4; ++k) buf[4 * i + k] = static_cast<unsigned char>(bits >> (8 * k));
  }
  os.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
}

template <class T>
BasicTensor<T> read_tensor(std::istream& is) {
  Shape s;
  s.n = get_u32(is);
  s.c = get_u32(is);
  s.h = get_u32(is);
  s.w = get_u32(is);
  constexpr std::size_t kLimit = std::size_t(1) << 31;
  std::size_t count = 1;
  for (std::size_t d : {s.n, s.c, s.h, s.w}) {
    count *= d;
    if (count > kLimit)
      throw std::runtime_error("tensor header declares an implausible size " + s.str());
  }
  std::vector<unsigned char> buf(4 * s.numel());
  if (!is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size())))
    throw std::runtime_error("tensor stream truncated");
  std::vector<T> v(s.numel());
  for (std::size_t i = 0; i < v.size(); ++i) {
    std::uint32_t bits = 0;
    for (int k = 0; k < 4; ++k) bits |= std::uint32_t(buf[4 * i + k]) << (8 * k);
    v[i] = static_cast<T>(std::bit_cast<float>(bits));
  }
  return BasicTensor<T>(s, std::move(v));
}

#define ADFNET_INSTANTIATE(T)                                                                   \
  template class BasicTensor<T>;                                                                \
  template BasicTensor<T> add(const BasicTensor<T>&, const BasicTensor<T>&);                    \
  template BasicTensor<T> sub(const BasicTensor<T>&, const BasicTensor<T>&);                    \
  template BasicTensor<T> mul(const BasicTensor<T>&, const BasicTensor<T>&);                    \
  template BasicTensor<T> add_scalar(const BasicTensor<T>&, T);                                 \
  template BasicTensor<T> scale(const BasicTensor<T>&, T);                                      \
  template BasicTensor<T> sigmoid(const BasicTensor<T>&);                                       \
  template BasicTensor<T> relu(const BasicTensor<T>&);                                          \
  template BasicTensor<T> leaky_relu(const BasicTensor<T>&, T);                                 \
  template BasicTensor<T> clamp(const BasicTensor<T>&, T, T);                                   \
  template BasicTensor<T> reduce_sum_to(const BasicTensor<T>&, const Shape&);                   \
  template BasicTensor<T> reduce_mean(const BasicTensor<T>&, Axes);                             \
  template BasicTensor<T> broadcast_to(const BasicTensor<T>&, const Shape&);                    \
  template BasicTensor<T> pad_zero(const BasicTensor<T>&, std::size_t);                         \
  template BasicTensor<T> crop(const BasicTensor<T>&, std::size_t);                             \
  template BasicTensor<T> crop_region(const BasicTensor<T>&, std::size_t, std::size_t,          \
                                      std::size_t, std::size_t);                                \
  template BasicTensor<T> reflect_pad(const BasicTensor<T>&, std::size_t, std::size_t);         \
  template BasicTensor<T> concat_channels(std::span<const BasicTensor<T>>);                     \
  template BasicTensor<T> slice_channels(const BasicTensor<T>&, std::size_t, std::size_t);      \
  template BasicTensor<T> slice_batch(const BasicTensor<T>&, std::size_t);                      \
  template BasicTensor<T> stack_batch(std::span<const BasicTensor<T>>);                         \
  template T bilinear_sample(const BasicTensor<T>&, std::size_t, std::size_t, T, T);            \
  template double sum(const BasicTensor<T>&);                                                   \
  template double dot(const BasicTensor<T>&, const BasicTensor<T>&);                            \
  template double max_abs_diff(const BasicTensor<T>&, const BasicTensor<T>&);                   \
  template bool all_finite(const BasicTensor<T>&);                                              \
  template void write_tensor(std::ostream&, const BasicTensor<T>&);                             \
  template BasicTensor<T> read_tensor<T>(std::istream&);

ADFNET_INSTANTIATE(float)
ADFNET_INSTANTIATE(double)
#undef ADFNET_INSTANTIATE

}  // namespace adfnet
