#include "adfnet/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace adfnet {
namespace {

void require_same(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(what) + ": shape mismatch " + a.shape().str() + " vs " +
                     b.shape().str());
  if (a.size() == 0) throw ShapeError(std::string(what) + ": empty images");
}

std::vector<double> gaussian_window(std::size_t size, double sigma) {
  std::vector<double> g(size);
  const double mid = (static_cast<double>(size) - 1.0) / 2.0;
  double total = 0.0;
  for (std::size_t i = 0; i < size; ++i) {
    const double d = static_cast<double>(i) - mid;
    g[i] = std::exp(-d * d / (2.0 * sigma * sigma));
    total += g[i];
  }
  for (auto& v : g) v /= total;
  return g;
}

// Separable "valid" filtering of one plane.
std::vector<double> filter_valid(const std::vector<double>& plane, std::size_t h, std::size_t w,
                                 const std::vector<double>& g) {
  const std::size_t k = g.size();
  const std::size_t ho = h - k + 1, wo = w - k + 1;
  std::vector<double> rows(h * wo);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < wo; ++x) {
      double acc = 0.0;
      for (std::size_t i = 0; i < k; ++i) acc += g[i] * plane[y * w + x + i];
      rows[y * wo + x] = acc;
    }
  std::vector<double> out(ho * wo);
  for (std::size_t y = 0; y < ho; ++y)
    for (std::size_t x = 0; x < wo; ++x) {
      double acc = 0.0;
      for (std::size_t i = 0; i < k; ++i) acc += g[i] * rows[(y + i) * wo + x];
      out[y * wo + x] = acc;
    }
  return out;
}

}  // namespace

double psnr(const Tensor& a, const Tensor& b) {
  require_same(a, b, "psnr");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    acc += d * d;
  }
  const double mse = acc / static_cast<double>(a.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse);
}

double ssim(const Tensor& a, const Tensor& b) {
  require_same(a, b, "ssim");
  const Shape& s = a.shape();
  std::size_t win = std::min<std::size_t>({11, s.h, s.w});
  if (win % 2 == 0) --win;
  const std::vector<double> g = gaussian_window(win, 1.5);
  const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  const std::size_t plane = s.h * s.w;

  double total = 0.0;
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t c = 0; c < s.c; ++c) {
      std::vector<double> x(plane), y(plane), xx(plane), yy(plane), xy(plane);
      const float* pa = a.plane(n, c);
      const float* pb = b.plane(n, c);
      for (std::size_t i = 0; i < plane; ++i) {
        x[i] = pa[i];
        y[i] = pb[i];
        xx[i] = x[i] * x[i];
        yy[i] = y[i] * y[i];
        xy[i] = x[i] * y[i];
      }
      const auto mx = filter_valid(x, s.h, s.w, g);
      const auto my = filter_valid(y, s.h, s.w, g);
      const auto sxx = filter_valid(xx, s.h, s.w, g);
      const auto syy = filter_valid(yy, s.h, s.w, g);
      const auto sxy = filter_valid(xy, s.h, s.w, g);
      double acc = 0.0;
      for (std::size_t i = 0; i < mx.size(); ++i) {
        const double vx = sxx[i] - mx[i] * mx[i];
        const double vy = syy[i] - my[i] * my[i];
        const double cov = sxy[i] - mx[i] * my[i];
        acc += ((2.0 * mx[i] * my[i] + c1) * (2.0 * cov + c2)) /
               ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
      }
      total += acc / static_cast<double>(mx.size());
    }
  return total / static_cast<double>(s.n * s.c);
}

}  // namespace adfnet
