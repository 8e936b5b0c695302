#pragma once

#include <algorithm>
#include <cstddef>
#include <vector>

#include "adfnet/param_store.hpp"
#include "adfnet/rng.hpp"
#include "adfnet/tensor.hpp"

// Independent closed-form and loop oracles. Nothing here calls into the
// library's numeric kernels; only the Tensor container and Rng are shared.
namespace oracle {

using adfnet::BasicTensor;
using adfnet::Shape;

template <class T>
BasicTensor<T> random(adfnet::Rng& rng, Shape s, double lo = -1.0, double hi = 1.0) {
  BasicTensor<T> t(s);
  for (auto& v : t.values()) v = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

template <class T>
double max_abs(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    m = std::max(m, d < 0 ? -d : d);
  }
  return m;
}

long double sigmoid(long double x);

/// Materializes b at a's shape by index arithmetic, then combines elementwise.
enum class BinOp { Add, Sub, Mul };
BasicTensor<double> broadcast_binary(const BasicTensor<double>& a, const BasicTensor<double>& b,
                                     BinOp op);

/// Arithmetic mean over the flagged axes by direct enumeration.
BasicTensor<double> mean_over(const BasicTensor<double>& x, bool n, bool c, bool h, bool w);

/// Dilated k x k kernel spread onto a dense (d (k - 1) + 1)^2 grid.
BasicTensor<double> dilate_kernel(const BasicTensor<double>& w, std::size_t d);

/// Dense (c_out, c_in, k, k) kernel equal to depthwise (c, 1, k, k) then
/// pointwise (c_out, c, 1, 1).
BasicTensor<double> densify_separable(const BasicTensor<double>& dw, const BasicTensor<double>& pw);

/// MFI with a 1x1 fusion (c, c_cat) and bias (c): loops over every element.
/// All three attention maps pool f_c; the second and third scale f_c * A_hw.
BasicTensor<double> mfi(const BasicTensor<double>& f_c, const BasicTensor<double>& f_in,
                        const BasicTensor<double>& fuse_w, const BasicTensor<double>& fuse_b);

/// 10 log10(1 / mse) evaluated in long double.
long double psnr(const adfnet::Tensor& a, const adfnet::Tensor& b);

/// SSIM from first principles: explicit Gaussian window, per-window sums,
/// valid positions only, averaged over channels. Requires h, w >= 11.
double ssim(const adfnet::Tensor& a, const adfnet::Tensor& b);

/// One bias-corrected ADAM update of a scalar.
struct AdamScalar {
  double m = 0.0, v = 0.0, p = 0.0;
  int t = 0;
  void step(double g, double lr, double b1 = 0.9, double b2 = 0.999, double eps = 1e-8);
};

/// Sets every parameter value to zero.
template <class T>
void zero_all(adfnet::ParamStore<T>& store) {
  for (auto& e : store)
    for (auto& v : e.value.values()) v = T(0);
}

}  // namespace oracle
