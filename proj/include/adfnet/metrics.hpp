#pragma once

#include "adfnet/tensor.hpp"

namespace adfnet {

/// 10 log10(1 / mse) for values in [0, 1]; +infinity when the images match.
double psnr(const Tensor& a, const Tensor& b);

/// Mean SSIM with an 11x11 Gaussian window (sigma 1.5), K1 = 0.01, K2 = 0.03,
/// L = 1, over the positions where the window fits entirely ("valid"),
/// computed per channel and averaged. Images smaller than the window use the
/// largest odd window that fits, with the Gaussian truncated to it.
double ssim(const Tensor& a, const Tensor& b);

}  // namespace adfnet
