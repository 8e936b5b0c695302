#pragma once

#include <cstddef>
#include <optional>

#include "adfnet/tensor.hpp"

namespace adfnet {

struct ConvGeometry {
  std::size_t stride = 1;
  std::size_t pad = 0;
  std::size_t dilation = 1;
  std::size_t groups = 1;

  /// Resolution-preserving padding for an odd kernel: dilation * (k - 1) / 2.
  static ConvGeometry same(std::size_t k, std::size_t dilation = 1, std::size_t groups = 1) {
    return {1, dilation * (k - 1) / 2, dilation, groups};
  }
};

class ChannelMismatch : public ShapeError {
 public:
  using ShapeError::ShapeError;
};

/// Weight (c_out, c_in / groups, k, k), optional bias (1, c_out, 1, 1).
/// For transposed convolution the weight is (c_in, c_out / groups, k, k), the
/// layout of the forward convolution it is the adjoint of.
template <class T>
struct ConvParams {
  BasicTensor<T> weight;
  std::optional<BasicTensor<T>> bias;
  ConvGeometry geometry;

  const BasicTensor<T>* bias_ptr() const { return bias ? &*bias : nullptr; }
};

std::size_t conv_output_extent(std::size_t in, std::size_t k, const ConvGeometry& g);
std::size_t conv_transposed_output_extent(std::size_t in, std::size_t k, const ConvGeometry& g);

template <class T>
BasicTensor<T> conv2d(const BasicTensor<T>& x, const BasicTensor<T>& weight,
                      const BasicTensor<T>* bias, const ConvGeometry& g);
template <class T>
BasicTensor<T> conv2d(const BasicTensor<T>& x, const ConvParams<T>& p) {
  return conv2d(x, p.weight, p.bias_ptr(), p.geometry);
}

// Adjoints of conv2d. backward_input doubles as the transposed convolution.
template <class T>
BasicTensor<T> conv2d_backward_input(const BasicTensor<T>& grad_out, const BasicTensor<T>& weight,
                                     const ConvGeometry& g, const Shape& input_shape);
template <class T>
BasicTensor<T> conv2d_backward_weight(const BasicTensor<T>& x, const BasicTensor<T>& grad_out,
                                      const ConvGeometry& g, const Shape& weight_shape);
/// Sum over (n, h, w): shape (1, c, 1, 1).
template <class T>
BasicTensor<T> bias_grad(const BasicTensor<T>& grad_out);

template <class T>
BasicTensor<T> conv2d_transposed(const BasicTensor<T>& x, const BasicTensor<T>& weight,
                                 const BasicTensor<T>* bias, const ConvGeometry& g);
template <class T>
BasicTensor<T> conv2d_transposed(const BasicTensor<T>& x, const ConvParams<T>& p) {
  return conv2d_transposed(x, p.weight, p.bias_ptr(), p.geometry);
}
template <class T>
BasicTensor<T> conv2d_transposed_backward_weight(const BasicTensor<T>& x,
                                                 const BasicTensor<T>& grad_out,
                                                 const ConvGeometry& g, const Shape& weight_shape);

/// Depthwise (groups == c) filtering followed by a 1x1 pointwise mix.
template <class T>
BasicTensor<T> depthwise_separable_conv(const BasicTensor<T>& x, const ConvParams<T>& depthwise,
                                        const ConvParams<T>& pointwise);

template <class T>
BasicTensor<T> global_avg_pool(const BasicTensor<T>& x);

/// Sliding k x k patches (stride 1, zero "same" padding) stored as
/// (n, c * k^2, h, w); channel c * k^2 + j holds tap j of channel c.
template <class T>
struct UnfoldedPatches {
  BasicTensor<T> data;
  std::size_t k = 3;
  std::size_t dilation = 1;

  std::size_t channels() const { return data.shape().c / (k * k); }
  T at(std::size_t n, std::size_t c, std::size_t tap, std::size_t y, std::size_t x) const {
    return data(n, c * k * k + tap, y, x);
  }
};

template <class T>
UnfoldedPatches<T> unfold(const BasicTensor<T>& x, std::size_t k, std::size_t stride,
                          std::size_t dilation);
/// Adjoint of unfold: scatter-adds every patch entry back onto its source pixel.
template <class T>
BasicTensor<T> fold(const BasicTensor<T>& patches, std::size_t k, std::size_t dilation);

}  // namespace adfnet
