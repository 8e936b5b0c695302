#pragma once

#include <cstddef>

#include "adfnet/tensor.hpp"

// Direct loop implementations, one output element at a time, with no
// blocking, no im2col and no shared helpers from the optimized kernels.
namespace adfnet::reference {

template <class T>
BasicTensor<T> conv2d(const BasicTensor<T>& x, const BasicTensor<T>& w, const BasicTensor<T>* bias,
                      std::size_t stride, std::size_t pad, std::size_t dilation,
                      std::size_t groups);

/// Scatter form: every input pixel adds its weighted kernel into the output.
template <class T>
BasicTensor<T> conv2d_transposed(const BasicTensor<T>& x, const BasicTensor<T>& w,
                                 const BasicTensor<T>* bias, std::size_t stride, std::size_t pad,
                                 std::size_t dilation, std::size_t groups);

/// (n, c k^2, h, w), channel c * k^2 + j.
template <class T>
BasicTensor<T> unfold(const BasicTensor<T>& x, std::size_t k, std::size_t dilation);

/// kernels: (n, k^2 c, h, w), channel j * c + ch.
template <class T>
BasicTensor<T> dconv(const BasicTensor<T>& f, const BasicTensor<T>& kernels, std::size_t k,
                     std::size_t dilation);

/// Four-neighbour interpolation with zero outside the image.
template <class T>
T bilinear(const BasicTensor<T>& x, std::size_t n, std::size_t c, double row, double col);

/// offsets: (n, 2 k^2, h, w) with channel 2j = column shift, 2j+1 = row shift.
template <class T>
BasicTensor<T> deform_conv(const BasicTensor<T>& f, const BasicTensor<T>& offsets,
                           const BasicTensor<T>& modulation, const BasicTensor<T>& weight,
                           const BasicTensor<T>* bias);

/// Offset head (3x3, "same") -> linear offsets + sigmoid modulation -> deform_conv.
template <class T>
BasicTensor<T> mdconv(const BasicTensor<T>& f, const BasicTensor<T>& offset_weight,
                      const BasicTensor<T>* offset_bias, const BasicTensor<T>& main_weight,
                      const BasicTensor<T>* main_bias);

}  // namespace adfnet::reference
