#pragma once

#include <cstddef>

#include "adfnet/static_ops.hpp"
#include "adfnet/tensor.hpp"

namespace adfnet {

/// Per-pixel depthwise kernels: at every site (i, j) of every sample, a
/// k^2 x c matrix. Stored as (n, k^2 * c, h, w) with channel tap * c + ch, the
/// layout a 1x1 head emitting k^2 * c maps produces.
template <class T>
struct KernelField {
  BasicTensor<T> data;
  std::size_t k = 3;

  std::size_t taps() const { return k * k; }
  std::size_t channels() const { return data.shape().c / taps(); }
  T at(std::size_t n, std::size_t tap, std::size_t ch, std::size_t y, std::size_t x) const {
    return data(n, tap * channels() + ch, y, x);
  }
};

/// Deformable sampling state. offsets is (n, 2 k^2, h, w) with channel 2j the
/// horizontal shift and 2j + 1 the vertical shift of tap j; modulation is
/// (n, k^2, h, w) in (0, 1).
template <class T>
struct OffsetField {
  BasicTensor<T> offsets;
  BasicTensor<T> modulation;
};

/// Kernel generation: spatial branch (3x3 depthwise + 1x1 pointwise) plus a
/// channel branch (global pool + 1x1 map), summed, then a bias-free 1x1 head
/// producing k^2 * c maps.
template <class T>
struct SekgParams {
  ConvParams<T> depthwise;
  ConvParams<T> pointwise;
  ConvParams<T> channel_map;
  ConvParams<T> head;
};

/// offset_head: 3x3, c -> 3 k^2 (2 k^2 offsets then k^2 modulation logits).
/// main: the k x k weights applied to the deformed samples.
template <class T>
struct MdconvParams {
  ConvParams<T> offset_head;
  ConvParams<T> main;
};

template <class T>
struct SharedKernels {
  BasicTensor<T> modulated;  // f_m
  BasicTensor<T> reduced;    // F_r, the channel-reduced f_m
  KernelField<T> kernels;    // W*, generated once from F_r
};

/// Filters each channel of f with its own per-pixel kernel (zero "same"
/// padding). With dilation d the taps are spaced d apart, which is the
/// unfold-multiply-sum aggregation used by the multi-scale branches.
template <class T>
BasicTensor<T> dconv_apply(const BasicTensor<T>& f, const BasicTensor<T>& kernels, std::size_t k,
                           std::size_t dilation = 1);
template <class T>
BasicTensor<T> dconv_apply(const BasicTensor<T>& f, const KernelField<T>& w,
                           std::size_t dilation = 1) {
  return dconv_apply(f, w.data, w.k, dilation);
}
template <class T>
BasicTensor<T> dconv_apply_backward_input(const BasicTensor<T>& grad_out,
                                          const BasicTensor<T>& kernels, std::size_t k,
                                          std::size_t dilation = 1);
template <class T>
BasicTensor<T> dconv_apply_backward_kernel(const BasicTensor<T>& f, const BasicTensor<T>& grad_out,
                                           std::size_t k, std::size_t dilation = 1);

/// Splits a raw offset-head output: linear offsets, sigmoid modulation.
template <class T>
OffsetField<T> split_offset_head(const BasicTensor<T>& raw, std::size_t k);

/// Modulated deformable convolution, stride 1, "same" extent:
///   out(o, y, x) = b_o + sum_{c, j} w[o, c, j] * m_j(y, x) *
///                  bilinear(f_c, y + dy_j + offset_y_j, x + dx_j + offset_x_j)
template <class T>
BasicTensor<T> deform_conv(const BasicTensor<T>& f, const BasicTensor<T>& offsets,
                           const BasicTensor<T>& modulation, const BasicTensor<T>& weight,
                           const BasicTensor<T>* bias);
template <class T>
BasicTensor<T> deform_conv(const BasicTensor<T>& f, const OffsetField<T>& field,
                           const BasicTensor<T>& weight, const BasicTensor<T>* bias) {
  return deform_conv(f, field.offsets, field.modulation, weight, bias);
}

template <class T>
struct DeformConvGrads {
  BasicTensor<T> input;
  BasicTensor<T> offsets;
  BasicTensor<T> modulation;
  BasicTensor<T> weight;
  BasicTensor<T> bias;
};

template <class T>
DeformConvGrads<T> deform_conv_backward(const BasicTensor<T>& f, const BasicTensor<T>& offsets,
                                        const BasicTensor<T>& modulation,
                                        const BasicTensor<T>& weight,
                                        const BasicTensor<T>& grad_out);

template <class T>
KernelField<T> sekg_generate(const BasicTensor<T>& f, const SekgParams<T>& p, std::size_t k);

template <class T>
BasicTensor<T> mdconv(const BasicTensor<T>& f, const MdconvParams<T>& p);

template <class T>
SharedKernels<T> shared_kernel_generate(const BasicTensor<T>& f, const MdconvParams<T>& mp,
                                        const ConvParams<T>& reduce, const SekgParams<T>& sp,
                                        std::size_t k);

}  // namespace adfnet
