#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "adfnet/autograd.hpp"
#include "adfnet/blocks.hpp"
#include "adfnet/param_store.hpp"
#include "adfnet/rng.hpp"

namespace adfnet {

class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Encoder-decoder layout. Scale s runs at width channels[s] and resolution
/// (h / 2^s, w / 2^s). Encoder scales hold CB + MCB pairs; decoder scales hold
/// DCB + MDCB pairs, fed by a transposed-conv upsample plus the encoder
/// features of the same scale. decode_lowest also places decoder blocks at
/// the lowest scale, after the encoder ones.
struct NetworkConfig {
  std::size_t scales = 4;
  std::vector<std::size_t> channels{32, 64, 128, 256};
  std::size_t encoder_blocks = 1;
  std::size_t decoder_blocks = 1;
  std::size_t k = 3;
  std::vector<std::size_t> dilations{1, 3, 5};
  graph::Activation activation = graph::Activation::Relu;
  std::size_t in_channels = 3;
  bool decode_lowest = true;

  static NetworkConfig standard() { return {}; }
  static NetworkConfig toy();   // widths 8/16/32/64
  static NetworkConfig wide();  // widths 64/128/256/512

  void validate() const;
  std::size_t size_multiple() const { return std::size_t{1} << (scales - 1); }
  BlockConfig block(std::size_t scale) const;

  friend bool operator==(const NetworkConfig&, const NetworkConfig&) = default;
};

ParamLayout network_layout(const NetworkConfig& config);

template <class T>
ParamStore<T> build(const NetworkConfig& config, Rng& rng);

std::size_t count_params(const NetworkConfig& config);

namespace graph {
template <class T>
Var<T> network(Tape<T>& t, const ParamStore<T>& store, const NetworkConfig& config,
               const Var<T>& x);
}

/// Requires h and w divisible by config.size_multiple().
template <class T>
BasicTensor<T> forward(const BasicTensor<T>& x, const ParamStore<T>& store,
                       const NetworkConfig& config);

/// Reflect-pads bottom/right up to the next multiple, runs forward, crops back.
template <class T>
BasicTensor<T> forward_padded(const BasicTensor<T>& x, const ParamStore<T>& store,
                              const NetworkConfig& config);

/// Analytic operation count for one n=1 image, 2 FLOPs per multiply-accumulate.
///   spatial_conv:  2 c_out (c_in / g) k^2 h_out w_out for every conv applied
///                  to a full-resolution map (transposed: 2 c_in c_out k^2 h_in w_in)
///   pooled_conv:   1x1 maps applied to globally pooled (1x1) descriptors
///   dynamic:       2 k^2 c h w per per-pixel kernel application
///   deformable:    per tap and channel, 4 bilinear MACs and one modulation
///                  multiply, plus the 2 c_out c k^2 h w weighting
///   attention_elementwise: one FLOP per element for pooling, sigmoid, products,
///                  bias, activation and residual additions
struct FlopReport {
  double total = 0.0;
  std::map<std::string, double> by_category;

  double operator[](const std::string& category) const;
};

/// 2 c_out (c_in / groups) k^2 h_out w_out, bias excluded.
double conv2d_flops(std::size_t cin, std::size_t cout, std::size_t k, std::size_t groups,
                    std::size_t h_out, std::size_t w_out);

FlopReport count_flops(const NetworkConfig& config, std::size_t h, std::size_t w);

}  // namespace adfnet
