#include "adfnet/network.hpp"

#include <stdexcept>
#include <string>

namespace adfnet {
namespace {

std::string enc_name(std::size_t s, std::size_t b, const char* kind) {
  return "enc" + std::to_string(s) + "." + std::to_string(b) + "." + kind;
}
std::string dec_name(std::size_t s, std::size_t b, const char* kind) {
  return "dec" + std::to_string(s) + "." + std::to_string(b) + "." + kind;
}
std::string down_name(std::size_t s) { return "down" + std::to_string(s); }
std::string up_name(std::size_t s) { return "up" + std::to_string(s); }

bool has_decoder(const NetworkConfig& c, std::size_t s) {
  return s + 1 < c.scales || c.decode_lowest;
}

const ConvGeometry kDown{2, 1, 1, 1};
const ConvGeometry kUp{2, 2, 1, 1};
constexpr std::size_t kDownK = 3;
constexpr std::size_t kUpK = 6;

}  // namespace

NetworkConfig NetworkConfig::toy() {
  NetworkConfig c;
  c.channels = {8, 16, 32, 64};
  return c;
}

NetworkConfig NetworkConfig::wide() {
  NetworkConfig c;
  c.channels = {64, 128, 256, 512};
  return c;
}

void NetworkConfig::validate() const {
  if (scales == 0 || scales > 8) throw std::invalid_argument("scale count must be in 1..8");
  if (channels.size() != scales)
    throw std::invalid_argument("expected " + std::to_string(scales) + " channel widths, got " +
                                std::to_string(channels.size()));
  for (std::size_t s = 0; s < scales; ++s) {
    if (channels[s] == 0 || channels[s] % 4 != 0)
      throw std::invalid_argument("channel width " + std::to_string(channels[s]) +
                                  " is not a positive multiple of 4");
    if (s > 0 && channels[s] < channels[s - 1])
      throw std::invalid_argument("channel widths must be non-decreasing");
  }
  if (encoder_blocks == 0 || decoder_blocks == 0)
    throw std::invalid_argument("block counts must be positive");
  if (in_channels == 0) throw std::invalid_argument("image channel count must be positive");
  block(0).validate();
}

BlockConfig NetworkConfig::block(std::size_t scale) const {
  BlockConfig b;
  b.channels = channels.at(scale);
  b.k = k;
  b.dilations = dilations;
  b.activation = activation;
  return b;
}

ParamLayout network_layout(const NetworkConfig& config) {
  config.validate();
  ParamLayout layout;
  const auto& ch = config.channels;
  declare_conv(layout, "head", config.in_channels, ch[0], 3);
  for (std::size_t s = 0; s < config.scales; ++s) {
    const BlockConfig bc = config.block(s);
    for (std::size_t b = 0; b < config.encoder_blocks; ++b) {
      declare_cb(layout, enc_name(s, b, "cb"), bc);
      declare_mcb(layout, enc_name(s, b, "mcb"), bc);
    }
    if (s + 1 < config.scales) declare_conv(layout, down_name(s), ch[s], ch[s + 1], kDownK);
  }
  for (std::size_t s = config.scales; s-- > 0;) {
    if (s + 1 < config.scales)
      declare_conv(layout, up_name(s), ch[s + 1], ch[s], kUpK, 1, true, true);
    if (!has_decoder(config, s)) continue;
    const BlockConfig bc = config.block(s);
    for (std::size_t b = 0; b < config.decoder_blocks; ++b) {
      declare_dcb(layout, dec_name(s, b, "dcb"), bc);
      declare_mdcb(layout, dec_name(s, b, "mdcb"), bc);
    }
  }
  declare_conv(layout, "tail", ch[0], config.in_channels, 3);
  return layout;
}

template <class T>
ParamStore<T> build(const NetworkConfig& config, Rng& rng) {
  return instantiate<T>(network_layout(config), rng);
}

std::size_t count_params(const NetworkConfig& config) {
  return parameter_count(network_layout(config));
}

namespace graph {

template <class T>
Var<T> network(Tape<T>& t, const ParamStore<T>& store, const NetworkConfig& config,
               const Var<T>& x) {
  config.validate();
  const Shape in = x.shape();
  const std::size_t m = config.size_multiple();
  if (in.c != config.in_channels)
    throw ChannelMismatch("network expects " + std::to_string(config.in_channels) +
                          " image channels, got " + std::to_string(in.c));
  if (in.h % m != 0 || in.w % m != 0 || in.h == 0 || in.w == 0)
    throw DimensionError("input " + in.str() + " is not a multiple of " + std::to_string(m) +
                         " in height and width");

  std::vector<Var<T>> skips(config.scales);
  Var<T> f = bound_conv(t, store, "head", x, ConvGeometry::same(3));
  for (std::size_t s = 0; s < config.scales; ++s) {
    if (f.shape().h != in.h >> s || f.shape().w != in.w >> s || f.shape().c != config.channels[s])
      throw std::logic_error("encoder scale " + std::to_string(s) + " has shape " +
                             f.shape().str());
    const BlockConfig bc = config.block(s);
    for (std::size_t b = 0; b < config.encoder_blocks; ++b) {
      f = cb(t, store, enc_name(s, b, "cb"), bc, f);
      f = mcb(t, store, enc_name(s, b, "mcb"), bc, f);
    }
    if (s + 1 < config.scales) {
      skips[s] = f;
      f = bound_conv(t, store, down_name(s), f, kDown);
    }
  }
  for (std::size_t s = config.scales; s-- > 0;) {
    if (s + 1 < config.scales) {
      f = bound_conv_transposed(t, store, up_name(s), f, kUp);
      f = add(t, f, skips[s]);
      skips[s] = Var<T>();
    }
    if (!has_decoder(config, s)) continue;
    const BlockConfig bc = config.block(s);
    for (std::size_t b = 0; b < config.decoder_blocks; ++b) {
      f = dcb(t, store, dec_name(s, b, "dcb"), bc, f);
      f = mdcb(t, store, dec_name(s, b, "mdcb"), bc, f);
    }
  }
  return add(t, x, bound_conv(t, store, "tail", f, ConvGeometry::same(3)));
}

}  // namespace graph

template <class T>
BasicTensor<T> forward(const BasicTensor<T>& x, const ParamStore<T>& store,
                       const NetworkConfig& config) {
  graph::Tape<T> t(false);
  return graph::network(t, store, config, t.constant(x)).value();
}

template <class T>
BasicTensor<T> forward_padded(const BasicTensor<T>& x, const ParamStore<T>& store,
                              const NetworkConfig& config) {
  const std::size_t m = config.size_multiple();
  const Shape s = x.shape();
  const std::size_t ph = (m - s.h % m) % m;
  const std::size_t pw = (m - s.w % m) % m;
  if (ph == 0 && pw == 0) return forward(x, store, config);
  const BasicTensor<T> y = forward(reflect_pad(x, ph, pw), store, config);
  return crop_region(y, 0, 0, s.h, s.w);
}

double conv2d_flops(std::size_t cin, std::size_t cout, std::size_t k, std::size_t groups,
                    std::size_t h_out, std::size_t w_out) {
  return 2.0 * double(cout) * double(cin / groups) * double(k * k) * double(h_out) * double(w_out);
}

double FlopReport::operator[](const std::string& category) const {
  const auto it = by_category.find(category);
  return it == by_category.end() ? 0.0 : it->second;
}

namespace {

class FlopCounter {
 public:
  void conv(std::size_t cin, std::size_t cout, std::size_t k, std::size_t groups, std::size_t h,
            std::size_t w, bool bias = true) {
    const double px = double(h) * double(w);
    if (h == 1 && w == 1 && k == 1)
      add("pooled_conv", 2.0 * cout * (cin / groups));
    else
      add("spatial_conv", conv2d_flops(cin, cout, k, groups, h, w));
    if (bias) elementwise(cout * px);
  }
  void conv_transposed(std::size_t cin, std::size_t cout, std::size_t k, std::size_t h_in,
                       std::size_t w_in, std::size_t h_out, std::size_t w_out) {
    add("spatial_conv", 2.0 * cin * cout * k * k * double(h_in) * double(w_in));
    elementwise(double(cout) * h_out * w_out);
  }
  void dynamic(std::size_t c, std::size_t k, std::size_t h, std::size_t w) {
    add("dynamic", 2.0 * k * k * c * double(h) * double(w));
  }
  void deformable(std::size_t c, std::size_t cout, std::size_t k, std::size_t h, std::size_t w) {
    const double px = double(h) * double(w);
    add("deformable", (2.0 * 4.0 + 1.0) * c * k * k * px + 2.0 * cout * c * k * k * px);
  }
  void elementwise(double n) { add("attention_elementwise", n); }

  FlopReport report() const { return report_; }

 private:
  void add(const std::string& cat, double v) {
    report_.by_category[cat] += v;
    report_.total += v;
  }
  FlopReport report_;
};

void count_sekg(FlopCounter& fc, std::size_t c, std::size_t k, std::size_t h, std::size_t w) {
  const double px = double(h) * double(w);
  fc.conv(c, c, 3, c, h, w);
  fc.conv(c, c, 1, 1, h, w);
  fc.elementwise(c * px);  // global pool
  fc.conv(c, c, 1, 1, 1, 1);
  fc.elementwise(c * px);  // broadcast add
  fc.conv(c, k * k * c, 1, 1, h, w, false);
}

void count_mdconv(FlopCounter& fc, std::size_t c, std::size_t k, std::size_t h, std::size_t w) {
  fc.conv(c, 3 * k * k, 3, 1, h, w);
  fc.elementwise(double(k) * k * h * w);  // modulation sigmoid
  fc.deformable(c, c, k, h, w);
}

void count_mfi(FlopCounter& fc, std::size_t c_cat, std::size_t c, std::size_t h, std::size_t w) {
  const double px = double(h) * double(w);
  fc.elementwise(3.0 * c_cat * px);                 // three mean pools
  fc.elementwise(px + double(c_cat) * (h + w));     // three sigmoid maps
  fc.elementwise(3.0 * c_cat * px);                 // three attention products
  fc.elementwise(2.0 * c_cat * px);                 // branch sum
  fc.conv(c_cat, c, 1, 1, h, w);
  fc.elementwise(c * px);                           // residual
}

void count_multiscale(FlopCounter& fc, const BlockConfig& b, std::size_t h, std::size_t w,
                      bool dynamic) {
  const std::size_t c = b.channels;
  const std::size_t cr = b.reduced();
  count_mdconv(fc, c, 3, h, w);
  fc.conv(c, cr, 1, 1, h, w);
  if (dynamic) count_sekg(fc, cr, b.k, h, w);
  for (std::size_t i = 0; i < b.dilations.size(); ++i) {
    if (dynamic) fc.dynamic(cr, b.k, h, w);
    fc.conv(cr, cr, 3, 1, h, w);
  }
  count_mfi(fc, b.concat_width(), c, h, w);
}

void count_cb(FlopCounter& fc, const BlockConfig& b, std::size_t h, std::size_t w) {
  const std::size_t c = b.channels;
  fc.conv(c, c, 3, 1, h, w);
  fc.elementwise(double(c) * h * w);
  fc.conv(c, c, 3, 1, h, w);
  fc.elementwise(double(c) * h * w);
}

void count_dcb(FlopCounter& fc, const BlockConfig& b, std::size_t h, std::size_t w) {
  const std::size_t c = b.channels;
  fc.conv(c, c, 3, 1, h, w);
  fc.elementwise(double(c) * h * w);
  count_sekg(fc, c, b.k, h, w);
  fc.dynamic(c, b.k, h, w);
  fc.conv(c, c, 3, 1, h, w);
  fc.elementwise(double(c) * h * w);
}

}  // namespace

FlopReport count_flops(const NetworkConfig& config, std::size_t h, std::size_t w) {
  config.validate();
  FlopCounter fc;
  const auto& ch = config.channels;
  fc.conv(config.in_channels, ch[0], 3, 1, h, w);
  for (std::size_t s = 0; s < config.scales; ++s) {
    const std::size_t hs = h >> s, ws = w >> s;
    for (std::size_t b = 0; b < config.encoder_blocks; ++b) {
      count_cb(fc, config.block(s), hs, ws);
      count_multiscale(fc, config.block(s), hs, ws, false);
    }
    if (s + 1 < config.scales) fc.conv(ch[s], ch[s + 1], kDownK, 1, hs >> 1, ws >> 1);
  }
  for (std::size_t s = config.scales; s-- > 0;) {
    const std::size_t hs = h >> s, ws = w >> s;
    if (s + 1 < config.scales) {
      fc.conv_transposed(ch[s + 1], ch[s], kUpK, hs >> 1, ws >> 1, hs, ws);
      fc.elementwise(double(ch[s]) * hs * ws);
    }
    if (!has_decoder(config, s)) continue;
    for (std::size_t b = 0; b < config.decoder_blocks; ++b) {
      count_dcb(fc, config.block(s), hs, ws);
      count_multiscale(fc, config.block(s), hs, ws, true);
    }
  }
  fc.conv(ch[0], config.in_channels, 3, 1, h, w);
  fc.elementwise(double(config.in_channels) * h * w);
  return fc.report();
}

#define ADFNET_INSTANTIATE(T)                                                                    \
  template ParamStore<T> build(const NetworkConfig&, Rng&);                                      \
  template graph::Var<T> graph::network(graph::Tape<T>&, const ParamStore<T>&,                   \
                                        const NetworkConfig&, const graph::Var<T>&);             \
  template BasicTensor<T> forward(const BasicTensor<T>&, const ParamStore<T>&,                   \
                                  const NetworkConfig&);                                         \
  template BasicTensor<T> forward_padded(const BasicTensor<T>&, const ParamStore<T>&,            \
                                         const NetworkConfig&);

ADFNET_INSTANTIATE(float)
ADFNET_INSTANTIATE(double)
#undef ADFNET_INSTANTIATE

}  // namespace adfnet
