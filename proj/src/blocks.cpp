#include "adfnet/blocks.hpp"

#include <stdexcept>

namespace adfnet {

template <class T>
ParamStore<T> instantiate(const ParamLayout& layout, Rng& rng) {
  ParamStore<T> store;
  for (const auto& spec : layout)
    store.add(spec.name, rand_init<T>(rng, spec.shape, InitScheme::uniform_fan_in(spec.fan_in)));
  return store;
}

std::size_t parameter_count(const ParamLayout& layout) {
  std::size_t total = 0;
  for (const auto& spec : layout) total += spec.shape.numel();
  return total;
}

void BlockConfig::validate() const {
  if (channels == 0 || reduction == 0 || channels % reduction != 0)
    throw std::invalid_argument("block width " + std::to_string(channels) +
                                " is not divisible by the reduction ratio " +
                                std::to_string(reduction));
  if (k == 0 || k % 2 == 0) throw std::invalid_argument("kernel size must be odd");
  if (dilations.empty()) throw std::invalid_argument("at least one dilation rate is required");
  for (auto d : dilations)
    if (d == 0) throw std::invalid_argument("dilation rates must be positive");
}

void declare_conv(ParamLayout& layout, const std::string& name, std::size_t in, std::size_t out,
                  std::size_t k, std::size_t groups, bool bias, bool transposed) {
  if (groups == 0 || in % groups != 0 || out % groups != 0)
    throw std::invalid_argument(name + ": channels not divisible by groups");
  const Shape w = transposed ? Shape{in, out / groups, k, k} : Shape{out, in / groups, k, k};
  const std::size_t fan_in = w.c * k * k;
  layout.push_back({name + ".weight", w, fan_in});
  if (bias) layout.push_back({name + ".bias", {1, out, 1, 1}, fan_in});
}

void declare_sekg(ParamLayout& layout, const std::string& prefix, std::size_t c, std::size_t k) {
  declare_conv(layout, prefix + ".dw", c, c, 3, c);
  declare_conv(layout, prefix + ".pw", c, c, 1);
  declare_conv(layout, prefix + ".ch", c, c, 1);
  declare_conv(layout, prefix + ".head", c, k * k * c, 1, 1, false);
}

void declare_mdconv(ParamLayout& layout, const std::string& prefix, std::size_t c, std::size_t k) {
  declare_conv(layout, prefix + ".offset", c, 3 * k * k, 3);
  declare_conv(layout, prefix + ".main", c, c, k, 1, false);
}

void declare_mfi(ParamLayout& layout, const std::string& prefix, std::size_t c_cat, std::size_t c) {
  declare_conv(layout, prefix + ".fuse", c_cat, c, 1);
}

void declare_cb(ParamLayout& layout, const std::string& prefix, const BlockConfig& cfg) {
  cfg.validate();
  declare_conv(layout, prefix + ".conv1", cfg.channels, cfg.channels, 3);
  declare_conv(layout, prefix + ".conv2", cfg.channels, cfg.channels, 3);
}

void declare_dcb(ParamLayout& layout, const std::string& prefix, const BlockConfig& cfg) {
  cfg.validate();
  declare_conv(layout, prefix + ".conv1", cfg.channels, cfg.channels, 3);
  declare_sekg(layout, prefix + ".sekg", cfg.channels, cfg.k);
  declare_conv(layout, prefix + ".conv2", cfg.channels, cfg.channels, 3);
}

namespace {

void declare_multiscale(ParamLayout& layout, const std::string& prefix, const BlockConfig& cfg,
                        bool dynamic) {
  cfg.validate();
  const std::size_t c = cfg.channels;
  const std::size_t cr = cfg.reduced();
  declare_mdconv(layout, prefix + ".mdconv", c, 3);
  declare_conv(layout, prefix + ".reduce", c, cr, 1);
  if (dynamic) declare_sekg(layout, prefix + ".sekg", cr, cfg.k);
  for (std::size_t i = 0; i < cfg.dilations.size(); ++i)
    declare_conv(layout, prefix + ".branch" + std::to_string(i), cr, cr, 3);
  declare_mfi(layout, prefix + ".mfi", cfg.concat_width(), c);
}

}  // namespace

void declare_mcb(ParamLayout& layout, const std::string& prefix, const BlockConfig& cfg) {
  declare_multiscale(layout, prefix, cfg, false);
}

void declare_mdcb(ParamLayout& layout, const std::string& prefix, const BlockConfig& cfg) {
  declare_multiscale(layout, prefix, cfg, true);
}

template <class T>
ConvParams<T> conv_params(const ParamStore<T>& store, const std::string& name, ConvGeometry geom) {
  ConvParams<T> p;
  p.weight = store.value(name + ".weight");
  if (store.contains(name + ".bias")) p.bias = store.value(name + ".bias");
  p.geometry = geom;
  return p;
}

template <class T>
SekgParams<T> sekg_params(const ParamStore<T>& store, const std::string& prefix) {
  const std::size_t c = store.value(prefix + ".dw.weight").shape().n;
  return {conv_params(store, prefix + ".dw", ConvGeometry::same(3, 1, c)),
          conv_params(store, prefix + ".pw", ConvGeometry::same(1)),
          conv_params(store, prefix + ".ch", ConvGeometry::same(1)),
          conv_params(store, prefix + ".head", ConvGeometry::same(1))};
}

template <class T>
MdconvParams<T> mdconv_params(const ParamStore<T>& store, const std::string& prefix) {
  const std::size_t ko = store.value(prefix + ".offset.weight").shape().h;
  const std::size_t k = store.value(prefix + ".main.weight").shape().h;
  return {conv_params(store, prefix + ".offset", ConvGeometry::same(ko)),
          conv_params(store, prefix + ".main", ConvGeometry::same(k))};
}

namespace graph {

template <class T>
Var<T> bound_conv(Tape<T>& t, const ParamStore<T>& store, const std::string& name, const Var<T>& x,
                  const ConvGeometry& geom) {
  const Var<T> w = t.param(store, name + ".weight");
  std::optional<Var<T>> b;
  if (store.contains(name + ".bias")) b = t.param(store, name + ".bias");
  return conv2d(t, x, w, b, geom);
}

template <class T>
Var<T> bound_conv_transposed(Tape<T>& t, const ParamStore<T>& store, const std::string& name,
                             const Var<T>& x, const ConvGeometry& geom) {
  const Var<T> w = t.param(store, name + ".weight");
  std::optional<Var<T>> b;
  if (store.contains(name + ".bias")) b = t.param(store, name + ".bias");
  return conv2d_transposed(t, x, w, b, geom);
}

template <class T>
Var<T> sekg(Tape<T>& t, const ParamStore<T>& store, const std::string& prefix, const Var<T>& f,
            std::size_t k) {
  const std::size_t c = f.shape().c;
  Var<T> spatial = bound_conv(t, store, prefix + ".dw", f, ConvGeometry::same(3, 1, c));
  spatial = bound_conv(t, store, prefix + ".pw", spatial, ConvGeometry::same(1));
  const Var<T> channel =
      bound_conv(t, store, prefix + ".ch", global_avg_pool(t, f), ConvGeometry::same(1));
  Var<T> kernels =
      bound_conv(t, store, prefix + ".head", add(t, spatial, channel), ConvGeometry::same(1));
  if (kernels.shape().c != k * k * c)
    throw ChannelMismatch(prefix + ": kernel head emits " + std::to_string(kernels.shape().c) +
                          " maps, expected " + std::to_string(k * k * c));
  return kernels;
}

template <class T>
Var<T> mdconv(Tape<T>& t, const ParamStore<T>& store, const std::string& prefix, const Var<T>& f) {
  const Var<T> w = t.param(store, prefix + ".main.weight");
  const std::size_t k = w.shape().h;
  const std::size_t ko = store.value(prefix + ".offset.weight").shape().h;
  const Var<T> raw = bound_conv(t, store, prefix + ".offset", f, ConvGeometry::same(ko));
  const std::size_t taps = k * k;
  if (raw.shape().c != 3 * taps)
    throw ChannelMismatch(prefix + ": offset head emits " + std::to_string(raw.shape().c) +
                          " maps, expected " + std::to_string(3 * taps));
  const Var<T> offsets = slice_channels(t, raw, 0, 2 * taps);
  const Var<T> modulation = sigmoid(t, slice_channels(t, raw, 2 * taps, taps));
  std::optional<Var<T>> b;
  if (store.contains(prefix + ".main.bias")) b = t.param(store, prefix + ".main.bias");
  return deform_conv(t, f, offsets, modulation, w, b);
}

template <class T>
Var<T> mfi(Tape<T>& t, const ParamStore<T>& store, const std::string& prefix, const Var<T>& f_cat,
           const Var<T>& f_in) {
  const Var<T> a_hw = sigmoid(t, reduce_mean(t, f_cat, {Axis::C}));
  const Var<T> f_cc = mul(t, f_cat, a_hw);
  const Var<T> a_ch = sigmoid(t, reduce_mean(t, f_cat, {Axis::W}));
  const Var<T> f_cw = mul(t, f_cc, a_ch);
  const Var<T> a_cw = sigmoid(t, reduce_mean(t, f_cat, {Axis::H}));
  const Var<T> f_ch = mul(t, f_cc, a_cw);
  const Var<T> fused = add(t, add(t, f_cc, f_cw), f_ch);
  return add(t, f_in, bound_conv(t, store, prefix + ".fuse", fused, ConvGeometry::same(1)));
}

template <class T>
Var<T> cb(Tape<T>& t, const ParamStore<T>& store, const std::string& prefix,
          const BlockConfig& cfg, const Var<T>& f) {
  const auto g = ConvGeometry::same(3);
  Var<T> y = activation(t, bound_conv(t, store, prefix + ".conv1", f, g), cfg.activation);
  y = bound_conv(t, store, prefix + ".conv2", y, g);
  return add(t, f, y);
}

template <class T>
Var<T> dcb(Tape<T>& t, const ParamStore<T>& store, const std::string& prefix,
           const BlockConfig& cfg, const Var<T>& f) {
  const auto g = ConvGeometry::same(3);
  Var<T> y = activation(t, bound_conv(t, store, prefix + ".conv1", f, g), cfg.activation);
  const Var<T> kernels = sekg(t, store, prefix + ".sekg", y, cfg.k);
  y = dconv_apply(t, y, kernels, cfg.k, 1);
  y = bound_conv(t, store, prefix + ".conv2", y, g);
  return add(t, f, y);
}

template <class T>
Var<T> mcb(Tape<T>& t, const ParamStore<T>& store, const std::string& prefix,
           const BlockConfig& cfg, const Var<T>& f) {
  const Var<T> fm = mdconv(t, store, prefix + ".mdconv", f);
  const Var<T> fr = bound_conv(t, store, prefix + ".reduce", fm, ConvGeometry::same(1));
  std::vector<Var<T>> parts{fr};
  for (std::size_t i = 0; i < cfg.dilations.size(); ++i) {
    const std::size_t d = cfg.dilations[i];
    parts.push_back(bound_conv(t, store, prefix + ".branch" + std::to_string(i), fr,
                               ConvGeometry::same(3, d)));
  }
  return mfi(t, store, prefix + ".mfi", concat_channels(t, parts), f);
}

template <class T>
Var<T> mdcb(Tape<T>& t, const ParamStore<T>& store, const std::string& prefix,
            const BlockConfig& cfg, const Var<T>& f, std::type_identity_t<MdcbTrace<T>>* trace,
            const std::type_identity_t<Var<T>>* kernel_override) {
  if (f.shape().c % cfg.reduction != 0)
    throw std::invalid_argument(prefix + ": width " + std::to_string(f.shape().c) +
                                " is not divisible by " + std::to_string(cfg.reduction));
  const Var<T> fm = mdconv(t, store, prefix + ".mdconv", f);
  const Var<T> fr = bound_conv(t, store, prefix + ".reduce", fm, ConvGeometry::same(1));
  const Var<T> kernels =
      kernel_override ? *kernel_override : sekg(t, store, prefix + ".sekg", fr, cfg.k);
  if (trace) {
    trace->reduced = fr;
    trace->kernels = kernels;
    trace->branch_kernels.clear();
  }
  std::vector<Var<T>> parts{fr};
  for (std::size_t i = 0; i < cfg.dilations.size(); ++i) {
    const std::size_t d = cfg.dilations[i];
    if (trace) trace->branch_kernels.push_back(kernels);
    const Var<T> aggregated = dconv_apply(t, fr, kernels, cfg.k, d);
    parts.push_back(bound_conv(t, store, prefix + ".branch" + std::to_string(i), aggregated,
                               ConvGeometry::same(3)));
  }
  return mfi(t, store, prefix + ".mfi", concat_channels(t, parts), f);
}

}  // namespace graph

namespace {

template <class T, class Fn>
BasicTensor<T> evaluate(const BasicTensor<T>& f, Fn&& fn) {
  graph::Tape<T> t(false);
  const graph::Var<T> out = fn(t, t.constant(f));
  return out.value();
}

}  // namespace

template <class T>
BasicTensor<T> cb_forward(const BasicTensor<T>& f, const ParamStore<T>& store,
                          const std::string& prefix, const BlockConfig& cfg) {
  return evaluate(f, [&](graph::Tape<T>& t, const graph::Var<T>& x) {
    return graph::cb(t, store, prefix, cfg, x);
  });
}

template <class T>
BasicTensor<T> dcb_forward(const BasicTensor<T>& f, const ParamStore<T>& store,
                           const std::string& prefix, const BlockConfig& cfg) {
  return evaluate(f, [&](graph::Tape<T>& t, const graph::Var<T>& x) {
    return graph::dcb(t, store, prefix, cfg, x);
  });
}

template <class T>
BasicTensor<T> mcb_forward(const BasicTensor<T>& f, const ParamStore<T>& store,
                           const std::string& prefix, const BlockConfig& cfg) {
  return evaluate(f, [&](graph::Tape<T>& t, const graph::Var<T>& x) {
    return graph::mcb(t, store, prefix, cfg, x);
  });
}

template <class T>
BasicTensor<T> mdcb_forward(const BasicTensor<T>& f, const ParamStore<T>& store,
                            const std::string& prefix, const BlockConfig& cfg) {
  return evaluate(f, [&](graph::Tape<T>& t, const graph::Var<T>& x) {
    return graph::mdcb(t, store, prefix, cfg, x);
  });
}

template <class T>
BasicTensor<T> mfi_fuse(const BasicTensor<T>& f_cat, const BasicTensor<T>& f_in,
                        const ParamStore<T>& store, const std::string& prefix) {
  graph::Tape<T> t(false);
  return graph::mfi(t, store, prefix, t.constant(f_cat), t.constant(f_in)).value();
}

#define ADFNET_INSTANTIATE(T)                                                                     \
  template ParamStore<T> instantiate(const ParamLayout&, Rng&);                                   \
  template ConvParams<T> conv_params(const ParamStore<T>&, const std::string&, ConvGeometry);     \
  template SekgParams<T> sekg_params(const ParamStore<T>&, const std::string&);                   \
  template MdconvParams<T> mdconv_params(const ParamStore<T>&, const std::string&);               \
  template graph::Var<T> graph::bound_conv(graph::Tape<T>&, const ParamStore<T>&,                 \
                                           const std::string&, const graph::Var<T>&,              \
                                           const ConvGeometry&);                                  \
  template graph::Var<T> graph::bound_conv_transposed(graph::Tape<T>&, const ParamStore<T>&,      \
                                                      const std::string&, const graph::Var<T>&,   \
                                                      const ConvGeometry&);                       \
  template graph::Var<T> graph::sekg(graph::Tape<T>&, const ParamStore<T>&, const std::string&,   \
                                     const graph::Var<T>&, std::size_t);                          \
  template graph::Var<T> graph::mdconv(graph::Tape<T>&, const ParamStore<T>&, const std::string&, \
                                       const graph::Var<T>&);                                     \
  template graph::Var<T> graph::mfi(graph::Tape<T>&, const ParamStore<T>&, const std::string&,    \
                                    const graph::Var<T>&, const graph::Var<T>&);                  \
  template graph::Var<T> graph::cb(graph::Tape<T>&, const ParamStore<T>&, const std::string&,     \
                                   const BlockConfig&, const graph::Var<T>&);                     \
  template graph::Var<T> graph::dcb(graph::Tape<T>&, const ParamStore<T>&, const std::string&,    \
                                    const BlockConfig&, const graph::Var<T>&);                    \
  template graph::Var<T> graph::mcb(graph::Tape<T>&, const ParamStore<T>&, const std::string&,    \
                                    const BlockConfig&, const graph::Var<T>&);                    \
  template graph::Var<T> graph::mdcb(graph::Tape<T>&, const ParamStore<T>&, const std::string&,   \
                                     const BlockConfig&, const graph::Var<T>&,                    \
                                     graph::MdcbTrace<T>*, const graph::Var<T>*);                 \
  template BasicTensor<T> cb_forward(const BasicTensor<T>&, const ParamStore<T>&,                 \
                                     const std::string&, const BlockConfig&);                     \
  template BasicTensor<T> dcb_forward(const BasicTensor<T>&, const ParamStore<T>&,                \
                                      const std::string&, const BlockConfig&);                    \
  template BasicTensor<T> mcb_forward(const BasicTensor<T>&, const ParamStore<T>&,                \
                                      const std::string&, const BlockConfig&);                    \
  template BasicTensor<T> mdcb_forward(const BasicTensor<T>&, const ParamStore<T>&,               \
                                       const std::string&, const BlockConfig&);                   \
  template BasicTensor<T> mfi_fuse(const BasicTensor<T>&, const BasicTensor<T>&,                  \
                                   const ParamStore<T>&, const std::string&);

ADFNET_INSTANTIATE(float)
ADFNET_INSTANTIATE(double)
#undef ADFNET_INSTANTIATE

}  // namespace adfnet
