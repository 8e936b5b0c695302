#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "adfnet/autograd.hpp"
#include "adfnet/dynamic_ops.hpp"
#include "adfnet/param_store.hpp"
#include "adfnet/rng.hpp"
#include "adfnet/static_ops.hpp"

// Residual building blocks. Every block keeps (n, c, h, w) and reduces to the
// identity when all of its parameters are zero.
//
// Parameter names are "<prefix>.<part>.weight" / ".bias". Each block is
// written once against the graph API; the *_forward wrappers evaluate the
// same code on a non-recording tape.
namespace adfnet {

struct ParamSpec {
  std::string name;
  Shape shape;
  std::size_t fan_in = 1;
};
using ParamLayout = std::vector<ParamSpec>;

/// Draws every parameter from U(-1/sqrt(fan_in), 1/sqrt(fan_in)) in layout order.
template <class T>
ParamStore<T> instantiate(const ParamLayout& layout, Rng& rng);
std::size_t parameter_count(const ParamLayout& layout);

struct BlockConfig {
  std::size_t channels = 32;
  std::size_t k = 3;
  std::vector<std::size_t> dilations{1, 3, 5};
  graph::Activation activation = graph::Activation::Relu;
  std::size_t reduction = 4;

  std::size_t reduced() const { return channels / reduction; }
  std::size_t concat_width() const { return reduced() * (dilations.size() + 1); }
  void validate() const;
};

void declare_conv(ParamLayout& layout, const std::string& name, std::size_t in, std::size_t out,
                  std::size_t k, std::size_t groups = 1, bool bias = true, bool transposed = false);
void declare_sekg(ParamLayout& layout, const std::string& prefix, std::size_t c, std::size_t k);
void declare_mdconv(ParamLayout& layout, const std::string& prefix, std::size_t c, std::size_t k);
void declare_mfi(ParamLayout& layout, const std::string& prefix, std::size_t c_cat, std::size_t c);
void declare_cb(ParamLayout& layout, const std::string& prefix, const BlockConfig& cfg);
void declare_dcb(ParamLayout& layout, const std::string& prefix, const BlockConfig& cfg);
void declare_mcb(ParamLayout& layout, const std::string& prefix, const BlockConfig& cfg);
void declare_mdcb(ParamLayout& layout, const std::string& prefix, const BlockConfig& cfg);

/// Concrete parameter bundles for the kernel-level composites.
template <class T>
ConvParams<T> conv_params(const ParamStore<T>& store, const std::string& name, ConvGeometry geom);
template <class T>
SekgParams<T> sekg_params(const ParamStore<T>& store, const std::string& prefix);
template <class T>
MdconvParams<T> mdconv_params(const ParamStore<T>& store, const std::string& prefix);

namespace graph {

/// Convolution with "<name>.weight" and, if present, "<name>.bias".
template <class T>
Var<T> bound_conv(Tape<T>& t, const ParamStore<T>& store, const std::string& name, const Var<T>& x,
                  const ConvGeometry& geom);
template <class T>
Var<T> bound_conv_transposed(Tape<T>& t, const ParamStore<T>& store, const std::string& name,
                             const Var<T>& x, const ConvGeometry& geom);

/// Returns the raw (n, k^2 c, h, w) kernel field.
template <class T>
Var<T> sekg(Tape<T>& t, const ParamStore<T>& store, const std::string& prefix, const Var<T>& f,
            std::size_t k);
template <class T>
Var<T> mdconv(Tape<T>& t, const ParamStore<T>& store, const std::string& prefix, const Var<T>& f);
template <class T>
Var<T> mfi(Tape<T>& t, const ParamStore<T>& store, const std::string& prefix, const Var<T>& f_cat,
           const Var<T>& f_in);

template <class T>
Var<T> cb(Tape<T>& t, const ParamStore<T>& store, const std::string& prefix,
          const BlockConfig& cfg, const Var<T>& f);
template <class T>
Var<T> dcb(Tape<T>& t, const ParamStore<T>& store, const std::string& prefix,
           const BlockConfig& cfg, const Var<T>& f);
template <class T>
Var<T> mcb(Tape<T>& t, const ParamStore<T>& store, const std::string& prefix,
           const BlockConfig& cfg, const Var<T>& f);

/// Intermediates exposed for inspection: the shared kernel field and the
/// exact Var each dilation branch consumed.
template <class T>
struct MdcbTrace {
  Var<T> reduced;
  Var<T> kernels;
  std::vector<Var<T>> branch_kernels;
};

/// kernel_override replaces the generated field (used to probe it directly).
template <class T>
Var<T> mdcb(Tape<T>& t, const ParamStore<T>& store, const std::string& prefix,
            const BlockConfig& cfg, const Var<T>& f,
            std::type_identity_t<MdcbTrace<T>>* trace = nullptr,
            const std::type_identity_t<Var<T>>* kernel_override = nullptr);

}  // namespace graph

template <class T>
BasicTensor<T> cb_forward(const BasicTensor<T>& f, const ParamStore<T>& store,
                          const std::string& prefix, const BlockConfig& cfg);
template <class T>
BasicTensor<T> dcb_forward(const BasicTensor<T>& f, const ParamStore<T>& store,
                           const std::string& prefix, const BlockConfig& cfg);
template <class T>
BasicTensor<T> mcb_forward(const BasicTensor<T>& f, const ParamStore<T>& store,
                           const std::string& prefix, const BlockConfig& cfg);
template <class T>
BasicTensor<T> mdcb_forward(const BasicTensor<T>& f, const ParamStore<T>& store,
                            const std::string& prefix, const BlockConfig& cfg);
template <class T>
BasicTensor<T> mfi_fuse(const BasicTensor<T>& f_cat, const BasicTensor<T>& f_in,
                        const ParamStore<T>& store, const std::string& prefix);

}  // namespace adfnet
