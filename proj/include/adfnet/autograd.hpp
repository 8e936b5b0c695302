#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

#include "adfnet/dynamic_ops.hpp"
#include "adfnet/param_store.hpp"
#include "adfnet/static_ops.hpp"
#include "adfnet/tensor.hpp"

// Reverse-mode differentiation over the tensor ops. A Tape records every op
// application (op name, input nodes, output value, adjoint) in execution
// order; backward() replays the record in reverse, so a node's gradient is
// complete before its own adjoint runs. A non-recording tape evaluates the
// same graph code for inference and frees intermediates as soon as they go
// out of scope.
namespace adfnet::graph {

class MissingAdjoint : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

template <class T>
struct Node;

/// Adjoint: given the node (inputs, output value, output gradient), returns
/// one gradient per input. An empty tensor means "no contribution".
template <class T>
using Adjoint = std::function<std::vector<BasicTensor<T>>(const Node<T>&)>;

template <class T>
struct Node {
  std::string op;
  BasicTensor<T> value;
  BasicTensor<T> grad;
  std::vector<std::shared_ptr<Node>> inputs;
  Adjoint<T> adjoint;
  bool requires_grad = false;
  std::string param_name;  // set for parameter leaves

  const BasicTensor<T>& input(std::size_t i) const { return inputs.at(i)->value; }
  bool input_needs_grad(std::size_t i) const { return inputs.at(i)->requires_grad; }
};

template <class T>
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

  const BasicTensor<T>& value() const { return node_->value; }
  const BasicTensor<T>& grad() const { return node_->grad; }
  const Shape& shape() const { return node_->value.shape(); }
  bool requires_grad() const { return node_->requires_grad; }
  const std::shared_ptr<Node<T>>& node() const { return node_; }
  explicit operator bool() const { return node_ != nullptr; }

 private:
  std::shared_ptr<Node<T>> node_;
};

template <class T>
class Tape {
 public:
  explicit Tape(bool recording = true) : recording_(recording) {}

  bool recording() const { return recording_; }
  std::size_t size() const { return order_.size(); }

  Var<T> constant(BasicTensor<T> value);
  /// Leaf whose gradient is wanted (inputs under test, for example).
  Var<T> leaf(BasicTensor<T> value);
  /// Parameter leaf; bound once per tape so reuse accumulates into one gradient.
  Var<T> param(const ParamStore<T>& store, const std::string& name);

  Var<T> apply(std::string op, std::vector<Var<T>> inputs, BasicTensor<T> output,
               Adjoint<T> adjoint);

  /// Seeds root with `seed` (ones for a scalar loss) and propagates to every
  /// reachable leaf. Gradients accumulate across reuse.
  void backward(const Var<T>& root, const BasicTensor<T>& seed);
  void backward(const Var<T>& root);

  /// Adds every bound parameter's gradient into the store.
  void accumulate_param_grads(ParamStore<T>& store) const;

 private:
  bool recording_;
  std::vector<std::shared_ptr<Node<T>>> order_;
  std::map<std::string, Var<T>, std::less<>> params_;
};

enum class Activation { Relu, LeakyRelu };
inline constexpr double kLeakySlope = 0.2;

template <class T> Var<T> add(Tape<T>& t, const Var<T>& a, const Var<T>& b);
template <class T> Var<T> sub(Tape<T>& t, const Var<T>& a, const Var<T>& b);
template <class T> Var<T> mul(Tape<T>& t, const Var<T>& a, const Var<T>& b);
template <class T> Var<T> scale(Tape<T>& t, const Var<T>& a, T s);
template <class T> Var<T> sigmoid(Tape<T>& t, const Var<T>& a);
template <class T> Var<T> relu(Tape<T>& t, const Var<T>& a);
template <class T> Var<T> leaky_relu(Tape<T>& t, const Var<T>& a, T slope);
template <class T> Var<T> activation(Tape<T>& t, const Var<T>& a, Activation kind);
template <class T> Var<T> reduce_mean(Tape<T>& t, const Var<T>& a, Axes axes);
template <class T> Var<T> sum_all(Tape<T>& t, const Var<T>& a);
template <class T> Var<T> concat_channels(Tape<T>& t, const std::vector<Var<T>>& parts);
template <class T> Var<T> slice_channels(Tape<T>& t, const Var<T>& a, std::size_t begin, std::size_t count);
template <class T> Var<T> pad_zero(Tape<T>& t, const Var<T>& a, std::size_t pad);

template <class T>
Var<T> conv2d(Tape<T>& t, const Var<T>& x, const Var<T>& weight,
              const std::optional<std::type_identity_t<Var<T>>>& bias, const ConvGeometry& g);
template <class T>
Var<T> conv2d_transposed(Tape<T>& t, const Var<T>& x, const Var<T>& weight,
                         const std::optional<std::type_identity_t<Var<T>>>& bias,
                         const ConvGeometry& g);
template <class T> Var<T> global_avg_pool(Tape<T>& t, const Var<T>& x);
template <class T>
Var<T> unfold(Tape<T>& t, const Var<T>& x, std::size_t k, std::size_t dilation);

/// Per-pixel depthwise filtering; `kernels` is a (n, k^2 c, h, w) field.
template <class T>
Var<T> dconv_apply(Tape<T>& t, const Var<T>& f, const Var<T>& kernels, std::size_t k,
                   std::size_t dilation = 1);
/// Modulated deformable convolution from raw offsets (n, 2k^2, h, w) and
/// modulation (n, k^2, h, w).
template <class T>
Var<T> deform_conv(Tape<T>& t, const Var<T>& f, const Var<T>& offsets, const Var<T>& modulation,
                   const Var<T>& weight, const std::optional<std::type_identity_t<Var<T>>>& bias);

template <class T> Var<T> l2_loss(Tape<T>& t, const Var<T>& pred, const Var<T>& target);
template <class T>
Var<T> charbonnier_loss(Tape<T>& t, const Var<T>& pred, const Var<T>& target, T eps);

}  // namespace adfnet::graph
