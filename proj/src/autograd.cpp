#include "adfnet/autograd.hpp"

#include <cmath>

namespace adfnet::graph {
namespace {

template <class T>
void accumulate(BasicTensor<T>& dst, BasicTensor<T>&& src) {
  if (dst.empty()) {
    dst = std::move(src);
    return;
  }
  if (dst.shape() != src.shape())
    throw ShapeError("gradient shape " + src.shape().str() + " does not match " + dst.shape().str());
  T* d = dst.data();
  const T* s = src.data();
  for (std::size_t i = 0; i < dst.size(); ++i) d[i] += s[i];
}

template <class T>
std::vector<BasicTensor<T>> grads_of(std::size_t n) {
  return std::vector<BasicTensor<T>>(n);
}

}  // namespace

template <class T>
Var<T> Tape<T>::constant(BasicTensor<T> value) {
  auto node = std::make_shared<Node<T>>();
  node->op = "constant";
  node->value = std::move(value);
  return Var<T>(std::move(node));
}

template <class T>
Var<T> Tape<T>::leaf(BasicTensor<T> value) {
  auto node = std::make_shared<Node<T>>();
  node->op = "leaf";
  node->value = std::move(value);
  node->requires_grad = recording_;
  if (recording_) order_.push_back(node);
  return Var<T>(std::move(node));
}

template <class T>
Var<T> Tape<T>::param(const ParamStore<T>& store, const std::string& name) {
  if (auto it = params_.find(name); it != params_.end()) return it->second;
  auto node = std::make_shared<Node<T>>();
  node->op = "param";
  node->value = store.value(name);
  node->param_name = name;
  node->requires_grad = recording_;
  if (recording_) order_.push_back(node);
  Var<T> v(std::move(node));
  params_.emplace(name, v);
  return v;
}

template <class T>
Var<T> Tape<T>::apply(std::string op, std::vector<Var<T>> inputs, BasicTensor<T> output,
                      Adjoint<T> adjoint) {
  auto node = std::make_shared<Node<T>>();
  node->op = std::move(op);
  node->value = std::move(output);
  bool needs = false;
  for (const auto& in : inputs) needs = needs || in.requires_grad();
  if (recording_ && needs) {
    node->requires_grad = true;
    node->adjoint = std::move(adjoint);
    node->inputs.reserve(inputs.size());
    for (auto& in : inputs) node->inputs.push_back(in.node());
    order_.push_back(node);
  }
  return Var<T>(std::move(node));
}

template <class T>
void Tape<T>::backward(const Var<T>& root, const BasicTensor<T>& seed) {
  if (!root.requires_grad()) return;
  if (seed.shape() != root.shape())
    throw ShapeError("backward seed " + seed.shape().str() + " does not match " + root.shape().str());
  accumulate(root.node()->grad, BasicTensor<T>(seed));
  for (auto it = order_.rbegin(); it != order_.rend(); ++it) {
    Node<T>& node = **it;
    if (node.inputs.empty() || node.grad.empty()) continue;
    if (!node.adjoint) throw MissingAdjoint("op '" + node.op + "' has no adjoint");
    std::vector<BasicTensor<T>> grads = node.adjoint(node);
    if (grads.size() != node.inputs.size())
      throw MissingAdjoint("op '" + node.op + "' returned " + std::to_string(grads.size()) +
                           " gradients for " + std::to_string(node.inputs.size()) + " inputs");
    for (std::size_t i = 0; i < grads.size(); ++i) {
      Node<T>& in = *node.inputs[i];
      if (!in.requires_grad || grads[i].empty()) continue;
      if (grads[i].shape() != in.value.shape())
        throw ShapeError("op '" + node.op + "' produced gradient " + grads[i].shape().str() +
                         " for input " + in.value.shape().str());
      accumulate(in.grad, std::move(grads[i]));
    }
  }
}

template <class T>
void Tape<T>::backward(const Var<T>& root) {
  backward(root, BasicTensor<T>::ones(root.shape()));
}

template <class T>
void Tape<T>::accumulate_param_grads(ParamStore<T>& store) const {
  for (const auto& [name, var] : params_) {
    if (var.grad().empty()) continue;
    accumulate(store.entry(name).grad, BasicTensor<T>(var.grad()));
  }
}

template <class T>
Var<T> add(Tape<T>& t, const Var<T>& a, const Var<T>& b) {
  return t.apply("add", {a, b}, adfnet::add(a.value(), b.value()), [](const Node<T>& n) {
    auto g = grads_of<T>(2);
    if (n.input_needs_grad(0)) g[0] = n.grad;
    if (n.input_needs_grad(1)) g[1] = reduce_sum_to(n.grad, n.input(1).shape());
    return g;
  });
}

template <class T>
Var<T> sub(Tape<T>& t, const Var<T>& a, const Var<T>& b) {
  return t.apply("sub", {a, b}, adfnet::sub(a.value(), b.value()), [](const Node<T>& n) {
    auto g = grads_of<T>(2);
    if (n.input_needs_grad(0)) g[0] = n.grad;
    if (n.input_needs_grad(1)) g[1] = adfnet::scale(reduce_sum_to(n.grad, n.input(1).shape()), T(-1));
    return g;
  });
}

template <class T>
Var<T> mul(Tape<T>& t, const Var<T>& a, const Var<T>& b) {
  return t.apply("mul", {a, b}, adfnet::mul(a.value(), b.value()), [](const Node<T>& n) {
    auto g = grads_of<T>(2);
    if (n.input_needs_grad(0)) g[0] = adfnet::mul(n.grad, n.input(1));
    if (n.input_needs_grad(1))
      g[1] = reduce_sum_to(adfnet::mul(n.grad, n.input(0)), n.input(1).shape());
    return g;
  });
}

template <class T>
Var<T> scale(Tape<T>& t, const Var<T>& a, T s) {
  return t.apply("scale", {a}, adfnet::scale(a.value(), s), [s](const Node<T>& n) {
    return std::vector<BasicTensor<T>>{adfnet::scale(n.grad, s)};
  });
}

template <class T>
Var<T> sigmoid(Tape<T>& t, const Var<T>& a) {
  return t.apply("sigmoid", {a}, adfnet::sigmoid(a.value()), [](const Node<T>& n) {
    BasicTensor<T> g(n.value.shape());
    for (std::size_t i = 0; i < g.size(); ++i) {
      const T y = n.value[i];
      g[i] = n.grad[i] * y * (T(1) - y);
    }
    return std::vector<BasicTensor<T>>{std::move(g)};
  });
}

template <class T>
Var<T> leaky_relu(Tape<T>& t, const Var<T>& a, T slope) {
  const char* name = slope == T(0) ? "relu" : "leaky_relu";
  BasicTensor<T> out =
      slope == T(0) ? adfnet::relu(a.value()) : adfnet::leaky_relu(a.value(), slope);
  return t.apply(name, {a}, std::move(out), [slope](const Node<T>& n) {
    const BasicTensor<T>& x = n.input(0);
    BasicTensor<T> g(x.shape());
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = x[i] > T(0) ? n.grad[i] : n.grad[i] * slope;
    return std::vector<BasicTensor<T>>{std::move(g)};
  });
}

template <class T>
Var<T> relu(Tape<T>& t, const Var<T>& a) {
  return leaky_relu(t, a, T(0));
}

template <class T>
Var<T> activation(Tape<T>& t, const Var<T>& a, Activation kind) {
  return kind == Activation::Relu ? relu(t, a) : leaky_relu(t, a, static_cast<T>(kLeakySlope));
}

template <class T>
Var<T> reduce_mean(Tape<T>& t, const Var<T>& a, Axes axes) {
  return t.apply("reduce_mean", {a}, adfnet::reduce_mean(a.value(), axes), [](const Node<T>& n) {
    const Shape& in = n.input(0).shape();
    const T inv = T(static_cast<double>(n.value.size()) / static_cast<double>(in.numel()));
    return std::vector<BasicTensor<T>>{adfnet::scale(broadcast_to(n.grad, in), inv)};
  });
}

template <class T>
Var<T> sum_all(Tape<T>& t, const Var<T>& a) {
  BasicTensor<T> out({1, 1, 1, 1}, static_cast<T>(adfnet::sum(a.value())));
  return t.apply("sum", {a}, std::move(out), [](const Node<T>& n) {
    return std::vector<BasicTensor<T>>{BasicTensor<T>::full(n.input(0).shape(), n.grad[0])};
  });
}

template <class T>
Var<T> concat_channels(Tape<T>& t, const std::vector<Var<T>>& parts) {
  std::vector<BasicTensor<T>> values;
  values.reserve(parts.size());
  for (const auto& p : parts) values.push_back(p.value());
  BasicTensor<T> out = adfnet::concat_channels(std::span<const BasicTensor<T>>(values));
  values.clear();
  return t.apply("concat_channels", parts, std::move(out), [](const Node<T>& n) {
    std::vector<BasicTensor<T>> g(n.inputs.size());
    std::size_t c0 = 0;
    for (std::size_t i = 0; i < n.inputs.size(); ++i) {
      const std::size_t c = n.input(i).shape().c;
      if (n.input_needs_grad(i)) g[i] = adfnet::slice_channels(n.grad, c0, c);
      c0 += c;
    }
    return g;
  });
}

template <class T>
Var<T> slice_channels(Tape<T>& t, const Var<T>& a, std::size_t begin, std::size_t count) {
  return t.apply("slice_channels", {a}, adfnet::slice_channels(a.value(), begin, count),
                 [begin, count](const Node<T>& n) {
                   const Shape& s = n.input(0).shape();
                   BasicTensor<T> g(s);
                   for (std::size_t b = 0; b < s.n; ++b)
                     std::copy_n(n.grad.plane(b, 0), count * s.plane(), g.plane(b, begin));
                   return std::vector<BasicTensor<T>>{std::move(g)};
                 });
}

template <class T>
Var<T> pad_zero(Tape<T>& t, const Var<T>& a, std::size_t pad) {
  return t.apply("pad_zero", {a}, adfnet::pad_zero(a.value(), pad), [pad](const Node<T>& n) {
    return std::vector<BasicTensor<T>>{adfnet::crop(n.grad, pad)};
  });
}

template <class T>
Var<T> conv2d(Tape<T>& t, const Var<T>& x, const Var<T>& weight, const std::optional<std::type_identity_t<Var<T>>>& bias,
              const ConvGeometry& geom) {
  std::vector<Var<T>> inputs{x, weight};
  if (bias) inputs.push_back(*bias);
  BasicTensor<T> out =
      adfnet::conv2d(x.value(), weight.value(), bias ? &bias->value() : nullptr, geom);
  return t.apply("conv2d", std::move(inputs), std::move(out), [geom](const Node<T>& n) {
    auto g = grads_of<T>(n.inputs.size());
    const BasicTensor<T>& xv = n.input(0);
    const BasicTensor<T>& wv = n.input(1);
    if (n.input_needs_grad(0)) g[0] = conv2d_backward_input(n.grad, wv, geom, xv.shape());
    if (n.input_needs_grad(1)) g[1] = conv2d_backward_weight(xv, n.grad, geom, wv.shape());
    if (n.inputs.size() > 2 && n.input_needs_grad(2)) g[2] = bias_grad(n.grad);
    return g;
  });
}

template <class T>
Var<T> conv2d_transposed(Tape<T>& t, const Var<T>& x, const Var<T>& weight,
                         const std::optional<std::type_identity_t<Var<T>>>& bias, const ConvGeometry& geom) {
  std::vector<Var<T>> inputs{x, weight};
  if (bias) inputs.push_back(*bias);
  BasicTensor<T> out =
      adfnet::conv2d_transposed(x.value(), weight.value(), bias ? &bias->value() : nullptr, geom);
  return t.apply("conv2d_transposed", std::move(inputs), std::move(out), [geom](const Node<T>& n) {
    auto g = grads_of<T>(n.inputs.size());
    const BasicTensor<T>& xv = n.input(0);
    const BasicTensor<T>& wv = n.input(1);
    if (n.input_needs_grad(0)) g[0] = adfnet::conv2d<T>(n.grad, wv, nullptr, geom);
    if (n.input_needs_grad(1))
      g[1] = conv2d_transposed_backward_weight(xv, n.grad, geom, wv.shape());
    if (n.inputs.size() > 2 && n.input_needs_grad(2)) g[2] = bias_grad(n.grad);
    return g;
  });
}

template <class T>
Var<T> global_avg_pool(Tape<T>& t, const Var<T>& x) {
  return reduce_mean(t, x, {Axis::H, Axis::W});
}

template <class T>
Var<T> unfold(Tape<T>& t, const Var<T>& x, std::size_t k, std::size_t dilation) {
  return t.apply("unfold", {x}, adfnet::unfold(x.value(), k, 1, dilation).data,
                 [k, dilation](const Node<T>& n) {
                   return std::vector<BasicTensor<T>>{adfnet::fold(n.grad, k, dilation)};
                 });
}

template <class T>
Var<T> dconv_apply(Tape<T>& t, const Var<T>& f, const Var<T>& kernels, std::size_t k,
                   std::size_t dilation) {
  return t.apply("dconv_apply", {f, kernels},
                 adfnet::dconv_apply(f.value(), kernels.value(), k, dilation),
                 [k, dilation](const Node<T>& n) {
                   auto g = grads_of<T>(2);
                   if (n.input_needs_grad(0))
                     g[0] = dconv_apply_backward_input(n.grad, n.input(1), k, dilation);
                   if (n.input_needs_grad(1))
                     g[1] = dconv_apply_backward_kernel(n.input(0), n.grad, k, dilation);
                   return g;
                 });
}

template <class T>
Var<T> deform_conv(Tape<T>& t, const Var<T>& f, const Var<T>& offsets, const Var<T>& modulation,
                   const Var<T>& weight, const std::optional<std::type_identity_t<Var<T>>>& bias) {
  std::vector<Var<T>> inputs{f, offsets, modulation, weight};
  if (bias) inputs.push_back(*bias);
  BasicTensor<T> out = adfnet::deform_conv(f.value(), offsets.value(), modulation.value(),
                                           weight.value(), bias ? &bias->value() : nullptr);
  return t.apply("deform_conv", std::move(inputs), std::move(out), [](const Node<T>& n) {
    DeformConvGrads<T> d =
        deform_conv_backward(n.input(0), n.input(1), n.input(2), n.input(3), n.grad);
    std::vector<BasicTensor<T>> g;
    g.push_back(std::move(d.input));
    g.push_back(std::move(d.offsets));
    g.push_back(std::move(d.modulation));
    g.push_back(std::move(d.weight));
    if (n.inputs.size() > 4) g.push_back(std::move(d.bias));
    return g;
  });
}

template <class T>
Var<T> l2_loss(Tape<T>& t, const Var<T>& pred, const Var<T>& target) {
  const BasicTensor<T>& p = pred.value();
  const BasicTensor<T>& q = target.value();
  if (p.shape() != q.shape()) throw ShapeError("l2_loss: shape mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double d = static_cast<double>(p[i]) - static_cast<double>(q[i]);
    acc += d * d;
  }
  BasicTensor<T> out({1, 1, 1, 1}, static_cast<T>(acc / static_cast<double>(p.size())));
  return t.apply("l2_loss", {pred, target}, std::move(out), [](const Node<T>& n) {
    const BasicTensor<T>& p = n.input(0);
    const BasicTensor<T>& q = n.input(1);
    const T k = T(2) * n.grad[0] / static_cast<T>(p.size());
    BasicTensor<T> gp = adfnet::scale(adfnet::sub(p, q), k);
    auto g = grads_of<T>(2);
    if (n.input_needs_grad(1)) g[1] = adfnet::scale(gp, T(-1));
    if (n.input_needs_grad(0)) g[0] = std::move(gp);
    return g;
  });
}

template <class T>
Var<T> charbonnier_loss(Tape<T>& t, const Var<T>& pred, const Var<T>& target, T eps) {
  if (!(eps > T(0))) throw std::invalid_argument("charbonnier_loss: eps must be positive");
  const BasicTensor<T>& p = pred.value();
  const BasicTensor<T>& q = target.value();
  if (p.shape() != q.shape()) throw ShapeError("charbonnier_loss: shape mismatch");
  const double e = static_cast<double>(eps);
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double d = static_cast<double>(p[i]) - static_cast<double>(q[i]);
    acc += std::hypot(d, e) - e;
  }
  BasicTensor<T> out({1, 1, 1, 1}, static_cast<T>(e + acc / static_cast<double>(p.size())));
  return t.apply("charbonnier_loss", {pred, target}, std::move(out), [eps](const Node<T>& n) {
    const BasicTensor<T>& p = n.input(0);
    const BasicTensor<T>& q = n.input(1);
    const T k = n.grad[0] / static_cast<T>(p.size());
    BasicTensor<T> gp(p.shape());
    for (std::size_t i = 0; i < p.size(); ++i) {
      const T d = p[i] - q[i];
      gp[i] = k * d / std::sqrt(d * d + eps * eps);
    }
    auto g = grads_of<T>(2);
    if (n.input_needs_grad(1)) g[1] = adfnet::scale(gp, T(-1));
    if (n.input_needs_grad(0)) g[0] = std::move(gp);
    return g;
  });
}

#define ADFNET_INSTANTIATE(T)                                                                    \
  template class Tape<T>;                                                                        \
  template Var<T> add(Tape<T>&, const Var<T>&, const Var<T>&);                                   \
  template Var<T> sub(Tape<T>&, const Var<T>&, const Var<T>&);                                   \
  template Var<T> mul(Tape<T>&, const Var<T>&, const Var<T>&);                                   \
  template Var<T> scale(Tape<T>&, const Var<T>&, T);                                             \
  template Var<T> sigmoid(Tape<T>&, const Var<T>&);                                              \
  template Var<T> relu(Tape<T>&, const Var<T>&);                                                 \
  template Var<T> leaky_relu(Tape<T>&, const Var<T>&, T);                                        \
  template Var<T> activation(Tape<T>&, const Var<T>&, Activation);                               \
  template Var<T> reduce_mean(Tape<T>&, const Var<T>&, Axes);                                    \
  template Var<T> sum_all(Tape<T>&, const Var<T>&);                                              \
  template Var<T> concat_channels(Tape<T>&, const std::vector<Var<T>>&);                         \
  template Var<T> slice_channels(Tape<T>&, const Var<T>&, std::size_t, std::size_t);             \
  template Var<T> pad_zero(Tape<T>&, const Var<T>&, std::size_t);                                \
  template Var<T> conv2d(Tape<T>&, const Var<T>&, const Var<T>&, const std::optional<Var<T>>&,   \
                         const ConvGeometry&);                                                   \
  template Var<T> conv2d_transposed(Tape<T>&, const Var<T>&, const Var<T>&,                      \
                                    const std::optional<Var<T>>&, const ConvGeometry&);          \
  template Var<T> global_avg_pool(Tape<T>&, const Var<T>&);                                      \
  template Var<T> unfold(Tape<T>&, const Var<T>&, std::size_t, std::size_t);                     \
  template Var<T> dconv_apply(Tape<T>&, const Var<T>&, const Var<T>&, std::size_t, std::size_t); \
  template Var<T> deform_conv(Tape<T>&, const Var<T>&, const Var<T>&, const Var<T>&,             \
                              const Var<T>&, const std::optional<Var<T>>&);                      \
  template Var<T> l2_loss(Tape<T>&, const Var<T>&, const Var<T>&);                               \
  template Var<T> charbonnier_loss(Tape<T>&, const Var<T>&, const Var<T>&, T);

ADFNET_INSTANTIATE(float)
ADFNET_INSTANTIATE(double)
#undef ADFNET_INSTANTIATE

}  // namespace adfnet::graph
