#include "adfnet/training.hpp"

#include <cmath>
#include <stdexcept>

#include "adfnet/autograd.hpp"
#include "adfnet/data.hpp"
#include "adfnet/parallel.hpp"

namespace adfnet {

LossKind parse_loss(const std::string& name) {
  if (name == "l2") return LossKind::L2;
  if (name == "charbonnier") return LossKind::Charbonnier;
  throw std::invalid_argument("unknown loss '" + name + "' (expected l2 or charbonnier)");
}

const char* loss_name(LossKind kind) { return kind == LossKind::L2 ? "l2" : "charbonnier"; }

template <class T>
double l2_loss(const BasicTensor<T>& pred, const BasicTensor<T>& target) {
  if (pred.shape() != target.shape()) throw ShapeError("l2_loss: shape mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = static_cast<double>(pred[i]) - static_cast<double>(target[i]);
    acc += d * d;
  }
  return acc / static_cast<double>(pred.size());
}

template <class T>
double charbonnier_loss(const BasicTensor<T>& pred, const BasicTensor<T>& target, double eps) {
  if (!(eps > 0.0)) throw std::invalid_argument("charbonnier_loss: eps must be positive");
  if (pred.shape() != target.shape()) throw ShapeError("charbonnier_loss: shape mismatch");
  // Accumulating the excess over eps keeps the zero-gap value exactly eps.
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = static_cast<double>(pred[i]) - static_cast<double>(target[i]);
    acc += std::hypot(d, eps) - eps;
  }
  return eps + acc / static_cast<double>(pred.size());
}

template <class T>
void adam_step(ParamStore<T>& params, AdamState& state, double lr) {
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  const double b1 = state.beta1, b2 = state.beta2, eps = state.eps;
  for (auto& e : params) {
    T* p = e.value.data();
    T* g = e.grad.data();
    T* m = e.adam_m.data();
    T* v = e.adam_v.data();
    const std::size_t count = e.value.size();
    parallel_for(count, [&](std::size_t i) {
      const double gi = g[i];
      const double mi = b1 * m[i] + (1.0 - b1) * gi;
      const double vi = b2 * v[i] + (1.0 - b2) * gi * gi;
      m[i] = static_cast<T>(mi);
      v[i] = static_cast<T>(vi);
      p[i] = static_cast<T>(p[i] - lr * (mi / c1) / (std::sqrt(vi / c2) + eps));
      g[i] = T(0);
    });
  }
}

double LrSchedule::operator()(std::uint64_t iteration) const {
  const double it = static_cast<double>(iteration);
  const double level = std::floor(it / interval);
  const double frac = it / interval - level;
  return base * std::pow(0.5, level) * (1.0 - 0.5 * frac);
}

double loss_and_gradients(ParamStore<float>& params, const NetworkConfig& config,
                          const Tensor& noisy, const Tensor& clean, LossKind loss) {
  graph::Tape<float> tape;
  const auto pred = graph::network(tape, params, config, tape.constant(noisy));
  const auto target = tape.constant(clean);
  const auto value = loss == LossKind::L2
                         ? graph::l2_loss(tape, pred, target)
                         : graph::charbonnier_loss(tape, pred, target,
                                                   static_cast<float>(kCharbonnierEps));
  tape.backward(value);
  tape.accumulate_param_grads(params);
  return static_cast<double>(value.value()[0]);
}

std::vector<TrainLogEntry> train(ParamStore<float>& params, AdamState& adam,
                                 const NetworkConfig& config, const std::vector<Tensor>& images,
                                 const TrainOptions& options, std::uint64_t start,
                                 const std::function<void(const TrainLogEntry&)>& on_step) {
  std::vector<TrainLogEntry> log;
  log.reserve(options.iterations);
  const Rng root(options.seed);
  params.zero_grad();
  for (std::uint64_t i = start; i < start + options.iterations; ++i) {
    Rng rng = root.fork(i);
    const PatchBatch batch =
        sample_patches(images, options.patch, options.batch, options.augment, options.sigma, rng);
    const double loss = loss_and_gradients(params, config, batch.noisy, batch.clean, options.loss);
    if (!std::isfinite(loss))
      throw NonFiniteLoss("loss became " + std::to_string(loss) + " at iteration " +
                          std::to_string(i));
    const double lr = options.schedule(i);
    adam_step(params, adam, lr);
    log.push_back({i, lr, loss});
    if (on_step) on_step(log.back());
  }
  return log;
}

ToyData make_toy_data(std::uint64_t seed, std::size_t patch, double sigma, std::size_t count,
                      std::size_t size) {
  const Rng root(seed);
  ToyData d;
  for (std::size_t i = 0; i < count; ++i) {
    Rng r = root.fork(100 + i);
    d.images.push_back(synthetic_image(size, size, r));
  }
  Rng r = root.fork(999);
  d.held_out_clean = synthetic_image(patch, patch, r);
  Rng noise = root.fork(1000);
  d.held_out_noisy = add_awgn(d.held_out_clean, sigma, noise);
  return d;
}

double window_mean(const std::vector<TrainLogEntry>& log, std::size_t begin, std::size_t count) {
  if (count == 0 || begin + count > log.size())
    throw std::out_of_range("loss window outside the log");
  double s = 0.0;
  for (std::size_t i = begin; i < begin + count; ++i) s += log[i].loss;
  return s / static_cast<double>(count);
}

#define ADFNET_INSTANTIATE(T)                                                      \
  template double l2_loss(const BasicTensor<T>&, const BasicTensor<T>&);           \
  template double charbonnier_loss(const BasicTensor<T>&, const BasicTensor<T>&,   \
                                   double);                                        \
  template void adam_step(ParamStore<T>&, AdamState&, double);

ADFNET_INSTANTIATE(float)
ADFNET_INSTANTIATE(double)
#undef ADFNET_INSTANTIATE

}  // namespace adfnet
