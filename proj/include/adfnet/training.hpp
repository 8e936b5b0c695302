#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "adfnet/network.hpp"
#include "adfnet/param_store.hpp"
#include "adfnet/tensor.hpp"

namespace adfnet {

enum class LossKind { L2, Charbonnier };
inline constexpr double kCharbonnierEps = 1e-3;

LossKind parse_loss(const std::string& name);
const char* loss_name(LossKind kind);

/// mean((p - t)^2)
template <class T>
double l2_loss(const BasicTensor<T>& pred, const BasicTensor<T>& target);
/// mean(sqrt((p - t)^2 + eps^2))
template <class T>
double charbonnier_loss(const BasicTensor<T>& pred, const BasicTensor<T>& target,
                        double eps = kCharbonnierEps);

/// Moments live in the ParamStore entries; this holds the shared counters.
struct AdamState {
  std::uint64_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// One bias-corrected update of every parameter, then zeroes the gradients.
template <class T>
void adam_step(ParamStore<T>& params, AdamState& state, double lr);

/// base * 0.5^m * (1 - 0.5 * f), with m = floor(iter / interval) and f the
/// fraction of the current interval already elapsed: each level decays
/// linearly to half of itself by the next boundary.
struct LrSchedule {
  double base = 1e-4;
  double interval = 2e5;

  double operator()(std::uint64_t iteration) const;
};

class NonFiniteLoss : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainOptions {
  std::uint64_t iterations = 200;
  std::size_t batch = 8;
  std::size_t patch = 32;
  double sigma = 25.0;
  std::uint64_t seed = 0;
  LossKind loss = LossKind::L2;
  LrSchedule schedule{1e-3, 2e5};
  bool augment = true;
};

struct TrainLogEntry {
  std::uint64_t iteration = 0;
  double lr = 0.0;
  double loss = 0.0;
};

/// Runs iterations [start, start + options.iterations). Batch i is drawn
/// from Rng(seed).fork(i), so a resumed run sees the same data stream.
std::vector<TrainLogEntry> train(ParamStore<float>& params, AdamState& adam,
                                 const NetworkConfig& config, const std::vector<Tensor>& images,
                                 const TrainOptions& options, std::uint64_t start = 0,
                                 const std::function<void(const TrainLogEntry&)>& on_step = {});

/// One forward/backward pass on a batch; gradients accumulate into params.
double loss_and_gradients(ParamStore<float>& params, const NetworkConfig& config,
                          const Tensor& noisy, const Tensor& clean, LossKind loss);

/// Seeded synthetic training set plus one disjoint held-out patch.
struct ToyData {
  std::vector<Tensor> images;
  Tensor held_out_clean;
  Tensor held_out_noisy;  // clamped, as evaluated
};
ToyData make_toy_data(std::uint64_t seed, std::size_t patch, double sigma, std::size_t count = 8,
                      std::size_t size = 64);

/// Mean loss over log[begin, begin + count).
double window_mean(const std::vector<TrainLogEntry>& log, std::size_t begin, std::size_t count);

}  // namespace adfnet
