#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "adfnet/autograd.hpp"
#include "adfnet/param_store.hpp"
#include "adfnet/tensor.hpp"

namespace adfnet {

/// Tolerance classes of the built-in suite.
inline constexpr double kLinearTolerance = 1e-8;
inline constexpr double kSmoothTolerance = 1e-6;
inline constexpr double kBlockTolerance = 1e-4;
inline constexpr double kNetworkTolerance = 1e-3;

struct GradCheckEntry {
  std::string name;
  std::string category;
  double tolerance = 0.0;
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped = 0;  // coordinates whose +/- evaluations straddle a kink
  std::string note;

  bool passed() const { return checked > 0 && max_rel_error < tolerance; }
};

using GraphFn = std::function<graph::Var<double>(graph::Tape<double>&,
                                                 const std::vector<graph::Var<double>>&)>;

/// The scalar under test is sum(forward(...) * R) for a fixed random R.
/// Every input tensor and, when params is set, every parameter is probed.
struct GradCheckProblem {
  std::string name;
  std::string category;
  double tolerance = kBlockTolerance;
  std::vector<Tensor64> inputs;
  ParamStore<double>* params = nullptr;
  GraphFn forward;
  std::size_t coords_per_tensor = 8;
  /// > 0: probe this many parameter coordinates drawn across all tensors
  /// instead of coords_per_tensor in each.
  std::size_t total_param_coords = 0;
  bool probe_inputs = true;
  /// > 0: finite-difference step for this problem instead of the global one.
  double step = 0.0;
};

struct GradCheckOptions {
  double step = 1e-4;
  double floor = 1e-3;  // relative error = |a - n| / max(|a|, |n|, floor)
  std::uint64_t seed = 0;
};

GradCheckEntry run_grad_check(GradCheckProblem& problem, const GradCheckOptions& options = {});

/// Every differentiable op, every block, and a sampled full network.
std::vector<GradCheckEntry> grad_check_suite(std::uint64_t seed, bool include_network = true);

void print_grad_report(std::ostream& os, const std::vector<GradCheckEntry>& entries);

}  // namespace adfnet
