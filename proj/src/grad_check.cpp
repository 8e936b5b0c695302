#include "adfnet/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <memory>
#include <set>
#include <sstream>

#include "adfnet/blocks.hpp"
#include "adfnet/kink_tracker.hpp"
#include "adfnet/network.hpp"
#include "adfnet/rng.hpp"

namespace adfnet {
namespace {

using graph::Tape;
using graph::Var;

struct Evaluation {
  double value = 0.0;
  std::uint64_t signature = 0;
};

std::vector<std::size_t> pick_coords(std::size_t size, std::size_t count, Rng& rng) {
  std::vector<std::size_t> out;
  if (size <= count) {
    for (std::size_t i = 0; i < size; ++i) out.push_back(i);
    return out;
  }
  std::set<std::size_t> seen;
  while (seen.size() < count) seen.insert(rng.below(size));
  return {seen.begin(), seen.end()};
}

}  // namespace

GradCheckEntry run_grad_check(GradCheckProblem& pb, const GradCheckOptions& o) {
  GradCheckEntry entry;
  entry.name = pb.name;
  entry.category = pb.category;
  entry.tolerance = pb.tolerance;
  const Rng root(o.seed);
  Rng proj_rng = root.fork(1);
  Rng pick = root.fork(2);

  Tensor64 projection;
  std::vector<Tensor64> input_grads;
  {
    Tape<double> tape(true);
    std::vector<Var<double>> leaves;
    for (const auto& x : pb.inputs)
      leaves.push_back(pb.probe_inputs ? tape.leaf(x) : tape.constant(x));
    const Var<double> out = pb.forward(tape, leaves);
    projection = rand_init<double>(proj_rng, out.shape(), InitScheme::gaussian(1.0));
    tape.backward(out, projection);
    for (const auto& l : leaves)
      input_grads.push_back(l.grad().empty() ? Tensor64(l.shape()) : l.grad());
    if (pb.params) {
      pb.params->zero_grad();
      tape.accumulate_param_grads(*pb.params);
    }
  }

  auto evaluate = [&]() {
    KinkTracker::Scope scope;
    Tape<double> tape(false);
    std::vector<Var<double>> leaves;
    for (const auto& x : pb.inputs) leaves.push_back(tape.constant(x));
    const Var<double> out = pb.forward(tape, leaves);
    return Evaluation{dot(out.value(), projection), KinkTracker::signature()};
  };

  const double h = pb.step > 0 ? pb.step : o.step;
  auto probe = [&](double& slot, double analytic) {
    const double saved = slot;
    slot = saved + h;
    const Evaluation plus = evaluate();
    slot = saved - h;
    const Evaluation minus = evaluate();
    slot = saved;
    if (plus.signature != minus.signature) {
      ++entry.skipped;
      return false;
    }
    const double numeric = (plus.value - minus.value) / (2.0 * h);
    const double denom = std::max({std::abs(analytic), std::abs(numeric), o.floor});
    entry.max_rel_error = std::max(entry.max_rel_error, std::abs(analytic - numeric) / denom);
    ++entry.checked;
    return true;
  };

  if (pb.probe_inputs)
    for (std::size_t i = 0; i < pb.inputs.size(); ++i)
      for (std::size_t idx : pick_coords(pb.inputs[i].size(), pb.coords_per_tensor, pick))
        probe(pb.inputs[i][idx], input_grads[i][idx]);

  if (pb.params && pb.params->size() > 0) {
    std::vector<ParamEntry<double>*> entries;
    for (auto& e : *pb.params) entries.push_back(&e);
    if (pb.total_param_coords > 0) {
      std::size_t done = 0;
      for (std::size_t attempt = 0;
           done < pb.total_param_coords && attempt < 4 * pb.total_param_coords; ++attempt) {
        ParamEntry<double>& e = *entries[pick.below(entries.size())];
        const std::size_t idx = pick.below(e.value.size());
        if (probe(e.value[idx], e.grad[idx])) ++done;
      }
    } else {
      for (auto* e : entries)
        for (std::size_t idx : pick_coords(e->value.size(), pb.coords_per_tensor, pick))
          probe(e->value[idx], e->grad[idx]);
    }
  }
  return entry;
}

namespace {

Tensor64 uniform(Rng& rng, Shape s) {
  return rand_init<double>(rng, s, InitScheme::uniform_fan_in(1));
}

class Suite {
 public:
  explicit Suite(std::uint64_t seed) : rng_(seed), seed_(seed) {}

  GradCheckEntry& add(GradCheckProblem pb) {
    GradCheckOptions o;
    o.seed = splitmix64(seed_ + entries_.size() + 1);
    entries_.push_back(run_grad_check(pb, o));
    return entries_.back();
  }

  Rng& rng() { return rng_; }
  std::vector<GradCheckEntry> take() { return std::move(entries_); }

 private:
  Rng rng_;
  std::uint64_t seed_;
  std::vector<GradCheckEntry> entries_;
};

GradCheckProblem problem(std::string name, std::string category, double tol,
                         std::vector<Tensor64> inputs, GraphFn fn) {
  GradCheckProblem pb;
  pb.name = std::move(name);
  pb.category = std::move(category);
  pb.tolerance = tol;
  pb.inputs = std::move(inputs);
  pb.forward = std::move(fn);
  return pb;
}

void linear_ops(Suite& s) {
  Rng& r = s.rng();
  const char* cat = "linear";
  const double tol = kLinearTolerance;
  s.add(problem("conv2d", cat, tol, {uniform(r, {2, 3, 6, 6}), uniform(r, {4, 3, 3, 3})},
                [](Tape<double>& t, const std::vector<Var<double>>& v) {
                  return graph::conv2d(t, v[0], v[1], std::nullopt, ConvGeometry::same(3));
                }));
  s.add(problem("conv2d_stride2_dilation2_groups2", cat, tol,
                {uniform(r, {2, 4, 7, 7}), uniform(r, {4, 2, 3, 3}), uniform(r, {1, 4, 1, 1})},
                [](Tape<double>& t, const std::vector<Var<double>>& v) {
                  return graph::conv2d(t, v[0], v[1], v[2], ConvGeometry{2, 2, 2, 2});
                }));
  s.add(problem("conv2d_transposed", cat, tol,
                {uniform(r, {2, 4, 3, 3}), uniform(r, {4, 3, 6, 6}), uniform(r, {1, 3, 1, 1})},
                [](Tape<double>& t, const std::vector<Var<double>>& v) {
                  return graph::conv2d_transposed(t, v[0], v[1], v[2], ConvGeometry{2, 2, 1, 1});
                }));
  s.add(problem("depthwise_separable_conv", cat, tol,
                {uniform(r, {2, 3, 6, 6}), uniform(r, {3, 1, 3, 3}), uniform(r, {5, 3, 1, 1})},
                [](Tape<double>& t, const std::vector<Var<double>>& v) {
                  const auto d = graph::conv2d(t, v[0], v[1], std::nullopt,
                                               ConvGeometry::same(3, 1, 3));
                  return graph::conv2d(t, d, v[2], std::nullopt, ConvGeometry::same(1));
                }));
  s.add(problem("global_avg_pool", cat, tol, {uniform(r, {2, 3, 6, 6})},
                [](Tape<double>& t, const std::vector<Var<double>>& v) {
                  return graph::global_avg_pool(t, v[0]);
                }));
  s.add(problem("reduce_mean_c_w", cat, tol, {uniform(r, {2, 3, 6, 5})},
                [](Tape<double>& t, const std::vector<Var<double>>& v) {
                  const auto c = graph::add(t, v[0], graph::reduce_mean(t, v[0], {Axis::C}));
                  return graph::add(t, c, graph::reduce_mean(t, v[0], {Axis::W}));
                }));
  s.add(problem("unfold_dilation3", cat, tol, {uniform(r, {2, 3, 6, 6})},
                [](Tape<double>& t, const std::vector<Var<double>>& v) {
                  return graph::unfold(t, v[0], 3, 3);
                }));
  for (std::size_t d : {1, 3}) {
    s.add(problem("dconv_apply_dilation" + std::to_string(d), cat, tol,
                  {uniform(r, {2, 3, 6, 6}), uniform(r, {2, 27, 6, 6})},
                  [d](Tape<double>& t, const std::vector<Var<double>>& v) {
                    return graph::dconv_apply(t, v[0], v[1], 3, d);
                  }));
  }
  s.add(problem("concat_slice_pad", cat, tol, {uniform(r, {2, 2, 5, 5}), uniform(r, {2, 3, 5, 5})},
                [](Tape<double>& t, const std::vector<Var<double>>& v) {
                  const auto c = graph::concat_channels(t, {v[0], v[1]});
                  return graph::pad_zero(t, graph::slice_channels(t, c, 1, 3), 2);
                }));
  s.add(problem("broadcast_mul_add_sub", cat, tol,
                {uniform(r, {2, 3, 4, 4}), uniform(r, {2, 1, 4, 4}), uniform(r, {1, 3, 1, 1})},
                [](Tape<double>& t, const std::vector<Var<double>>& v) {
                  const auto m = graph::mul(t, v[0], v[1]);
                  return graph::sub(t, graph::add(t, m, v[2]), graph::scale(t, v[0], 0.5));
                }));
}

void smooth_ops(Suite& s) {
  Rng& r = s.rng();
  const char* cat = "smooth";
  const double tol = kSmoothTolerance;
  s.add(problem("sigmoid", cat, tol, {uniform(r, {2, 3, 6, 6})},
                [](Tape<double>& t, const std::vector<Var<double>>& v) {
                  return graph::sigmoid(t, graph::scale(t, v[0], 3.0));
                }));
  s.add(problem("relu", cat, tol, {uniform(r, {2, 3, 6, 6})},
                [](Tape<double>& t, const std::vector<Var<double>>& v) {
                  return graph::relu(t, v[0]);
                }));
  s.add(problem("leaky_relu", cat, tol, {uniform(r, {2, 3, 6, 6})},
                [](Tape<double>& t, const std::vector<Var<double>>& v) {
                  return graph::leaky_relu(t, v[0], 0.2);
                }));
  s.add(problem("l2_loss", cat, tol, {uniform(r, {2, 3, 6, 6}), uniform(r, {2, 3, 6, 6})},
                [](Tape<double>& t, const std::vector<Var<double>>& v) {
                  return graph::l2_loss(t, v[0], v[1]);
                }));
  {
    // Gaps spread over the smooth transition region of the loss.
    Tensor64 target = uniform(r, {2, 3, 6, 6});
    Tensor64 pred = add(target, scale(uniform(r, {2, 3, 6, 6}), 3e-3));
    // Residuals sit inside the curved zone |x| ~ eps, where the third
    // derivative is ~1/eps^2; a 1e-4 step would leave ~1e-3 truncation error.
    auto pb = problem("charbonnier_loss", cat, tol, {pred, target},
                      [](Tape<double>& t, const std::vector<Var<double>>& v) {
                        return graph::charbonnier_loss(t, v[0], v[1], 1e-3);
                      });
    pb.step = 1e-6;
    s.add(std::move(pb));
  }
  {
    // Offsets kept between 0.2 and 0.8 of a cell so every sample stays away
    // from the interpolation lattice.
    Tensor64 offsets = uniform(r, {2, 18, 6, 6});
    for (auto& o : offsets.values()) o = std::floor(o * 2.0) + 0.2 + 0.6 * std::abs(o);
    Tensor64 modulation = sigmoid(uniform(r, {2, 9, 6, 6}));
    s.add(problem("deform_conv", cat, tol,
                  {uniform(r, {2, 3, 6, 6}), offsets, modulation, uniform(r, {4, 3, 3, 3}),
                   uniform(r, {1, 4, 1, 1})},
                  [](Tape<double>& t, const std::vector<Var<double>>& v) {
                    return graph::deform_conv(t, v[0], v[1], v[2], v[3], v[4]);
                  }));
  }
  {
    ParamLayout layout;
    declare_sekg(layout, "sekg", 4, 3);
    auto store = std::make_shared<ParamStore<double>>(instantiate<double>(layout, r));
    GradCheckProblem pb = problem(
        "sekg_dconv_apply", cat, tol, {uniform(r, {2, 4, 6, 6})},
        [store](Tape<double>& t, const std::vector<Var<double>>& v) {
          const auto w = graph::sekg(t, *store, "sekg", v[0], 3);
          return graph::dconv_apply(t, v[0], w, 3, 1);
        });
    pb.params = store.get();
    s.add(std::move(pb));
  }
  {
    ParamLayout layout;
    declare_mfi(layout, "mfi", 8, 4);
    auto store = std::make_shared<ParamStore<double>>(instantiate<double>(layout, r));
    GradCheckProblem pb =
        problem("mfi", cat, tol, {uniform(r, {2, 8, 5, 6}), uniform(r, {2, 4, 5, 6})},
                [store](Tape<double>& t, const std::vector<Var<double>>& v) {
                  return graph::mfi(t, *store, "mfi", v[0], v[1]);
                });
    pb.params = store.get();
    s.add(std::move(pb));
  }
  {
    ParamLayout layout;
    declare_mdconv(layout, "md", 4, 3);
    auto store = std::make_shared<ParamStore<double>>(instantiate<double>(layout, r));
    Tensor64& ow = store->value("md.offset.weight");
    for (auto& w : ow.values()) w *= 0.01;
    Tensor64& ob = store->value("md.offset.bias");
    for (std::size_t ch = 0; ch < 18; ++ch) ob[ch] = r.uniform(0.2, 0.8);
    Tensor64 f = uniform(r, {2, 4, 6, 6});
    const Tensor64 raw = conv2d(f, conv_params(*store, "md.offset", ConvGeometry::same(3)));
    double margin = 1.0;
    for (std::size_t n = 0; n < 2; ++n)
      for (std::size_t ch = 0; ch < 18; ++ch)
        for (std::size_t i = 0; i < 36; ++i) {
          const double v = raw.plane(n, ch)[i];
          const double frac = v - std::floor(v);
          margin = std::min({margin, frac, 1.0 - frac});
        }
    GradCheckProblem pb =
        problem("mdconv", cat, tol, {f}, [store](Tape<double>& t, const std::vector<Var<double>>& v) {
          return graph::mdconv(t, *store, "md", v[0]);
        });
    pb.params = store.get();
    std::ostringstream note;
    note << "min lattice margin " << std::setprecision(3) << margin;
    s.add(std::move(pb)).note = note.str();
  }
}

template <class BlockFn>
void block_problem(Suite& s, const std::string& name, void (*declare)(ParamLayout&, const std::string&, const BlockConfig&),
                   BlockFn fn) {
  Rng& r = s.rng();
  BlockConfig cfg;
  cfg.channels = 8;
  ParamLayout layout;
  declare(layout, name, cfg);
  auto store = std::make_shared<ParamStore<double>>(instantiate<double>(layout, r));
  GradCheckProblem pb = problem(name, "block", kBlockTolerance, {uniform(r, {1, 8, 8, 8})},
                                [store, cfg, name, fn](Tape<double>& t,
                                                       const std::vector<Var<double>>& v) {
                                  return fn(t, *store, name, cfg, v[0]);
                                });
  pb.params = store.get();
  pb.coords_per_tensor = 4;
  s.add(std::move(pb));
}

void blocks(Suite& s) {
  block_problem(s, "cb", declare_cb, [](auto& t, auto& st, auto& n, auto& c, auto& x) {
    return graph::cb(t, st, n, c, x);
  });
  block_problem(s, "dcb", declare_dcb, [](auto& t, auto& st, auto& n, auto& c, auto& x) {
    return graph::dcb(t, st, n, c, x);
  });
  block_problem(s, "mcb", declare_mcb, [](auto& t, auto& st, auto& n, auto& c, auto& x) {
    return graph::mcb(t, st, n, c, x);
  });
  block_problem(s, "mdcb", declare_mdcb, [](auto& t, auto& st, auto& n, auto& c, auto& x) {
    return graph::mdcb(t, st, n, c, x);
  });

  // The shared kernel field probed directly: its gradient is the sum of the
  // contributions of every dilation branch.
  Rng& r = s.rng();
  BlockConfig cfg;
  cfg.channels = 8;
  ParamLayout layout;
  declare_mdcb(layout, "mdcb", cfg);
  auto store = std::make_shared<ParamStore<double>>(instantiate<double>(layout, r));
  const Tensor64 f = uniform(r, {1, 8, 8, 8});
  Tensor64 kernels;
  {
    Tape<double> t(false);
    graph::MdcbTrace<double> trace;
    graph::mdcb(t, *store, "mdcb", cfg, t.constant(f), &trace);
    kernels = trace.kernels.value();
  }
  GradCheckProblem pb =
      problem("mdcb_shared_kernels", "block", kBlockTolerance, {kernels},
              [store, cfg, f](Tape<double>& t, const std::vector<Var<double>>& v) {
                return graph::mdcb(t, *store, "mdcb", cfg, t.constant(f), nullptr, &v[0]);
              });
  pb.coords_per_tensor = 24;
  s.add(std::move(pb));
}

void network(Suite& s) {
  Rng& r = s.rng();
  const NetworkConfig cfg = NetworkConfig::standard();
  auto store = std::make_shared<ParamStore<double>>(build<double>(cfg, r));
  Tensor64 x = rand_init<double>(r, {1, 3, 16, 16}, InitScheme::uniform_fan_in(1));
  for (auto& v : x.values()) v = 0.5 + 0.5 * v;
  GradCheckProblem pb = problem("network", "network", kNetworkTolerance, {x},
                                [store, cfg](Tape<double>& t, const std::vector<Var<double>>& v) {
                                  return graph::network(t, *store, cfg, v[0]);
                                });
  pb.params = store.get();
  pb.probe_inputs = false;
  pb.total_param_coords = 20;
  s.add(std::move(pb));
}

}  // namespace

std::vector<GradCheckEntry> grad_check_suite(std::uint64_t seed, bool include_network) {
  Suite s(seed);
  linear_ops(s);
  smooth_ops(s);
  blocks(s);
  if (include_network) network(s);
  return s.take();
}

void print_grad_report(std::ostream& os, const std::vector<GradCheckEntry>& entries) {
  std::size_t width = 4;
  for (const auto& e : entries) width = std::max(width, e.name.size());
  os << std::left << std::setw(static_cast<int>(width)) << "name" << "  " << std::setw(8)
     << "class" << "  " << std::right << std::setw(7) << "checked" << "  " << std::setw(7)
     << "skipped" << "  " << std::setw(10) << "max_rel" << "  " << std::setw(8) << "tol"
     << "  result\n";
  for (const auto& e : entries) {
    os << std::left << std::setw(static_cast<int>(width)) << e.name << "  " << std::setw(8)
       << e.category << "  " << std::right << std::setw(7) << e.checked << "  " << std::setw(7)
       << e.skipped << "  " << std::setw(10) << std::scientific << std::setprecision(3)
       << e.max_rel_error << "  " << std::setw(8) << std::setprecision(0) << e.tolerance
       << std::defaultfloat << "  " << (e.passed() ? "PASS" : "FAIL");
    if (!e.note.empty()) os << "  (" << e.note << ")";
    os << "\n";
  }
}

}  // namespace adfnet
