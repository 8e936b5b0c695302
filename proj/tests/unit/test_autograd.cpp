#include <gtest/gtest.h>

#include "adfnet/autograd.hpp"
#include "adfnet/grad_check.hpp"
#include "oracles.hpp"

using namespace adfnet;
using graph::Tape;
using graph::Var;

TEST(Backward, SumGivesAllOnes) {
  Rng rng(1);
  Tape<double> t;
  const auto x = t.leaf(oracle::random<double>(rng, {2, 3, 4, 5}));
  t.backward(graph::sum_all(t, x));
  for (double g : x.grad().values()) EXPECT_EQ(g, 1.0);
}

TEST(Backward, ReuseAccumulates) {
  Rng rng(2);
  Tape<double> t;
  const auto x = t.leaf(oracle::random<double>(rng, {1, 2, 3, 3}));
  const auto y = graph::add(t, graph::scale(t, x, 2.0), graph::mul(t, x, x));
  t.backward(graph::sum_all(t, y));
  for (std::size_t i = 0; i < x.value().size(); ++i) EXPECT_DOUBLE_EQ(x.grad()[i], 2.0 + 2.0 * x.value()[i]);
}

TEST(Backward, MissingAdjointIsReported) {
  Tape<double> t;
  const auto x = t.leaf(Tensor64::ones({1, 1, 2, 2}));
  const auto y = t.apply("opaque", {x}, scale(x.value(), 3.0), graph::Adjoint<double>{});
  EXPECT_THROW(t.backward(graph::sum_all(t, y)), graph::MissingAdjoint);
}

TEST(Backward, NonRecordingTapeRecordsNothing) {
  Rng rng(3);
  Tape<double> t(false);
  const auto x = t.leaf(oracle::random<double>(rng, {1, 2, 3, 3}));
  const auto y = graph::sigmoid(t, graph::mul(t, x, x));
  EXPECT_FALSE(y.requires_grad());
  EXPECT_EQ(t.size(), 0u);
}

TEST(Backward, ParametersBindOncePerTapeAndAccumulate) {
  ParamStore<double> store;
  store.add("w", Tensor64({1, 1, 1, 1}, 3.0));
  Tape<double> t;
  const auto a = t.param(store, "w");
  const auto b = t.param(store, "w");
  EXPECT_EQ(a.node(), b.node());
  const auto x = t.constant(Tensor64({1, 1, 2, 2}, 2.0));
  const auto y = graph::add(t, graph::mul(t, x, a), graph::mul(t, x, b));
  t.backward(graph::sum_all(t, y));
  store.zero_grad();
  t.accumulate_param_grads(store);
  EXPECT_DOUBLE_EQ(store.entry("w").grad[0], 16.0);
  t.accumulate_param_grads(store);
  EXPECT_DOUBLE_EQ(store.entry("w").grad[0], 32.0);
}

TEST(GradCheck, WrongAdjointIsDetected) {
  Rng rng(4);
  GradCheckProblem pb;
  pb.name = "sabotaged_scale";
  pb.category = "linear";
  pb.tolerance = kLinearTolerance;
  pb.inputs = {oracle::random<double>(rng, {1, 2, 3, 3})};
  pb.forward = [](Tape<double>& t, const std::vector<Var<double>>& v) {
    return t.apply("bad_scale", {v[0]}, scale(v[0].value(), 3.0), [](const graph::Node<double>& n) {
      return std::vector<Tensor64>{scale(n.grad, 2.9)};
    });
  };
  const auto e = run_grad_check(pb);
  EXPECT_GT(e.checked, 0u);
  EXPECT_FALSE(e.passed());
  EXPECT_GT(e.max_rel_error, 1e-2);
}

TEST(GradCheck, CorrectAdjointPasses) {
  Rng rng(5);
  GradCheckProblem pb;
  pb.name = "conv";
  pb.category = "linear";
  pb.tolerance = kLinearTolerance;
  pb.inputs = {oracle::random<double>(rng, {2, 3, 6, 6}), oracle::random<double>(rng, {4, 3, 3, 3})};
  pb.forward = [](Tape<double>& t, const std::vector<Var<double>>& v) {
    return graph::conv2d(t, v[0], v[1], std::nullopt, ConvGeometry::same(3));
  };
  EXPECT_TRUE(run_grad_check(pb).passed());
}

TEST(GradCheck, SuiteOpsPassTheirTolerances) {
  const auto entries = grad_check_suite(7, false);
  ASSERT_GE(entries.size(), 20u);
  for (const auto& e : entries) {
    EXPECT_TRUE(e.passed()) << e.name << " rel " << e.max_rel_error << " tol " << e.tolerance;
    EXPECT_GT(e.checked, 0u) << e.name;
  }
}

TEST(GradCheck, ReportListsEveryEntry) {
  std::vector<GradCheckEntry> entries(2);
  entries[0].name = "alpha_op";
  entries[0].category = "linear";
  entries[0].tolerance = 1e-8;
  entries[0].max_rel_error = 3e-10;
  entries[0].checked = 4;
  entries[1].name = "beta_block";
  entries[1].category = "block";
  entries[1].tolerance = 1e-4;
  entries[1].max_rel_error = 0.5;
  entries[1].checked = 4;
  std::ostringstream os;
  print_grad_report(os, entries);
  const std::string s = os.str();
  EXPECT_NE(s.find("alpha_op"), std::string::npos);
  EXPECT_NE(s.find("3.000e-10"), std::string::npos);
  EXPECT_NE(s.find("beta_block"), std::string::npos);
  EXPECT_NE(s.find("FAIL"), std::string::npos);
}
