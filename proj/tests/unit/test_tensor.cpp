#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "adfnet/tensor.hpp"
#include "naive_ops.hpp"
#include "oracles.hpp"

using namespace adfnet;

TEST(Elementwise, SigmoidAtZeroIsHalf) {
  const Tensor z({1, 1, 1, 1}, 0.0f);
  EXPECT_EQ(sigmoid(z)[0], 0.5f);
}

TEST(Elementwise, SigmoidOneMatchesExtendedPrecision) {
  const Tensor64 one({1, 1, 1, 1}, 1.0);
  EXPECT_NEAR(sigmoid(one)[0], static_cast<double>(oracle::sigmoid(1.0L)), 1e-6);
  const Tensor onef({1, 1, 1, 1}, 1.0f);
  EXPECT_NEAR(sigmoid(onef)[0], static_cast<double>(oracle::sigmoid(1.0L)), 1e-6);
}

TEST(Elementwise, AddZerosIsExactIdentity) {
  Rng rng(1);
  const Tensor x = oracle::random<float>(rng, {2, 3, 4, 5});
  const Tensor y = add(x, Tensor::zeros(x.shape()));
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_EQ(x[i], y[i]);
}

TEST(Elementwise, SigmoidIsSymmetricAndBounded) {
  Rng rng(2);
  const Tensor64 x = oracle::random<double>(rng, {2, 3, 5, 5}, -8, 8);
  const Tensor64 a = sigmoid(x), b = sigmoid(scale(x, -1.0));
  for (std::size_t i = 0; i < x.size(); ++i) {
    EXPECT_NEAR(a[i] + b[i], 1.0, 1e-6);
    EXPECT_GT(a[i], 0.0);
    EXPECT_LT(a[i], 1.0);
  }
}

TEST(Elementwise, ReluFamily) {
  Rng rng(3);
  const Tensor x = oracle::random<float>(rng, {1, 2, 4, 4});
  const Tensor r = relu(x), l = leaky_relu(x, 0.2f);
  for (std::size_t i = 0; i < x.size(); ++i) {
    EXPECT_GE(r[i], 0.0f);
    EXPECT_EQ(r[i], x[i] > 0 ? x[i] : 0.0f);
    EXPECT_FLOAT_EQ(l[i], x[i] > 0 ? x[i] : 0.2f * x[i]);
  }
}

TEST(Elementwise, BroadcastMatchesMaterializedExpansion) {
  Rng rng(4);
  const Shape a_shape{2, 3, 4, 5};
  const std::vector<Shape> operands{{2, 3, 4, 5}, {1, 3, 1, 1}, {2, 1, 4, 5}, {1, 1, 1, 5},
                                    {2, 3, 4, 1}, {1, 1, 1, 1}, {1, 3, 4, 1}};
  for (const auto& bs : operands) {
    const Tensor64 a = oracle::random<double>(rng, a_shape);
    const Tensor64 b = oracle::random<double>(rng, bs);
    EXPECT_EQ(oracle::max_abs(add(a, b), oracle::broadcast_binary(a, b, oracle::BinOp::Add)), 0.0);
    EXPECT_EQ(oracle::max_abs(sub(a, b), oracle::broadcast_binary(a, b, oracle::BinOp::Sub)), 0.0);
    EXPECT_EQ(oracle::max_abs(mul(a, b), oracle::broadcast_binary(a, b, oracle::BinOp::Mul)), 0.0);
    EXPECT_EQ(add(a, b).shape(), a_shape);
  }
}

TEST(Elementwise, NonBroadcastableShapesThrow) {
  const Tensor a({2, 3, 4, 4}), b({2, 2, 4, 4}), c({1, 3, 4, 5});
  EXPECT_THROW(add(a, b), ShapeError);
  EXPECT_THROW(mul(a, c), ShapeError);
}

TEST(Elementwise, InputsAreNotMutated) {
  Rng rng(5);
  const Tensor x = oracle::random<float>(rng, {1, 2, 3, 3});
  const Tensor copy = x;
  (void)sigmoid(x);
  (void)add(x, x);
  (void)reduce_mean(x, {Axis::C});
  (void)pad_zero(x, 2);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_EQ(x[i], copy[i]);
}

TEST(Padding, ZeroPadExamples) {
  Rng rng(6);
  const Tensor x = oracle::random<float>(rng, {2, 3, 4, 5});
  const Tensor p0 = pad_zero(x, 0);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_EQ(x[i], p0[i]);

  const Tensor five({1, 1, 1, 1}, 5.0f);
  const Tensor p = pad_zero(five, 1);
  ASSERT_EQ(p.shape(), (Shape{1, 1, 3, 3}));
  for (std::size_t y = 0; y < 3; ++y)
    for (std::size_t xx = 0; xx < 3; ++xx) EXPECT_EQ(p(0, 0, y, xx), y == 1 && xx == 1 ? 5.0f : 0.0f);

  const Tensor rt = crop(pad_zero(x, 2), 2);
  ASSERT_EQ(rt.shape(), x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_EQ(x[i], rt[i]);
}

TEST(Padding, ReflectPadMirrorsWithoutEdgeRepeat) {
  Tensor x({1, 1, 1, 4});
  for (std::size_t i = 0; i < 4; ++i) x[i] = float(i);
  const Tensor p = reflect_pad(x, 0, 3);
  const float expected[] = {0, 1, 2, 3, 2, 1, 0};
  for (std::size_t i = 0; i < 7; ++i) EXPECT_EQ(p[i], expected[i]);
  // Pads longer than the extent keep reflecting.
  const Tensor q = reflect_pad(x, 0, 8);
  const float longer[] = {0, 1, 2, 3, 2, 1, 0, 1, 2, 3, 2, 1};
  for (std::size_t i = 0; i < 12; ++i) EXPECT_EQ(q[i], longer[i]);
}

TEST(Reduce, MeanExamples) {
  const Tensor ones = Tensor::ones({1, 4, 2, 2});
  const Tensor m = reduce_mean(ones, {Axis::C});
  ASSERT_EQ(m.shape(), (Shape{1, 1, 2, 2}));
  for (float v : m.values()) EXPECT_EQ(v, 1.0f);

  const Tensor r({1, 1, 2, 2}, std::vector<float>{1, 2, 3, 4});
  EXPECT_EQ(reduce_mean(r, {Axis::H, Axis::W})[0], 2.5f);
}

TEST(Reduce, MeanMatchesLoopOracle) {
  Rng rng(7);
  const Tensor64 x = oracle::random<double>(rng, {2, 5, 4, 3});
  EXPECT_LT(oracle::max_abs(reduce_mean(x, {Axis::C}), oracle::mean_over(x, false, true, false, false)), 1e-6);
  EXPECT_LT(oracle::max_abs(reduce_mean(x, {Axis::W}), oracle::mean_over(x, false, false, false, true)), 1e-12);
  EXPECT_LT(oracle::max_abs(reduce_mean(x, {Axis::N, Axis::H}), oracle::mean_over(x, true, false, true, false)), 1e-12);
}

TEST(Reduce, MeanOfConstantIsExact) {
  for (float c : {0.1f, 0.3f, 1.0f / 3.0f, 7.77f}) {
    const Tensor x({3, 5, 7, 9}, c);
    EXPECT_EQ(reduce_mean(x, {Axis::N, Axis::C, Axis::H, Axis::W})[0], c);
    const Tensor m = reduce_mean(x, {Axis::C});
    for (float v : m.values()) EXPECT_EQ(v, c);
  }
}

TEST(Concat, ExamplesAndRoundTrip) {
  Rng rng(8);
  const Tensor a = oracle::random<float>(rng, {2, 2, 3, 3});
  const Tensor b = oracle::random<float>(rng, {2, 3, 3, 3});
  const std::vector<Tensor> one{a};
  const Tensor single = concat_channels<float>(one);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(single[i], a[i]);

  const std::vector<Tensor> parts{a, b};
  const Tensor ab = concat_channels<float>(parts);
  ASSERT_EQ(ab.shape().c, 5u);
  const Tensor sa = slice_channels(ab, 0, 2), sb = slice_channels(ab, 2, 3);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(sa[i], a[i]);
  for (std::size_t i = 0; i < b.size(); ++i) EXPECT_EQ(sb[i], b[i]);

  const Tensor x = oracle::random<float>(rng, {1, 7, 2, 3});
  const std::vector<Tensor> pieces{slice_channels(x, 0, 3), slice_channels(x, 3, 1), slice_channels(x, 4, 3)};
  const Tensor back = concat_channels<float>(pieces);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_EQ(back[i], x[i]);
}

TEST(Concat, SpatialMismatchThrows) {
  const std::vector<Tensor> parts{Tensor({1, 2, 3, 3}), Tensor({1, 2, 3, 4})};
  EXPECT_THROW(concat_channels<float>(parts), ShapeError);
}

TEST(Bilinear, GridPointsAndMidpoints) {
  Rng rng(9);
  const Tensor64 x = oracle::random<double>(rng, {1, 2, 4, 5});
  for (std::size_t y = 0; y < 4; ++y)
    for (std::size_t xx = 0; xx < 5; ++xx) EXPECT_EQ(bilinear_sample(x, 0, 1, double(y), double(xx)), x(0, 1, y, xx));
  EXPECT_DOUBLE_EQ(bilinear_sample(x, 0, 0, 0.0, 0.5), 0.5 * (x(0, 0, 0, 0) + x(0, 0, 0, 1)));
}

TEST(Bilinear, OutOfBoundsUsesZeros) {
  const Tensor64 x({1, 1, 3, 3}, 1.0);
  EXPECT_EQ(bilinear_sample(x, 0, 0, -1.0, 1.0), 0.0);
  EXPECT_EQ(bilinear_sample(x, 0, 0, 1.0, 3.0), 0.0);
  EXPECT_EQ(bilinear_sample(x, 0, 0, 10.0, -7.0), 0.0);
  EXPECT_DOUBLE_EQ(bilinear_sample(x, 0, 0, -0.5, 1.0), 0.5);
  EXPECT_DOUBLE_EQ(bilinear_sample(x, 0, 0, 2.25, 2.5), 0.75 * 0.5);
}

TEST(Bilinear, MatchesSeparateInterpolationOracle) {
  Rng rng(10);
  const Tensor64 x = oracle::random<double>(rng, {1, 3, 6, 7});
  for (int i = 0; i < 500; ++i) {
    const double row = rng.uniform(-2.0, 8.0), col = rng.uniform(-2.0, 9.0);
    const std::size_t c = rng.below(3);
    EXPECT_NEAR(bilinear_sample(x, 0, c, row, col), reference::bilinear(x, 0, c, row, col), 1e-12);
  }
}

TEST(RandInit, SameSeedIsBitIdentical) {
  Rng a(42), b(42);
  const Tensor x = rand_init<float>(a, {2, 3, 4, 4}, InitScheme::gaussian(1.0));
  const Tensor y = rand_init<float>(b, {2, 3, 4, 4}, InitScheme::gaussian(1.0));
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_EQ(x[i], y[i]);
}

TEST(RandInit, GaussianMoments) {
  Rng rng(11);
  const Tensor64 x = rand_init<double>(rng, {1, 1, 1000, 1000}, InitScheme::gaussian(1.0));
  double m = 0, s = 0;
  for (double v : x.values()) m += v;
  m /= double(x.size());
  for (double v : x.values()) s += (v - m) * (v - m);
  s = std::sqrt(s / double(x.size()));
  EXPECT_LT(std::abs(m), 0.01);
  EXPECT_GE(s, 0.99);
  EXPECT_LE(s, 1.01);
}

TEST(RandInit, UniformFanInRange) {
  Rng rng(12);
  const Tensor x = rand_init<float>(rng, {4, 4, 16, 16}, InitScheme::uniform_fan_in(4));
  float lo = 1, hi = -1;
  for (float v : x.values()) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  EXPECT_GE(lo, -0.5f);
  EXPECT_LE(hi, 0.5f);
  EXPECT_LT(lo, -0.45f);
  EXPECT_GT(hi, 0.45f);
}

TEST(Rng, FrozenStreamAndForks) {
  Rng a(0);
  // splitmix64 of the golden-ratio increment, the frozen first draw.
  EXPECT_EQ(a.next_u64(), 0xE220A8397B1DCDAFull);
  Rng b(7), c(7);
  for (int i = 0; i < 10; ++i) EXPECT_EQ(b.next_u64(), c.next_u64());
  EXPECT_NE(Rng(7).fork(1).next_u64(), Rng(7).fork(2).next_u64());
  EXPECT_EQ(Rng(7).fork(3).next_u64(), Rng(7).fork(3).next_u64());
}

TEST(Serialization, RoundTripIsExact) {
  Rng rng(13);
  const Tensor x = oracle::random<float>(rng, {2, 3, 4, 5});
  std::stringstream ss;
  write_tensor(ss, x);
  EXPECT_EQ(ss.str().size(), 16 + 4 * x.size());
  const Tensor y = read_tensor<float>(ss);
  ASSERT_EQ(y.shape(), x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_EQ(x[i], y[i]);
}

TEST(Serialization, TruncatedStreamThrows) {
  Rng rng(14);
  const Tensor x = oracle::random<float>(rng, {1, 2, 3, 3});
  std::stringstream ss;
  write_tensor(ss, x);
  std::string s = ss.str();
  s.resize(s.size() - 3);
  std::stringstream cut(s);
  EXPECT_ANY_THROW(read_tensor<float>(cut));
}

TEST(Finite, OperationsStayFinite) {
  Rng rng(15);
  const Tensor x = oracle::random<float>(rng, {2, 3, 4, 4}, -50, 50);
  EXPECT_TRUE(all_finite(sigmoid(x)));
  EXPECT_TRUE(all_finite(mul(x, x)));
  EXPECT_TRUE(all_finite(reduce_mean(x, {Axis::H})));
  Tensor bad = x;
  bad[3] = std::nanf("");
  EXPECT_FALSE(all_finite(bad));
}
