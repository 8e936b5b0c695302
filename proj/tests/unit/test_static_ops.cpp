#include <gtest/gtest.h>

#include "adfnet/static_ops.hpp"
#include "naive_ops.hpp"
#include "oracles.hpp"

using namespace adfnet;

TEST(Conv2d, UnitKernelIsIdentity) {
  Rng rng(1);
  const Tensor x = oracle::random<float>(rng, {2, 1, 5, 6});
  const Tensor w({1, 1, 1, 1}, 1.0f);
  const Tensor y = conv2d<float>(x, w, nullptr, {});
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_EQ(x[i], y[i]);
}

TEST(Conv2d, OnesKernelOnOnesInput) {
  const Tensor x = Tensor::ones({1, 1, 3, 3});
  const Tensor w = Tensor::ones({1, 1, 3, 3});
  const Tensor y = conv2d<float>(x, w, nullptr, ConvGeometry::same(3));
  EXPECT_EQ(y(0, 0, 1, 1), 9.0f);
  EXPECT_EQ(y(0, 0, 0, 0), 4.0f);
  EXPECT_EQ(y(0, 0, 2, 2), 4.0f);
  EXPECT_EQ(y(0, 0, 0, 1), 6.0f);
}

TEST(Conv2d, OutputExtentFormula) {
  // floor((h + 2 pad - d (k - 1) - 1) / stride) + 1
  EXPECT_EQ(conv_output_extent(16, 3, {2, 1, 1, 1}), 8u);
  EXPECT_EQ(conv_output_extent(15, 3, {2, 1, 1, 1}), 8u);
  EXPECT_EQ(conv_output_extent(10, 3, {1, 0, 2, 1}), 6u);
  EXPECT_EQ(conv_output_extent(7, 5, {3, 2, 1, 1}), 3u);
}

TEST(Conv2d, MatchesNaiveReferenceOnRandomGeometries) {
  Rng rng(2);
  for (int trial = 0; trial < 60; ++trial) {
    const std::size_t groups = 1 + rng.below(2);
    const std::size_t cin = groups * (1 + rng.below(4)), cout = groups * (1 + rng.below(4));
    const std::size_t k = 1 + 2 * rng.below(3);
    const std::size_t stride = 1 + rng.below(2), dil = 1 + rng.below(3);
    const std::size_t pad = rng.below(3);
    const std::size_t h = dil * (k - 1) + 1 + rng.below(10), w = dil * (k - 1) + 1 + rng.below(10);
    const Tensor x = oracle::random<float>(rng, {1 + rng.below(2), cin, h, w});
    const Tensor wt = oracle::random<float>(rng, {cout, cin / groups, k, k});
    const Tensor b = oracle::random<float>(rng, {1, cout, 1, 1});
    const Tensor fast = conv2d<float>(x, wt, &b, {stride, pad, dil, groups});
    const Tensor slow = reference::conv2d(x, wt, &b, stride, pad, dil, groups);
    ASSERT_EQ(fast.shape(), slow.shape());
    EXPECT_LT(oracle::max_abs(fast, slow), 1e-5) << "trial " << trial;
  }
}

TEST(Conv2d, DilationEqualsZeroInterleavedKernel) {
  Rng rng(3);
  for (std::size_t d : {2u, 3u, 5u}) {
    const Tensor64 x = oracle::random<double>(rng, {1, 3, 13, 12});
    const Tensor64 w = oracle::random<double>(rng, {4, 3, 3, 3});
    const Tensor64 dilated = conv2d<double>(x, w, nullptr, ConvGeometry::same(3, d));
    const Tensor64 dense =
        conv2d<double>(x, oracle::dilate_kernel(w, d), nullptr, {1, d, 1, 1});
    EXPECT_LT(oracle::max_abs(dilated, dense), 1e-5);
  }
}

TEST(Conv2d, IsLinearWithoutBias) {
  Rng rng(4);
  const Tensor64 x = oracle::random<double>(rng, {2, 3, 7, 7});
  const Tensor64 y = oracle::random<double>(rng, {2, 3, 7, 7});
  const Tensor64 w = oracle::random<double>(rng, {5, 3, 3, 3});
  const ConvGeometry g = ConvGeometry::same(3);
  const double a = 0.7, b = -1.3;
  const Tensor64 lhs = conv2d<double>(add(scale(x, a), scale(y, b)), w, nullptr, g);
  const Tensor64 rhs =
      add(scale(conv2d<double>(x, w, nullptr, g), a), scale(conv2d<double>(y, w, nullptr, g), b));
  EXPECT_LT(oracle::max_abs(lhs, rhs), 1e-5);
}

TEST(Conv2d, ChannelMismatchThrows) {
  const Tensor x({1, 3, 4, 4}), w({2, 4, 3, 3});
  EXPECT_THROW(conv2d<float>(x, w, nullptr, {}), ChannelMismatch);
  const Tensor wg({4, 2, 3, 3});
  EXPECT_ANY_THROW(conv2d<float>(x, wg, nullptr, {1, 1, 1, 2}));
}

TEST(Conv2d, UnfoldDotReproducesConv) {
  Rng rng(5);
  const std::size_t c = 3, k = 3;
  for (std::size_t d : {1u, 2u}) {
    const Tensor64 x = oracle::random<double>(rng, {1, c, 6, 7});
    const Tensor64 w = oracle::random<double>(rng, {2, c, k, k});
    const auto patches = unfold(x, k, 1, d);
    const Tensor64 conv = conv2d<double>(x, w, nullptr, ConvGeometry::same(k, d));
    for (std::size_t o = 0; o < 2; ++o)
      for (std::size_t y = 0; y < 6; ++y)
        for (std::size_t xx = 0; xx < 7; ++xx) {
          double acc = 0;
          for (std::size_t ch = 0; ch < c; ++ch)
            for (std::size_t j = 0; j < k * k; ++j)
              acc += patches.at(0, ch, j, y, xx) * w(o, ch, j / k, j % k);
          EXPECT_NEAR(acc, conv(0, o, y, xx), 1e-12);
        }
  }
}

TEST(ConvTransposed, IsAdjointOfConv) {
  Rng rng(6);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t stride = 1 + rng.below(2), k = 3 + rng.below(4), pad = rng.below(3);
    const std::size_t groups = 1 + rng.below(2);
    const std::size_t cin = 2 * groups, cout = 3 * groups;
    const ConvGeometry g{stride, pad, 1, groups};
    const Tensor64 x = oracle::random<double>(rng, {2, cin, 9, 8});
    const Tensor64 w = oracle::random<double>(rng, {cout, cin / groups, k, k});
    const Tensor64 cx = conv2d<double>(x, w, nullptr, g);
    const Tensor64 y = oracle::random<double>(rng, cx.shape());
    // The adjoint at x's exact extent; the transposed conv is its top-left
    // part (the standard extent omits output padding, so it can be shorter).
    const Tensor64 adj = conv2d_backward_input<double>(y, w, g, x.shape());
    EXPECT_NEAR(dot(cx, y), dot(x, adj), 1e-9) << "trial " << trial;
    const Tensor64 t = conv2d_transposed<double>(y, w, nullptr, g);
    ASSERT_LE(t.shape().h, x.shape().h);
    ASSERT_LE(t.shape().w, x.shape().w);
    for (std::size_t n = 0; n < 2; ++n)
      for (std::size_t c = 0; c < cin; ++c)
        for (std::size_t yy = 0; yy < t.shape().h; ++yy)
          for (std::size_t xx = 0; xx < t.shape().w; ++xx)
            EXPECT_NEAR(t(n, c, yy, xx), adj(n, c, yy, xx), 1e-12);
  }
}

TEST(ConvTransposed, UpsamplesTwiceWithK6S2P2) {
  const Tensor x({1, 4, 4, 4});
  const Tensor w({4, 2, 6, 6});
  const Tensor y = conv2d_transposed<float>(x, w, nullptr, {2, 2, 1, 1});
  EXPECT_EQ(y.shape(), (Shape{1, 2, 8, 8}));
}

TEST(ConvTransposed, DeltaInputDeltaKernelIsTranslatedDelta) {
  Tensor64 x({1, 1, 4, 4});
  x(0, 0, 1, 2) = 1.0;
  Tensor64 w({1, 1, 6, 6});
  w(0, 0, 3, 1) = 1.0;
  const Tensor64 y = conv2d_transposed<double>(x, w, nullptr, {2, 2, 1, 1});
  // Output row = 2 * 1 + 3 - 2, column = 2 * 2 + 1 - 2.
  for (std::size_t yy = 0; yy < 8; ++yy)
    for (std::size_t xx = 0; xx < 8; ++xx) EXPECT_EQ(y(0, 0, yy, xx), yy == 3 && xx == 3 ? 1.0 : 0.0);
}

TEST(ConvTransposed, MatchesScatterReference) {
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t groups = 1 + rng.below(2);
    const std::size_t cin = groups * (1 + rng.below(3)), cout_g = 1 + rng.below(3);
    const std::size_t k = 2 + rng.below(5), stride = 1 + rng.below(2), pad = rng.below(k / 2 + 1);
    const Tensor x = oracle::random<float>(rng, {1, cin, 3 + rng.below(5), 3 + rng.below(5)});
    const Tensor w = oracle::random<float>(rng, {cin, cout_g, k, k});
    const Tensor b = oracle::random<float>(rng, {1, cout_g * groups, 1, 1});
    const Tensor fast = conv2d_transposed<float>(x, w, &b, {stride, pad, 1, groups});
    const Tensor slow = reference::conv2d_transposed(x, w, &b, stride, pad, 1, groups);
    ASSERT_EQ(fast.shape(), slow.shape());
    EXPECT_LT(oracle::max_abs(fast, slow), 1e-5);
  }
}

TEST(DepthwiseSeparable, EqualsCompositionAndDensification) {
  Rng rng(8);
  const std::size_t c = 4;
  ConvParams<double> dw{oracle::random<double>(rng, {c, 1, 3, 3}), std::nullopt, ConvGeometry::same(3, 1, c)};
  ConvParams<double> pw{oracle::random<double>(rng, {6, c, 1, 1}), std::nullopt, {}};
  const Tensor64 x = oracle::random<double>(rng, {2, c, 7, 6});
  const Tensor64 sep = depthwise_separable_conv(x, dw, pw);
  const Tensor64 composed = conv2d(conv2d(x, dw), pw);
  EXPECT_EQ(oracle::max_abs(sep, composed), 0.0);
  const Tensor64 dense = conv2d<double>(x, oracle::densify_separable(dw.weight, pw.weight), nullptr,
                                        ConvGeometry::same(3));
  EXPECT_LT(oracle::max_abs(sep, dense), 1e-5);
}

TEST(DepthwiseSeparable, IdentityPointwiseIsPureDepthwise) {
  Rng rng(9);
  const std::size_t c = 3;
  ConvParams<double> dw{oracle::random<double>(rng, {c, 1, 3, 3}), std::nullopt, ConvGeometry::same(3, 1, c)};
  Tensor64 eye({c, c, 1, 1});
  for (std::size_t i = 0; i < c; ++i) eye(i, i, 0, 0) = 1.0;
  ConvParams<double> pw{eye, std::nullopt, {}};
  const Tensor64 x = oracle::random<double>(rng, {1, c, 5, 5});
  EXPECT_EQ(oracle::max_abs(depthwise_separable_conv(x, dw, pw), conv2d(x, dw)), 0.0);
}

TEST(GlobalAvgPool, Examples) {
  Tensor64 x({1, 3, 4, 5});
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < 20; ++i) x.plane(0, c)[i] = 0.25 * double(c + 1);
  const Tensor64 p = global_avg_pool(x);
  ASSERT_EQ(p.shape(), (Shape{1, 3, 1, 1}));
  for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(p[c], 0.25 * double(c + 1));

  Rng rng(10);
  const Tensor64 one = oracle::random<double>(rng, {2, 4, 1, 1});
  EXPECT_EQ(oracle::max_abs(global_avg_pool(one), one), 0.0);

  const Tensor64 r = oracle::random<double>(rng, {2, 5, 6, 7});
  EXPECT_LT(oracle::max_abs(global_avg_pool(r), oracle::mean_over(r, false, false, true, true)), 1e-6);
}

TEST(Unfold, CenterSliceIsInput) {
  Rng rng(11);
  const Tensor x = oracle::random<float>(rng, {2, 3, 6, 5});
  for (std::size_t d : {1u, 2u, 3u}) {
    const auto p = unfold(x, 3, 1, d);
    ASSERT_EQ(p.data.shape(), (Shape{2, 27, 6, 5}));
    for (std::size_t n = 0; n < 2; ++n)
      for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t y = 0; y < 6; ++y)
          for (std::size_t xx = 0; xx < 5; ++xx) EXPECT_EQ(p.at(n, c, 4, y, xx), x(n, c, y, xx));
  }
}

TEST(Unfold, RampEnumeratesRowMajor) {
  Tensor x({1, 1, 3, 3});
  for (std::size_t i = 0; i < 9; ++i) x[i] = float(i + 1);
  const auto p = unfold(x, 3, 1, 1);
  for (std::size_t j = 0; j < 9; ++j) EXPECT_EQ(p.at(0, 0, j, 1, 1), float(j + 1));
}

TEST(Unfold, DilatedCornersHitPaddingAndMatchLoopOracle) {
  Rng rng(12);
  const Tensor x = oracle::random<float>(rng, {1, 2, 7, 7});
  const auto p = unfold(x, 3, 1, 3);
  // Top-left corner: every tap with a negative displacement leaves the image.
  for (std::size_t j : {0u, 1u, 2u, 3u, 6u}) EXPECT_EQ(p.at(0, 0, j, 0, 0), 0.0f);
  EXPECT_EQ(p.at(0, 0, 8, 0, 0), x(0, 0, 3, 3));
  const Tensor slow = reference::unfold(x, 3, 3);
  EXPECT_EQ(oracle::max_abs(p.data, slow), 0.0);
}

TEST(Unfold, FoldIsAdjoint) {
  Rng rng(13);
  const Tensor64 x = oracle::random<double>(rng, {2, 3, 5, 6});
  const auto p = unfold(x, 3, 1, 2);
  const Tensor64 y = oracle::random<double>(rng, p.data.shape());
  EXPECT_NEAR(dot(p.data, y), dot(x, fold(y, 3, 2)), 1e-10);
}
