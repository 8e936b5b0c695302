#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

#include "adfnet/data.hpp"
#include "adfnet/image_io.hpp"
#include "adfnet/metrics.hpp"
#include "oracles.hpp"

using namespace adfnet;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "adfnet_data_tests" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

Tensor checkerboard(std::size_t n) {
  Tensor t({1, 3, n, n});
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t y = 0; y < n; ++y)
      for (std::size_t x = 0; x < n; ++x) t(0, c, y, x) = float((x + y) % 2);
  return t;
}

double correlation(const Tensor& a, const Tensor& b) {
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= double(a.size());
  mb /= double(b.size());
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

}  // namespace

TEST(Awgn, NoiseStatisticsAtSigmaFifty) {
  Rng rng(1);
  const Tensor noise = awgn_noise({1, 3, 256, 256}, 50.0, rng);
  double mean = 0;
  for (float v : noise.values()) mean += v;
  mean /= double(noise.size());
  double var = 0;
  for (float v : noise.values()) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / double(noise.size() - 1));
  EXPECT_GE(sd, 0.188);
  EXPECT_LE(sd, 0.204);
  EXPECT_LT(std::abs(mean), 1e-3);
}

TEST(Awgn, ZeroSigmaIsIdentity) {
  Rng rng(2);
  const Tensor img = oracle::random<float>(rng, {1, 3, 9, 11}, 0.0, 1.0);
  const Tensor y = add_awgn(img, 0.0, rng);
  for (std::size_t i = 0; i < img.size(); ++i) EXPECT_EQ(y[i], img[i]);
}

TEST(Awgn, ClampedAndDeterministic) {
  const Tensor gray({1, 3, 32, 32}, 0.5f);
  Rng a(3), b(3);
  const Tensor ya = add_awgn(gray, 70.0, a), yb = add_awgn(gray, 70.0, b);
  for (std::size_t i = 0; i < ya.size(); ++i) {
    EXPECT_EQ(ya[i], yb[i]);
    EXPECT_GE(ya[i], 0.0f);
    EXPECT_LE(ya[i], 1.0f);
  }
}

TEST(Awgn, DifferentSeedsAreUncorrelated) {
  Rng a(4), b(5);
  const Tensor na = awgn_noise({1, 3, 128, 128}, 25.0, a);
  const Tensor nb = awgn_noise({1, 3, 128, 128}, 25.0, b);
  EXPECT_LT(std::abs(correlation(na, nb)), 0.01);
}

TEST(Patches, WholeImageCropAndExactNoise) {
  Rng init(6);
  const Tensor img = oracle::random<float>(init, {1, 3, 16, 16}, 0.0, 1.0);
  Rng rng(7);
  const auto b = sample_patches({img}, 16, 3, false, 25.0, rng);
  EXPECT_EQ(b.clean.shape(), (Shape{3, 3, 16, 16}));
  EXPECT_EQ(b.sigma, 25.0);
  for (std::size_t n = 0; n < 3; ++n)
    for (std::size_t i = 0; i < img.size(); ++i) EXPECT_EQ(b.clean[n * img.size() + i], img[i]);
  // Noise for patch i is awgn_noise drawn from rng.fork(i), not clamped.
  Rng ref(7);
  for (std::size_t n = 0; n < 3; ++n) {
    Rng fork = ref.fork(n);
    const Tensor noise = awgn_noise(img.shape(), 25.0, fork);
    for (std::size_t i = 0; i < img.size(); ++i) {
      const std::size_t j = n * img.size() + i;
      EXPECT_EQ(b.noisy[j], b.clean[j] + noise[i]);
    }
  }
}

TEST(Patches, ReproducibleWithFixedSeed) {
  Rng init(8);
  const std::vector<Tensor> imgs{oracle::random<float>(init, {1, 3, 40, 30}, 0.0, 1.0),
                                 oracle::random<float>(init, {1, 3, 20, 50}, 0.0, 1.0)};
  for (bool augment : {false, true}) {
    Rng a(9), b(9);
    const auto pa = sample_patches(imgs, 12, 5, augment, 25.0, a);
    const auto pb = sample_patches(imgs, 12, 5, augment, 25.0, b);
    EXPECT_EQ(oracle::max_abs(pa.clean, pb.clean), 0.0);
    EXPECT_EQ(oracle::max_abs(pa.noisy, pb.noisy), 0.0);
  }
}

TEST(Patches, TooSmallImageThrows) {
  Rng rng(10);
  EXPECT_THROW(sample_patches({Tensor({1, 3, 8, 40})}, 16, 1, false, 25.0, rng), ImageTooSmall);
}

TEST(Augment, FlipsAreInvolutionsAndRotationHasOrderFour) {
  Rng rng(11);
  const Tensor x = oracle::random<float>(rng, {2, 3, 7, 7});
  EXPECT_EQ(oracle::max_abs(hflip(hflip(x)), x), 0.0);
  EXPECT_EQ(oracle::max_abs(vflip(vflip(x)), x), 0.0);
  EXPECT_EQ(oracle::max_abs(rot90(rot90(rot90(rot90(x)))), x), 0.0);
  EXPECT_GT(oracle::max_abs(hflip(x), x), 0.0);
  EXPECT_EQ(hflip(x)(1, 2, 3, 0), x(1, 2, 3, 6));
  EXPECT_EQ(vflip(x)(1, 2, 0, 3), x(1, 2, 6, 3));
  // Counter-clockwise: the right column becomes the top row.
  EXPECT_EQ(rot90(x)(0, 1, 0, 2), x(0, 1, 2, 6));
}

TEST(Psnr, ClosedForm) {
  const Tensor a({1, 3, 8, 8}, 0.3f);
  Tensor b = a;
  for (std::size_t i = 0; i < b.size(); ++i) b[i] = i % 2 ? 0.4f : 0.2f;
  EXPECT_NEAR(psnr(a, b), 20.0, 1e-5);
  const Tensor z({1, 3, 8, 8}, 0.0f), t({1, 3, 8, 8}, 0.1f);
  EXPECT_NEAR(psnr(z, t), 20.0 + 20.0 * std::log10(0.1 / double(0.1f)), 1e-9);
  EXPECT_EQ(psnr(a, a), std::numeric_limits<double>::infinity());
}

TEST(Psnr, MatchesDirectFormula) {
  Rng rng(12);
  const Tensor a = oracle::random<float>(rng, {1, 3, 17, 23}, 0.0, 1.0);
  const Tensor b = oracle::random<float>(rng, {1, 3, 17, 23}, 0.0, 1.0);
  EXPECT_NEAR(psnr(a, b), double(oracle::psnr(a, b)), 1e-6);
}

TEST(Psnr, DecreasesWithSigma) {
  Rng init(13);
  const Tensor img = synthetic_image(48, 48, init);
  double prev = std::numeric_limits<double>::infinity();
  for (double sigma : {5.0, 15.0, 30.0, 50.0, 70.0}) {
    double sum = 0;
    for (std::uint64_t s = 0; s < 4; ++s) {
      Rng rng(100 + s);
      sum += psnr(img, add_awgn(img, sigma, rng));
    }
    EXPECT_LT(sum / 4, prev) << sigma;
    prev = sum / 4;
  }
}

TEST(Psnr, ShapeMismatchThrows) {
  EXPECT_ANY_THROW(psnr(Tensor({1, 3, 4, 4}), Tensor({1, 3, 4, 5})));
  EXPECT_ANY_THROW(ssim(Tensor({1, 3, 12, 12}), Tensor({1, 3, 12, 13})));
}

TEST(Ssim, IdenticalImagesScoreOne) {
  Rng rng(14);
  const Tensor a = oracle::random<float>(rng, {1, 3, 20, 24}, 0.0, 1.0);
  EXPECT_DOUBLE_EQ(ssim(a, a), 1.0);
  const Tensor small = oracle::random<float>(rng, {1, 3, 6, 7}, 0.0, 1.0);
  EXPECT_DOUBLE_EQ(ssim(small, small), 1.0);
}

TEST(Ssim, InvertedCheckerboardIsNegative) {
  const Tensor a = checkerboard(16);
  Tensor b = a;
  for (auto& v : b.values()) v = 1.0f - v;
  const double s = ssim(a, b);
  EXPECT_LT(s, 0.0);
  EXPECT_NEAR(s, oracle::ssim(a, b), 1e-6);
}

TEST(Ssim, SymmetricAndMatchesDirectFormula) {
  Rng rng(15);
  const Tensor a = oracle::random<float>(rng, {1, 3, 21, 18}, 0.0, 1.0);
  Tensor b = a;
  for (auto& v : b.values()) v = std::clamp(v + float(rng.uniform(-0.2, 0.2)), 0.0f, 1.0f);
  EXPECT_NEAR(ssim(a, b), ssim(b, a), 1e-9);
  EXPECT_NEAR(ssim(a, b), oracle::ssim(a, b), 1e-6);
  const double s = ssim(a, b);
  EXPECT_GT(s, -1.0);
  EXPECT_LT(s, 1.0);
}

TEST(Png, RoundTripIsExactAtEightBits) {
  Rng rng(16);
  const Tensor img = oracle::random<float>(rng, {1, 3, 13, 17}, -0.1, 1.1);
  const auto path = scratch_dir("png") / "img.png";
  save_png(img, path);
  const Tensor back = load_png(path);
  const Tensor q = quantize8(img);
  ASSERT_EQ(back.shape(), img.shape());
  for (std::size_t i = 0; i < q.size(); ++i) {
    EXPECT_EQ(back[i], q[i]);
    EXPECT_EQ(std::round(q[i] * 255.0f), q[i] * 255.0f);
  }
  save_png(back, path);
  EXPECT_EQ(oracle::max_abs(load_png(path), back), 0.0);
}

TEST(Png, UnreadableFileThrows) {
  const auto dir = scratch_dir("bad_png");
  std::ofstream(dir / "x.png") << "not a png";
  EXPECT_THROW(load_png(dir / "x.png"), ImageIoError);
  EXPECT_THROW(load_png(dir / "missing.png"), ImageIoError);
}

TEST(Dataset, ListsPngsInLexicographicOrder) {
  const auto dir = scratch_dir("list");
  const Tensor img({1, 3, 4, 4}, 0.5f);
  for (const char* name : {"b.png", "a.png", "c10.png", "c2.png"}) save_png(img, dir / name);
  std::ofstream(dir / "notes.txt") << "x";
  fs::create_directories(dir / "sub.png.d");
  const auto files = list_images(dir);
  ASSERT_EQ(files.size(), 4u);
  EXPECT_EQ(files[0].filename(), "a.png");
  EXPECT_EQ(files[1].filename(), "b.png");
  EXPECT_EQ(files[2].filename(), "c10.png");
  EXPECT_EQ(files[3].filename(), "c2.png");
}

TEST(Synthetic, DeterministicAndInRange) {
  Rng a(17), b(17);
  const Tensor x = synthetic_image(40, 30, a), y = synthetic_image(40, 30, b);
  EXPECT_EQ(x.shape(), (Shape{1, 3, 40, 30}));
  EXPECT_EQ(oracle::max_abs(x, y), 0.0);
  for (float v : x.values()) {
    EXPECT_GE(v, 0.0f);
    EXPECT_LE(v, 1.0f);
  }
}
