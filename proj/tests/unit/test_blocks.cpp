#include <gtest/gtest.h>

#include <algorithm>

#include "adfnet/blocks.hpp"
#include "naive_ops.hpp"
#include "oracles.hpp"

using namespace adfnet;
namespace ref = adfnet::reference;

namespace {

BlockConfig small_config(std::size_t c = 8) {
  BlockConfig cfg;
  cfg.channels = c;
  cfg.dilations = {1, 2, 3};
  return cfg;
}

template <class T>
ParamStore<T> random_store(void (*declare)(ParamLayout&, const std::string&, const BlockConfig&),
                           const BlockConfig& cfg, std::uint64_t seed) {
  ParamLayout layout;
  declare(layout, "blk", cfg);
  Rng rng(seed);
  return instantiate<T>(layout, rng);
}

Tensor64 concat_loop(const std::vector<Tensor64>& parts) {
  std::size_t c = 0;
  for (const auto& p : parts) c += p.shape().c;
  const Shape s = parts[0].shape();
  Tensor64 out({s.n, c, s.h, s.w});
  std::size_t base = 0;
  for (const auto& p : parts) {
    for (std::size_t n = 0; n < s.n; ++n)
      for (std::size_t ch = 0; ch < p.shape().c; ++ch)
        for (std::size_t y = 0; y < s.h; ++y)
          for (std::size_t x = 0; x < s.w; ++x) out(n, base + ch, y, x) = p(n, ch, y, x);
    base += p.shape().c;
  }
  return out;
}

Tensor64 act_loop(Tensor64 x, graph::Activation a) {
  for (auto& v : x.values())
    if (v < 0) v = a == graph::Activation::Relu ? 0.0 : v * graph::kLeakySlope;
  return x;
}

Tensor64 add_loop(Tensor64 a, const Tensor64& b) {
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
  return a;
}

const Tensor64* bias_of(const ParamStore<double>& s, const std::string& name) {
  return s.contains(name + ".bias") ? &s.value(name + ".bias") : nullptr;
}

Tensor64 conv_ref(const ParamStore<double>& s, const std::string& name, const Tensor64& x,
                  std::size_t dilation = 1, std::size_t groups = 1) {
  const Tensor64& w = s.value(name + ".weight");
  const std::size_t pad = dilation * (w.shape().h - 1) / 2;
  return ref::conv2d(x, w, bias_of(s, name), 1, pad, dilation, groups);
}

// Kernel generation rebuilt from naive convolutions and a loop global pool.
Tensor64 sekg_ref(const ParamStore<double>& s, const std::string& p, const Tensor64& f) {
  const Shape sh = f.shape();
  Tensor64 spatial = conv_ref(s, p + ".dw", f, 1, sh.c);
  spatial = conv_ref(s, p + ".pw", spatial);
  Tensor64 pooled({sh.n, sh.c, 1, 1});
  for (std::size_t n = 0; n < sh.n; ++n)
    for (std::size_t c = 0; c < sh.c; ++c) {
      double m = 0;
      for (std::size_t i = 0; i < sh.h * sh.w; ++i) m += f.plane(n, c)[i];
      pooled(n, c, 0, 0) = m / double(sh.h * sh.w);
    }
  const Tensor64 channel = conv_ref(s, p + ".ch", pooled);
  Tensor64 sum(spatial.shape());
  for (std::size_t n = 0; n < sh.n; ++n)
    for (std::size_t c = 0; c < sh.c; ++c)
      for (std::size_t y = 0; y < sh.h; ++y)
        for (std::size_t x = 0; x < sh.w; ++x)
          sum(n, c, y, x) = spatial(n, c, y, x) + channel(n, c, 0, 0);
  return conv_ref(s, p + ".head", sum);
}

Tensor64 mdconv_ref(const ParamStore<double>& s, const std::string& p, const Tensor64& f) {
  return ref::mdconv(f, s.value(p + ".offset.weight"), bias_of(s, p + ".offset"),
                     s.value(p + ".main.weight"), bias_of(s, p + ".main"));
}

Tensor64 mfi_ref(const ParamStore<double>& s, const std::string& p, const Tensor64& f_cat,
                 const Tensor64& f_in) {
  return oracle::mfi(f_cat, f_in, s.value(p + ".fuse.weight"), s.value(p + ".fuse.bias"));
}

}  // namespace

TEST(Blocks, ZeroParametersGiveIdentity) {
  const BlockConfig cfg = small_config();
  Rng rng(11);
  const Tensor f = oracle::random<float>(rng, {2, 8, 9, 7});
  auto cb = random_store<float>(declare_cb, cfg, 1);
  auto dcb = random_store<float>(declare_dcb, cfg, 2);
  auto mcb = random_store<float>(declare_mcb, cfg, 3);
  auto mdcb = random_store<float>(declare_mdcb, cfg, 4);
  for (auto* s : {&cb, &dcb, &mcb, &mdcb}) oracle::zero_all(*s);
  const std::vector<Tensor> outs{cb_forward(f, cb, "blk", cfg), dcb_forward(f, dcb, "blk", cfg),
                                 mcb_forward(f, mcb, "blk", cfg),
                                 mdcb_forward(f, mdcb, "blk", cfg)};
  for (const auto& y : outs) {
    ASSERT_EQ(y.shape(), f.shape());
    for (std::size_t i = 0; i < f.size(); ++i) EXPECT_EQ(y[i], f[i]);
  }
}

TEST(Blocks, RandomParametersKeepShape) {
  const BlockConfig cfg = small_config();
  Rng rng(12);
  const Tensor f = oracle::random<float>(rng, {1, 8, 6, 10});
  EXPECT_EQ(cb_forward(f, random_store<float>(declare_cb, cfg, 5), "blk", cfg).shape(), f.shape());
  EXPECT_EQ(dcb_forward(f, random_store<float>(declare_dcb, cfg, 6), "blk", cfg).shape(), f.shape());
  EXPECT_EQ(mcb_forward(f, random_store<float>(declare_mcb, cfg, 7), "blk", cfg).shape(), f.shape());
  EXPECT_EQ(mdcb_forward(f, random_store<float>(declare_mdcb, cfg, 8), "blk", cfg).shape(),
            f.shape());
}

TEST(Blocks, ConvBlockMatchesComposition) {
  for (auto act : {graph::Activation::Relu, graph::Activation::LeakyRelu}) {
    BlockConfig cfg = small_config();
    cfg.activation = act;
    const auto s = random_store<double>(declare_cb, cfg, 21);
    Rng rng(22);
    const Tensor64 f = oracle::random<double>(rng, {2, 8, 7, 6});
    const Tensor64 expect =
        add_loop(f, conv_ref(s, "blk.conv2", act_loop(conv_ref(s, "blk.conv1", f), act)));
    EXPECT_LT(oracle::max_abs(cb_forward(f, s, "blk", cfg), expect), 1e-12);
  }
}

TEST(Blocks, DynamicBlockMatchesComposition) {
  const BlockConfig cfg = small_config();
  const auto s = random_store<double>(declare_dcb, cfg, 23);
  Rng rng(24);
  const Tensor64 f = oracle::random<double>(rng, {2, 8, 6, 7});
  const Tensor64 y = act_loop(conv_ref(s, "blk.conv1", f), cfg.activation);
  const Tensor64 w = sekg_ref(s, "blk.sekg", y);
  const Tensor64 expect = add_loop(f, conv_ref(s, "blk.conv2", ref::dconv(y, w, cfg.k, 1)));
  EXPECT_LT(oracle::max_abs(dcb_forward(f, s, "blk", cfg), expect), 1e-11);
}

TEST(Blocks, DynamicBlockWithCentreKernelsEqualsConvBlock) {
  // Spatial branch outputs a constant 1, channel branch 0, and the head routes
  // channel ch to the centre tap of ch only: every generated kernel is a delta.
  const BlockConfig cfg = small_config();
  const std::size_t c = cfg.channels, taps = cfg.k * cfg.k, centre = taps / 2;
  auto dcb = random_store<float>(declare_dcb, cfg, 25);
  for (const char* part : {"dw", "pw", "ch", "head"}) {
    const std::string p = std::string("blk.sekg.") + part;
    std::ranges::fill(dcb.value(p + ".weight").values(), 0.0f);
    if (dcb.contains(p + ".bias")) std::ranges::fill(dcb.value(p + ".bias").values(), 0.0f);
  }
  std::ranges::fill(dcb.value("blk.sekg.pw.bias").values(), 1.0f);
  for (std::size_t ch = 0; ch < c; ++ch)
    dcb.value("blk.sekg.head.weight")(centre * c + ch, ch, 0, 0) = 1.0f;

  ParamStore<float> cb;
  for (const char* name :
       {"blk.conv1.weight", "blk.conv1.bias", "blk.conv2.weight", "blk.conv2.bias"})
    cb.add(name, dcb.value(name));
  Rng rng(26);
  const Tensor f = oracle::random<float>(rng, {2, 8, 7, 9});
  const Tensor a = dcb_forward(f, dcb, "blk", cfg), b = cb_forward(f, cb, "blk", cfg);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i], b[i]);
}

TEST(Blocks, MultiScaleBlockMatchesComposition) {
  const BlockConfig cfg = small_config();
  const auto s = random_store<double>(declare_mcb, cfg, 27);
  Rng rng(28);
  const Tensor64 f = oracle::random<double>(rng, {2, 8, 9, 8});
  const Tensor64 fr = conv_ref(s, "blk.reduce", mdconv_ref(s, "blk.mdconv", f));
  std::vector<Tensor64> parts{fr};
  for (std::size_t i = 0; i < cfg.dilations.size(); ++i)
    parts.push_back(conv_ref(s, "blk.branch" + std::to_string(i), fr, cfg.dilations[i]));
  const Tensor64 expect = mfi_ref(s, "blk.mfi", concat_loop(parts), f);
  EXPECT_LT(oracle::max_abs(mcb_forward(f, s, "blk", cfg), expect), 1e-11);
}

TEST(Blocks, MultiScaleDynamicBlockMatchesComposition) {
  const BlockConfig cfg = small_config();
  const auto s = random_store<double>(declare_mdcb, cfg, 29);
  Rng rng(30);
  const Tensor64 f = oracle::random<double>(rng, {2, 8, 8, 9});
  const Tensor64 fr = conv_ref(s, "blk.reduce", mdconv_ref(s, "blk.mdconv", f));
  const Tensor64 w = sekg_ref(s, "blk.sekg", fr);
  std::vector<Tensor64> parts{fr};
  for (std::size_t i = 0; i < cfg.dilations.size(); ++i)
    parts.push_back(conv_ref(s, "blk.branch" + std::to_string(i),
                             ref::dconv(fr, w, cfg.k, cfg.dilations[i])));
  const Tensor64 expect = mfi_ref(s, "blk.mfi", concat_loop(parts), f);
  EXPECT_LT(oracle::max_abs(mdcb_forward(f, s, "blk", cfg), expect), 1e-11);
}

TEST(Blocks, ConstantKernelsReduceDynamicBranchToStaticConv) {
  // With every generated tap equal to 1 and a single dilation-1 branch, the
  // aggregation is a 3x3 box sum, so branch(box(fr)) is the static oracle.
  BlockConfig cfg = small_config();
  cfg.dilations = {1};
  const auto s = random_store<double>(declare_mdcb, cfg, 31);
  Rng rng(32);
  const Tensor64 f = oracle::random<double>(rng, {1, 8, 6, 6});
  const std::size_t cr = cfg.reduced();
  graph::Tape<double> t(false);
  const auto field = t.constant(Tensor64::ones({1, cfg.k * cfg.k * cr, 6, 6}));
  const Tensor64 got = graph::mdcb(t, s, "blk", cfg, t.constant(f), nullptr, &field).value();

  const Tensor64 fr = conv_ref(s, "blk.reduce", mdconv_ref(s, "blk.mdconv", f));
  Tensor64 box({cr, 1, 3, 3}, 1.0);
  const Tensor64 boxed = ref::conv2d(fr, box, static_cast<const Tensor64*>(nullptr), 1, 1, 1, cr);
  const Tensor64 expect =
      mfi_ref(s, "blk.mfi", concat_loop({fr, conv_ref(s, "blk.branch0", boxed)}), f);
  EXPECT_LT(oracle::max_abs(got, expect), 1e-11);
}

TEST(Blocks, BranchesShareOneKernelField) {
  const BlockConfig cfg = small_config();
  const auto s = random_store<double>(declare_mdcb, cfg, 33);
  Rng rng(34);
  const Tensor64 f = oracle::random<double>(rng, {1, 8, 5, 5});
  graph::Tape<double> t;
  graph::MdcbTrace<double> trace;
  graph::mdcb(t, s, "blk", cfg, t.constant(f), &trace);
  ASSERT_EQ(trace.branch_kernels.size(), cfg.dilations.size());
  EXPECT_EQ(trace.kernels.shape(), (Shape{1, cfg.k * cfg.k * cfg.reduced(), 5, 5}));
  for (const auto& k : trace.branch_kernels) {
    EXPECT_EQ(k.node(), trace.kernels.node());
    EXPECT_EQ(oracle::max_abs(k.value(), trace.kernels.value()), 0.0);
  }
}

TEST(Blocks, ZeroingOneBranchChangesOutput) {
  const BlockConfig cfg = small_config();
  auto s = random_store<double>(declare_mdcb, cfg, 35);
  Rng rng(36);
  const Tensor64 f = oracle::random<double>(rng, {1, 8, 7, 7});
  const Tensor64 full = mdcb_forward(f, s, "blk", cfg);
  std::ranges::fill(s.value("blk.branch2.weight").values(), 0.0);
  std::ranges::fill(s.value("blk.branch2.bias").values(), 0.0);
  EXPECT_GT(oracle::max_abs(full, mdcb_forward(f, s, "blk", cfg)), 1e-6);
}

TEST(Blocks, WidthNotDivisibleByReductionThrows) {
  EXPECT_THROW(small_config(6).validate(), std::invalid_argument);
  ParamLayout layout;
  EXPECT_THROW(declare_mdcb(layout, "blk", small_config(6)), std::invalid_argument);
  const BlockConfig cfg = small_config();
  const auto s = random_store<double>(declare_mdcb, cfg, 37);
  Rng rng(38);
  EXPECT_ANY_THROW(mdcb_forward(oracle::random<double>(rng, {1, 6, 5, 5}), s, "blk", cfg));
}

TEST(Mfi, ZeroFeaturesGiveInput) {
  ParamLayout layout;
  declare_mfi(layout, "m", 8, 4);
  Rng rng(41);
  const auto s = instantiate<double>(layout, rng);
  ParamStore<double> nobias;
  nobias.add("m.fuse.weight", s.value("m.fuse.weight"));
  nobias.add("m.fuse.bias", Tensor64({1, 4, 1, 1}));
  const Tensor64 f_in = oracle::random<double>(rng, {2, 4, 5, 6});
  const Tensor64 y = mfi_fuse(Tensor64({2, 8, 5, 6}), f_in, nobias, "m");
  for (std::size_t i = 0; i < y.size(); ++i) EXPECT_EQ(y[i], f_in[i]);
}

TEST(Mfi, MatchesElementwiseOracle) {
  ParamLayout layout;
  declare_mfi(layout, "m", 12, 6);
  Rng rng(42);
  const auto s = instantiate<double>(layout, rng);
  const Tensor64 f_cat = oracle::random<double>(rng, {2, 12, 7, 5}, -3.0, 3.0);
  const Tensor64 f_in = oracle::random<double>(rng, {2, 6, 7, 5});
  EXPECT_LT(oracle::max_abs(mfi_fuse(f_cat, f_in, s, "m"), mfi_ref(s, "m", f_cat, f_in)), 1e-6);
}

TEST(Mfi, AttentionStaysInsideUnitInterval) {
  // Identity fusion and nonnegative features: every attention factor lies in
  // (0, 1), so the residual is bounded by 0 and 3 f.
  const std::size_t c = 4;
  ParamStore<double> s;
  Tensor64 eye({c, c, 1, 1});
  for (std::size_t i = 0; i < c; ++i) eye(i, i, 0, 0) = 1.0;
  s.add("m.fuse.weight", eye);
  s.add("m.fuse.bias", Tensor64({1, c, 1, 1}));
  Rng rng(43);
  const Tensor64 f = oracle::random<double>(rng, {1, c, 6, 6}, 0.01, 5.0);
  const Tensor64 f_in({1, c, 6, 6});
  const Tensor64 y = mfi_fuse(f, f_in, s, "m");
  for (std::size_t i = 0; i < y.size(); ++i) {
    EXPECT_GT(y[i], 0.0);
    EXPECT_LT(y[i], 3.0 * f[i]);
  }
}
