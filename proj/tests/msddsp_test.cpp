// Copyright 2026 The FinSight Authors
// SPDX-License-Identifier: Apache-2.0

#include "finsight/msddsp.hpp"

#include <cmath>

#include <gtest/gtest.h>

#include "finsight/errors.hpp"
#include "finsight/gradcheck.hpp"
#include "test_util.hpp"

namespace finsight::msddsp {
namespace {

Tensor random_tensor(Shape s, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  Rng rng(seed);
  return rng.uniform_tensor(s, lo, hi);
}

MsDdspConfig small_config(std::size_t channels) {
  MsDdspConfig cfg;
  cfg.channels = channels;
  cfg.squeeze_ratio = channels / 4 >= 4 ? 4 : 1;
  return cfg;
}

TEST(Config, Validation) {
  MsDdspConfig cfg;
  cfg.channels = 6;
  EXPECT_THROW(cfg.validate(), DivisibilityError);
  cfg.channels = 8;
  cfg.squeeze_ratio = 4;  // quarter 2 not divisible by 4
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg.squeeze_ratio = 2;
  EXPECT_NO_THROW(cfg.validate());
  cfg.dilations = {};
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(Branch1, IdentityStagesGiveIdentity) {
  ParamStore store;
  Rng rng(1);
  Branch1 b = Branch1::create(store, "b1", 4, {1, 2, 3}, rng);
  b.set_identity();
  const Tensor x = random_tensor(Shape{1, 4, 8, 8}, 2);
  const Tensor y = branch1_multiscale(x, b);
  EXPECT_EQ(y.shape(), x.shape());
  EXPECT_TRUE(bitwise_equal(x, y));
}

TEST(Branch1, ReceptiveFieldRecurrence) {
  const std::vector<std::size_t> d{1, 2, 3};
  EXPECT_EQ(receptive_field(d), 13u);
  // Grows monotonically stage by stage.
  std::size_t prev = 1;
  for (std::size_t k = 1; k <= d.size(); ++k) {
    const std::size_t rf = receptive_field(std::span(d).first(k));
    EXPECT_GT(rf, prev);
    prev = rf;
  }
}

// Empirical receptive field: a single-pixel impulse spreads over 13 pixels.
TEST(Branch1, ImpulseFootprintMatchesReceptiveField) {
  ParamStore store;
  Rng rng(3);
  Branch1 b = Branch1::create(store, "b1", 1, {1, 2, 3}, rng);
  for (ConvLayer& s : b.stages) s.weight->value.fill(1.0);
  Tensor x(Shape{1, 1, 31, 31});
  x.at(0, 0, 15, 15) = 1.0;
  const Tensor y = branch1_multiscale(x, b);
  std::size_t lo = 31, hi = 0;
  for (std::size_t i = 0; i < 31; ++i) {
    if (y.at(0, 0, 15, i) != 0.0) {
      lo = std::min(lo, i);
      hi = std::max(hi, i);
    }
  }
  EXPECT_EQ(hi - lo + 1, 13u);
}

TEST(Branch1, ShapePreservedAndOversizeDilationRejected) {
  ParamStore store;
  Rng rng(4);
  const Branch1 b = Branch1::create(store, "b1", 4, {1, 2, 3}, rng);
  EXPECT_EQ(branch1_multiscale(random_tensor(Shape{1, 4, 8, 8}, 5), b).shape(),
            (Shape{1, 4, 8, 8}));
  EXPECT_THROW(branch1_multiscale(random_tensor(Shape{1, 4, 3, 3}, 5), b),
               GeometryError);
}

TEST(Branch2, IdentityAndCompositionOracle) {
  ParamStore store;
  Rng rng(5);
  Branch2 b = Branch2::create(store, "b2", 4, rng);
  const Tensor x = random_tensor(Shape{2, 4, 6, 6}, 6);
  const Tensor y = branch2_decorrelate(x, b);
  const Tensor expected =
      depthwise_separable(x, b.spec, b.depthwise.weight->value,
                          b.depthwise.bias->value.data(), b.pointwise.weight->value,
                          b.pointwise.bias->value.data());
  EXPECT_TRUE(bitwise_equal(y, expected));
  b.set_identity();
  EXPECT_TRUE(bitwise_equal(branch2_decorrelate(x, b), x));
}

TEST(Branch2, ParameterCountBelowDenseConv) {
  for (std::size_t q : {2u, 4u, 8u, 16u, 32u}) {
    ParamStore store;
    Rng rng(7);
    const Branch2 b = Branch2::create(store, "b2", q, rng);
    EXPECT_EQ(b.param_count(), 9 * q + q * q + 2 * q);
    EXPECT_EQ(store.count(), b.param_count());
    EXPECT_LT(b.param_count(), 9 * q * q);
  }
}

TEST(Branch3, UnitAndHalfGates) {
  ParamStore store;
  Rng rng(8);
  Branch3 b = Branch3::create(store, "b3", 8, 4, rng);
  const Tensor x = random_tensor(Shape{2, 8, 5, 5}, 9);
  b.set_constant_gate(40.0);
  EXPECT_TRUE(bitwise_equal(branch3_channel_weight(x, b), x));
  b.set_constant_gate(0.0);
  const Tensor half = branch3_channel_weight(x, b);
  for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_EQ(half[i], 0.5 * x[i]);
}

TEST(Branch3, RatioMustDivideChannels) {
  ParamStore store;
  Rng rng(1);
  EXPECT_THROW(Branch3::create(store, "b3", 6, 4, rng), ConfigError);
}

TEST(Branch3, RescaleGradientMatchesFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    ParamStore store;
    Rng rng(seed);
    const Branch3 b = Branch3::create(store, "b3", 4, 2, rng);
    const Tensor x = random_tensor(Shape{2, 4, 3, 4}, seed + 50);
    EXPECT_LE(testing::tape_grad_error([&](Tape& t, Var v) { return b(t, v); }, x, seed),
              1e-4);
    // Gate alone, with x held fixed in the rescale.
    EXPECT_LE(testing::tape_grad_error(
                  [&](Tape& t, Var v) {
                    return ag::channel_scale(t, t.constant(x), b.gate(t, v));
                  },
                  x, seed),
              1e-4);
  }
}

TEST(Branch4, IdentityIdempotentAndUnitGradient) {
  const Tensor x = random_tensor(Shape{1, 3, 4, 4}, 10);
  EXPECT_TRUE(bitwise_equal(branch4_identity(x), x));
  EXPECT_TRUE(bitwise_equal(branch4_identity(branch4_identity(x)), branch4_identity(x)));
  const Tensor g = finite_diff_grad(
      [](const Tensor& p) { return branch4_identity(p).sum(); }, x, 1e-5);
  for (double v : g.data()) EXPECT_NEAR(v, 1.0, 1e-9);
}

TEST(AttentionFuse, SymmetricBranchesGiveQuarterWeights) {
  const Tensor x = random_tensor(Shape{2, 3, 4, 4}, 11);
  const auto [y, w] = attention_fuse({x, x, x, x});
  for (const Tensor& b : w.beta) {
    for (double v : b.data()) EXPECT_NEAR(v, 0.25, 1e-12);
  }
  const std::vector<Tensor> quarters{x, x, x, x};
  Tensor expected = concat_channels(quarters);
  expected *= 0.25;
  for (std::size_t i = 0; i < y.numel(); ++i) EXPECT_NEAR(y[i], expected[i], 1e-15);
}

TEST(AttentionFuse, DominantBranchSaturates) {
  const Tensor a = random_tensor(Shape{1, 2, 3, 3}, 12);
  Tensor dominant = random_tensor(Shape{1, 2, 3, 3}, 13);
  for (double& v : dominant.data()) v += 60.0;
  const auto [y, w] = attention_fuse({a, dominant, a, a});
  for (double v : w.beta[1].data()) EXPECT_NEAR(v, 1.0, 1e-20 + 1e-12);
  for (std::size_t k : {0u, 2u, 3u}) {
    for (double v : w.beta[k].data()) EXPECT_LT(v, 1e-20);
  }
  const std::vector<Tensor> blocks = split_channels(y, 4);
  for (std::size_t i = 0; i < dominant.numel(); ++i) {
    EXPECT_NEAR(blocks[1][i], dominant[i], 1e-9);
  }
}

TEST(AttentionFuse, WeightsSumToOneForRandomInputs) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const Shape s{1 + seed % 2, 1 + seed % 5, 2 + seed % 3, 3};
    std::array<Tensor, kBranches> br;
    for (std::size_t k = 0; k < kBranches; ++k) {
      br[k] = random_tensor(s, seed * 10 + k, -5.0, 5.0);
    }
    const auto [y, w] = attention_fuse(br);
    EXPECT_EQ(y.shape(), (Shape{s.n, 4 * s.c, s.h, s.w}));
    for (std::size_t i = 0; i < w.beta[0].numel(); ++i) {
      double total = 0.0;
      for (const Tensor& b : w.beta) {
        EXPECT_GT(b[i], 0.0);
        EXPECT_LT(b[i], 1.0);
        total += b[i];
      }
      EXPECT_NEAR(total, 1.0, 1e-6);
    }
  }
}

TEST(AttentionFuse, UniformStatisticShiftLeavesWeightsUnchanged) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::array<Tensor, kBranches> br, shifted;
    const double c = Rng(seed).uniform(-10.0, 10.0);
    for (std::size_t k = 0; k < kBranches; ++k) {
      br[k] = random_tensor(Shape{1, 3, 3, 3}, seed * 7 + k);
      shifted[k] = br[k];
      for (double& v : shifted[k].data()) v += c;
    }
    const BranchWeights a = attention_fuse(br).second;
    const BranchWeights b = attention_fuse(shifted).second;
    for (std::size_t k = 0; k < kBranches; ++k) {
      for (std::size_t i = 0; i < a.beta[k].numel(); ++i) {
        EXPECT_NEAR(a.beta[k][i], b.beta[k][i], 1e-12);
      }
    }
  }
}

TEST(AttentionFuse, DetailPreservationFloor) {
  Tensor x4 = random_tensor(Shape{1, 3, 4, 4}, 21);
  const Tensor mean = gap(x4);
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t i = 0; i < 16; ++i) x4.plane(0, c)[i] -= mean.at(0, c, 0, 0);
  }
  const Tensor zero(x4.shape());
  const auto [y, w] = attention_fuse({zero, zero, zero, x4});
  const std::vector<Tensor> blocks = split_channels(y, 4);
  for (std::size_t i = 0; i < x4.numel(); ++i) {
    EXPECT_NEAR(blocks[3][i], 0.25 * x4[i], 1e-12);
  }
}

TEST(AttentionFuse, ShapeMismatchIsDimensionError) {
  const Tensor a(Shape{1, 2, 3, 3});
  const Tensor b(Shape{1, 2, 3, 4});
  EXPECT_THROW(attention_fuse({a, a, b, a}), DimensionError);
}

TEST(Block, IdentityBranchesAndSymmetricStatistics) {
  ParamStore store;
  Rng rng(30);
  MsDdspBlock block = MsDdspBlock::create(store, "m", small_config(8), rng);
  block.branch1.set_identity();
  block.branch2.set_identity();
  block.branch3.set_constant_gate(40.0);
  // Adjust conv copies input channels 0..1 into every quarter, so all
  // four branch inputs (and outputs) coincide.
  Tensor& w = block.adjust.conv.weight->value;
  w.fill(0.0);
  for (std::size_t oc = 0; oc < 8; ++oc) w.at(oc, oc % 2, 0, 0) = 1.0;

  const Tensor x = random_tensor(Shape{1, 8, 6, 6}, 31);
  Tape t(false);
  const BlockTrace tr = block.trace(t, t.constant(x));
  const Tensor& adjusted = t.value(tr.adjusted);
  const Tensor& fused = t.value(tr.fused.y);
  for (std::size_t i = 0; i < fused.numel(); ++i) {
    EXPECT_NEAR(fused[i], 0.25 * adjusted[i], 1e-15);
  }
}

TEST(Block, ShapePreservingForValidConfigs) {
  {
    ParamStore store;
    Rng rng(32);
    const MsDdspBlock block = MsDdspBlock::create(store, "m", small_config(64), rng);
    EXPECT_EQ(msddsp_forward(random_tensor(Shape{2, 64, 16, 16}, 33), block).shape(),
              (Shape{2, 64, 16, 16}));
  }
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    ParamStore store;
    Rng rng(seed);
    MsDdspConfig cfg;
    cfg.channels = 4 * (1 + seed % 4);
    cfg.squeeze_ratio = 1;
    cfg.dilations = std::vector<std::size_t>(1 + seed % 3, 1 + seed % 2);
    const MsDdspBlock block = MsDdspBlock::create(store, "m", cfg, rng);
    const Shape s{1 + seed % 2, cfg.channels, 5 + seed % 4, 6};
    EXPECT_EQ(block.forward(random_tensor(s, seed)).shape(), s);
  }
}

TEST(Block, WrongChannelCountIsRejected) {
  ParamStore store;
  Rng rng(1);
  const MsDdspBlock block = MsDdspBlock::create(store, "m", small_config(8), rng);
  EXPECT_THROW(block.forward(Tensor(Shape{1, 6, 4, 4})), DimensionError);
}

TEST(Block, EndToEndGradientMatchesFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    ParamStore store;
    Rng rng(seed);
    MsDdspConfig cfg = small_config(8);
    cfg.squeeze_ratio = 2;
    const MsDdspBlock block = MsDdspBlock::create(store, "m", cfg, rng);
    const Tensor x = random_tensor(Shape{1, 8, 6, 6}, seed + 1000);
    EXPECT_LE(testing::tape_grad_error([&](Tape& t, Var v) { return block(t, v); }, x, seed),
              1e-4)
        << "seed " << seed;
  }
}

TEST(Block, ParameterGradientsMatchFiniteDifferences) {
  ParamStore store;
  Rng rng(77);
  MsDdspConfig cfg = small_config(8);
  cfg.squeeze_ratio = 2;
  const MsDdspBlock block = MsDdspBlock::create(store, "m", cfg, rng);
  const Tensor x = random_tensor(Shape{1, 8, 6, 6}, 78);
  const Tensor proj = random_tensor(Shape{1, 8, 6, 6}, 79);
  store.zero_grad();
  {
    Tape t;
    t.backward(ag::weighted_sum(t, block(t, t.constant(x)), proj));
  }
  for (Parameter& p : store) {
    const Tensor analytic = p.grad;
    const Tensor saved = p.value;
    const Tensor numeric = finite_diff_grad(
        [&](const Tensor& v) {
          p.value = v;
          Tape t(false);
          return t.value(ag::weighted_sum(t, block(t, t.constant(x)), proj))[0];
        },
        saved, 1e-5);
    p.value = saved;
    EXPECT_LE(relative_error(analytic, numeric), 1e-4) << p.name;
  }
}

TEST(Block, RemovingBranchTwoOrThreeChangesOutput) {
  const Tensor x = random_tensor(Shape{1, 16, 8, 8}, 40);
  ParamStore store;
  Rng rng(41);
  MsDdspBlock block = MsDdspBlock::create(store, "m", small_config(16), rng);
  const Tensor full = block.forward(x);
  for (std::size_t k : {1u, 2u}) {
    block.config().branch_enabled = {true, true, true, true};
    block.config().branch_enabled[k] = false;
    const Tensor ablated = block.forward(x);
    double delta = 0.0;
    for (std::size_t i = 0; i < x.numel(); ++i) {
      delta = std::max(delta, std::abs(full[i] - ablated[i]));
    }
    EXPECT_GT(delta, 1e-6) << "branch " << k + 1;
  }
}

TEST(Block, ReportsBranchWeightsAndDumpsJson) {
  ParamStore store;
  Rng rng(50);
  const MsDdspBlock block = MsDdspBlock::create(store, "m", small_config(16), rng);
  BranchWeights w;
  block.forward(random_tensor(Shape{2, 16, 5, 5}, 51), &w);
  const auto m = w.mean_beta();
  EXPECT_NEAR(m[0] + m[1] + m[2] + m[3], 1.0, 1e-12);
  const nlohmann::json j = branch_weight_dump({{"img_0", w}, {"img_1", w}});
  ASSERT_TRUE(j.is_array());
  ASSERT_EQ(j.size(), 2u);
  EXPECT_EQ(j[1]["input"], "img_1");
  EXPECT_EQ(j[0]["beta"].size(), 4u);
  EXPECT_DOUBLE_EQ(j[0]["beta"][2].get<double>(), m[2]);
}

TEST(Block, ParamCountMatchesStore) {
  ParamStore store;
  Rng rng(60);
  const MsDdspBlock block = MsDdspBlock::create(store, "m", small_config(32), rng);
  EXPECT_EQ(block.param_count(), store.count());
}

}  // namespace
}  // namespace finsight::msddsp
