#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "segforge/blocks.hpp"
#include "segforge/error.hpp"
#include "segforge/ops.hpp"
#include "test_util.hpp"

using namespace segforge;
using testutil::random_tensor;

namespace {

struct Fixture {
  ParameterStore store;
  Rng rng{7};
  LayerBuilder b{store, rng, "blk"};
};

void fill(Tensor t, Real v) {
  for (Real& x : t.data()) x = v;
}

std::size_t stored_scalars(const ParameterStore& s) {
  std::size_t n = 0;
  for (const auto& p : s.parameters()) n += p.value.numel();
  return n;
}

double sigmoid_ref(double z) { return 1.0 / (1.0 + std::exp(-z)); }

}  // namespace

TEST(SqueezeExcite, ZeroWeightsHalveInput) {
  Fixture f;
  auto se = SqueezeExcite::create(f.b, 4, 2);
  fill(se.reduce.weight, 0);
  fill(se.expand.weight, 0);
  Tensor x = random_tensor(Shape{2, 4, 3, 3}, 1);
  Tensor y = se.forward(x);
  for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_FLOAT_EQ(y.data()[i], x.data()[i] / 2);
}

TEST(SqueezeExcite, SaturatedGatePassesInput) {
  Fixture f;
  auto se = SqueezeExcite::create(f.b, 4, 2);
  fill(se.expand.bias, 40);
  Tensor x = random_tensor(Shape{1, 4, 3, 3}, 2, -0.1, 0.1);
  Tensor y = se.forward(x);
  for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_NEAR(y.data()[i], x.data()[i], 1e-6);
}

TEST(SqueezeExcite, MatchesScalarRecomputation) {
  Fixture f;
  auto se = SqueezeExcite::create(f.b, 4, 2);
  for (Tensor t : {se.reduce.bias, se.expand.bias}) {
    Rng r(3);
    for (Real& v : t.data()) v = Real(r.uniform(-0.5, 0.5));
  }
  Tensor x = random_tensor(Shape{2, 4, 5, 5}, 4);
  Tensor y = se.forward(x);
  for (std::size_t n = 0; n < 2; ++n) {
    double z[4] = {}, hidden[2] = {};
    for (std::size_t c = 0; c < 4; ++c) {
      for (std::size_t i = 0; i < 25; ++i) z[c] += x.at(n, c, i / 5, i % 5);
      z[c] /= 25;
    }
    for (std::size_t h = 0; h < 2; ++h) {
      double a = se.reduce.bias.data()[h];
      for (std::size_t c = 0; c < 4; ++c) a += se.reduce.weight.at(h, c, 0, 0) * z[c];
      hidden[h] = std::max(0.0, a);
    }
    for (std::size_t c = 0; c < 4; ++c) {
      double a = se.expand.bias.data()[c];
      for (std::size_t h = 0; h < 2; ++h) a += se.expand.weight.at(c, h, 0, 0) * hidden[h];
      const double gate = sigmoid_ref(a);
      for (std::size_t i = 0; i < 25; ++i) EXPECT_NEAR(y.at(n, c, i / 5, i % 5), x.at(n, c, i / 5, i % 5) * gate, 1e-6);
    }
  }
}

TEST(SqueezeExcite, OutputBoundedByInput) {
  for (std::uint64_t s = 0; s < 10; ++s) {
    ParameterStore store;
    Rng rng(s);
    auto se = SqueezeExcite::create(LayerBuilder(store, rng), 8, 4);
    Tensor x = random_tensor(Shape{2, 8, 4, 4}, 100 + s, -5, 5);
    Tensor y = se.forward(x);
    for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_LE(std::abs(y.data()[i]), std::abs(x.data()[i]));
  }
}

TEST(Stem, ZeroMainPathLeavesShortcut) {
  Fixture f;
  auto stem = StemBlock::create(f.b, 3, 8, 4);
  fill(stem.conv1.weight, 0);
  fill(stem.conv2.weight, 0);
  Tensor x = random_tensor(Shape{2, 3, 8, 8}, 5);
  Tensor y = stem.forward(x, Mode::kInfer);
  auto st = BatchNormState::identity(8);
  Tensor ref = stem.se.forward(batchnorm2d(conv2d(x, stem.shortcut.weight, Tensor()), stem.shortcut_bn.gamma,
                                           stem.shortcut_bn.beta, st, Mode::kInfer));
  ASSERT_EQ(y.shape(), ref.shape());
  for (std::size_t i = 0; i < y.numel(); ++i) EXPECT_NEAR(y.data()[i], ref.data()[i], 1e-6);
}

TEST(Aspp, ConstantFieldCountsDilatedTaps) {
  Fixture f;
  const std::size_t c = 3;
  const std::vector<int> rates{1, 2, 3};
  auto aspp = Aspp::create(f.b, c, 2, rates);
  for (auto& br : aspp.branches) fill(br.weight, 1);
  fill(aspp.fuse.weight, 0);
  fill(aspp.fuse.bias, 0);
  for (std::size_t o = 0; o < 2; ++o) aspp.fuse.weight.at(o, o, 0, 0) = 1;
  Tensor x(Shape{1, c, 12, 12}, Real{1});
  Tensor y = aspp.forward(x, Mode::kInfer);
  ASSERT_EQ(y.shape(), (Shape{1, 2, 12, 12}));
  // Every tap of every rate lands inside the field at the centre.
  const double expected = 9.0 * c * rates.size() / std::sqrt(1.0 + 1e-5);
  EXPECT_NEAR(y.at(0, 0, 6, 6), expected, 1e-4);
  EXPECT_NEAR(y.at(0, 1, 5, 6), expected, 1e-4);
  // A corner pixel only sees the 2x2 taps of each rate.
  EXPECT_NEAR(y.at(0, 0, 0, 0), 4.0 * c * rates.size() / std::sqrt(1.0 + 1e-5), 1e-4);
}

TEST(Aspp, SingleRateIsConvPlusNorm) {
  Fixture f;
  auto aspp = Aspp::create(f.b, 2, 2, {1});
  fill(aspp.fuse.weight, 0);
  for (std::size_t o = 0; o < 2; ++o) aspp.fuse.weight.at(o, o, 0, 0) = 1;
  Tensor x = random_tensor(Shape{1, 2, 6, 6}, 6);
  auto st = BatchNormState::identity(2);
  Tensor ref = batchnorm2d(conv2d(x, aspp.branches[0].weight, Tensor(), {1, 1, 1}), aspp.norms[0].gamma,
                           aspp.norms[0].beta, st, Mode::kInfer);
  Tensor y = aspp.forward(x, Mode::kInfer);
  for (std::size_t i = 0; i < y.numel(); ++i) EXPECT_NEAR(y.data()[i], ref.data()[i], 1e-6);
}

TEST(Aspp, RateClamping) {
  EXPECT_EQ(effective_aspp_rates({1, 6, 12, 18}, 32, true, false), (std::vector<int>{1, 6, 12}));
  EXPECT_EQ(effective_aspp_rates({1, 6, 12, 18}, 256, true, false), (std::vector<int>{1, 6, 12, 18}));
  EXPECT_EQ(effective_aspp_rates({1, 6, 12, 18}, 8, true, false), (std::vector<int>{1}));
  EXPECT_EQ(effective_aspp_rates({6, 12}, 2, true, false), (std::vector<int>{6}));
  try {
    effective_aspp_rates({1, 6, 12, 18}, 32, false, false);
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("18"), std::string::npos);
  }
}

TEST(Attention, AllOnesMapPassesDecoderFeature) {
  Fixture f;
  auto att = AttentionBlock::create(f.b, 4, 6);
  fill(att.attention_conv.weight, 0);
  fill(att.attention_conv.bias, 1);
  Tensor e = random_tensor(Shape{2, 4, 8, 8}, 7), d = random_tensor(Shape{2, 6, 4, 4}, 8);
  EXPECT_TRUE(testutil::bitwise_equal(att.forward(e, d, Mode::kTrain), d));
}

TEST(Attention, RejectsWrongSpatialRatio) {
  Fixture f;
  auto att = AttentionBlock::create(f.b, 4, 6);
  EXPECT_THROW(att.forward(Tensor(Shape{1, 4, 6, 6}), Tensor(Shape{1, 6, 4, 4}), Mode::kTrain), ContractError);
}

TEST(Encoder, RejectsOddInput) {
  Fixture f;
  auto enc = EncoderBlock::create(f.b, 2, 4, 2);
  EXPECT_THROW(enc.forward(Tensor(Shape{1, 2, 7, 8}), Mode::kTrain), ContractError);
}

TEST(Blocks, DocumentedShapesAtFullWidth) {
  Fixture f;
  auto stem = StemBlock::create(f.b.scope("stem"), 3, 16, 8);
  EXPECT_EQ(stem.forward(Tensor(Shape{1, 3, 64, 64}), Mode::kInfer).shape(), (Shape{1, 16, 64, 64}));
  auto enc = EncoderBlock::create(f.b.scope("enc"), 16, 32, 8);
  EXPECT_EQ(enc.forward(Tensor(Shape{1, 16, 64, 64}), Mode::kInfer).shape(), (Shape{1, 32, 32, 32}));
  auto aspp = Aspp::create(f.b.scope("aspp"), 32, 64, {1, 6, 12, 18});
  EXPECT_EQ(aspp.forward(Tensor(Shape{1, 32, 40, 40}), Mode::kInfer).shape(), (Shape{1, 64, 40, 40}));
  auto dec = DecoderBlock::create(f.b.scope("dec"), 8, 16, 12);
  EXPECT_EQ(dec.forward(Tensor(Shape{1, 8, 16, 16}), Tensor(Shape{1, 16, 8, 8}), Mode::kInfer).shape(),
            (Shape{1, 12, 16, 16}));
  // Concatenated width entering the residual unit is skip + feature channels.
  EXPECT_EQ(dec.unit.conv1.weight.dim(1), 8u + 16u);
}

TEST(Blocks, ShapeContractsOverRandomSizes) {
  Rng rng(9);
  for (int trial = 0; trial < 8; ++trial) {
    const std::size_t s = std::size_t(8) << rng.below(4);  // 8..64
    ParameterStore store;
    Rng r(trial);
    LayerBuilder b(store, r);
    auto stem = StemBlock::create(b.scope("s"), 3, 4, 2);
    auto enc = EncoderBlock::create(b.scope("e"), 4, 8, 2);
    auto aspp = Aspp::create(b.scope("a"), 8, 8, effective_aspp_rates({1, 6, 12, 18}, s / 2, true, false));
    auto dec = DecoderBlock::create(b.scope("d"), 4, 8, 4);
    auto dc = DoubleConv::create(b.scope("c"), 3, 4);
    Tensor x = random_tensor(Shape{1, 3, s, s}, 50 + trial);
    Tensor h0 = stem.forward(x, Mode::kTrain);
    EXPECT_EQ(h0.shape(), (Shape{1, 4, s, s}));
    Tensor h1 = enc.forward(h0, Mode::kTrain);
    EXPECT_EQ(h1.shape(), (Shape{1, 8, s / 2, s / 2}));
    Tensor h2 = aspp.forward(h1, Mode::kTrain);
    EXPECT_EQ(h2.shape(), h1.shape());
    EXPECT_EQ(dec.forward(h0, h2, Mode::kTrain).shape(), (Shape{1, 4, s, s}));
    EXPECT_EQ(dc.forward(x, Mode::kTrain).shape(), (Shape{1, 4, s, s}));
    tape().clear();
  }
}

TEST(Blocks, ParameterCountsMatchClosedForms) {
  Fixture f;
  auto count = [&](auto make) {
    ParameterStore s;
    Rng r(1);
    make(LayerBuilder(s, r));
    return stored_scalars(s);
  };
  EXPECT_EQ(count([](const LayerBuilder& b) { SqueezeExcite::create(b, 16, 8); }), se_params(16, 8));
  EXPECT_EQ(count([](const LayerBuilder& b) { StemBlock::create(b, 3, 16, 8); }), stem_params(3, 16, 8));
  EXPECT_EQ(count([](const LayerBuilder& b) { EncoderBlock::create(b, 16, 32, 8); }), encoder_params(16, 32, 8));
  EXPECT_EQ(count([](const LayerBuilder& b) { Aspp::create(b, 128, 256, {1, 6, 12}); }), aspp_params(128, 256, 3));
  EXPECT_EQ(count([](const LayerBuilder& b) { AttentionBlock::create(b, 64, 256); }), attention_params(64, 256));
  EXPECT_EQ(count([](const LayerBuilder& b) { DecoderBlock::create(b, 64, 256, 128); }), decoder_params(64, 256, 128));
  EXPECT_EQ(count([](const LayerBuilder& b) { DoubleConv::create(b, 3, 16); }), double_conv_params(3, 16));
  // Hand-expanded values for two of them.
  EXPECT_EQ(se_params(16, 8), 16u * 2 + 2 + 2 * 16 + 16);
  EXPECT_EQ(stem_params(3, 16, 8), 3u * 16 * 9 + 32 + 16 * 16 * 9 + 16 + 3 * 16 + 32 + se_params(16, 8));
}

TEST(Blocks, NamesAreUniqueAndStable) {
  auto names = [] {
    ParameterStore s;
    Rng r(2);
    LayerBuilder b(s, r);
    DecoderBlock::create(b.scope("dec1"), 4, 8, 4);
    EncoderBlock::create(b.scope("enc1"), 4, 8, 2);
    std::vector<std::string> out;
    for (const auto& p : s.parameters()) out.push_back(p.name);
    return out;
  };
  const auto a = names(), b = names();
  EXPECT_EQ(a, b);
  EXPECT_EQ(std::set<std::string>(a.begin(), a.end()).size(), a.size());
  ParameterStore s;
  s.add_parameter("w", Tensor(Shape{1}));
  EXPECT_ANY_THROW(s.add_parameter("w", Tensor(Shape{1})));
}

TEST(Blocks, InferModeIsPure) {
  Fixture f;
  auto stem = StemBlock::create(f.b.scope("s"), 3, 4, 2);
  auto dec = DecoderBlock::create(f.b.scope("d"), 4, 4, 4);
  Tensor x = random_tensor(Shape{2, 3, 8, 8}, 11);
  Tensor a = stem.forward(x, Mode::kInfer), b = stem.forward(x, Mode::kInfer);
  EXPECT_TRUE(testutil::bitwise_equal(a, b));
  Tensor low = random_tensor(Shape{2, 4, 4, 4}, 12);
  EXPECT_TRUE(testutil::bitwise_equal(dec.forward(a, low, Mode::kInfer), dec.forward(a, low, Mode::kInfer)));
}
