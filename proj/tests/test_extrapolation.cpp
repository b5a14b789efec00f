#include <cmath>

#include <gtest/gtest.h>

#include "ris/diffkit/adam.hpp"
#include "ris/extrapolation.hpp"

using namespace ris;
using namespace ris::extrapolation;
using diffkit::LayerKind;
using diffkit::Mat;

namespace {

Batch<double> random_batch(int count, diffkit::Shape s, Rng& rng) {
  Batch<double> b(count, s);
  for (Eigen::Index i = 0; i < b.data.size(); ++i) b.data.data()[i] = standard_normal(rng);
  return b;
}

ChannelTensor random_tensor(int n, int k, Rng& rng) {
  ChannelTensor t(n, k);
  for (Eigen::Index i = 0; i < t.values.size(); ++i) t.values.data()[i] = standard_normal(rng);
  return t;
}

}  // namespace

TEST(ExtrapNet, ConvLayerCount) {
  EXPECT_EQ((ExtrapNetSpec{5, 6, 64}.conv_layers()), 41);
  EXPECT_EQ(build_extrap_net({5, 6, 64}, 64, 64).count(LayerKind::conv2d), 41);
  EXPECT_EQ(build_extrap_net({1, 1, 8}, 8, 8).count(LayerKind::conv2d), 4);
  EXPECT_EQ(build_extrap_net({3, 2, 8}, 8, 8).count(LayerKind::relu), 6);
}

TEST(ExtrapNet, FullScaleSliceSizes) {
  const auto spec = build_extrap_net({5, 6, 64}, 64, 64);
  bool saw64 = false;
  for (const auto& s : spec.shapes()) {
    EXPECT_EQ(s.height, 64);
    EXPECT_EQ(s.width, 64);
    EXPECT_TRUE(s.channels == 4 || s.channels == 64);
    saw64 = saw64 || s.channels == 64;
  }
  EXPECT_TRUE(saw64);
  EXPECT_EQ(spec.output(), (diffkit::Shape{64, 64, 4}));
}

TEST(ExtrapNet, DimensionsPreservedForOddSizes) {
  for (auto [n, k] : {std::pair{3, 3}, std::pair{5, 7}, std::pair{16, 4}}) {
    for (const auto& s : build_extrap_net({2, 2, 6}, n, k).shapes()) {
      EXPECT_EQ(s.height, n);
      EXPECT_EQ(s.width, k);
    }
  }
}

TEST(ExtrapNet, InvalidSpecThrows) {
  EXPECT_THROW(build_extrap_net({0, 6, 64}, 8, 8), std::invalid_argument);
  EXPECT_THROW(build_extrap_net({1, 0, 64}, 8, 8), std::invalid_argument);
  EXPECT_THROW(build_extrap_net({1, 1, 0}, 8, 8), std::invalid_argument);
  EXPECT_THROW(build_extrap_net({1, 1, 8}, 2, 8), std::invalid_argument);
  EXPECT_THROW(build_extrap_net({1, 1, 8}, 8, 2), std::invalid_argument);
}

TEST(Extrapolate, ZeroNetIsIdentity) {
  diffkit::Network<double> net(build_extrap_net({2, 3, 8}, 6, 5), 1);
  net.set_all_parameters(0.0);
  Rng rng(2);
  const auto z = random_tensor(6, 5, rng);
  EXPECT_TRUE(extrapolate(net, z).values == z.values);
}

TEST(Extrapolate, Deterministic) {
  diffkit::Network<double> net(build_extrap_net({2, 2, 8}, 6, 6), 3);
  Rng rng(4);
  const auto z = random_tensor(6, 6, rng);
  EXPECT_TRUE(extrapolate(net, z).values == extrapolate(net, z).values);
  diffkit::Network<double> twin(build_extrap_net({2, 2, 8}, 6, 6), 3);
  EXPECT_TRUE(extrapolate(twin, z).values == extrapolate(net, z).values);
}

TEST(Extrapolate, ShapeMismatchThrows) {
  diffkit::Network<double> net(build_extrap_net({1, 1, 4}, 6, 6), 5);
  EXPECT_THROW(extrapolate(net, ChannelTensor(6, 7)), std::invalid_argument);
}

TEST(Extrapolate, MatchesHandChainedLayers) {
  diffkit::Network<double> net(build_extrap_net({1, 2, 5}, 7, 6), 6);
  Rng rng(7);
  for (auto& p : net.params())
    if (p.name.ends_with(".bias"))
      for (Eigen::Index i = 0; i < p.value.size(); ++i) p.value.data()[i] = 0.1 * standard_normal(rng);
  const auto x = random_batch(2, {7, 6, 4}, rng);
  const auto& p = net.params();
  ASSERT_EQ(p.size(), 10u);  // initial, gradient step, 2 proximal, output

  const auto conv = [&](const Batch<double>& in, std::size_t layer) {
    return diffkit::conv2d_forward(in, p[2 * layer].value, p[2 * layer + 1].value);
  };
  const auto relu = [](Batch<double> b) {
    b.data = b.data.unaryExpr([](double v) { return diffkit::leaky_relu(v, 0.0); });
    return b;
  };
  auto x0 = x;
  x0.data += conv(x, 0).data;
  auto t = relu(conv(relu(conv(conv(x0, 1), 2)), 3));
  auto want = x0;
  want.data += conv(t, 4).data;

  EXPECT_TRUE(net.forward(x, false).data == want.data);
}

TEST(MseLoss, ClosedForms) {
  Rng rng(8);
  const auto z = random_batch(3, {4, 5, 4}, rng);
  EXPECT_EQ(mse_loss(z, z).first, 0.0);
  auto shifted = z;
  shifted.data.array() += 1.0;
  EXPECT_DOUBLE_EQ(mse_loss(shifted, z).first, 1.0);
}

TEST(MseLoss, MatchesLoopOracle) {
  Rng rng(9);
  const auto a = random_batch(3, {4, 5, 4}, rng);
  const auto b = random_batch(3, {4, 5, 4}, rng);
  double sum = 0.0;
  for (int s = 0; s < 3; ++s)
    for (int i = 0; i < 4; ++i)
      for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 5; ++x) sum += std::pow(b.at(s, y, x, i) - a.at(s, y, x, i), 2);
  const double want = sum / (4.0 * 4 * 5 * 3);
  EXPECT_NEAR(mse_loss(a, b).first, want, 1e-12 * want);
}

TEST(MseLoss, GradientAndErrors) {
  Rng rng(10);
  const auto a = random_batch(2, {3, 3, 4}, rng);
  const auto b = random_batch(2, {3, 3, 4}, rng);
  const auto [loss, grad] = mse_loss(a, b);
  for (Eigen::Index i = 0; i < a.data.size(); ++i)
    EXPECT_NEAR(grad.data.data()[i], 2.0 * (a.data.data()[i] - b.data.data()[i]) / 72.0, 1e-15);
  EXPECT_THROW(mse_loss(Batch<double>(0, {3, 3, 4}), Batch<double>(0, {3, 3, 4})), std::invalid_argument);
  EXPECT_THROW(mse_loss(a, Batch<double>(2, {3, 4, 4})), std::invalid_argument);
}

TEST(Nmse, ClosedForms) {
  Rng rng(11);
  const auto t = random_tensor(5, 4, rng);
  const auto ch = split_tensor(t);
  EXPECT_EQ(nmse(ch.h, ch.g, ch.h, ch.g), 0.0);
  const CMatrix zero = CMatrix::Zero(5, 4);
  EXPECT_DOUBLE_EQ(nmse(zero, zero, ch.h, ch.g), 1.0);
  EXPECT_NEAR(nmse(2.0 * ch.h, 2.0 * ch.g, ch.h, ch.g), 1.0, 1e-15);
  EXPECT_THROW(nmse(zero, zero, zero, zero), std::invalid_argument);
  EXPECT_THROW(nmse(CMatrix::Zero(4, 4), zero, ch.h, ch.g), std::invalid_argument);
}

TEST(Nmse, BatchFormAgreesWithComplexForm) {
  Rng rng(12);
  const auto a = random_batch(3, {5, 4, 4}, rng);
  const auto b = random_batch(3, {5, 4, 4}, rng);
  double want = 0.0;
  for (int s = 0; s < 3; ++s) {
    const auto pa = split_tensor(from_batch(a, s));
    const auto pb = split_tensor(from_batch(b, s));
    want += nmse(pa.h, pa.g, pb.h, pb.g) / 3.0;
  }
  EXPECT_NEAR(batch_nmse(a, b), want, 1e-12);
}

// With zero weights the output is the input, so the initial loss is the
// energy of the rows the mask removed.
TEST(Training, InitialLossIsUnmeasuredEnergy) {
  diffkit::Network<double> net(build_extrap_net({1, 1, 4}, 6, 4), 13);
  net.set_all_parameters(0.0);
  Rng rng(14);
  const auto target = random_batch(2, {6, 4, 4}, rng);
  auto input = target;
  double removed = 0.0;
  for (int s = 0; s < 2; ++s)
    for (int y : {1, 2, 4})
      for (int x = 0; x < 4; ++x)
        for (int c = 0; c < 4; ++c) {
          removed += std::pow(target.at(s, y, x, c), 2);
          input.at(s, y, x, c) = 0.0;
        }
  EXPECT_NEAR(mse_loss(net.forward(input, false), target).first, removed / target.data.size(), 1e-14);
}

TEST(Training, LossDecreasesOverFiftyStepsForMostSeeds) {
  int decreased = 0;
  const int seeds = 20;
  for (int seed = 0; seed < seeds; ++seed) {
    diffkit::Network<double> net(build_extrap_net({1, 2, 8}, 6, 6), 100 + seed);
    Rng rng(200 + seed);
    const auto target = random_batch(8, {6, 6, 4}, rng);
    auto input = target;
    for (int s = 0; s < 8; ++s)
      for (int y = 1; y < 6; y += 2)
        for (int x = 0; x < 6; ++x)
          for (int c = 0; c < 4; ++c) input.at(s, y, x, c) = 0.0;
    const double initial = mse_loss(net.forward(input, true), target).first;
    for (int it = 0; it < 50; ++it) {
      net.zero_grad();
      net.backward(mse_loss(net.forward(input, true), target).second);
      diffkit::adam_step(net.params(), {1e-3});
    }
    const double last = mse_loss(net.forward(input, true), target).first;
    decreased += last < initial ? 1 : 0;
  }
  EXPECT_GE(decreased, 19);
}
