#include <gtest/gtest.h>

#include <memory>

#include "../oracles.hpp"
#include "fitdeblur/nn.hpp"
#include "fitdeblur/ops.hpp"

using namespace fitdeblur;
using V = ad::Var<double>;
using Vs = std::vector<V>;

namespace {

constexpr double kTol = 1e-3;

// Contract a tensor-valued op to a scalar with fixed random coefficients.
V contract(const V& y, std::uint64_t seed) {
  Rng rng(seed);
  return ad::sum_all(ad::mul(y, V(oracle::random_tensor(y.shape(), rng))));
}

Tensor<double> away_from_zero(Shape s, Rng& rng) {
  Tensor<double> t = oracle::random_tensor(std::move(s), rng);
  for (double& v : t.data) v = (v < 0 ? -1 : 1) * (0.1 + std::abs(v));
  return t;
}

}  // namespace

TEST(GradCheck, Elementwise) {
  Rng rng(1);
  const Shape s{2, 3, 4, 5};
  const auto a = away_from_zero(s, rng), b = away_from_zero(s, rng);
  EXPECT_LE(oracle::gradcheck([](const Vs& v) { return contract(ad::add(v[0], v[1]), 1); }, {a, b}), kTol);
  EXPECT_LE(oracle::gradcheck([](const Vs& v) { return contract(ad::sub(v[0], v[1]), 2); }, {a, b}), kTol);
  EXPECT_LE(oracle::gradcheck([](const Vs& v) { return contract(ad::mul(v[0], v[1]), 3); }, {a, b}), kTol);
  EXPECT_LE(oracle::gradcheck([](const Vs& v) { return contract(ad::scale(v[0], 1.7), 4); }, {a}), kTol);
  EXPECT_LE(oracle::gradcheck([](const Vs& v) { return contract(ad::neg(v[0]), 5); }, {a}), kTol);
  EXPECT_LE(oracle::gradcheck([](const Vs& v) { return contract(ad::add_scalar(v[0], 0.3), 6); }, {a}), kTol);
  EXPECT_LE(oracle::gradcheck([](const Vs& v) { return contract(ad::leaky_relu(v[0], 0.2), 7); }, {a}), kTol);
  EXPECT_LE(oracle::gradcheck([](const Vs& v) { return contract(ad::abs(v[0]), 8); }, {a}), kTol);
  EXPECT_LE(oracle::gradcheck([](const Vs& v) { return contract(ad::square(v[0]), 9); }, {a}), kTol);
  EXPECT_LE(oracle::gradcheck([](const Vs& v) { return contract(ad::reciprocal(v[0]), 10); }, {a}), kTol);
  EXPECT_LE(oracle::gradcheck([](const Vs& v) { return contract(ad::sqrt(ad::abs(v[0])), 11); }, {a}), kTol);
  auto mask = std::make_shared<const Tensor<double>>(oracle::random_tensor(s, rng, 0, 1));
  EXPECT_LE(oracle::gradcheck([&](const Vs& v) { return contract(ad::mask_mul(v[0], mask), 12); }, {a}), kTol);
}

TEST(GradCheck, Reductions) {
  Rng rng(2);
  const auto a = oracle::random_tensor({2, 3, 4, 4}, rng);
  EXPECT_LE(oracle::gradcheck([](const Vs& v) { return ad::sum_all(ad::square(v[0])); }, {a}), kTol);
  EXPECT_LE(oracle::gradcheck([](const Vs& v) { return ad::mean_all(ad::square(v[0])); }, {a}), kTol);
  EXPECT_LE(oracle::gradcheck([](const Vs& v) { return contract(ad::sum_per_sample(v[0]), 13); }, {a}), kTol);
  EXPECT_LE(oracle::gradcheck([](const Vs& v) { return contract(ad::reduce_channels(v[0]), 14); }, {a}), kTol);
  const auto b = oracle::random_tensor({3}, rng);
  EXPECT_LE(oracle::gradcheck([](const Vs& v) { return contract(ad::add_channel_bias(v[0], v[1]), 15); }, {a, b}), kTol);
}

TEST(GradCheck, Convolution) {
  Rng rng(3);
  const auto x = oracle::random_tensor({2, 3, 7, 6}, rng), w = oracle::random_tensor({4, 3, 3, 3}, rng);
  EXPECT_LE(oracle::gradcheck([](const Vs& v) { return contract(ad::conv2d(v[0], v[1], 1, 1), 16); }, {x, w}), kTol);
  EXPECT_LE(oracle::gradcheck([](const Vs& v) { return contract(ad::conv2d(v[0], v[1], 2, 1), 17); }, {x, w}), kTol);
  const auto w1 = oracle::random_tensor({2, 3, 1, 1}, rng);
  EXPECT_LE(oracle::gradcheck([](const Vs& v) { return contract(ad::conv2d(v[0], v[1], 1, 0), 18); }, {x, w1}), kTol);
}

TEST(GradCheck, ConvolutionSecondOrder) {
  // gradient of a function of the input gradient, as the penalty path uses
  Rng rng(4);
  const auto x = oracle::random_tensor({1, 2, 5, 5}, rng), w = oracle::random_tensor({3, 2, 3, 3}, rng);
  const Tensor<double> offset = oracle::random_tensor(x.shape, rng);
  auto f = [&](const Vs& v) {
    V xi(offset, true);
    V y = ad::conv2d(ad::add(xi, v[0]), v[1], 2, 1);
    V gx = ad::grad(contract(ad::square(y), 19), {xi}, true)[0];
    return ad::sum_all(ad::square(gx));
  };
  EXPECT_LE(oracle::gradcheck(f, {x, w}), kTol);
}

TEST(GradCheck, ResamplingAndChannels) {
  Rng rng(5);
  const auto a = oracle::random_tensor({2, 3, 4, 6}, rng), b = oracle::random_tensor({2, 2, 4, 6}, rng);
  EXPECT_LE(oracle::gradcheck([](const Vs& v) { return contract(ad::avg_pool2(v[0]), 20); }, {a}), kTol);
  EXPECT_LE(oracle::gradcheck([](const Vs& v) { return contract(ad::max_pool2(v[0]), 21); }, {a}), kTol);
  EXPECT_LE(oracle::gradcheck([](const Vs& v) { return contract(ad::upsample_nearest2(v[0]), 22); }, {a}), kTol);
  EXPECT_LE(oracle::gradcheck([](const Vs& v) { return contract(ad::concat_channels(v[0], v[1]), 23); }, {a, b}), kTol);
  EXPECT_LE(oracle::gradcheck([](const Vs& v) { return contract(ad::slice_channels(v[0], 1, 2), 24); }, {a}), kTol);
  EXPECT_LE(oracle::gradcheck([](const Vs& v) { return contract(ad::pad_channels(v[0], 1, 5), 25); }, {a}), kTol);
}

TEST(GradCheck, PerceptualDistance) {
  Rng rng(6);
  FeatureExtractorConfig cfg;
  const FeatureExtractor<double> fx(cfg);
  const auto a = oracle::random_tensor({1, 3, 32, 32}, rng, 0, 1), b = oracle::random_tensor({1, 3, 32, 32}, rng, 0, 1);
  EXPECT_LE(oracle::gradcheck([&](const Vs& v) { return perceptual_loss(fx, v[0], V(b)); }, {a}), kTol);
}

TEST(GradCheck, TinyGenerator) {
  GeneratorConfig g{2, 4, false};
  const ParameterSet p = init_generator(g, 7);
  ASSERT_LE(p.count(), 10000u);
  std::vector<std::string> names;
  std::vector<Tensor<double>> inputs;
  for (const auto& [name, t] : p.tensors) {
    names.push_back(name);
    inputs.push_back(t.cast<double>());
  }
  Rng rng(8);
  const Tensor<double> x = oracle::random_tensor({1, 3, 16, 16}, rng, 0, 1);
  auto f = [&](const Vs& v) {
    VarMap<double> m;
    for (std::size_t i = 0; i < v.size(); ++i) m.emplace(names[i], v[i]);
    return contract(generator_forward(g, m, V(x)), 26);
  };
  // steps much above 1e-6 cross leaky-ReLU and max-pool kinks somewhere in the net
  EXPECT_LE(oracle::gradcheck(f, inputs), kTol);
}

TEST(GradCheck, CriticPenaltyPath) {
  DiscriminatorConfig dc;
  dc.base_channels = 2;
  const ParameterSet p = init_discriminator(dc, 9);
  std::vector<std::string> names;
  std::vector<Tensor<double>> inputs;
  for (const auto& [name, t] : p.tensors) {
    names.push_back(name);
    inputs.push_back(t.cast<double>());
  }
  Rng data(10);
  const Tensor<double> real = oracle::random_tensor({1, 3, 64, 64}, data, 0, 1);
  const Tensor<double> fake = oracle::random_tensor({1, 3, 64, 64}, data, 0, 1);
  auto f = [&](const Vs& v) {
    VarMap<double> m;
    for (std::size_t i = 0; i < v.size(); ++i) m.emplace(names[i], v[i]);
    Rng eps(11);
    return wgan_gp_losses(m, V(real), V(fake), 10.0, eps).d_loss;
  };
  EXPECT_LE(oracle::gradcheck(f, inputs), kTol);
}

TEST(Autodiff, ForwardConvMatchesDirectLoop) {
  Rng rng(12);
  const auto x = oracle::random_tensor({2, 3, 9, 7}, rng), w = oracle::random_tensor({5, 3, 3, 3}, rng);
  const Tensor<double> y = ad::conv2d(V(x), V(w), 1, 1).value();
  const Tensor<double> ref = oracle::conv2d(x, w, 1);
  ASSERT_EQ(y.shape, ref.shape);
  for (std::size_t i = 0; i < y.size(); ++i) EXPECT_NEAR(y.data[i], ref.data[i], 1e-12);
}

TEST(Autodiff, UnreachableInputsGetZeros) {
  V a = V::parameter(Tensor<double>({2}, 1.0)), b = V::parameter(Tensor<double>({3}, 1.0));
  const auto g = ad::grad(ad::sum_all(ad::square(a)), {a, b});
  EXPECT_EQ(g[1].value().data, std::vector<double>(3, 0.0));
  EXPECT_EQ(g[0].value().data, std::vector<double>(2, 2.0));
}

TEST(Autodiff, NoGradModeRecordsNothing) {
  V a = V::parameter(Tensor<double>({2}, 1.0));
  ad::NoGradGuard ng;
  EXPECT_FALSE(ad::square(a).requires_grad());
}

TEST(Autodiff, ShapeErrors) {
  V a(Tensor<double>({2, 3})), b(Tensor<double>({3, 2}));
  EXPECT_THROW(ad::add(a, b), Error);
  EXPECT_THROW(ad::grad(ad::square(V::parameter(Tensor<double>({2}))), {a}), Error);
}
