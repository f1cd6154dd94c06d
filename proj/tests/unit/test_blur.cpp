#include <gtest/gtest.h>

#include <cmath>

#include "../oracles.hpp"
#include "fitdeblur/blur.hpp"
#include "fitdeblur/frame_selection.hpp"
#include "fitdeblur/scene.hpp"

using namespace fitdeblur;

namespace {

double mass(const std::vector<double>& w) {
  double s = 0;
  for (double v : w) s += v;
  return s;
}

bool rot180_exact(const BlurKernel& k) {
  const int p = k.size;
  for (int r = 0; r < p; ++r)
    for (int c = 0; c < p; ++c)
      if (k(r, c) != k(p - 1 - r, p - 1 - c)) return false;
  return true;
}

}  // namespace

TEST(Rasterize, MinimalLengthIsDelta) {
  const Grid<double> g = rasterize_segment({10, 10}, 0.0, 0.0, 21);
  EXPECT_EQ(g(10, 10), 1.0);
  EXPECT_DOUBLE_EQ(mass(g.data), 1.0);
}

TEST(IsDelta, OnlySingleCellKernels) {
  EXPECT_TRUE(is_delta(delta_kernel(21)));
  EXPECT_TRUE(is_delta(symmetric_kernel({0.8, 30.0}, 41)));
  EXPECT_FALSE(is_delta(symmetric_kernel({1.5, 0.0}, 21)));
  EXPECT_FALSE(is_delta(symmetric_kernel({5.0, 45.0}, 21)));
}

TEST(Rasterize, HorizontalThreePixels) {
  const Grid<double> g = rasterize_segment({10, 10}, 3.0, 0.0, 21);
  for (int c = 9; c <= 11; ++c) EXPECT_NEAR(g(10, c), 1.0 / 3, 0.02);
  for (int r = 0; r < 21; ++r)
    if (r != 10) {
      for (int c = 0; c < 21; ++c) EXPECT_EQ(g(r, c), 0.0);
    }
}

TEST(Rasterize, VerticalIsTransposeOfHorizontal) {
  const Grid<double> h = rasterize_segment({10, 10}, 3.0, 0.0, 21);
  const Grid<double> v = rasterize_segment({10, 10}, 3.0, 90.0, 21);
  for (int r = 0; r < 21; ++r)
    for (int c = 0; c < 21; ++c) EXPECT_EQ(v(r, c), h(c, r));
}

TEST(Rasterize, OffGridIsRejected) {
  EXPECT_THROW(rasterize_segment({10, 10}, 25.0, 0.0, 21), Error);
  EXPECT_THROW(rasterize_segment({10, 10}, 3.0, 0.0, 20), Error);
}

TEST(SymmetricKernel, MatchesLineIntegral) {
  const BlurKernel k = symmetric_kernel({5.0, 45.0}, 21);
  const std::vector<double> ref = oracle::line_integral_kernel(5.0, 45.0, 21);
  for (int r = 0; r < 21; ++r)
    for (int c = 0; c < 21; ++c) {
      EXPECT_NEAR(k(r, c), ref[r * 21 + c], 0.02);
      if (k(r, c) > 0) {
        EXPECT_LE(std::abs((r - 10) + (c - 10)), 1);  // anti-diagonal band
      }
    }
}

TEST(SymmetricKernel, RotationAndPeriod) {
  Rng rng(8);
  for (int i = 0; i < 30; ++i) {
    const int p = kBankSizes[rng.index(3)];
    const MotionVector m = draw_motion(p, rng);
    const BlurKernel k = symmetric_kernel(m, p);
    EXPECT_TRUE(rot180_exact(k));
    EXPECT_NEAR(mass(k.weights), 1.0, 1e-9);
    EXPECT_EQ(symmetric_kernel({m.length, m.orientation + 180.0}, p).weights, k.weights);
  }
}

TEST(AsymmetricKernel, OneSidedHorizontal) {
  Rng rng(1);
  const BlurKernel k = asymmetric_kernel({3.0, 0.0}, 21, rng);
  EXPECT_NEAR(mass(k.weights), 1.0, 1e-12);
  bool left = false, right = false;
  for (int r = 0; r < 21; ++r)
    for (int c = 0; c < 21; ++c) {
      if (k(r, c) == 0) continue;
      EXPECT_EQ(r, 10);
      left |= c < 10;
      right |= c > 10;
    }
  EXPECT_NE(left, right);
  EXPECT_GT(k(10, 10), 0.0);
  EXPECT_FALSE(rot180_exact(k));
}

TEST(SimulatedKernel, DeterministicNormalizedAndShortWalk) {
  Rng a(5), b(5);
  const BlurKernel ka = simulated_kernel(12, 31, a), kb = simulated_kernel(12, 31, b);
  EXPECT_EQ(ka.weights, kb.weights);
  EXPECT_NEAR(mass(ka.weights), 1.0, 1e-9);
  for (double w : ka.weights) EXPECT_GE(w, 0.0);
  Rng c(6);
  const BlurKernel one = simulated_kernel(1, 21, c);
  int nonzero = 0;
  for (double w : one.weights) nonzero += w > 0;
  EXPECT_GE(nonzero, 1);
  EXPECT_LE(nonzero, 3);
}

TEST(Bank, CountsSeedsAndInvariants) {
  EXPECT_EQ(build_bank({1, 0, 0}, 3).kernels.at(0).size, 21);
  EXPECT_THROW(build_bank({0, 0, 0}, 3), Error);
  for (KernelFamily f : {KernelFamily::symmetric_linear, KernelFamily::asymmetric_linear, KernelFamily::simulated}) {
    const KernelBank a = build_bank({6, 3, 6}, 17, f), b = build_bank({6, 3, 6}, 17, f);
    ASSERT_EQ(a.size(), 15u);
    for (std::size_t i = 0; i < a.size(); ++i) {
      EXPECT_EQ(a.kernels[i].weights, b.kernels[i].weights);
      EXPECT_NEAR(mass(a.kernels[i].weights), 1.0, 1e-9);
      for (double w : a.kernels[i].weights) EXPECT_GE(w, 0.0);
      if (f == KernelFamily::symmetric_linear) {
        EXPECT_TRUE(rot180_exact(a.kernels[i]));
      }
    }
  }
}

TEST(MirroredPair, FlipAndVertical) {
  Rng rng(12);
  for (int i = 0; i < 10; ++i) {
    const auto [a, b] = mirrored_pair(21, rng);
    EXPECT_TRUE(rot180_exact(a));
    EXPECT_TRUE(rot180_exact(b));
    EXPECT_DOUBLE_EQ(a.motion->length, b.motion->length);
    for (int r = 0; r < 21; ++r)
      for (int c = 0; c < 21; ++c) EXPECT_EQ(b(r, c), a(r, 20 - c));
  }
  const BlurKernel v = symmetric_kernel({4.0, 90.0}, 21);
  EXPECT_EQ(flip_lr(v).weights, v.weights);
  const BlurKernel k30 = symmetric_kernel({6.0, 30.0}, 21), k150 = flip_lr(k30);
  const std::vector<double> ref150 = oracle::line_integral_kernel(6.0, 150.0, 21);
  for (int i = 0; i < 21 * 21; ++i) EXPECT_NEAR(k150.weights[i], ref150[i], 0.02);
}

TEST(Gamma, RoundTripAndValues) {
  Image grid(1, 10001, 1);
  for (int i = 0; i <= 10000; ++i) grid.data[i] = static_cast<float>(i / 10000.0);
  const Image back = regamma(degamma(grid, 2.2), 2.2);
  for (int i = 0; i <= 10000; ++i) EXPECT_NEAR(back.data[i], grid.data[i], 1e-6);
  Image probe(1, 3, 1);
  probe.data = {0.0f, 0.5f, 1.0f};
  const Image d = degamma(probe, 2.2);
  EXPECT_EQ(d.data[0], 0.0f);
  EXPECT_EQ(d.data[2], 1.0f);
  EXPECT_NEAR(d.data[1], 0.2176, 1e-4);
}

TEST(ApplyBlur, DeltaConstantAndMean) {
  Rng rng(21);
  const Image img = oracle::noise_image(48, 48, rng);
  const Image same = apply_blur(img, delta_kernel(21), 2.2);
  for (std::size_t i = 0; i < img.data.size(); ++i) EXPECT_NEAR(same.data[i], img.data[i], 1e-6);

  Image flat(30, 30, 3, 0.37f);
  for (float v : apply_blur(flat, symmetric_kernel({9.0, 20.0}, 21), 2.2).data) EXPECT_NEAR(v, 0.37f, 1e-6);

  // interior mean in linear space against a direct unpadded convolution
  const BlurKernel k = symmetric_kernel({7.0, 60.0}, 21);
  const Image lin = degamma(img, 2.2);
  const Image out = degamma(apply_blur(img, k, 2.2), 2.2);
  double a = 0, b = 0;
  int n = 0;
  for (int y = 10; y < 38; ++y)
    for (int x = 10; x < 38; ++x)
      for (int c = 0; c < 3; ++c) {
        double ref = 0;
        for (int u = 0; u < 21; ++u)
          for (int v = 0; v < 21; ++v) ref += k(u, v) * lin.at(y + 10 - u, x + 10 - v, c);
        a += ref;
        b += out.at(y, x, c);
        ++n;
      }
  EXPECT_NEAR(a / n, b / n, 1e-4);
}

TEST(ApplyBlur, CommutesWithFlip) {
  const Image img = test_card(64, 64, 4);
  const BlurKernel k = symmetric_kernel({8.0, 33.0}, 21);
  const Image lhs = flip_horizontal(apply_blur(img, k, 2.2));
  const Image rhs = apply_blur(flip_horizontal(img), flip_lr(k), 2.2);
  for (int y = 10; y < 54; ++y)
    for (int x = 10; x < 54; ++x)
      for (int c = 0; c < 3; ++c) EXPECT_NEAR(lhs.at(y, x, c), rhs.at(y, x, c), 1e-6);
}

TEST(ApplyBlur, NeverSharpensTheCard) {
  const Image card = test_card(96, 96, 7);
  const double sharp = sharpness_score(card).value;
  const KernelBank bank = build_bank({8, 4, 8}, 5);
  for (const BlurKernel& k : bank.kernels) EXPECT_LE(sharpness_score(apply_blur(card, k, 2.2)).value, sharp);
}

TEST(ApplyBlur, RejectsSmallFrames) {
  EXPECT_THROW(apply_blur(Image(10, 10, 3), delta_kernel(21), 2.2), Error);
}
