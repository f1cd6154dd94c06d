#pragma once

// Full-reference image metrics.

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "fitdeblur/error.hpp"
#include "fitdeblur/image.hpp"
#include "fitdeblur/inference.hpp"
#include "fitdeblur/nn.hpp"

namespace fitdeblur {

inline constexpr double kPsnrCap = 100.0;

inline void check_same_shape(const Image& a, const Image& b, const char* what) {
  require(a.same_shape(b), ErrorKind::shape,
          std::string(what) + ": " + std::to_string(a.height) + "x" + std::to_string(a.width) + "x" +
              std::to_string(a.channels) + " vs " + std::to_string(b.height) + "x" + std::to_string(b.width) + "x" +
              std::to_string(b.channels));
}

inline double mse(const Image& a, const Image& b) {
  check_same_shape(a, b, "mse");
  require(!a.empty(), ErrorKind::empty_input, "mse of empty images");
  double s = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const double d = static_cast<double>(a.data[i]) - b.data[i];
    s += d * d;
  }
  return s / static_cast<double>(a.data.size());
}

// Peak 1; +inf for identical images.
inline double psnr(const Image& a, const Image& b) {
  const double m = mse(a, b);
  return m == 0.0 ? std::numeric_limits<double>::infinity() : 10.0 * std::log10(1.0 / m);
}

inline double cap_psnr(double db) { return std::min(db, kPsnrCap); }

namespace detail {

inline std::vector<double> gaussian_window(int size, double sigma) {
  std::vector<double> w(static_cast<std::size_t>(size));
  const int r = size / 2;
  double sum = 0.0;
  for (int i = 0; i < size; ++i) sum += w[i] = std::exp(-(i - r) * (i - r) / (2.0 * sigma * sigma));
  for (double& v : w) v /= sum;
  return w;
}

// Separable valid-region filter.
inline Grid<double> filter_valid(const Grid<double>& g, const std::vector<double>& w) {
  const int k = static_cast<int>(w.size());
  Grid<double> tmp(g.rows, g.cols - k + 1);
  for (int r = 0; r < g.rows; ++r)
    for (int c = 0; c < tmp.cols; ++c) {
      double s = 0.0;
      for (int i = 0; i < k; ++i) s += w[i] * g(r, c + i);
      tmp(r, c) = s;
    }
  Grid<double> out(g.rows - k + 1, tmp.cols);
  for (int r = 0; r < out.rows; ++r)
    for (int c = 0; c < out.cols; ++c) {
      double s = 0.0;
      for (int i = 0; i < k; ++i) s += w[i] * tmp(r + i, c);
      out(r, c) = s;
    }
  return out;
}

}  // namespace detail

// Mean structural similarity on luminance: 11x11 Gaussian window (sigma 1.5),
// K1 = 0.01, K2 = 0.03, dynamic range 1, windows fully inside the image.
inline double ssim(const Image& a, const Image& b) {
  check_same_shape(a, b, "ssim");
  require(a.height >= 11 && a.width >= 11, ErrorKind::degenerate_input, "ssim needs images of at least 11x11");
  const Grid<double> x = to_luminance(a), y = to_luminance(b);
  Grid<double> xx(x.rows, x.cols), yy(x.rows, x.cols), xy(x.rows, x.cols);
  for (std::size_t i = 0; i < x.data.size(); ++i) {
    xx.data[i] = x.data[i] * x.data[i];
    yy.data[i] = y.data[i] * y.data[i];
    xy.data[i] = x.data[i] * y.data[i];
  }
  const std::vector<double> w = detail::gaussian_window(11, 1.5);
  const Grid<double> mx = detail::filter_valid(x, w), my = detail::filter_valid(y, w);
  const Grid<double> sxx = detail::filter_valid(xx, w), syy = detail::filter_valid(yy, w), sxy = detail::filter_valid(xy, w);
  const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  double total = 0.0;
  for (std::size_t i = 0; i < mx.data.size(); ++i) {
    const double ux = mx.data[i], uy = my.data[i];
    const double vx = sxx.data[i] - ux * ux, vy = syy.data[i] - uy * uy, cxy = sxy.data[i] - ux * uy;
    total += ((2 * ux * uy + c1) * (2 * cxy + c2)) / ((ux * ux + uy * uy + c1) * (vx + vy + c2));
  }
  return total / static_cast<double>(mx.data.size());
}

// Unit-weight feature distance with the training extractor's taps. Frames
// whose sides are not multiples of 16 are reflect-padded first.
inline double perceptual_distance(const FeatureExtractor<float>& fx, const Image& a, const Image& b) {
  check_same_shape(a, b, "perceptual_distance");
  ad::NoGradGuard no_grad;
  const PaddingPlan plan = plan_padding(a.height, a.width, 16);
  auto prep = [&](const Image& img) {
    return ad::Var<float>(image_to_tensor<float>(plan.padded_height == img.height && plan.padded_width == img.width
                                                     ? img
                                                     : reflect_pad(img, plan)));
  };
  const std::array<double, 5> ones{1, 1, 1, 1, 1};
  return perceptual_loss_from_features(ones, fx.features(prep(a)), fx.features(prep(b))).item();
}

inline double perceptual_distance(const FeatureExtractorConfig& cfg, const Image& a, const Image& b) {
  return perceptual_distance(FeatureExtractor<float>(cfg), a, b);
}

}  // namespace fitdeblur
