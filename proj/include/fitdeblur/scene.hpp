#pragma once

// Procedural sharp content for demos and tests: a seeded "test card" of
// gradients, waves, shapes, stripes and checkers, and camera pans across it.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>

#include "fitdeblur/error.hpp"
#include "fitdeblur/image.hpp"
#include "fitdeblur/random.hpp"

namespace fitdeblur {

inline Image test_card(int height, int width, std::uint64_t seed) {
  require(height >= 1 && width >= 1, ErrorKind::parameter, "test card needs positive dimensions");
  Rng rng(seed);
  Image img(height, width, 3);
  double c0[3], c1[3];
  for (int c = 0; c < 3; ++c) {
    c0[c] = rng.uniform(0.2, 0.8);
    c1[c] = rng.uniform(0.2, 0.8);
  }
  const double angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double ca = std::cos(angle), sa = std::sin(angle);
  const double span = std::abs(ca) * width + std::abs(sa) * height;
  // low-contrast waves so flat regions still carry texture
  double wk[3][2], wphase[3];
  for (int i = 0; i < 3; ++i) {
    const double period = rng.uniform(8.0, 24.0), dir = rng.uniform(0.0, std::numbers::pi);
    wk[i][0] = 2.0 * std::numbers::pi * std::cos(dir) / period;
    wk[i][1] = 2.0 * std::numbers::pi * std::sin(dir) / period;
    wphase[i] = rng.uniform(0.0, 2.0 * std::numbers::pi);
  }
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      const double t = std::clamp(0.5 + (ca * (x - width / 2.0) + sa * (y - height / 2.0)) / span, 0.0, 1.0);
      double wave = 0.0;
      for (int i = 0; i < 3; ++i) wave += 0.04 * std::sin(wk[i][0] * x + wk[i][1] * y + wphase[i]);
      for (int c = 0; c < 3; ++c) img.at(y, x, c) = static_cast<float>(c0[c] + (c1[c] - c0[c]) * t + wave);
    }

  const int area = height * width;
  const int shapes = std::max(6, area / 900);
  for (int s = 0; s < shapes; ++s) {
    double col[3];
    for (double& c : col) c = rng.uniform();
    const int kind = static_cast<int>(rng.index(4));
    const double cy = rng.uniform(0.0, height), cx = rng.uniform(0.0, width);
    const double r = rng.uniform(3.0, std::max(4.0, std::min(height, width) / 6.0));
    const double period = rng.uniform(3.0, 9.0);
    const double theta = rng.uniform(0.0, std::numbers::pi);
    const int y0 = std::max(0, static_cast<int>(cy - r)), y1 = std::min(height - 1, static_cast<int>(cy + r));
    const int x0 = std::max(0, static_cast<int>(cx - r)), x1 = std::min(width - 1, static_cast<int>(cx + r));
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x) {
        const double dy = y - cy, dx = x - cx;
        bool on = false;
        switch (kind) {
          case 0: on = true; break;                                  // rectangle
          case 1: on = dx * dx + dy * dy <= r * r; break;            // disk
          case 2:                                                    // stripes in a disk
            on = dx * dx + dy * dy <= r * r &&
                 std::fmod(std::abs(dx * std::cos(theta) + dy * std::sin(theta)), period) < period / 2;
            break;
          default:                                                   // checker
            on = ((static_cast<int>(std::floor(dx / period * 2)) + static_cast<int>(std::floor(dy / period * 2))) & 1) == 0;
        }
        if (!on) continue;
        for (int c = 0; c < 3; ++c) img.at(y, x, c) = static_cast<float>(col[c]);
      }
  }
  return img;
}

// Frames cropped from a larger card while the camera moves by (dy, dx)
// pixels per frame; integer motion keeps frames exact shifted copies.
inline FrameSequence pan_sequence(int frames, int height, int width, int dy, int dx, std::uint64_t seed) {
  require(frames >= 0, ErrorKind::parameter, "frame count must be >= 0");
  const int total_y = std::abs(dy) * std::max(0, frames - 1);
  const int total_x = std::abs(dx) * std::max(0, frames - 1);
  const Image canvas = test_card(height + total_y, width + total_x, seed);
  FrameSequence video;
  for (int t = 0; t < frames; ++t) {
    const int oy = dy >= 0 ? dy * t : total_y + dy * t;
    const int ox = dx >= 0 ? dx * t : total_x + dx * t;
    video.push_back(crop(canvas, oy, ox, height, width));
  }
  return video;
}

}  // namespace fitdeblur
