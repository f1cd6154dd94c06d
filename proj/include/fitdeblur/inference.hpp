#pragma once

// Whole-frame (or tiled) application of a fitted generator.

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "fitdeblur/error.hpp"
#include "fitdeblur/image.hpp"
#include "fitdeblur/nn.hpp"
#include "fitdeblur/tensor.hpp"

namespace fitdeblur {

struct PaddingPlan {
  int height = 0;
  int width = 0;
  int padded_height = 0;
  int padded_width = 0;
  int top = 0;
  int bottom = 0;
  int left = 0;
  int right = 0;
};

inline PaddingPlan plan_padding(int height, int width, int divisor) {
  require(divisor >= 1, ErrorKind::parameter, "divisor must be >= 1");
  require(height >= divisor && width >= divisor, ErrorKind::degenerate_input,
          "frame " + std::to_string(height) + "x" + std::to_string(width) + " is smaller than " +
              std::to_string(divisor) + " px");
  PaddingPlan p;
  p.height = height;
  p.width = width;
  p.padded_height = (height + divisor - 1) / divisor * divisor;
  p.padded_width = (width + divisor - 1) / divisor * divisor;
  p.top = (p.padded_height - height) / 2;
  p.bottom = p.padded_height - height - p.top;
  p.left = (p.padded_width - width) / 2;
  p.right = p.padded_width - width - p.left;
  return p;
}

inline Image reflect_pad(const Image& src, const PaddingPlan& p) {
  Image out(p.padded_height, p.padded_width, src.channels);
  for (int y = 0; y < p.padded_height; ++y) {
    const int sy = reflect101(y - p.top, src.height);
    for (int x = 0; x < p.padded_width; ++x) {
      const int sx = reflect101(x - p.left, src.width);
      for (int c = 0; c < src.channels; ++c) out.at(y, x, c) = src.at(sy, sx, c);
    }
  }
  return out;
}

struct InferenceOptions {
  bool tiled = false;
  int tile = 512;
  int overlap = 32;

  void validate() const {
    require(tile >= 1 && overlap >= 0 && overlap < tile, ErrorKind::config, "tile must exceed overlap");
  }
  friend bool operator==(const InferenceOptions&, const InferenceOptions&) = default;
};

namespace detail {

inline Image run_generator(const GeneratorConfig& cfg, const ParameterSet& params, const Image& frame) {
  const PaddingPlan plan = plan_padding(frame.height, frame.width, cfg.divisor());
  const Image padded = plan.top + plan.bottom + plan.left + plan.right == 0 ? frame : reflect_pad(frame, plan);
  const Image out = tensor_to_image(generator_forward<float>(cfg, params, image_to_tensor<float>(padded)));
  return crop(out, plan.top, plan.left, frame.height, frame.width);
}

// Linear ramp over the overlap on interior tile edges, flat elsewhere.
inline double feather(int i, int n, int overlap, bool ramp_lo, bool ramp_hi) {
  double w = 1.0;
  if (overlap > 0) {
    if (ramp_lo && i < overlap) w = std::min(w, (i + 0.5) / overlap);
    if (ramp_hi && n - 1 - i < overlap) w = std::min(w, (n - 1 - i + 0.5) / overlap);
  }
  return w;
}

inline std::vector<int> tile_starts(int extent, int tile, int overlap) {
  if (extent <= tile) return {0};
  std::vector<int> starts;
  for (int s = 0;; s += tile - overlap) {
    if (s + tile >= extent) {
      starts.push_back(extent - tile);
      break;
    }
    starts.push_back(s);
  }
  return starts;
}

}  // namespace detail

// Reflect-pad to the divisibility boundary, run, crop, clamp to [0, 1].
inline Frame deblur_frame(const GeneratorConfig& cfg, const ParameterSet& params, const Frame& frame,
                          const InferenceOptions& opt = {}) {
  check_frame(frame, "deblur_frame");
  if (!opt.tiled || (frame.height <= opt.tile && frame.width <= opt.tile))
    return clamp01(detail::run_generator(cfg, params, frame));
  opt.validate();

  std::vector<double> acc(frame.data.size(), 0.0), wsum(static_cast<std::size_t>(frame.height) * frame.width, 0.0);
  const std::vector<int> ys = detail::tile_starts(frame.height, opt.tile, opt.overlap);
  const std::vector<int> xs = detail::tile_starts(frame.width, opt.tile, opt.overlap);
  for (std::size_t iy = 0; iy < ys.size(); ++iy)
    for (std::size_t ix = 0; ix < xs.size(); ++ix) {
      const int th = std::min(opt.tile, frame.height), tw = std::min(opt.tile, frame.width);
      const Image out = detail::run_generator(cfg, params, crop(frame, ys[iy], xs[ix], th, tw));
      for (int y = 0; y < th; ++y) {
        const double wy = detail::feather(y, th, opt.overlap, iy > 0, iy + 1 < ys.size());
        for (int x = 0; x < tw; ++x) {
          const double w = wy * detail::feather(x, tw, opt.overlap, ix > 0, ix + 1 < xs.size());
          const std::size_t pix = static_cast<std::size_t>(ys[iy] + y) * frame.width + xs[ix] + x;
          wsum[pix] += w;
          for (int c = 0; c < frame.channels; ++c) acc[pix * frame.channels + c] += w * out.at(y, x, c);
        }
      }
    }
  Image result(frame.height, frame.width, frame.channels);
  for (std::size_t i = 0; i < result.data.size(); ++i)
    result.data[i] = static_cast<float>(acc[i] / wsum[i / static_cast<std::size_t>(frame.channels)]);
  return clamp01(std::move(result));
}

inline FrameSequence deblur_video(const GeneratorConfig& cfg, const ParameterSet& params, const FrameSequence& video,
                                  const InferenceOptions& opt = {}) {
  FrameSequence out;
  out.reserve(video.size());
  for (std::size_t i = 0; i < video.size(); ++i) {
    try {
      out.push_back(deblur_frame(cfg, params, video[i], opt));
    } catch (const Error& e) {
      fail(e.kind(), "frame " + std::to_string(i) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace fitdeblur
