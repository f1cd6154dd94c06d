#pragma once

// Block-matching optical flow, backward warping, and the warping error.
//
// Convention: flow(x) = displacement from frame a to frame b at pixel x of a,
// so b(x + flow(x)) ~ a(x) and warp(b, flow) reconstructs a.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include "fitdeblur/error.hpp"
#include "fitdeblur/image.hpp"
#include "fitdeblur/metrics.hpp"
#include "fitdeblur/tensor.hpp"

namespace fitdeblur {

struct FlowField {
  int height = 0;
  int width = 0;
  std::vector<float> data;  // H x W x 2, (dx, dy)

  FlowField() = default;
  FlowField(int h, int w, float dx = 0.0f, float dy = 0.0f) : height(h), width(w), data(static_cast<std::size_t>(h) * w * 2) {
    for (std::size_t i = 0; i < data.size(); i += 2) {
      data[i] = dx;
      data[i + 1] = dy;
    }
  }
  float& dx(int y, int x) { return data[(static_cast<std::size_t>(y) * width + x) * 2]; }
  float& dy(int y, int x) { return data[(static_cast<std::size_t>(y) * width + x) * 2 + 1]; }
  float dx(int y, int x) const { return data[(static_cast<std::size_t>(y) * width + x) * 2]; }
  float dy(int y, int x) const { return data[(static_cast<std::size_t>(y) * width + x) * 2 + 1]; }

  friend bool operator==(const FlowField&, const FlowField&) = default;
};

inline Tensor<float> flow_to_tensor(const FlowField& f) { return Tensor<float>({f.height, f.width, 2}, f.data); }

inline FlowField flow_from_tensor(const Tensor<float>& t) {
  require(t.shape.size() == 3 && t.shape[2] == 2, ErrorKind::corrupt_file, "flow tensor must be H x W x 2");
  FlowField f;
  f.height = t.shape[0];
  f.width = t.shape[1];
  f.data = t.data;
  for (float v : f.data) require(std::isfinite(v), ErrorKind::corrupt_file, "non-finite flow value");
  return f;
}

struct WarpResult {
  Image frame;
  Grid<unsigned char> valid;
};

// out(x) = frame(x + flow(x)), bilinear; samples leaving the frame are invalid
// and set to 0.
inline WarpResult warp(const Image& frame, const FlowField& flow) {
  require(frame.height == flow.height && frame.width == flow.width, ErrorKind::shape, "warp: flow does not match frame");
  WarpResult r{Image(frame.height, frame.width, frame.channels), Grid<unsigned char>(frame.height, frame.width, 0)};
  for (int y = 0; y < frame.height; ++y)
    for (int x = 0; x < frame.width; ++x) {
      const double sx = x + static_cast<double>(flow.dx(y, x));
      const double sy = y + static_cast<double>(flow.dy(y, x));
      if (!(sx >= 0.0 && sy >= 0.0 && sx <= frame.width - 1 && sy <= frame.height - 1)) continue;
      const int x0 = std::min(static_cast<int>(std::floor(sx)), frame.width - 1);
      const int y0 = std::min(static_cast<int>(std::floor(sy)), frame.height - 1);
      const double fx = sx - x0, fy = sy - y0;
      const int x1 = std::min(x0 + 1, frame.width - 1), y1 = std::min(y0 + 1, frame.height - 1);
      for (int c = 0; c < frame.channels; ++c) {
        double v = (1 - fy) * ((1 - fx) * frame.at(y0, x0, c) + (fx > 0 ? fx * frame.at(y0, x1, c) : 0.0));
        if (fy > 0) v += fy * ((1 - fx) * frame.at(y1, x0, c) + (fx > 0 ? fx * frame.at(y1, x1, c) : 0.0));
        r.frame.at(y, x, c) = static_cast<float>(v);
      }
      r.valid(y, x) = 1;
    }
  return r;
}

struct FlowConfig {
  int levels = 3;
  int block = 8;
  int radius = 4;
  friend bool operator==(const FlowConfig&, const FlowConfig&) = default;
};

namespace detail {

inline Grid<double> half(const Grid<double>& g) {
  Grid<double> out(std::max(1, g.rows / 2), std::max(1, g.cols / 2));
  for (int r = 0; r < out.rows; ++r)
    for (int c = 0; c < out.cols; ++c) {
      const int r0 = std::min(2 * r, g.rows - 1), r1 = std::min(2 * r + 1, g.rows - 1);
      const int c0 = std::min(2 * c, g.cols - 1), c1 = std::min(2 * c + 1, g.cols - 1);
      out(r, c) = 0.25 * (g(r0, c0) + g(r0, c1) + g(r1, c0) + g(r1, c1));
    }
  return out;
}

// Mean squared difference between a block of `a` and the same block of `b`
// displaced by (dy, dx); +inf when the displaced block leaves `b`.
inline double block_cost(const Grid<double>& a, const Grid<double>& b, int y0, int x0, int h, int w, int dy, int dx) {
  if (y0 + dy < 0 || x0 + dx < 0 || y0 + dy + h > b.rows || x0 + dx + w > b.cols)
    return std::numeric_limits<double>::infinity();
  double s = 0.0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double d = a(y0 + y, x0 + x) - b(y0 + y + dy, x0 + x + dx);
      s += d * d;
    }
  return s / (h * w);
}

// Vertex offset of the parabola through (-1, l), (0, m), (1, r).
inline double parabola(double l, double m, double r) {
  if (!std::isfinite(l) || !std::isfinite(r)) return 0.0;
  const double den = l - 2 * m + r;
  if (den <= 1e-18) return 0.0;
  return std::clamp(0.5 * (l - r) / den, -0.5, 0.5);
}

struct BlockFlow {
  int rows = 0, cols = 0, block = 8;
  std::vector<double> dx, dy;  // per block
  double sample_x(double y, double x) const { return sample(dx, y, x); }
  double sample_y(double y, double x) const { return sample(dy, y, x); }

  // Bilinear interpolation between block centers, clamped at the borders.
  double sample(const std::vector<double>& v, double y, double x) const {
    const double by = std::clamp((y + 0.5) / block - 0.5, 0.0, rows - 1.0);
    const double bx = std::clamp((x + 0.5) / block - 0.5, 0.0, cols - 1.0);
    const int r0 = static_cast<int>(std::floor(by)), c0 = static_cast<int>(std::floor(bx));
    const int r1 = std::min(r0 + 1, rows - 1), c1 = std::min(c0 + 1, cols - 1);
    const double fy = by - r0, fx = bx - c0;
    auto at = [&](int r, int c) { return v[static_cast<std::size_t>(r) * cols + c]; };
    return (1 - fy) * ((1 - fx) * at(r0, c0) + fx * at(r0, c1)) + fy * ((1 - fx) * at(r1, c0) + fx * at(r1, c1));
  }
};

// Component-wise 3x3 median over block vectors; removes isolated outliers
// before they seed the next level.
inline BlockFlow median3(const BlockFlow& f) {
  BlockFlow g = f;
  std::vector<double> xs, ys;
  for (int r = 0; r < f.rows; ++r)
    for (int c = 0; c < f.cols; ++c) {
      xs.clear();
      ys.clear();
      for (int i = std::max(0, r - 1); i <= std::min(f.rows - 1, r + 1); ++i)
        for (int j = std::max(0, c - 1); j <= std::min(f.cols - 1, c + 1); ++j) {
          xs.push_back(f.dx[static_cast<std::size_t>(i) * f.cols + j]);
          ys.push_back(f.dy[static_cast<std::size_t>(i) * f.cols + j]);
        }
      const auto mid = static_cast<std::ptrdiff_t>(xs.size() / 2);
      std::nth_element(xs.begin(), xs.begin() + mid, xs.end());
      std::nth_element(ys.begin(), ys.begin() + mid, ys.end());
      g.dx[static_cast<std::size_t>(r) * f.cols + c] = xs[static_cast<std::size_t>(mid)];
      g.dy[static_cast<std::size_t>(r) * f.cols + c] = ys[static_cast<std::size_t>(mid)];
    }
  return g;
}

inline BlockFlow match_level(const Grid<double>& a, const Grid<double>& b, const BlockFlow* coarse, const FlowConfig& cfg) {
  BlockFlow f;
  f.block = cfg.block;
  f.rows = std::max(1, (a.rows + cfg.block - 1) / cfg.block);
  f.cols = std::max(1, (a.cols + cfg.block - 1) / cfg.block);
  f.dx.assign(static_cast<std::size_t>(f.rows) * f.cols, 0.0);
  f.dy.assign(f.dx.size(), 0.0);
  for (int br = 0; br < f.rows; ++br)
    for (int bc = 0; bc < f.cols; ++bc) {
      const int y0 = std::min(br * cfg.block, std::max(0, a.rows - cfg.block));
      const int x0 = std::min(bc * cfg.block, std::max(0, a.cols - cfg.block));
      const int h = std::min(cfg.block, a.rows), w = std::min(cfg.block, a.cols);
      int gx = 0, gy = 0;
      if (coarse) {
        const double cy = (y0 + h / 2.0) / 2.0 - 0.5, cx = (x0 + w / 2.0) / 2.0 - 0.5;
        gx = static_cast<int>(std::lround(2.0 * coarse->sample_x(cy, cx)));
        gy = static_cast<int>(std::lround(2.0 * coarse->sample_y(cy, cx)));
      }
      double best = std::numeric_limits<double>::infinity();
      int bx = gx, by = gy;
      // Search around the coarse guess, then around zero so a wrong guess
      // from a flat or periodic coarse block can be overruled. Ties prefer
      // the smallest change from the guess.
      auto search = [&](int cy0, int cx0) {
        for (int dy = cy0 - cfg.radius; dy <= cy0 + cfg.radius; ++dy)
          for (int dx = cx0 - cfg.radius; dx <= cx0 + cfg.radius; ++dx) {
            const double cost = block_cost(a, b, y0, x0, h, w, dy, dx);
            const int dist = std::abs(dy - gy) + std::abs(dx - gx), best_dist = std::abs(by - gy) + std::abs(bx - gx);
            if (cost < best || (cost == best && dist < best_dist)) {
              best = cost;
              bx = dx;
              by = dy;
            }
          }
      };
      search(gy, gx);
      if (gx != 0 || gy != 0) search(0, 0);
      double sx = bx, sy = by;
      // an exact match needs no subpixel fit; the parabola would still lean
      // toward the cheaper neighbour
      if (std::isfinite(best) && best > 0.0) {
        sx += parabola(block_cost(a, b, y0, x0, h, w, by, bx - 1), best, block_cost(a, b, y0, x0, h, w, by, bx + 1));
        sy += parabola(block_cost(a, b, y0, x0, h, w, by - 1, bx), best, block_cost(a, b, y0, x0, h, w, by + 1, bx));
      }
      f.dx[static_cast<std::size_t>(br) * f.cols + bc] = sx;
      f.dy[static_cast<std::size_t>(br) * f.cols + bc] = sy;
    }
  return median3(f);
}

}  // namespace detail

// Coarse-to-fine block matching on luminance: a pyramid of `levels` 2x
// reductions, 8x8 blocks, +-4 px search around the upsampled coarse estimate,
// parabolic subpixel refinement, a 3x3 median per level, bilinear
// densification.
inline FlowField estimate_flow(const Image& a, const Image& b, const FlowConfig& cfg = {}) {
  check_same_shape(a, b, "estimate_flow");
  require(cfg.levels >= 1 && cfg.block >= 1 && cfg.radius >= 0, ErrorKind::parameter, "bad flow configuration");
  std::vector<Grid<double>> pa{to_luminance(a)}, pb{to_luminance(b)};
  for (int l = 1; l < cfg.levels; ++l) {
    pa.push_back(detail::half(pa.back()));
    pb.push_back(detail::half(pb.back()));
  }
  std::optional<detail::BlockFlow> coarse;
  for (int l = cfg.levels - 1; l >= 0; --l)
    coarse = detail::match_level(pa[l], pb[l], coarse ? &*coarse : nullptr, cfg);
  FlowField flow(a.height, a.width);
  for (int y = 0; y < a.height; ++y)
    for (int x = 0; x < a.width; ++x) {
      flow.dx(y, x) = static_cast<float>(coarse->sample_x(y, x));
      flow.dy(y, x) = static_cast<float>(coarse->sample_y(y, x));
    }
  return flow;
}

struct WarpErrorResult {
  double value = 0.0;              // mean over pairs with at least one valid pixel
  std::vector<double> per_pair;    // NaN where no pixel survived the mask
};

// E_warp: per consecutive pair, the masked mean squared difference between
// frame t and frame t+1 warped back with the forward flow. The mask keeps
// pixels whose sample stays inside the frame and, when backward flows are
// available, whose forward and backward flows agree within 1 px.
inline WarpErrorResult warping_error(const FrameSequence& video, const std::vector<FlowField>* forward = nullptr,
                                     const std::vector<FlowField>* backward = nullptr, double consistency_px = 1.0) {
  require(video.size() >= 2, ErrorKind::degenerate_input, "warping error needs at least two frames");
  const std::size_t pairs = video.size() - 1;
  if (forward) require(forward->size() == pairs, ErrorKind::shape, "need one forward flow per consecutive pair");
  if (backward) require(backward->size() == pairs, ErrorKind::shape, "need one backward flow per consecutive pair");
  const bool estimate = forward == nullptr;

  WarpErrorResult r;
  double sum = 0.0;
  int counted = 0;
  for (std::size_t t = 0; t < pairs; ++t) {
    const Image& a = video[t];
    const Image& b = video[t + 1];
    check_same_shape(a, b, "warping_error");
    const FlowField fwd = estimate ? estimate_flow(a, b) : (*forward)[t];
    std::optional<FlowField> bwd;
    if (backward)
      bwd = (*backward)[t];
    else if (estimate)
      bwd = estimate_flow(b, a);
    const WarpResult w = warp(b, fwd);
    double err = 0.0;
    std::size_t n = 0;
    for (int y = 0; y < a.height; ++y)
      for (int x = 0; x < a.width; ++x) {
        if (!w.valid(y, x)) continue;
        if (bwd) {
          const double tx = x + fwd.dx(y, x), ty = y + fwd.dy(y, x);
          const int ix = std::clamp(static_cast<int>(std::lround(tx)), 0, a.width - 1);
          const int iy = std::clamp(static_cast<int>(std::lround(ty)), 0, a.height - 1);
          const double ex = fwd.dx(y, x) + bwd->dx(iy, ix), ey = fwd.dy(y, x) + bwd->dy(iy, ix);
          if (ex * ex + ey * ey > consistency_px * consistency_px) continue;
        }
        for (int c = 0; c < a.channels; ++c) {
          const double d = static_cast<double>(a.at(y, x, c)) - w.frame.at(y, x, c);
          err += d * d;
        }
        n += static_cast<std::size_t>(a.channels);
      }
    if (n == 0) {
      r.per_pair.push_back(std::numeric_limits<double>::quiet_NaN());
      continue;
    }
    r.per_pair.push_back(err / static_cast<double>(n));
    sum += r.per_pair.back();
    ++counted;
  }
  r.value = counted > 0 ? sum / counted : 0.0;
  return r;
}

}  // namespace fitdeblur
