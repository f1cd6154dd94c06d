#pragma once

// Linear motion-blur kernels, the kernel bank, and blur synthesis in
// linearized intensity space.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "fitdeblur/error.hpp"
#include "fitdeblur/image.hpp"
#include "fitdeblur/random.hpp"

namespace fitdeblur {

enum class KernelFamily { symmetric_linear, asymmetric_linear, simulated };

inline const char* to_string(KernelFamily f) {
  switch (f) {
    case KernelFamily::symmetric_linear: return "symmetric";
    case KernelFamily::asymmetric_linear: return "asymmetric";
    case KernelFamily::simulated: return "simulated";
  }
  return "?";
}

inline KernelFamily parse_kernel_family(const std::string& s) {
  if (s == "symmetric") return KernelFamily::symmetric_linear;
  if (s == "asymmetric") return KernelFamily::asymmetric_linear;
  if (s == "simulated") return KernelFamily::simulated;
  fail(ErrorKind::config, "unknown kernel family '" + s + "'");
}

struct MotionVector {
  double length = 0.0;       // pixels
  double orientation = 0.0;  // degrees in [0, 180)
};

struct SubpixelPoint {
  double row = 0.0;
  double col = 0.0;
};

struct BlurKernel {
  int size = 1;
  std::vector<double> weights;  // size x size, row-major
  KernelFamily family = KernelFamily::symmetric_linear;
  std::optional<MotionVector> motion;

  double operator()(int r, int c) const { return weights[static_cast<std::size_t>(r) * size + c]; }
  int center() const { return (size - 1) / 2; }
};

inline constexpr std::array<int, 3> kBankSizes{21, 31, 41};

struct KernelBank {
  std::vector<BlurKernel> kernels;  // grouped by size, in kBankSizes order
  std::array<int, 3> counts{0, 0, 0};
  std::uint64_t seed = 0;
  KernelFamily family = KernelFamily::symmetric_linear;

  std::size_t size() const { return kernels.size(); }
  bool empty() const { return kernels.empty(); }
};

namespace detail {

// Unit direction for an orientation in degrees, exact on the axes.
// Rows grow downward, so positive orientations point up and to the right.
inline SubpixelPoint direction(double degrees) {
  double o = std::fmod(degrees, 360.0);
  if (o < 0) o += 360.0;
  if (o == 0.0) return {0.0, 1.0};
  if (o == 90.0) return {-1.0, 0.0};
  if (o == 180.0) return {0.0, -1.0};
  if (o == 270.0) return {1.0, 0.0};
  const double rad = o * std::numbers::pi / 180.0;
  return {-std::sin(rad), std::cos(rad)};
}

inline int sample_count(double length) { return length > 0.0 ? 64 * static_cast<int>(std::ceil(length)) : 1; }

inline bool inside_grid(double row, double col, int p) {
  return row >= -0.5 && row < p - 0.5 && col >= -0.5 && col < p - 0.5;
}

inline void normalize(std::vector<double>& w) {
  double sum = 0.0;
  for (double v : w) sum += v;
  for (double& v : w) v /= sum;
}

inline void check_size(int p) {
  require(p >= 1 && p % 2 == 1, ErrorKind::parameter, "kernel size must be odd and positive");
}

}  // namespace detail

// Dense samples along the segment; each one deposits its mass into the cell
// containing it, so a cell receives the covered fraction of the segment.
inline Grid<double> rasterize_segment(SubpixelPoint center, double length, double orientation, int p) {
  detail::check_size(p);
  require(length >= 0.0 && std::isfinite(length), ErrorKind::parameter, "segment length must be >= 0");
  const SubpixelPoint dir = detail::direction(orientation);
  const double half = 0.5 * length;
  for (double s : {-half, half}) {
    require(detail::inside_grid(center.row + s * dir.row, center.col + s * dir.col, p), ErrorKind::out_of_support,
            "segment leaves the " + std::to_string(p) + "x" + std::to_string(p) + " grid");
  }

  Grid<double> grid(p, p, 0.0);
  const int n = detail::sample_count(length);
  const double mid = 0.5 * (p - 1);
  auto cell = [](double v) { return static_cast<int>(std::floor(v + 0.5)); };

  if (center.row == mid && center.col == mid) {
    // Centered: deposit sample pairs at mirrored cells so the kernel equals its
    // 180-degree rotation bit-for-bit.
    for (int k = 0; k < n / 2; ++k) {
      const double t = ((k + 0.5) / n - 0.5) * length;
      const int r = cell(mid + t * dir.row);
      const int c = cell(mid + t * dir.col);
      grid(r, c) += 1.0;
      grid(p - 1 - r, p - 1 - c) += 1.0;
    }
    if (n % 2 == 1) grid(p / 2, p / 2) += 1.0;
  } else {
    for (int k = 0; k < n; ++k) {
      const double t = ((k + 0.5) / n - 0.5) * length;
      grid(cell(center.row + t * dir.row), cell(center.col + t * dir.col)) += 1.0;
    }
  }
  detail::normalize(grid.data);
  return grid;
}

inline BlurKernel symmetric_kernel(MotionVector m, int p) {
  detail::check_size(p);
  require(m.length > 0.0 && m.length < p, ErrorKind::parameter, "motion length must lie in (0, p)");
  m.orientation = std::fmod(m.orientation, 180.0);
  if (m.orientation < 0) m.orientation += 180.0;
  const double mid = 0.5 * (p - 1);
  BlurKernel k;
  k.size = p;
  k.weights = rasterize_segment({mid, mid}, m.length, m.orientation, p).data;
  k.family = KernelFamily::symmetric_linear;
  k.motion = m;
  return k;
}

// One-sided segment anchored at the kernel center; rng picks which way it extends.
inline BlurKernel asymmetric_kernel(MotionVector m, int p, Rng& rng) {
  detail::check_size(p);
  require(m.length > 0.0 && m.length < p, ErrorKind::parameter, "motion length must lie in (0, p)");
  const double sign = rng.uniform() < 0.5 ? 1.0 : -1.0;
  const SubpixelPoint dir = detail::direction(m.orientation);
  const double mid = 0.5 * (p - 1);
  const double h = 0.5 * m.length * sign;
  BlurKernel k;
  k.size = p;
  k.weights = rasterize_segment({mid + h * dir.row, mid + h * dir.col}, m.length, m.orientation, p).data;
  k.family = KernelFamily::asymmetric_linear;
  k.motion = m;
  return k;
}

// Random-walk camera trajectory: fixed 1 px steps, heading perturbed by
// Gaussian noise each step, recentered on its centroid and clipped to the grid.
inline BlurKernel simulated_kernel(int steps, int p, Rng& rng, double heading_noise_deg = 20.0) {
  detail::check_size(p);
  require(steps >= 1, ErrorKind::parameter, "simulated kernel needs at least one step");
  std::vector<SubpixelPoint> pts;
  pts.reserve(steps + 1);
  double heading = rng.uniform(0.0, 2.0 * std::numbers::pi);
  pts.push_back({0.0, 0.0});
  for (int s = 0; s < steps; ++s) {
    if (s > 0) heading += rng.normal(0.0, heading_noise_deg * std::numbers::pi / 180.0);
    const SubpixelPoint& last = pts.back();
    pts.push_back({last.row - std::sin(heading), last.col + std::cos(heading)});
  }
  SubpixelPoint centroid;
  for (const auto& q : pts) {
    centroid.row += q.row;
    centroid.col += q.col;
  }
  centroid.row /= static_cast<double>(pts.size());
  centroid.col /= static_cast<double>(pts.size());
  const double mid = 0.5 * (p - 1);
  for (auto& q : pts) {
    q.row = std::clamp(q.row - centroid.row, -mid, mid) + mid;
    q.col = std::clamp(q.col - centroid.col, -mid, mid) + mid;
  }

  std::vector<double> w(static_cast<std::size_t>(p) * p, 0.0);
  for (std::size_t s = 0; s + 1 < pts.size(); ++s) {
    const SubpixelPoint a = pts[s];
    const SubpixelPoint b = pts[s + 1];
    const double len = std::hypot(b.row - a.row, b.col - a.col);
    if (len == 0.0) continue;
    const int n = detail::sample_count(len);
    for (int k = 0; k < n; ++k) {
      const double t = (k + 0.5) / n;
      const int r = static_cast<int>(std::floor(a.row + t * (b.row - a.row) + 0.5));
      const int c = static_cast<int>(std::floor(a.col + t * (b.col - a.col) + 0.5));
      w[static_cast<std::size_t>(r) * p + c] += len / n;
    }
  }
  double total = 0.0;
  for (double v : w) total += v;
  if (total == 0.0) w[static_cast<std::size_t>(p / 2) * p + p / 2] = 1.0;  // fully clipped walk
  detail::normalize(w);

  BlurKernel k;
  k.size = p;
  k.weights = std::move(w);
  k.family = KernelFamily::simulated;
  return k;
}

inline BlurKernel flip_lr(const BlurKernel& k) {
  BlurKernel out = k;
  for (int r = 0; r < k.size; ++r)
    for (int c = 0; c < k.size; ++c)
      out.weights[static_cast<std::size_t>(r) * k.size + c] = k(r, k.size - 1 - c);
  if (k.motion) out.motion = MotionVector{k.motion->length, std::fmod(180.0 - k.motion->orientation, 180.0)};
  return out;
}

inline BlurKernel delta_kernel(int p) {
  detail::check_size(p);
  BlurKernel k;
  k.size = p;
  k.weights.assign(static_cast<std::size_t>(p) * p, 0.0);
  k.weights[static_cast<std::size_t>(p / 2) * p + p / 2] = 1.0;
  return k;
}

// All mass in one cell: convolving copies (or shifts) the image without blurring it.
inline bool is_delta(const BlurKernel& k) {
  return !k.weights.empty() && *std::max_element(k.weights.begin(), k.weights.end()) >= 1.0 - 1e-12;
}

inline MotionVector draw_motion(int p, Rng& rng) {
  const double l = rng.uniform_open(0.5, p - 1.0);
  const double o = rng.uniform(0.0, 180.0);
  return {l, o};
}

inline BlurKernel draw_kernel(KernelFamily family, int p, Rng& rng) {
  switch (family) {
    case KernelFamily::symmetric_linear: return symmetric_kernel(draw_motion(p, rng), p);
    case KernelFamily::asymmetric_linear: {
      // one-sided segments only have half the grid to extend into
      const double l = rng.uniform_open(0.5, 0.5 * (p - 1));
      const double o = rng.uniform(0.0, 180.0);
      return asymmetric_kernel({l, o}, p, rng);
    }
    case KernelFamily::simulated: {
      const int steps = rng.integer(5, p);
      return simulated_kernel(steps, p, rng);
    }
  }
  fail(ErrorKind::parameter, "unknown kernel family");
}

inline KernelBank build_bank(std::array<int, 3> counts, std::uint64_t seed,
                             KernelFamily family = KernelFamily::symmetric_linear) {
  int total = 0;
  for (int c : counts) {
    require(c >= 0, ErrorKind::parameter, "kernel counts must be >= 0");
    total += c;
  }
  require(total > 0, ErrorKind::empty_bank, "all kernel counts are zero");
  KernelBank bank;
  bank.counts = counts;
  bank.seed = seed;
  bank.family = family;
  bank.kernels.reserve(static_cast<std::size_t>(total));
  Rng rng(seed);
  for (std::size_t g = 0; g < kBankSizes.size(); ++g)
    for (int i = 0; i < counts[g]; ++i) bank.kernels.push_back(draw_kernel(family, kBankSizes[g], rng));
  return bank;
}

// Kernels for m = (l, o) and m' = (l, 180 - o); the second is the exact
// left-right mirror of the first.
inline std::pair<BlurKernel, BlurKernel> mirrored_pair(int p, Rng& rng) {
  BlurKernel first = symmetric_kernel(draw_motion(p, rng), p);
  BlurKernel second = flip_lr(first);
  return {std::move(first), std::move(second)};
}

inline Image degamma(const Image& img, double gamma) {
  require(gamma > 0.0, ErrorKind::parameter, "gamma must be > 0");
  Image out = img;
  for (float& v : out.data) v = static_cast<float>(std::pow(static_cast<double>(v), gamma));
  return out;
}

inline Image regamma(const Image& img, double gamma) {
  require(gamma > 0.0, ErrorKind::parameter, "gamma must be > 0");
  Image out = img;
  for (float& v : out.data) v = static_cast<float>(std::pow(static_cast<double>(v), 1.0 / gamma));
  return out;
}

// Per channel: (optionally) degamma, convolve with reflect-101 padding, regamma, clamp.
inline Image apply_blur(const Image& sharp, const BlurKernel& kernel, double gamma, bool linearize = true) {
  require(gamma > 0.0, ErrorKind::parameter, "gamma must be > 0");
  require(sharp.height >= kernel.size && sharp.width >= kernel.size, ErrorKind::degenerate_input,
          "frame is smaller than the blur kernel");
  const int p = kernel.size;
  const int pad = p / 2;
  const int ch = sharp.channels;
  const int ph = sharp.height + 2 * pad;
  const int pw = sharp.width + 2 * pad;

  std::vector<double> padded(static_cast<std::size_t>(ph) * pw * ch);
  for (int y = 0; y < ph; ++y) {
    const int sy = reflect101(y - pad, sharp.height);
    for (int x = 0; x < pw; ++x) {
      const int sx = reflect101(x - pad, sharp.width);
      for (int c = 0; c < ch; ++c) {
        const double v = sharp.at(sy, sx, c);
        padded[(static_cast<std::size_t>(y) * pw + x) * ch + c] = linearize ? std::pow(v, gamma) : v;
      }
    }
  }

  struct Tap {
    int dy, dx;
    double w;
  };
  std::vector<Tap> taps;
  for (int r = 0; r < p; ++r)
    for (int c = 0; c < p; ++c)
      if (kernel(r, c) != 0.0) taps.push_back({r - pad, c - pad, kernel(r, c)});

  std::vector<double> acc(static_cast<std::size_t>(sharp.height) * sharp.width * ch, 0.0);
  const std::size_t row_len = static_cast<std::size_t>(sharp.width) * ch;
  for (const Tap& t : taps) {
    for (int y = 0; y < sharp.height; ++y) {
      // out(y, x) += w * in(y - dy, x - dx): true convolution
      const double* src = &padded[(static_cast<std::size_t>(y - t.dy + pad) * pw + (pad - t.dx)) * ch];
      double* dst = &acc[static_cast<std::size_t>(y) * row_len];
      for (std::size_t i = 0; i < row_len; ++i) dst[i] += t.w * src[i];
    }
  }

  Image out(sharp.height, sharp.width, ch);
  for (std::size_t i = 0; i < acc.size(); ++i) {
    const double v = linearize ? std::pow(std::max(acc[i], 0.0), 1.0 / gamma) : acc[i];
    out.data[i] = static_cast<float>(std::clamp(v, 0.0, 1.0));
  }
  return out;
}

}  // namespace fitdeblur
