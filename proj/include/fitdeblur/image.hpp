#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "fitdeblur/error.hpp"

namespace fitdeblur {

// Interleaved H x W x C image, row-major, values nominally in [0, 1].
struct Image {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<float> data;

  Image() = default;
  Image(int h, int w, int c, float fill = 0.0f)
      : height(h), width(w), channels(c), data(static_cast<std::size_t>(h) * w * c, fill) {}

  std::size_t index(int y, int x, int c) const {
    return (static_cast<std::size_t>(y) * width + x) * channels + c;
  }
  float& at(int y, int x, int c) { return data[index(y, x, c)]; }
  float at(int y, int x, int c) const { return data[index(y, x, c)]; }

  bool empty() const { return data.empty(); }
  bool same_shape(const Image& other) const {
    return height == other.height && width == other.width && channels == other.channels;
  }

  friend bool operator==(const Image&, const Image&) = default;
};

using Frame = Image;
using FrameSequence = std::vector<Frame>;

// Single-channel row-major map.
template <class T>
struct Grid {
  int rows = 0;
  int cols = 0;
  std::vector<T> data;

  Grid() = default;
  Grid(int r, int c, T fill = T{}) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, fill) {}

  T& operator()(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
  const T& operator()(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }

  friend bool operator==(const Grid&, const Grid&) = default;
};

// Mirror index without repeating the edge sample (…2 1 | 0 1 2 … n-1 | n-2 …).
inline int reflect101(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

inline void check_frame(const Image& frame, const char* what) {
  require(frame.height >= 1 && frame.width >= 1 && frame.channels == 3, ErrorKind::shape,
          std::string(what) + ": expected a non-empty 3-channel frame");
}

inline Grid<double> to_luminance(const Image& frame) {
  check_frame(frame, "to_luminance");
  Grid<double> y(frame.height, frame.width);
  for (int r = 0; r < frame.height; ++r)
    for (int c = 0; c < frame.width; ++c)
      y(r, c) = 0.299 * frame.at(r, c, 0) + 0.587 * frame.at(r, c, 1) + 0.114 * frame.at(r, c, 2);
  return y;
}

inline Image crop(const Image& src, int y0, int x0, int h, int w) {
  require(y0 >= 0 && x0 >= 0 && y0 + h <= src.height && x0 + w <= src.width, ErrorKind::shape,
          "crop window outside the image");
  Image out(h, w, src.channels);
  for (int y = 0; y < h; ++y) {
    const float* row = &src.data[src.index(y0 + y, x0, 0)];
    std::copy(row, row + static_cast<std::size_t>(w) * src.channels, &out.data[out.index(y, 0, 0)]);
  }
  return out;
}

inline Image flip_horizontal(const Image& src) {
  Image out(src.height, src.width, src.channels);
  for (int y = 0; y < src.height; ++y)
    for (int x = 0; x < src.width; ++x)
      for (int c = 0; c < src.channels; ++c) out.at(y, x, c) = src.at(y, src.width - 1 - x, c);
  return out;
}

inline Image clamp01(Image img) {
  for (float& v : img.data) v = std::clamp(v, 0.0f, 1.0f);
  return img;
}

}  // namespace fitdeblur
