#pragma once

#include <cstddef>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "fitdeblur/error.hpp"
#include "fitdeblur/image.hpp"

namespace fitdeblur {

using Shape = std::vector<int>;

inline std::size_t numel(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1},
                         [](std::size_t a, int b) { return a * static_cast<std::size_t>(b); });
}

inline std::string shape_str(const Shape& s) {
  std::string out = "(";
  for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "," : "") + std::to_string(s[i]);
  return out + ")";
}

// Dense row-major tensor. Network activations use N x C x H x W.
template <class T>
struct Tensor {
  Shape shape;
  std::vector<T> data;

  Tensor() = default;
  explicit Tensor(Shape s, T fill = T(0)) : shape(std::move(s)), data(numel(shape), fill) {}
  Tensor(Shape s, std::vector<T> d) : shape(std::move(s)), data(std::move(d)) {
    require(data.size() == numel(shape), ErrorKind::shape, "tensor data does not match shape " + shape_str(shape));
  }

  std::size_t size() const { return data.size(); }
  int dim(std::size_t i) const { return shape[i]; }
  T& operator[](std::size_t i) { return data[i]; }
  const T& operator[](std::size_t i) const { return data[i]; }
  T* ptr() { return data.data(); }
  const T* ptr() const { return data.data(); }

  template <class U>
  Tensor<U> cast() const {
    Tensor<U> out;
    out.shape = shape;
    out.data.assign(data.begin(), data.end());
    return out;
  }

  friend bool operator==(const Tensor&, const Tensor&) = default;
};

// Images <-> 1 x 3 x H x W tensors.
template <class T>
Tensor<T> image_to_tensor(const Image& img) {
  Tensor<T> t({1, img.channels, img.height, img.width});
  const std::size_t plane = static_cast<std::size_t>(img.height) * img.width;
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < img.channels; ++c)
        t.data[c * plane + static_cast<std::size_t>(y) * img.width + x] = static_cast<T>(img.at(y, x, c));
  return t;
}

template <class T>
Tensor<T> images_to_tensor(const std::vector<Image>& imgs) {
  require(!imgs.empty(), ErrorKind::empty_input, "no images to batch");
  const Image& first = imgs.front();
  Tensor<T> t({static_cast<int>(imgs.size()), first.channels, first.height, first.width});
  const std::size_t per = numel({first.channels, first.height, first.width});
  for (std::size_t n = 0; n < imgs.size(); ++n) {
    require(imgs[n].same_shape(first), ErrorKind::shape, "batched images differ in shape");
    Tensor<T> one = image_to_tensor<T>(imgs[n]);
    std::copy(one.data.begin(), one.data.end(), t.data.begin() + static_cast<std::ptrdiff_t>(n * per));
  }
  return t;
}

template <class T>
Image tensor_to_image(const Tensor<T>& t, int sample = 0) {
  require(t.shape.size() == 4, ErrorKind::shape, "expected an N x C x H x W tensor");
  const int c = t.shape[1], h = t.shape[2], w = t.shape[3];
  Image img(h, w, c);
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  const std::size_t base = static_cast<std::size_t>(sample) * c * plane;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int k = 0; k < c; ++k)
        img.at(y, x, k) = static_cast<float>(t.data[base + k * plane + static_cast<std::size_t>(y) * w + x]);
  return img;
}

}  // namespace fitdeblur
