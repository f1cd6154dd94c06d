#pragma once

// Differentiable tensor ops. Linear ops come in adjoint pairs so that each
// backward rule is again a differentiable op.

#include <Eigen/Core>
#include <cmath>
#include <memory>
#include <vector>

#include "fitdeblur/autodiff.hpp"
#include "fitdeblur/error.hpp"
#include "fitdeblur/tensor.hpp"

namespace fitdeblur::ad {

namespace detail {

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline void same_shape(const Shape& a, const Shape& b, const char* op) {
  require(a == b, ErrorKind::shape, std::string(op) + ": " + shape_str(a) + " vs " + shape_str(b));
}

inline void check_nchw(const Shape& s, const char* op) {
  require(s.size() == 4, ErrorKind::shape, std::string(op) + ": expected N x C x H x W, got " + shape_str(s));
}

struct ConvGeom {
  int n, ci, h, w;  // input
  int co, k, stride, pad;
  int ho, wo;  // output

  static ConvGeom make(const Shape& x, const Shape& wt, int stride, int pad) {
    check_nchw(x, "conv2d");
    require(wt.size() == 4 && wt[2] == wt[3], ErrorKind::shape, "conv2d: weights must be Co x Ci x k x k");
    require(x[1] == wt[1], ErrorKind::shape, "conv2d: channel mismatch " + shape_str(x) + " * " + shape_str(wt));
    ConvGeom g{x[0], x[1], x[2], x[3], wt[0], wt[2], stride, pad, 0, 0};
    g.ho = (g.h + 2 * pad - g.k) / stride + 1;
    g.wo = (g.w + 2 * pad - g.k) / stride + 1;
    require(g.ho >= 1 && g.wo >= 1, ErrorKind::shape, "conv2d: input too small for kernel");
    return g;
  }
  bool pointwise() const { return k == 1 && stride == 1 && pad == 0; }
  std::size_t rows() const { return static_cast<std::size_t>(ci) * k * k; }
  std::size_t cols() const { return static_cast<std::size_t>(ho) * wo; }
  std::size_t in_plane() const { return static_cast<std::size_t>(ci) * h * w; }
  std::size_t out_plane() const { return static_cast<std::size_t>(co) * ho * wo; }
};

template <class T>
void im2col(const T* x, const ConvGeom& g, T* col) {
  for (int c = 0; c < g.ci; ++c)
    for (int ki = 0; ki < g.k; ++ki)
      for (int kj = 0; kj < g.k; ++kj) {
        T* dst = col + (((static_cast<std::size_t>(c) * g.k + ki) * g.k + kj) * g.cols());
        for (int oy = 0; oy < g.ho; ++oy) {
          const int iy = oy * g.stride - g.pad + ki;
          T* drow = dst + static_cast<std::size_t>(oy) * g.wo;
          if (iy < 0 || iy >= g.h) {
            std::fill(drow, drow + g.wo, T(0));
            continue;
          }
          const T* srow = x + (static_cast<std::size_t>(c) * g.h + iy) * g.w;
          for (int ox = 0; ox < g.wo; ++ox) {
            const int ix = ox * g.stride - g.pad + kj;
            drow[ox] = (ix >= 0 && ix < g.w) ? srow[ix] : T(0);
          }
        }
      }
}

template <class T>
void col2im(const T* col, const ConvGeom& g, T* x) {
  for (int c = 0; c < g.ci; ++c)
    for (int ki = 0; ki < g.k; ++ki)
      for (int kj = 0; kj < g.k; ++kj) {
        const T* src = col + (((static_cast<std::size_t>(c) * g.k + ki) * g.k + kj) * g.cols());
        for (int oy = 0; oy < g.ho; ++oy) {
          const int iy = oy * g.stride - g.pad + ki;
          if (iy < 0 || iy >= g.h) continue;
          const T* srow = src + static_cast<std::size_t>(oy) * g.wo;
          T* xrow = x + (static_cast<std::size_t>(c) * g.h + iy) * g.w;
          for (int ox = 0; ox < g.wo; ++ox) {
            const int ix = ox * g.stride - g.pad + kj;
            if (ix >= 0 && ix < g.w) xrow[ix] += srow[ox];
          }
        }
      }
}

template <class T>
Tensor<T> conv_forward(const Tensor<T>& x, const Tensor<T>& w, int stride, int pad) {
  const ConvGeom g = ConvGeom::make(x.shape, w.shape, stride, pad);
  Tensor<T> y({g.n, g.co, g.ho, g.wo});
  Eigen::Map<const RowMat<T>> wm(w.ptr(), g.co, static_cast<Eigen::Index>(g.rows()));
  std::vector<T> col(g.pointwise() ? 0 : g.rows() * g.cols());
  for (int n = 0; n < g.n; ++n) {
    const T* xn = x.ptr() + n * g.in_plane();
    const T* colp = xn;
    if (!g.pointwise()) {
      im2col(xn, g, col.data());
      colp = col.data();
    }
    Eigen::Map<const RowMat<T>> cm(colp, static_cast<Eigen::Index>(g.rows()), static_cast<Eigen::Index>(g.cols()));
    Eigen::Map<RowMat<T>> ym(y.ptr() + n * g.out_plane(), g.co, static_cast<Eigen::Index>(g.cols()));
    ym.noalias() = wm * cm;
  }
  return y;
}

template <class T>
Tensor<T> conv_input_grad(const Tensor<T>& gy, const Tensor<T>& w, int stride, int pad, const Shape& in_shape) {
  const ConvGeom g = ConvGeom::make(in_shape, w.shape, stride, pad);
  same_shape(gy.shape, Shape{g.n, g.co, g.ho, g.wo}, "conv2d_input_grad");
  Tensor<T> dx(in_shape);
  Eigen::Map<const RowMat<T>> wm(w.ptr(), g.co, static_cast<Eigen::Index>(g.rows()));
  std::vector<T> col(g.rows() * g.cols());
  for (int n = 0; n < g.n; ++n) {
    Eigen::Map<const RowMat<T>> gm(gy.ptr() + n * g.out_plane(), g.co, static_cast<Eigen::Index>(g.cols()));
    T* dxn = dx.ptr() + n * g.in_plane();
    if (g.pointwise()) {
      Eigen::Map<RowMat<T>> dm(dxn, static_cast<Eigen::Index>(g.rows()), static_cast<Eigen::Index>(g.cols()));
      dm.noalias() = wm.transpose() * gm;
      continue;
    }
    Eigen::Map<RowMat<T>> cm(col.data(), static_cast<Eigen::Index>(g.rows()), static_cast<Eigen::Index>(g.cols()));
    cm.noalias() = wm.transpose() * gm;
    col2im(col.data(), g, dxn);
  }
  return dx;
}

template <class T>
Tensor<T> conv_weight_grad(const Tensor<T>& x, const Tensor<T>& gy, int stride, int pad, const Shape& w_shape) {
  const ConvGeom g = ConvGeom::make(x.shape, w_shape, stride, pad);
  same_shape(gy.shape, Shape{g.n, g.co, g.ho, g.wo}, "conv2d_weight_grad");
  Tensor<T> dw(w_shape);
  Eigen::Map<RowMat<T>> dm(dw.ptr(), g.co, static_cast<Eigen::Index>(g.rows()));
  std::vector<T> col(g.pointwise() ? 0 : g.rows() * g.cols());
  for (int n = 0; n < g.n; ++n) {
    const T* xn = x.ptr() + n * g.in_plane();
    const T* colp = xn;
    if (!g.pointwise()) {
      im2col(xn, g, col.data());
      colp = col.data();
    }
    Eigen::Map<const RowMat<T>> cm(colp, static_cast<Eigen::Index>(g.rows()), static_cast<Eigen::Index>(g.cols()));
    Eigen::Map<const RowMat<T>> gm(gy.ptr() + n * g.out_plane(), g.co, static_cast<Eigen::Index>(g.cols()));
    dm.noalias() += gm * cm.transpose();
  }
  return dw;
}

template <class T, class F>
Tensor<T> map_values(const Tensor<T>& a, F f) {
  Tensor<T> out(a.shape);
  for (std::size_t i = 0; i < a.size(); ++i) out.data[i] = f(a.data[i]);
  return out;
}

}  // namespace detail

// ---- elementwise -----------------------------------------------------------

template <class T>
Var<T> sub(const Var<T>& a, const Var<T>& b);
template <class T>
Var<T> scale(const Var<T>& a, T c);

template <class T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  detail::same_shape(a.shape(), b.shape(), "mul");
  Tensor<T> out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] *= b.value().data[i];
  return record<T>(std::move(out), {a, b}, [a, b](const Var<T>& g) {
    return std::vector<Var<T>>{a.requires_grad() ? mul(g, b) : Var<T>(), b.requires_grad() ? mul(g, a) : Var<T>()};
  });
}

template <class T>
Var<T> scale(const Var<T>& a, T c) {
  Tensor<T> out = detail::map_values(a.value(), [c](T v) { return v * c; });
  return record<T>(std::move(out), {a}, [c](const Var<T>& g) { return std::vector<Var<T>>{scale(g, c)}; });
}

template <class T>
Var<T> neg(const Var<T>& a) {
  return scale(a, T(-1));
}

template <class T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  detail::same_shape(a.shape(), b.shape(), "sub");
  Tensor<T> out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] -= b.value().data[i];
  return record<T>(std::move(out), {a, b}, [](const Var<T>& g) { return std::vector<Var<T>>{g, neg(g)}; });
}

template <class T>
Var<T> add_scalar(const Var<T>& a, T c) {
  Tensor<T> out = detail::map_values(a.value(), [c](T v) { return v + c; });
  return record<T>(std::move(out), {a}, [](const Var<T>& g) { return std::vector<Var<T>>{g}; });
}

// Multiplies by a constant tensor (masks, signs); linear in the input.
template <class T>
Var<T> mask_mul(const Var<T>& a, std::shared_ptr<const Tensor<T>> mask) {
  detail::same_shape(a.shape(), mask->shape, "mask_mul");
  Tensor<T> out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] *= mask->data[i];
  return record<T>(std::move(out), {a}, [mask](const Var<T>& g) { return std::vector<Var<T>>{mask_mul(g, mask)}; });
}

template <class T>
Var<T> leaky_relu(const Var<T>& a, T slope) {
  auto mask = std::make_shared<Tensor<T>>(
      detail::map_values(a.value(), [slope](T v) { return v > T(0) ? T(1) : slope; }));
  return mask_mul(a, std::shared_ptr<const Tensor<T>>(std::move(mask)));
}

template <class T>
Var<T> abs(const Var<T>& a) {
  auto sign = std::make_shared<Tensor<T>>(
      detail::map_values(a.value(), [](T v) { return v > T(0) ? T(1) : (v < T(0) ? T(-1) : T(0)); }));
  return mask_mul(a, std::shared_ptr<const Tensor<T>>(std::move(sign)));
}

template <class T>
Var<T> square(const Var<T>& a) {
  Tensor<T> out = detail::map_values(a.value(), [](T v) { return v * v; });
  return record<T>(std::move(out), {a}, [a](const Var<T>& g) { return std::vector<Var<T>>{mul(g, scale(a, T(2)))}; });
}

template <class T>
Var<T> reciprocal(const Var<T>& a) {
  Tensor<T> out = detail::map_values(a.value(), [](T v) { return T(1) / v; });
  return record<T>(std::move(out), {a}, [a](const Var<T>& g) {
    return std::vector<Var<T>>{neg(mul(g, square(reciprocal(a))))};
  });
}

template <class T>
Var<T> sqrt(const Var<T>& a) {
  Tensor<T> out = detail::map_values(a.value(), [](T v) { return std::sqrt(v); });
  return record<T>(std::move(out), {a}, [a](const Var<T>& g) {
    return std::vector<Var<T>>{mul(g, scale(reciprocal(sqrt(a)), T(0.5)))};
  });
}

// ---- reductions ------------------------------------------------------------

template <class T>
Var<T> expand_scalar(const Var<T>& s, const Shape& shape);

template <class T>
Var<T> sum_all(const Var<T>& a) {
  T acc = T(0);
  for (T v : a.value().data) acc += v;
  Shape shape = a.shape();
  return record<T>(Tensor<T>({1}, acc), {a}, [shape](const Var<T>& g) {
    return std::vector<Var<T>>{expand_scalar(g, shape)};
  });
}

template <class T>
Var<T> expand_scalar(const Var<T>& s, const Shape& shape) {
  require(s.size() == 1, ErrorKind::shape, "expand_scalar: expected a scalar");
  return record<T>(Tensor<T>(shape, s.item()), {s}, [](const Var<T>& g) { return std::vector<Var<T>>{sum_all(g)}; });
}

template <class T>
Var<T> mean_all(const Var<T>& a) {
  return scale(sum_all(a), T(1) / static_cast<T>(a.size()));
}

template <class T>
Var<T> broadcast_per_sample(const Var<T>& s, const Shape& shape);

// N x ... -> N
template <class T>
Var<T> sum_per_sample(const Var<T>& a) {
  const int n = a.shape().at(0);
  const std::size_t per = a.size() / static_cast<std::size_t>(n);
  Tensor<T> out({n});
  for (int i = 0; i < n; ++i) {
    T acc = T(0);
    for (std::size_t j = 0; j < per; ++j) acc += a.value().data[i * per + j];
    out.data[i] = acc;
  }
  Shape shape = a.shape();
  return record<T>(std::move(out), {a}, [shape](const Var<T>& g) {
    return std::vector<Var<T>>{broadcast_per_sample(g, shape)};
  });
}

template <class T>
Var<T> broadcast_per_sample(const Var<T>& s, const Shape& shape) {
  require(s.shape().size() == 1 && s.shape()[0] == shape.at(0), ErrorKind::shape, "broadcast_per_sample: bad shape");
  Tensor<T> out(shape);
  const std::size_t per = out.size() / static_cast<std::size_t>(shape[0]);
  for (int i = 0; i < shape[0]; ++i)
    std::fill(out.data.begin() + static_cast<std::ptrdiff_t>(i * per),
              out.data.begin() + static_cast<std::ptrdiff_t>((i + 1) * per), s.value().data[i]);
  return record<T>(std::move(out), {s}, [](const Var<T>& g) { return std::vector<Var<T>>{sum_per_sample(g)}; });
}

// ---- per-channel bias ------------------------------------------------------

template <class T>
Var<T> broadcast_channels(const Var<T>& b, const Shape& shape);

// N x C x H x W -> C
template <class T>
Var<T> reduce_channels(const Var<T>& a) {
  detail::check_nchw(a.shape(), "reduce_channels");
  const int n = a.shape()[0], c = a.shape()[1];
  const std::size_t plane = static_cast<std::size_t>(a.shape()[2]) * a.shape()[3];
  Tensor<T> out({c});
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < c; ++k) {
      const T* p = a.value().ptr() + (static_cast<std::size_t>(i) * c + k) * plane;
      T acc = T(0);
      for (std::size_t j = 0; j < plane; ++j) acc += p[j];
      out.data[k] += acc;
    }
  Shape shape = a.shape();
  return record<T>(std::move(out), {a}, [shape](const Var<T>& g) {
    return std::vector<Var<T>>{broadcast_channels(g, shape)};
  });
}

template <class T>
Var<T> broadcast_channels(const Var<T>& b, const Shape& shape) {
  detail::check_nchw(shape, "broadcast_channels");
  require(b.shape() == Shape{shape[1]}, ErrorKind::shape, "broadcast_channels: bias size mismatch");
  Tensor<T> out(shape);
  const std::size_t plane = static_cast<std::size_t>(shape[2]) * shape[3];
  for (int i = 0; i < shape[0]; ++i)
    for (int k = 0; k < shape[1]; ++k) {
      T* p = out.ptr() + (static_cast<std::size_t>(i) * shape[1] + k) * plane;
      std::fill(p, p + plane, b.value().data[k]);
    }
  return record<T>(std::move(out), {b}, [](const Var<T>& g) { return std::vector<Var<T>>{reduce_channels(g)}; });
}

template <class T>
Var<T> add_channel_bias(const Var<T>& x, const Var<T>& b) {
  detail::check_nchw(x.shape(), "add_channel_bias");
  require(b.shape() == Shape{x.shape()[1]}, ErrorKind::shape, "add_channel_bias: bias size mismatch");
  Tensor<T> out = x.value();
  const std::size_t plane = static_cast<std::size_t>(x.shape()[2]) * x.shape()[3];
  const int c = x.shape()[1];
  for (int i = 0; i < x.shape()[0]; ++i)
    for (int k = 0; k < c; ++k) {
      T* p = out.ptr() + (static_cast<std::size_t>(i) * c + k) * plane;
      const T bk = b.value().data[k];
      for (std::size_t j = 0; j < plane; ++j) p[j] += bk;
    }
  return record<T>(std::move(out), {x, b}, [b](const Var<T>& g) {
    return std::vector<Var<T>>{g, b.requires_grad() ? reduce_channels(g) : Var<T>()};
  });
}

// ---- convolution -----------------------------------------------------------

template <class T>
Var<T> conv2d_input_grad(const Var<T>& gy, const Var<T>& w, int stride, int pad, const Shape& in_shape);
template <class T>
Var<T> conv2d_weight_grad(const Var<T>& x, const Var<T>& gy, int stride, int pad, const Shape& w_shape);

// Cross-correlation with zero padding; w is Co x Ci x k x k.
template <class T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, int stride = 1, int pad = 0) {
  Tensor<T> y = detail::conv_forward(x.value(), w.value(), stride, pad);
  return record<T>(std::move(y), {x, w}, [x, w, stride, pad](const Var<T>& g) {
    return std::vector<Var<T>>{
        x.requires_grad() ? conv2d_input_grad(g, w, stride, pad, x.shape()) : Var<T>(),
        w.requires_grad() ? conv2d_weight_grad(x, g, stride, pad, w.shape()) : Var<T>()};
  });
}

// Adjoint of conv2d in its input.
template <class T>
Var<T> conv2d_input_grad(const Var<T>& gy, const Var<T>& w, int stride, int pad, const Shape& in_shape) {
  Tensor<T> dx = detail::conv_input_grad(gy.value(), w.value(), stride, pad, in_shape);
  return record<T>(std::move(dx), {gy, w}, [gy, w, stride, pad](const Var<T>& g) {
    return std::vector<Var<T>>{gy.requires_grad() ? conv2d(g, w, stride, pad) : Var<T>(),
                               w.requires_grad() ? conv2d_weight_grad(g, gy, stride, pad, w.shape()) : Var<T>()};
  });
}

// Adjoint of conv2d in its weights.
template <class T>
Var<T> conv2d_weight_grad(const Var<T>& x, const Var<T>& gy, int stride, int pad, const Shape& w_shape) {
  Tensor<T> dw = detail::conv_weight_grad(x.value(), gy.value(), stride, pad, w_shape);
  return record<T>(std::move(dw), {x, gy}, [x, gy, stride, pad](const Var<T>& g) {
    return std::vector<Var<T>>{x.requires_grad() ? conv2d_input_grad(gy, g, stride, pad, x.shape()) : Var<T>(),
                               gy.requires_grad() ? conv2d(x, g, stride, pad) : Var<T>()};
  });
}

// ---- resampling ------------------------------------------------------------

template <class T>
Var<T> upsample_nearest2(const Var<T>& a);

template <class T>
Var<T> avg_pool2(const Var<T>& a) {
  detail::check_nchw(a.shape(), "avg_pool2");
  const int n = a.shape()[0], c = a.shape()[1], h = a.shape()[2], w = a.shape()[3];
  require(h % 2 == 0 && w % 2 == 0, ErrorKind::shape, "avg_pool2: odd spatial size " + shape_str(a.shape()));
  Tensor<T> out({n, c, h / 2, w / 2});
  const T* src = a.value().ptr();
  for (int p = 0; p < n * c; ++p)
    for (int y = 0; y < h / 2; ++y)
      for (int x = 0; x < w / 2; ++x) {
        const T* s = src + (static_cast<std::size_t>(p) * h + 2 * y) * w + 2 * x;
        out.data[(static_cast<std::size_t>(p) * (h / 2) + y) * (w / 2) + x] = T(0.25) * (s[0] + s[1] + s[w] + s[w + 1]);
      }
  return record<T>(std::move(out), {a}, [](const Var<T>& g) {
    return std::vector<Var<T>>{scale(upsample_nearest2(g), T(0.25))};
  });
}

template <class T>
Var<T> upsample_nearest2(const Var<T>& a) {
  detail::check_nchw(a.shape(), "upsample_nearest2");
  const int n = a.shape()[0], c = a.shape()[1], h = a.shape()[2], w = a.shape()[3];
  Tensor<T> out({n, c, 2 * h, 2 * w});
  const T* src = a.value().ptr();
  for (int p = 0; p < n * c; ++p)
    for (int y = 0; y < 2 * h; ++y) {
      const T* s = src + (static_cast<std::size_t>(p) * h + y / 2) * w;
      T* d = out.ptr() + (static_cast<std::size_t>(p) * 2 * h + y) * 2 * w;
      for (int x = 0; x < 2 * w; ++x) d[x] = s[x / 2];
    }
  return record<T>(std::move(out), {a}, [](const Var<T>& g) { return std::vector<Var<T>>{scale(avg_pool2(g), T(4))}; });
}

namespace detail {
struct PoolIndex {
  std::vector<std::size_t> source;  // flat input index per output element
  Shape in_shape;
  Shape out_shape;
};
}  // namespace detail

template <class T>
Var<T> scatter_pool(const Var<T>& g, std::shared_ptr<const detail::PoolIndex> idx);

// Picks input elements by a fixed index map; adjoint of scatter_pool.
template <class T>
Var<T> gather_pool(const Var<T>& a, std::shared_ptr<const detail::PoolIndex> idx) {
  detail::same_shape(a.shape(), idx->in_shape, "gather_pool");
  Tensor<T> out(idx->out_shape);
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] = a.value().data[idx->source[i]];
  return record<T>(std::move(out), {a}, [idx](const Var<T>& g) { return std::vector<Var<T>>{scatter_pool(g, idx)}; });
}

template <class T>
Var<T> scatter_pool(const Var<T>& g, std::shared_ptr<const detail::PoolIndex> idx) {
  detail::same_shape(g.shape(), idx->out_shape, "scatter_pool");
  Tensor<T> out(idx->in_shape);
  for (std::size_t i = 0; i < g.size(); ++i) out.data[idx->source[i]] += g.value().data[i];
  return record<T>(std::move(out), {g}, [idx](const Var<T>& gg) { return std::vector<Var<T>>{gather_pool(gg, idx)}; });
}

template <class T>
Var<T> max_pool2(const Var<T>& a) {
  detail::check_nchw(a.shape(), "max_pool2");
  const int n = a.shape()[0], c = a.shape()[1], h = a.shape()[2], w = a.shape()[3];
  require(h % 2 == 0 && w % 2 == 0, ErrorKind::shape, "max_pool2: odd spatial size " + shape_str(a.shape()));
  auto idx = std::make_shared<detail::PoolIndex>();
  idx->in_shape = a.shape();
  idx->out_shape = {n, c, h / 2, w / 2};
  idx->source.resize(numel(idx->out_shape));
  const T* src = a.value().ptr();
  std::size_t o = 0;
  for (int p = 0; p < n * c; ++p)
    for (int y = 0; y < h / 2; ++y)
      for (int x = 0; x < w / 2; ++x) {
        std::size_t best = (static_cast<std::size_t>(p) * h + 2 * y) * w + 2 * x;
        for (std::size_t cand : {best + 1, best + w, best + w + 1})
          if (src[cand] > src[best]) best = cand;
        idx->source[o++] = best;
      }
  return gather_pool(a, std::shared_ptr<const detail::PoolIndex>(std::move(idx)));
}

// ---- channel plumbing ------------------------------------------------------

template <class T>
Var<T> pad_channels(const Var<T>& a, int begin, int total);

template <class T>
Var<T> slice_channels(const Var<T>& a, int begin, int count) {
  detail::check_nchw(a.shape(), "slice_channels");
  const int n = a.shape()[0], c = a.shape()[1];
  require(begin >= 0 && count >= 1 && begin + count <= c, ErrorKind::shape, "slice_channels: range out of bounds");
  const std::size_t plane = static_cast<std::size_t>(a.shape()[2]) * a.shape()[3];
  Tensor<T> out({n, count, a.shape()[2], a.shape()[3]});
  for (int i = 0; i < n; ++i) {
    const T* s = a.value().ptr() + (static_cast<std::size_t>(i) * c + begin) * plane;
    std::copy(s, s + count * plane, out.ptr() + static_cast<std::size_t>(i) * count * plane);
  }
  return record<T>(std::move(out), {a}, [begin, c](const Var<T>& g) {
    return std::vector<Var<T>>{pad_channels(g, begin, c)};
  });
}

// Embeds a into a zero tensor with `total` channels starting at `begin`.
template <class T>
Var<T> pad_channels(const Var<T>& a, int begin, int total) {
  detail::check_nchw(a.shape(), "pad_channels");
  const int n = a.shape()[0], c = a.shape()[1];
  require(begin >= 0 && begin + c <= total, ErrorKind::shape, "pad_channels: range out of bounds");
  const std::size_t plane = static_cast<std::size_t>(a.shape()[2]) * a.shape()[3];
  Tensor<T> out({n, total, a.shape()[2], a.shape()[3]});
  for (int i = 0; i < n; ++i) {
    const T* s = a.value().ptr() + static_cast<std::size_t>(i) * c * plane;
    std::copy(s, s + c * plane, out.ptr() + (static_cast<std::size_t>(i) * total + begin) * plane);
  }
  return record<T>(std::move(out), {a}, [begin, c](const Var<T>& g) {
    return std::vector<Var<T>>{slice_channels(g, begin, c)};
  });
}

template <class T>
Var<T> concat_channels(const Var<T>& a, const Var<T>& b) {
  detail::check_nchw(a.shape(), "concat_channels");
  detail::check_nchw(b.shape(), "concat_channels");
  require(a.shape()[0] == b.shape()[0] && a.shape()[2] == b.shape()[2] && a.shape()[3] == b.shape()[3],
          ErrorKind::shape, "concat_channels: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  const int n = a.shape()[0], ca = a.shape()[1], cb = b.shape()[1];
  const std::size_t plane = static_cast<std::size_t>(a.shape()[2]) * a.shape()[3];
  Tensor<T> out({n, ca + cb, a.shape()[2], a.shape()[3]});
  for (int i = 0; i < n; ++i) {
    T* d = out.ptr() + static_cast<std::size_t>(i) * (ca + cb) * plane;
    const T* sa = a.value().ptr() + static_cast<std::size_t>(i) * ca * plane;
    const T* sb = b.value().ptr() + static_cast<std::size_t>(i) * cb * plane;
    std::copy(sa, sa + ca * plane, d);
    std::copy(sb, sb + cb * plane, d + ca * plane);
  }
  return record<T>(std::move(out), {a, b}, [a, b, ca, cb](const Var<T>& g) {
    return std::vector<Var<T>>{a.requires_grad() ? slice_channels(g, 0, ca) : Var<T>(),
                               b.requires_grad() ? slice_channels(g, ca, cb) : Var<T>()};
  });
}

}  // namespace fitdeblur::ad
