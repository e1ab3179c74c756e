#include "phantasmagoria/nn/layers.hpp"

#include <cmath>
#include <limits>

#include "phantasmagoria/nn/gemm.hpp"

namespace phantasmagoria::nn {

template <typename T>
ParamTensor<T>::ParamTensor(std::vector<int> dims) : shape(std::move(dims)) {
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(d);
  values.assign(n, T{0});
}

template <typename T>
DenseParams<T>::DenseParams(int in_features, int out_features)
    : in(in_features),
      out(out_features),
      weight({out_features, in_features}),
      bias({out_features}) {}

template <typename T>
Conv2dParams<T>::Conv2dParams(int in_channels, int out_channels, int kernel_size)
    : in(in_channels),
      out(out_channels),
      kernel(kernel_size),
      weight({out_channels, in_channels, kernel_size, kernel_size}),
      bias({out_channels}) {
  if (kernel_size % 2 == 0) throw std::invalid_argument("same padding needs an odd kernel");
}

template <typename T>
Tensor<T> dense_forward(const DenseParams<T>& p, const Tensor<T>& x) {
  if (static_cast<int>(x.item_size()) != p.in)
    throw std::invalid_argument("dense input has " + std::to_string(x.item_size()) +
                                " features, expected " + std::to_string(p.in));
  Tensor<T> y(x.n(), p.out, 1, 1);
  for (int i = 0; i < x.n(); ++i)
    std::copy(p.bias.values.begin(), p.bias.values.end(), y.item(i).begin());
  gemm(false, true, x.n(), p.out, p.in, T{1}, x.data(), p.in, p.weight.values.data(), p.in, T{1},
       y.data(), p.out);
  return y;
}

template <typename T>
Tensor<T> dense_backward(const DenseParams<T>& p, const Tensor<T>& x, const Tensor<T>& dy,
                         DenseParams<T>* grad) {
  const int n = x.n();
  if (grad) {
    gemm(true, false, p.out, p.in, n, T{1}, dy.data(), p.out, x.data(), p.in, T{1},
         grad->weight.values.data(), p.in);
    for (int i = 0; i < n; ++i) {
      auto row = dy.item(i);
      for (int o = 0; o < p.out; ++o) grad->bias.values[o] += row[o];
    }
  }
  Tensor<T> dx(n, x.c(), x.h(), x.w());
  gemm(false, false, n, p.in, p.out, T{1}, dy.data(), p.out, p.weight.values.data(), p.in, T{0},
       dx.data(), p.in);
  return dx;
}

namespace {

// Column matrix of one image: rows (c, ky, kx), columns (y, x).
template <typename T>
void im2col(const T* img, int channels, int h, int w, int k, std::vector<T>& col) {
  const int pad = k / 2;
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  col.assign(static_cast<std::size_t>(channels) * k * k * hw, T{0});
  for (int c = 0; c < channels; ++c)
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        T* dst = col.data() + ((static_cast<std::size_t>(c) * k + ky) * k + kx) * hw;
        const T* src = img + static_cast<std::size_t>(c) * hw;
        for (int y = 0; y < h; ++y) {
          const int sy = y + ky - pad;
          if (sy < 0 || sy >= h) continue;
          const int x0 = std::max(0, pad - kx);
          const int x1 = std::min(w, w + pad - kx);
          for (int x = x0; x < x1; ++x) dst[y * w + x] = src[sy * w + x + kx - pad];
        }
      }
}

template <typename T>
void col2im(const std::vector<T>& col, int channels, int h, int w, int k, T* img) {
  const int pad = k / 2;
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  for (int c = 0; c < channels; ++c)
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        const T* src = col.data() + ((static_cast<std::size_t>(c) * k + ky) * k + kx) * hw;
        T* dst = img + static_cast<std::size_t>(c) * hw;
        for (int y = 0; y < h; ++y) {
          const int sy = y + ky - pad;
          if (sy < 0 || sy >= h) continue;
          const int x0 = std::max(0, pad - kx);
          const int x1 = std::min(w, w + pad - kx);
          for (int x = x0; x < x1; ++x) dst[sy * w + x + kx - pad] += src[y * w + x];
        }
      }
}

}  // namespace

template <typename T>
Tensor<T> conv2d_forward(const Conv2dParams<T>& p, const Tensor<T>& x) {
  if (x.c() != p.in)
    throw std::invalid_argument("conv input has " + std::to_string(x.c()) + " channels, expected " +
                                std::to_string(p.in));
  const int h = x.h(), w = x.w(), hw = h * w, kdim = p.in * p.kernel * p.kernel;
  Tensor<T> y(x.n(), p.out, h, w);
  std::vector<T> col;
  for (int i = 0; i < x.n(); ++i) {
    im2col(x.item(i).data(), p.in, h, w, p.kernel, col);
    T* out = y.item(i).data();
    for (int o = 0; o < p.out; ++o) std::fill(out + o * hw, out + (o + 1) * hw, p.bias.values[o]);
    gemm(false, false, p.out, hw, kdim, T{1}, p.weight.values.data(), kdim, col.data(), hw, T{1}, out,
         hw);
  }
  return y;
}

template <typename T>
Tensor<T> conv2d_backward(const Conv2dParams<T>& p, const Tensor<T>& x, const Tensor<T>& dy,
                          Conv2dParams<T>* grad) {
  const int h = x.h(), w = x.w(), hw = h * w, kdim = p.in * p.kernel * p.kernel;
  Tensor<T> dx(x.n(), x.c(), h, w);
  std::vector<T> col;
  std::vector<T> dcol(static_cast<std::size_t>(kdim) * hw);
  for (int i = 0; i < x.n(); ++i) {
    const T* g = dy.item(i).data();
    if (grad) {
      im2col(x.item(i).data(), p.in, h, w, p.kernel, col);
      gemm(false, true, p.out, kdim, hw, T{1}, g, hw, col.data(), hw, T{1},
           grad->weight.values.data(), kdim);
      for (int o = 0; o < p.out; ++o) {
        T s{0};
        for (int j = 0; j < hw; ++j) s += g[o * hw + j];
        grad->bias.values[o] += s;
      }
    }
    gemm(true, false, kdim, hw, p.out, T{1}, p.weight.values.data(), kdim, g, hw, T{0}, dcol.data(),
         hw);
    col2im(dcol, p.in, h, w, p.kernel, dx.item(i).data());
  }
  return dx;
}

template <typename T>
Tensor<T> maxpool2_forward(const Tensor<T>& x, std::vector<std::uint32_t>& argmax) {
  if (x.h() % 2 != 0 || x.w() % 2 != 0) throw std::invalid_argument("max pool needs even sizes");
  const int oh = x.h() / 2, ow = x.w() / 2;
  Tensor<T> y(x.n(), x.c(), oh, ow);
  argmax.resize(y.size());
  std::size_t o = 0;
  for (int n = 0; n < x.n(); ++n)
    for (int c = 0; c < x.c(); ++c)
      for (int yy = 0; yy < oh; ++yy)
        for (int xx = 0; xx < ow; ++xx, ++o) {
          T best = -std::numeric_limits<T>::infinity();
          std::uint32_t best_idx = 0;
          for (int dy = 0; dy < 2; ++dy)
            for (int dx = 0; dx < 2; ++dx) {
              const std::size_t idx =
                  ((static_cast<std::size_t>(n) * x.c() + c) * x.h() + 2 * yy + dy) * x.w() + 2 * xx + dx;
              const T v = x.data()[idx];
              if (v > best) {
                best = v;
                best_idx = static_cast<std::uint32_t>(idx);
              }
            }
          y.data()[o] = best;
          argmax[o] = best_idx;
        }
  return y;
}

template <typename T>
Tensor<T> maxpool2_backward(const Tensor<T>& x_shape_like, const std::vector<std::uint32_t>& argmax,
                            const Tensor<T>& dy) {
  Tensor<T> dx(x_shape_like.n(), x_shape_like.c(), x_shape_like.h(), x_shape_like.w());
  for (std::size_t o = 0; o < dy.size(); ++o) dx.data()[argmax[o]] += dy.data()[o];
  return dx;
}

template <typename T>
Tensor<T> upsample2_forward(const Tensor<T>& x) {
  Tensor<T> y(x.n(), x.c(), 2 * x.h(), 2 * x.w());
  for (int n = 0; n < x.n(); ++n)
    for (int c = 0; c < x.c(); ++c)
      for (int yy = 0; yy < y.h(); ++yy)
        for (int xx = 0; xx < y.w(); ++xx) y.at(n, c, yy, xx) = x.at(n, c, yy / 2, xx / 2);
  return y;
}

template <typename T>
Tensor<T> upsample2_backward(const Tensor<T>& dy) {
  Tensor<T> dx(dy.n(), dy.c(), dy.h() / 2, dy.w() / 2);
  for (int n = 0; n < dy.n(); ++n)
    for (int c = 0; c < dy.c(); ++c)
      for (int yy = 0; yy < dy.h(); ++yy)
        for (int xx = 0; xx < dy.w(); ++xx) dx.at(n, c, yy / 2, xx / 2) += dy.at(n, c, yy, xx);
  return dx;
}

template <typename T>
void activate(Activation a, Tensor<T>& x) {
  auto v = x.values();
  switch (a) {
    case Activation::identity:
      break;
    case Activation::relu:
      for (T& e : v) e = e > T{0} ? e : T{0};
      break;
    case Activation::leaky_relu:
      for (T& e : v) e = e > T{0} ? e : static_cast<T>(kLeakySlope) * e;
      break;
    case Activation::sigmoid: {
      // Saturated values are pinned just inside (0,1).
      constexpr T lo = std::numeric_limits<T>::min();
      constexpr T hi = T{1} - std::numeric_limits<T>::epsilon() / 2;
      for (T& e : v) e = std::clamp(T{1} / (T{1} + std::exp(-e)), lo, hi);
      break;
    }
  }
}

template <typename T>
void activate_backward(Activation a, const Tensor<T>& y, Tensor<T>& dy) {
  auto g = dy.values();
  auto out = y.values();
  switch (a) {
    case Activation::identity:
      break;
    case Activation::relu:
      for (std::size_t i = 0; i < g.size(); ++i)
        if (!(out[i] > T{0})) g[i] = T{0};
      break;
    case Activation::leaky_relu:
      for (std::size_t i = 0; i < g.size(); ++i)
        if (!(out[i] > T{0})) g[i] *= static_cast<T>(kLeakySlope);
      break;
    case Activation::sigmoid:
      for (std::size_t i = 0; i < g.size(); ++i) g[i] *= out[i] * (T{1} - out[i]);
      break;
  }
}

template <typename T>
void init_normal(ParamTensor<T>& p, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  for (T& v : p.values) v = static_cast<T>(dist(rng));
}

#define PHANTASMAGORIA_INSTANTIATE_LAYERS(T)                                                        \
  template struct ParamTensor<T>;                                                                  \
  template struct DenseParams<T>;                                                                  \
  template struct Conv2dParams<T>;                                                                 \
  template Tensor<T> dense_forward(const DenseParams<T>&, const Tensor<T>&);                       \
  template Tensor<T> dense_backward(const DenseParams<T>&, const Tensor<T>&, const Tensor<T>&,     \
                                    DenseParams<T>*);                                              \
  template Tensor<T> conv2d_forward(const Conv2dParams<T>&, const Tensor<T>&);                     \
  template Tensor<T> conv2d_backward(const Conv2dParams<T>&, const Tensor<T>&, const Tensor<T>&,   \
                                     Conv2dParams<T>*);                                            \
  template Tensor<T> maxpool2_forward(const Tensor<T>&, std::vector<std::uint32_t>&);              \
  template Tensor<T> maxpool2_backward(const Tensor<T>&, const std::vector<std::uint32_t>&,        \
                                       const Tensor<T>&);                                          \
  template Tensor<T> upsample2_forward(const Tensor<T>&);                                          \
  template Tensor<T> upsample2_backward(const Tensor<T>&);                                         \
  template void activate(Activation, Tensor<T>&);                                                  \
  template void activate_backward(Activation, const Tensor<T>&, Tensor<T>&);                       \
  template void init_normal(ParamTensor<T>&, double, std::mt19937_64&);

PHANTASMAGORIA_INSTANTIATE_LAYERS(float)
PHANTASMAGORIA_INSTANTIATE_LAYERS(double)

}  // namespace phantasmagoria::nn
