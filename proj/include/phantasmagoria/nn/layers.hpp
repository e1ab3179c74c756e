#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "phantasmagoria/nn/tensor.hpp"

namespace phantasmagoria::nn {

template <typename T>
struct ParamTensor {
  std::vector<int> shape;
  std::vector<T> values;

  ParamTensor() = default;
  explicit ParamTensor(std::vector<int> dims);

  std::size_t size() const { return values.size(); }
  void fill(T v) { std::fill(values.begin(), values.end(), v); }

  friend bool operator==(const ParamTensor&, const ParamTensor&) = default;
};

/// Fully connected layer: y = x W^T + b, W is out x in.
template <typename T>
struct DenseParams {
  int in = 0;
  int out = 0;
  ParamTensor<T> weight;
  ParamTensor<T> bias;

  DenseParams() = default;
  DenseParams(int in_features, int out_features);
  std::size_t parameter_count() const { return weight.size() + bias.size(); }
  friend bool operator==(const DenseParams&, const DenseParams&) = default;
};

/// Stride-1 convolution with same padding; weight is out x in x k x k.
template <typename T>
struct Conv2dParams {
  int in = 0;
  int out = 0;
  int kernel = 0;
  ParamTensor<T> weight;
  ParamTensor<T> bias;

  Conv2dParams() = default;
  Conv2dParams(int in_channels, int out_channels, int kernel_size);
  std::size_t parameter_count() const { return weight.size() + bias.size(); }
  friend bool operator==(const Conv2dParams&, const Conv2dParams&) = default;
};

template <typename T>
Tensor<T> dense_forward(const DenseParams<T>& p, const Tensor<T>& x);
/// Accumulates parameter gradients into `grad` (skipped when null) and
/// returns dL/dx.
template <typename T>
Tensor<T> dense_backward(const DenseParams<T>& p, const Tensor<T>& x, const Tensor<T>& dy,
                         DenseParams<T>* grad);

template <typename T>
Tensor<T> conv2d_forward(const Conv2dParams<T>& p, const Tensor<T>& x);
template <typename T>
Tensor<T> conv2d_backward(const Conv2dParams<T>& p, const Tensor<T>& x, const Tensor<T>& dy,
                          Conv2dParams<T>* grad);

/// 2x2 stride-2 max pool; `argmax` receives the flat input index of each output.
template <typename T>
Tensor<T> maxpool2_forward(const Tensor<T>& x, std::vector<std::uint32_t>& argmax);
template <typename T>
Tensor<T> maxpool2_backward(const Tensor<T>& x_shape_like, const std::vector<std::uint32_t>& argmax,
                            const Tensor<T>& dy);

/// 2x nearest-neighbour upscale.
template <typename T>
Tensor<T> upsample2_forward(const Tensor<T>& x);
template <typename T>
Tensor<T> upsample2_backward(const Tensor<T>& dy);

enum class Activation { identity, relu, leaky_relu, sigmoid };

inline constexpr double kLeakySlope = 0.2;

template <typename T>
void activate(Activation a, Tensor<T>& x);
/// Multiply `dy` in place by the activation derivative, expressed through the
/// activation output `y`.
template <typename T>
void activate_backward(Activation a, const Tensor<T>& y, Tensor<T>& dy);

template <typename T>
void init_normal(ParamTensor<T>& p, double stddev, std::mt19937_64& rng);

}  // namespace phantasmagoria::nn
