#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "phantasmagoria/image.hpp"
#include "phantasmagoria/nn/layers.hpp"
#include "phantasmagoria/nn/tensor.hpp"

namespace phantasmagoria {

using nn::Tensor;

inline constexpr int kLatentDim = 100;
/// Standard deviation of the Gaussian weight initialisation (biases start at zero).
inline constexpr double kInitStddev = 0.02;

// ---------------------------------------------------------------------------
// Candidate generator: fc(latent->hidden) relu, fc(hidden->C*S*S) relu,
// reshape C x S x S, up2, conv k relu, up2, conv k sigmoid.

struct GeneratorShape {
  int latent = kLatentDim;
  int hidden = 2048;
  int base_channels = 256;
  int base_size = 8;
  int mid_channels = 128;
  int out_channels = 1;
  int kernel = 5;

  int output_size() const { return base_size * 4; }
};

template <typename T>
struct GeneratorParams {
  GeneratorShape shape;
  nn::DenseParams<T> fc1, fc2;
  nn::Conv2dParams<T> conv1, conv2;

  GeneratorParams() = default;
  explicit GeneratorParams(const GeneratorShape& s);

  /// Visit (name, ParamTensor) in a fixed order.
  template <typename F> void for_each(F&& f) { visit(*this, f); }
  template <typename F> void for_each(F&& f) const { visit(*this, f); }
  template <typename Self, typename F> static void visit(Self& s, F& f) {
    f("fc1.weight", s.fc1.weight); f("fc1.bias", s.fc1.bias);
    f("fc2.weight", s.fc2.weight); f("fc2.bias", s.fc2.bias);
    f("conv1.weight", s.conv1.weight); f("conv1.bias", s.conv1.bias);
    f("conv2.weight", s.conv2.weight); f("conv2.bias", s.conv2.bias);
  }

  std::size_t parameter_count() const;
  friend bool operator==(const GeneratorParams& a, const GeneratorParams& b) {
    return a.fc1 == b.fc1 && a.fc2 == b.fc2 && a.conv1 == b.conv1 && a.conv2 == b.conv2;
  }
};

template <typename T>
struct GeneratorTrace {
  Tensor<T> z, h1, h2, up1, a1, up2, out;
};

template <typename T>
GeneratorParams<T> init_generator(const GeneratorShape& shape, std::mt19937_64& rng);

/// z is (n, latent, 1, 1); returns (n, out_channels, S, S) in (0,1).
template <typename T>
Tensor<T> generator_forward(const GeneratorParams<T>& p, const Tensor<T>& z,
                            GeneratorTrace<T>* trace = nullptr);
/// Returns dL/dz; parameter gradients accumulate into `grad` when non-null.
template <typename T>
Tensor<T> generator_backward(const GeneratorParams<T>& p, const GeneratorTrace<T>& trace,
                             const Tensor<T>& dout, GeneratorParams<T>* grad);

/// n i.i.d. standard normal latent vectors.
template <typename T>
Tensor<T> sample_latent(int n, int dim, std::mt19937_64& rng);

// ---------------------------------------------------------------------------
// Background discriminator: three conv + leaky relu + 2x2 max pool stages,
// fc(flat->hidden) leaky relu, fc(hidden->1) sigmoid.

struct DiscriminatorShape {
  int in_channels = 1;
  int input_size = 32;
  int conv1_channels = 128;
  int conv2_channels = 256;
  int conv3_channels = 512;
  int conv1_kernel = 5;
  int conv_kernel = 3;
  int hidden = 1024;

  int flattened() const { return conv3_channels * (input_size / 8) * (input_size / 8); }
};

template <typename T>
struct DiscriminatorParams {
  DiscriminatorShape shape;
  nn::Conv2dParams<T> conv1, conv2, conv3;
  nn::DenseParams<T> fc1, fc2;

  DiscriminatorParams() = default;
  explicit DiscriminatorParams(const DiscriminatorShape& s);

  /// Visit (name, ParamTensor) in a fixed order.
  template <typename F> void for_each(F&& f) { visit(*this, f); }
  template <typename F> void for_each(F&& f) const { visit(*this, f); }
  template <typename Self, typename F> static void visit(Self& s, F& f) {
    f("conv1.weight", s.conv1.weight); f("conv1.bias", s.conv1.bias);
    f("conv2.weight", s.conv2.weight); f("conv2.bias", s.conv2.bias);
    f("conv3.weight", s.conv3.weight); f("conv3.bias", s.conv3.bias);
    f("fc1.weight", s.fc1.weight); f("fc1.bias", s.fc1.bias);
    f("fc2.weight", s.fc2.weight); f("fc2.bias", s.fc2.bias);
  }

  std::size_t parameter_count() const;
  friend bool operator==(const DiscriminatorParams& a, const DiscriminatorParams& b) {
    return a.conv1 == b.conv1 && a.conv2 == b.conv2 && a.conv3 == b.conv3 && a.fc1 == b.fc1 &&
           a.fc2 == b.fc2;
  }
};

template <typename T>
struct DiscriminatorTrace {
  Tensor<T> x, a1, p1, a2, p2, a3, p3, f1, logits;
  std::vector<std::uint32_t> arg1, arg2, arg3;
};

struct DiscriminatorOutput {
  std::vector<double> probabilities;  // strictly inside (0,1)
  std::vector<double> logits;
};

template <typename T>
DiscriminatorParams<T> init_discriminator(const DiscriminatorShape& shape, std::mt19937_64& rng);

template <typename T>
DiscriminatorOutput discriminator_forward(const DiscriminatorParams<T>& p, const Tensor<T>& x,
                                          DiscriminatorTrace<T>* trace = nullptr);
/// `dlogits` has one entry per batch item. Returns dL/dx.
template <typename T>
Tensor<T> discriminator_backward(const DiscriminatorParams<T>& p, const DiscriminatorTrace<T>& trace,
                                 const std::vector<double>& dlogits, DiscriminatorParams<T>* grad);

/// Numerically safe logistic function, clamped strictly inside (0,1).
double logistic(double logit);

// ---------------------------------------------------------------------------
// RestoreNet: conv k (C->hidden) sigmoid, conv k (hidden->C) sigmoid.

struct RestoreNetShape {
  int channels = 3;
  int hidden = 8;
  int kernel = 5;
  int input_size = 128;
};

template <typename T>
struct RestoreNetParams {
  RestoreNetShape shape;
  nn::Conv2dParams<T> conv1, conv2;

  RestoreNetParams() = default;
  explicit RestoreNetParams(const RestoreNetShape& s);

  /// Visit (name, ParamTensor) in a fixed order.
  template <typename F> void for_each(F&& f) { visit(*this, f); }
  template <typename F> void for_each(F&& f) const { visit(*this, f); }
  template <typename Self, typename F> static void visit(Self& s, F& f) {
    f("conv1.weight", s.conv1.weight); f("conv1.bias", s.conv1.bias);
    f("conv2.weight", s.conv2.weight); f("conv2.bias", s.conv2.bias);
  }

  std::size_t parameter_count() const;
  friend bool operator==(const RestoreNetParams& a, const RestoreNetParams& b) {
    return a.conv1 == b.conv1 && a.conv2 == b.conv2;
  }
};

template <typename T>
struct RestoreNetTrace {
  Tensor<T> x, a1, out;
};

template <typename T>
RestoreNetParams<T> init_restorenet(const RestoreNetShape& shape, std::mt19937_64& rng);

template <typename T>
Tensor<T> restorenet_forward(const RestoreNetParams<T>& p, const Tensor<T>& x,
                             RestoreNetTrace<T>* trace = nullptr);
template <typename T>
Tensor<T> restorenet_backward(const RestoreNetParams<T>& p, const RestoreNetTrace<T>& trace,
                              const Tensor<T>& dout, RestoreNetParams<T>* grad);

// ---------------------------------------------------------------------------
// Conversions between the image currency and network batches.

template <typename T>
Tensor<T> to_tensor(const std::vector<Image>& images);
template <typename T>
Tensor<T> to_tensor(const Image& image);
template <typename T>
Image to_image(const Tensor<T>& batch, int index);
template <typename T>
std::vector<Image> to_images(const Tensor<T>& batch);

/// Parameter-set helpers shared by every network role.
template <typename Params>
Params zeros_like(const Params& p) {
  Params out = p;
  out.for_each([](const char*, auto& t) { t.fill(0); });
  return out;
}

/// Same parameters in another scalar type (e.g. float checkpoints evaluated in double).
template <typename To, template <typename> class P, typename From>
P<To> cast_params(const P<From>& p) {
  P<To> out(p.shape);
  std::vector<const nn::ParamTensor<From>*> src;
  p.for_each([&](const char*, const nn::ParamTensor<From>& t) { src.push_back(&t); });
  std::size_t k = 0;
  out.for_each([&](const char*, nn::ParamTensor<To>& t) {
    const auto& s = *src[k++];
    for (std::size_t i = 0; i < s.values.size(); ++i) t.values[i] = static_cast<To>(s.values[i]);
  });
  return out;
}

template <typename Params>
bool all_finite(const Params& p) {
  bool ok = true;
  p.for_each([&](const char*, const auto& t) {
    for (auto v : t.values)
      if (!std::isfinite(v)) ok = false;
  });
  return ok;
}

}  // namespace phantasmagoria
