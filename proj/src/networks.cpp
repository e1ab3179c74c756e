#include "phantasmagoria/networks.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace phantasmagoria {

using nn::Activation;

namespace {

template <typename Params>
std::size_t count_params(const Params& p) {
  std::size_t n = 0;
  p.for_each([&](const char*, const auto& t) { n += t.size(); });
  return n;
}

template <typename Params>
void init_params(Params& p, std::mt19937_64& rng) {
  p.for_each([&](const char* name, auto& t) {
    const std::string_view n(name);
    if (n.ends_with(".weight"))
      nn::init_normal(t, kInitStddev, rng);
    else
      t.fill(0);
  });
}

}  // namespace

double logistic(double logit) {
  constexpr double lo = std::numeric_limits<double>::min();
  constexpr double hi = 1.0 - std::numeric_limits<double>::epsilon() / 2;
  const double p = logit >= 0 ? 1.0 / (1.0 + std::exp(-logit))
                              : std::exp(logit) / (1.0 + std::exp(logit));
  return std::clamp(p, lo, hi);
}

// --- generator -------------------------------------------------------------

template <typename T>
GeneratorParams<T>::GeneratorParams(const GeneratorShape& s)
    : shape(s),
      fc1(s.latent, s.hidden),
      fc2(s.hidden, s.base_channels * s.base_size * s.base_size),
      conv1(s.base_channels, s.mid_channels, s.kernel),
      conv2(s.mid_channels, s.out_channels, s.kernel) {
  if (s.out_channels != 1 && s.out_channels != 3)
    throw std::invalid_argument("generator output channels must be 1 or 3");
}

template <typename T>
std::size_t GeneratorParams<T>::parameter_count() const {
  return count_params(*this);
}

template <typename T>
GeneratorParams<T> init_generator(const GeneratorShape& shape, std::mt19937_64& rng) {
  GeneratorParams<T> p(shape);
  init_params(p, rng);
  return p;
}

template <typename T>
Tensor<T> generator_forward(const GeneratorParams<T>& p, const Tensor<T>& z, GeneratorTrace<T>* trace) {
  const auto& s = p.shape;
  if (static_cast<int>(z.item_size()) != s.latent)
    throw std::invalid_argument("latent dimension " + std::to_string(z.item_size()) +
                                " does not match generator input " + std::to_string(s.latent));
  Tensor<T> h1 = nn::dense_forward(p.fc1, z);
  nn::activate(Activation::relu, h1);
  Tensor<T> h2 = nn::dense_forward(p.fc2, h1);
  nn::activate(Activation::relu, h2);
  h2 = h2.reshaped(s.base_channels, s.base_size, s.base_size);
  Tensor<T> up1 = nn::upsample2_forward(h2);
  Tensor<T> a1 = nn::conv2d_forward(p.conv1, up1);
  nn::activate(Activation::relu, a1);
  Tensor<T> up2 = nn::upsample2_forward(a1);
  Tensor<T> out = nn::conv2d_forward(p.conv2, up2);
  nn::activate(Activation::sigmoid, out);
  if (trace) *trace = {z, std::move(h1), std::move(h2), std::move(up1), std::move(a1), std::move(up2), out};
  return out;
}

template <typename T>
Tensor<T> generator_backward(const GeneratorParams<T>& p, const GeneratorTrace<T>& t,
                             const Tensor<T>& dout, GeneratorParams<T>* grad) {
  if (!dout.same_shape(t.out)) throw std::invalid_argument("generator gradient shape mismatch");
  Tensor<T> g = dout;
  nn::activate_backward(Activation::sigmoid, t.out, g);
  g = nn::conv2d_backward(p.conv2, t.up2, g, grad ? &grad->conv2 : nullptr);
  g = nn::upsample2_backward(g);
  nn::activate_backward(Activation::relu, t.a1, g);
  g = nn::conv2d_backward(p.conv1, t.up1, g, grad ? &grad->conv1 : nullptr);
  g = nn::upsample2_backward(g);
  nn::activate_backward(Activation::relu, t.h2, g);
  g = g.reshaped(static_cast<int>(g.item_size()), 1, 1);
  g = nn::dense_backward(p.fc2, t.h1, g, grad ? &grad->fc2 : nullptr);
  nn::activate_backward(Activation::relu, t.h1, g);
  return nn::dense_backward(p.fc1, t.z, g, grad ? &grad->fc1 : nullptr);
}

template <typename T>
Tensor<T> sample_latent(int n, int dim, std::mt19937_64& rng) {
  if (dim <= 0) throw std::invalid_argument("latent dimension must be positive");
  Tensor<T> z(n, dim, 1, 1);
  std::normal_distribution<double> dist(0.0, 1.0);
  for (T& v : z.values()) v = static_cast<T>(dist(rng));
  return z;
}

// --- discriminator ---------------------------------------------------------

template <typename T>
DiscriminatorParams<T>::DiscriminatorParams(const DiscriminatorShape& s)
    : shape(s),
      conv1(s.in_channels, s.conv1_channels, s.conv1_kernel),
      conv2(s.conv1_channels, s.conv2_channels, s.conv_kernel),
      conv3(s.conv2_channels, s.conv3_channels, s.conv_kernel),
      fc1(s.flattened(), s.hidden),
      fc2(s.hidden, 1) {
  if (s.input_size % 8 != 0) throw std::invalid_argument("discriminator input must be a multiple of 8");
}

template <typename T>
std::size_t DiscriminatorParams<T>::parameter_count() const {
  return count_params(*this);
}

template <typename T>
DiscriminatorParams<T> init_discriminator(const DiscriminatorShape& shape, std::mt19937_64& rng) {
  DiscriminatorParams<T> p(shape);
  init_params(p, rng);
  return p;
}

template <typename T>
DiscriminatorOutput discriminator_forward(const DiscriminatorParams<T>& p, const Tensor<T>& x,
                                          DiscriminatorTrace<T>* trace) {
  const auto& s = p.shape;
  if (x.h() != s.input_size || x.w() != s.input_size)
    throw std::invalid_argument("discriminator expects " + std::to_string(s.input_size) + "x" +
                                std::to_string(s.input_size) + " input, got " + x.shape_string());
  if (x.c() != s.in_channels) throw std::invalid_argument("discriminator channel mismatch");

  DiscriminatorTrace<T> local;
  DiscriminatorTrace<T>& t = trace ? *trace : local;
  t.x = x;
  t.a1 = nn::conv2d_forward(p.conv1, x);
  nn::activate(Activation::leaky_relu, t.a1);
  t.p1 = nn::maxpool2_forward(t.a1, t.arg1);
  t.a2 = nn::conv2d_forward(p.conv2, t.p1);
  nn::activate(Activation::leaky_relu, t.a2);
  t.p2 = nn::maxpool2_forward(t.a2, t.arg2);
  t.a3 = nn::conv2d_forward(p.conv3, t.p2);
  nn::activate(Activation::leaky_relu, t.a3);
  t.p3 = nn::maxpool2_forward(t.a3, t.arg3);
  t.f1 = nn::dense_forward(p.fc1, t.p3.reshaped(static_cast<int>(t.p3.item_size()), 1, 1));
  nn::activate(Activation::leaky_relu, t.f1);
  t.logits = nn::dense_forward(p.fc2, t.f1);

  DiscriminatorOutput out;
  out.logits.resize(x.n());
  out.probabilities.resize(x.n());
  for (int i = 0; i < x.n(); ++i) {
    out.logits[i] = static_cast<double>(t.logits.data()[i]);
    out.probabilities[i] = logistic(out.logits[i]);
  }
  return out;
}

template <typename T>
Tensor<T> discriminator_backward(const DiscriminatorParams<T>& p, const DiscriminatorTrace<T>& t,
                                 const std::vector<double>& dlogits, DiscriminatorParams<T>* grad) {
  if (static_cast<int>(dlogits.size()) != t.x.n())
    throw std::invalid_argument("discriminator gradient size mismatch");
  Tensor<T> g(t.x.n(), 1, 1, 1);
  for (int i = 0; i < t.x.n(); ++i) g.data()[i] = static_cast<T>(dlogits[i]);
  g = nn::dense_backward(p.fc2, t.f1, g, grad ? &grad->fc2 : nullptr);
  nn::activate_backward(Activation::leaky_relu, t.f1, g);
  const Tensor<T> flat = t.p3.reshaped(static_cast<int>(t.p3.item_size()), 1, 1);
  g = nn::dense_backward(p.fc1, flat, g, grad ? &grad->fc1 : nullptr);
  g = g.reshaped(t.p3.c(), t.p3.h(), t.p3.w());
  g = nn::maxpool2_backward(t.a3, t.arg3, g);
  nn::activate_backward(Activation::leaky_relu, t.a3, g);
  g = nn::conv2d_backward(p.conv3, t.p2, g, grad ? &grad->conv3 : nullptr);
  g = nn::maxpool2_backward(t.a2, t.arg2, g);
  nn::activate_backward(Activation::leaky_relu, t.a2, g);
  g = nn::conv2d_backward(p.conv2, t.p1, g, grad ? &grad->conv2 : nullptr);
  g = nn::maxpool2_backward(t.a1, t.arg1, g);
  nn::activate_backward(Activation::leaky_relu, t.a1, g);
  return nn::conv2d_backward(p.conv1, t.x, g, grad ? &grad->conv1 : nullptr);
}

// --- restorenet ------------------------------------------------------------

template <typename T>
RestoreNetParams<T>::RestoreNetParams(const RestoreNetShape& s)
    : shape(s), conv1(s.channels, s.hidden, s.kernel), conv2(s.hidden, s.channels, s.kernel) {}

template <typename T>
std::size_t RestoreNetParams<T>::parameter_count() const {
  return count_params(*this);
}

template <typename T>
RestoreNetParams<T> init_restorenet(const RestoreNetShape& shape, std::mt19937_64& rng) {
  RestoreNetParams<T> p(shape);
  init_params(p, rng);
  return p;
}

template <typename T>
Tensor<T> restorenet_forward(const RestoreNetParams<T>& p, const Tensor<T>& x, RestoreNetTrace<T>* trace) {
  const auto& s = p.shape;
  if (x.c() != s.channels || x.h() != s.input_size || x.w() != s.input_size)
    throw std::invalid_argument("restorenet expects (n," + std::to_string(s.channels) + "," +
                                std::to_string(s.input_size) + "," + std::to_string(s.input_size) +
                                ") input, got " + x.shape_string());
  Tensor<T> a1 = nn::conv2d_forward(p.conv1, x);
  nn::activate(Activation::sigmoid, a1);
  Tensor<T> out = nn::conv2d_forward(p.conv2, a1);
  nn::activate(Activation::sigmoid, out);
  if (trace) *trace = {x, std::move(a1), out};
  return out;
}

template <typename T>
Tensor<T> restorenet_backward(const RestoreNetParams<T>& p, const RestoreNetTrace<T>& t,
                              const Tensor<T>& dout, RestoreNetParams<T>* grad) {
  Tensor<T> g = dout;
  nn::activate_backward(Activation::sigmoid, t.out, g);
  g = nn::conv2d_backward(p.conv2, t.a1, g, grad ? &grad->conv2 : nullptr);
  nn::activate_backward(Activation::sigmoid, t.a1, g);
  return nn::conv2d_backward(p.conv1, t.x, g, grad ? &grad->conv1 : nullptr);
}

// --- conversions -----------------------------------------------------------

template <typename T>
Tensor<T> to_tensor(const std::vector<Image>& images) {
  if (images.empty()) throw std::invalid_argument("empty image batch");
  const Image& first = images.front();
  Tensor<T> t(static_cast<int>(images.size()), first.channels(), first.height(), first.width());
  for (int n = 0; n < t.n(); ++n) {
    const Image& im = images[n];
    if (!im.same_shape(first)) throw std::invalid_argument("images in a batch differ in shape");
    for (int c = 0; c < t.c(); ++c)
      for (int y = 0; y < t.h(); ++y)
        for (int x = 0; x < t.w(); ++x) t.at(n, c, y, x) = static_cast<T>(im.at(y, x, c));
  }
  return t;
}

template <typename T>
Tensor<T> to_tensor(const Image& image) {
  return to_tensor<T>(std::vector<Image>{image});
}

template <typename T>
Image to_image(const Tensor<T>& batch, int index) {
  Image im(batch.h(), batch.w(), batch.c());
  for (int c = 0; c < batch.c(); ++c)
    for (int y = 0; y < batch.h(); ++y)
      for (int x = 0; x < batch.w(); ++x) im.at(y, x, c) = static_cast<double>(batch.at(index, c, y, x));
  return im;
}

template <typename T>
std::vector<Image> to_images(const Tensor<T>& batch) {
  std::vector<Image> out;
  out.reserve(batch.n());
  for (int i = 0; i < batch.n(); ++i) out.push_back(to_image(batch, i));
  return out;
}

#define PHANTASMAGORIA_INSTANTIATE_NETWORKS(T)                                                      \
  template struct GeneratorParams<T>;                                                              \
  template GeneratorParams<T> init_generator<T>(const GeneratorShape&, std::mt19937_64&);          \
  template Tensor<T> generator_forward(const GeneratorParams<T>&, const Tensor<T>&,                \
                                       GeneratorTrace<T>*);                                        \
  template Tensor<T> generator_backward(const GeneratorParams<T>&, const GeneratorTrace<T>&,       \
                                        const Tensor<T>&, GeneratorParams<T>*);                    \
  template Tensor<T> sample_latent<T>(int, int, std::mt19937_64&);                                 \
  template struct DiscriminatorParams<T>;                                                          \
  template DiscriminatorParams<T> init_discriminator<T>(const DiscriminatorShape&,                 \
                                                        std::mt19937_64&);                         \
  template DiscriminatorOutput discriminator_forward(const DiscriminatorParams<T>&,                \
                                                     const Tensor<T>&, DiscriminatorTrace<T>*);    \
  template Tensor<T> discriminator_backward(const DiscriminatorParams<T>&,                         \
                                            const DiscriminatorTrace<T>&,                          \
                                            const std::vector<double>&, DiscriminatorParams<T>*);  \
  template struct RestoreNetParams<T>;                                                             \
  template RestoreNetParams<T> init_restorenet<T>(const RestoreNetShape&, std::mt19937_64&);       \
  template Tensor<T> restorenet_forward(const RestoreNetParams<T>&, const Tensor<T>&,              \
                                        RestoreNetTrace<T>*);                                      \
  template Tensor<T> restorenet_backward(const RestoreNetParams<T>&, const RestoreNetTrace<T>&,    \
                                         const Tensor<T>&, RestoreNetParams<T>*);                  \
  template Tensor<T> to_tensor<T>(const std::vector<Image>&);                                      \
  template Tensor<T> to_tensor<T>(const Image&);                                                   \
  template Image to_image(const Tensor<T>&, int);                                                  \
  template std::vector<Image> to_images(const Tensor<T>&);

PHANTASMAGORIA_INSTANTIATE_NETWORKS(float)
PHANTASMAGORIA_INSTANTIATE_NETWORKS(double)

}  // namespace phantasmagoria
