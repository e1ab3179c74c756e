#pragma once

#include <cmath>
#include <cstdint>
#include <type_traits>
#include <vector>

namespace phantasmagoria::nn {

struct AdamConfig {
  double learning_rate = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adam state for one parameter set. Moments are kept in the same visiting
/// order as `Params::for_each`.
template <typename Params>
class Adam {
 public:
  Adam() = default;
  Adam(const Params& params, AdamConfig config) : config_(config) {
    params.for_each([&](const char*, const auto& t) {
      m_.emplace_back(t.size(), 0.0f);
      v_.emplace_back(t.size(), 0.0f);
    });
  }

  const AdamConfig& config() const { return config_; }
  std::int64_t steps() const { return step_; }

  void step(Params& params, const Params& grad) {
    ++step_;
    const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(step_));
    const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(step_));
    const float lr = static_cast<float>(config_.learning_rate * std::sqrt(c2) / c1);
    const float b1 = static_cast<float>(config_.beta1);
    const float b2 = static_cast<float>(config_.beta2);
    const float eps = static_cast<float>(config_.epsilon * std::sqrt(c2));
    std::vector<const void*> grads;
    grad.for_each([&](const char*, const auto& t) { grads.push_back(&t); });
    std::size_t k = 0;
    params.for_each([&](const char*, auto& t) {
      using Tensor = std::remove_reference_t<decltype(t)>;
      const auto& g = *static_cast<const Tensor*>(grads[k]);
      auto& m = m_[k];
      auto& v = v_[k];
      for (std::size_t i = 0; i < t.values.size(); ++i) {
        const float gi = static_cast<float>(g.values[i]);
        m[i] = b1 * m[i] + (1.0f - b1) * gi;
        v[i] = b2 * v[i] + (1.0f - b2) * gi * gi;
        t.values[i] -= static_cast<typename decltype(t.values)::value_type>(lr * m[i] / (std::sqrt(v[i]) + eps));
      }
      ++k;
    });
  }

 private:
  AdamConfig config_;
  std::int64_t step_ = 0;
  std::vector<std::vector<float>> m_, v_;
};

}  // namespace phantasmagoria::nn
