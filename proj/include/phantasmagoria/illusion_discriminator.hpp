#pragma once

#include <functional>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "phantasmagoria/image.hpp"
#include "phantasmagoria/networks.hpp"
#include "phantasmagoria/odog.hpp"
#include "phantasmagoria/stimulus.hpp"

namespace phantasmagoria {

// ---------------------------------------------------------------------------
// Visual task solvers

/// Maps d(loss)/d(response) to d(loss)/d(stimulus).
using Pullback = std::function<Image(const Image&)>;

struct VtsEvaluation {
  Image response;
  Pullback pullback;
};

class VisualTaskSolver {
 public:
  virtual ~VisualTaskSolver() = default;
  virtual std::string name() const = 0;
  /// Channels of the response for a stimulus with `stimulus_channels`.
  virtual int response_channels(int stimulus_channels) const = 0;
  virtual Image respond(const Image& stimulus) const = 0;
  virtual VtsEvaluation evaluate(const Image& stimulus) const = 0;
};

/// Response equals the stimulus. Reference solver for the quantifier checks.
class IdentityVts final : public VisualTaskSolver {
 public:
  std::string name() const override { return "identity"; }
  int response_channels(int c) const override { return c; }
  Image respond(const Image& stimulus) const override { return stimulus; }
  VtsEvaluation evaluate(const Image& stimulus) const override;
};

/// RestoreNet forward pass, evaluated in double precision. Grayscale stimuli
/// enter as three replicated channels and the response is averaged back.
class RestoreNetVts final : public VisualTaskSolver {
 public:
  explicit RestoreNetVts(const RestoreNetParams<float>& params);
  std::string name() const override { return "restorenet"; }
  int response_channels(int c) const override { return c; }
  Image respond(const Image& stimulus) const override;
  VtsEvaluation evaluate(const Image& stimulus) const override;

  const RestoreNetParams<double>& params() const { return params_; }

 private:
  RestoreNetParams<double> params_;
};

/// ODOG brightness model on single-channel stimuli.
class OdogVts final : public VisualTaskSolver {
 public:
  explicit OdogVts(std::shared_ptr<const OdogModel> model);
  std::string name() const override { return "odog"; }
  int response_channels(int) const override { return 1; }
  Image respond(const Image& stimulus) const override;
  VtsEvaluation evaluate(const Image& stimulus) const override;

  const OdogModel& model() const { return *model_; }

 private:
  std::shared_ptr<const OdogModel> model_;
};

// ---------------------------------------------------------------------------
// Restoration training for the RestoreNet solver

struct Degradation {
  double blur_sigma = 1.0;  // 5x5 Gaussian support
  int blur_radius = 2;
  double noise_sigma = 0.1;
};

/// Gaussian blur (edge-replicated), additive Gaussian noise, clip to [0,1].
Image degrade(const Image& clean, const Degradation& d, std::mt19937_64& rng);

struct RestorationConfig {
  int epochs = 20;
  int batch_size = 8;
  double learning_rate = 1e-2;
  std::uint64_t seed = 7;
};

struct RestorationResult {
  RestoreNetParams<float> params;
  std::vector<double> epoch_loss;  // mean training MSE per epoch
};

/// Fit RestoreNet to map degrade(x) back to x under mean squared error.
/// Degradations are drawn fresh every epoch.
RestorationResult train_vts_restoration(const std::vector<Image>& clean, const Degradation& degradation,
                                        const RestorationConfig& config,
                                        const RestoreNetParams<float>* init = nullptr);

double mean_squared_error(const Image& a, const Image& b);

// ---------------------------------------------------------------------------
// Perceptual quantifiers

enum class PqKind { lightness, color, michelson };
enum class PqSign { right_minus_left, left_minus_right };

std::string_view to_string(PqKind kind);
std::string_view to_string(PqSign sign);
PqKind parse_pq_kind(std::string_view s);
PqSign parse_pq_sign(std::string_view s);

struct PqConfig {
  PqKind kind = PqKind::lightness;
  PqSign sign = PqSign::right_minus_left;
  std::vector<double> channel_weights;  // colour only: +1 maximise, -1 minimise, 0 free

  void validate() const;
};

struct PqResult {
  double value = 0.0;
  Image gradient;  // d value / d response
};

/// (max - min) / (max + min) over a non-negative patch.
double michelson_contrast(const std::vector<double>& patch);

double pq_lightness(const Image& response, const Stimulus& s, PqSign sign);
double pq_color(const Image& response, const Stimulus& s, const PqConfig& config);
double pq_michelson(const Image& response, const Stimulus& s, PqSign sign);

/// Value and gradient of the configured quantifier.
PqResult evaluate_pq(const Image& response, const Stimulus& s, const PqConfig& config);

/// The illusion discriminator: a solver followed by a quantifier.
struct IllusionScore {
  double pq = 0.0;
  Image stimulus_gradient;  // d pq / d stimulus (target pixels included)
};

IllusionScore score_illusion(const VisualTaskSolver& vts, const PqConfig& config, const Stimulus& s,
                             bool with_gradient);

}  // namespace phantasmagoria
