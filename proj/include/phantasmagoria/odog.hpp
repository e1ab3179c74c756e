#pragma once

#include <filesystem>
#include <memory>
#include <vector>

#include "phantasmagoria/image.hpp"

namespace phantasmagoria {

/// Oriented difference-of-Gaussians brightness model.
struct OdogConfig {
  int orientations = 6;         // spaced 180/orientations degrees apart
  int scales = 7;               // octave-spaced centre space constants
  double sigma_min_deg = 3.0 / 64.0;
  double degrees_per_image = 3.0;  // visual angle subtended by the image width
  double surround_ratio = 2.0;  // surround / centre space constant along the orientation
  double weight_slope = 0.1;    // scale weight ~ (centre frequency)^slope
  int image_size = 128;
  double rms_epsilon = 1e-6;

  int canvas() const { return 2 * image_size; }
  double pixels_per_degree() const { return image_size / degrees_per_image; }
  /// Centre space constant of scale k in pixels.
  double sigma_pixels(int k) const;
  double orientation_deg(int o) const { return 180.0 * o / orientations; }
  /// Normalised so the finest scale has weight 1.
  double scale_weight(int k) const;
};

/// The DoG filters on a canvas x canvas grid, origin at (0,0) with cyclic
/// offsets, each truncated to |dx|,|dy| < canvas/2 and built from Gaussians
/// normalised over that support. filters[o * scales + k].
struct OdogFilterBank {
  OdogConfig config;
  std::vector<std::vector<double>> filters;

  static OdogFilterBank build(const OdogConfig& config);
  /// Per-orientation weighted sum over scales.
  std::vector<double> combined(int orientation) const;

  void save(const std::filesystem::path& path) const;
  static OdogFilterBank load(const std::filesystem::path& path);
  /// Load from `dir` when a matching cache file exists, else build and store it.
  static OdogFilterBank cached(const OdogConfig& config, const std::filesystem::path& dir);
  static std::filesystem::path cache_name(const OdogConfig& config);
};

/// Per-orientation intermediate values kept for the pullback.
struct OdogTrace {
  std::vector<std::vector<double>> filtered;  // R_o over the image crop
  std::vector<double> rms;
};

class OdogModel {
 public:
  explicit OdogModel(OdogFilterBank bank);
  ~OdogModel();
  OdogModel(const OdogModel&) = delete;
  OdogModel& operator=(const OdogModel&) = delete;

  const OdogConfig& config() const;
  const OdogFilterBank& bank() const;

  /// Linear stage: the mean-subtracted image filtered by orientation `o`'s
  /// combined kernel, over the image crop.
  std::vector<double> filter(const Image& gray, int o) const;

  /// Sum over orientations of R_o / (rms(R_o) + eps). Single-channel input only.
  Image respond(const Image& gray, OdogTrace* trace = nullptr) const;
  /// Vector-Jacobian product: d<dresponse, respond(x)>/dx.
  Image pullback(const OdogTrace& trace, const Image& dresponse) const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace phantasmagoria
