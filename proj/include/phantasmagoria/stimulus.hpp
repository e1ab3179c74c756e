#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "phantasmagoria/image.hpp"

namespace phantasmagoria {

/// Side length of the stimuli seen by the visual task solvers.
inline constexpr int kStimulusSize = 128;
/// Generator resolution; inducers are upscaled by kStimulusSize / kInducerSize.
inline constexpr int kInducerSize = 32;
inline constexpr int kUpscaleFactor = kStimulusSize / kInducerSize;

enum class TargetShape { square, ring, bar, grating };

std::string_view to_string(TargetShape shape);
TargetShape parse_target_shape(std::string_view name);

struct TargetSpec {
  TargetShape shape = TargetShape::square;
  int width = 28;   // bounding box at stimulus resolution
  int height = 28;
  int hole = 0;     // ring inner diameter
  std::vector<double> value{0.5};  // one entry per channel
  double orientation_deg = 0.0;    // gratings: 0, 45 or 90
  double frequency = 0.25;         // gratings: cycles per pixel
  double contrast = 0.0;           // gratings: Michelson contrast of the pattern

  int channels() const { return static_cast<int>(value.size()); }

  /// Preset geometries used by the CLI recipes.
  static TargetSpec square(std::vector<double> value);
  static TargetSpec ring(std::vector<double> value);
  static TargetSpec bar(std::vector<double> value);
  static TargetSpec grating(double value, double orientation_deg, double contrast);

  /// Throws std::invalid_argument when the spec cannot produce a valid patch.
  void validate() const;
};

struct TargetPatch {
  Image pixels;  // transparent pixels hold 0 and are never pasted
  Mask coverage;
  Mask central;  // scoring area, a subset of coverage
};

/// Fraction of the target's linear extent kept for the central scoring area.
inline constexpr double kDefaultCentralFraction = 0.5;

/// Build the target patch. Rings keep the hole transparent; for rings the
/// central area is the middle `central_fraction` of the radial band.
TargetPatch make_target(const TargetSpec& spec, double central_fraction = kDefaultCentralFraction);

struct PixelPos {
  int x = 0;  // left column of the bounding box
  int y = 0;  // top row of the bounding box
};

struct TargetPlacement {
  PixelPos left;
  PixelPos right;
};

/// Mirror-symmetric placement with target centres at columns 34/94 of a
/// 128-wide stimulus (scaled proportionally for other sizes), vertically centred.
TargetPlacement default_placement(const TargetSpec& spec, int stimulus_size = kStimulusSize);

struct Stimulus {
  Image image;
  Mask left_mask;
  Mask right_mask;
  Mask central_left;
  Mask central_right;
  int offset = 0;  // right target column minus left target column
};

/// Paste two identical targets over `inducer`. Target pixels overwrite the
/// inducer bit-exactly.
Stimulus composite(const Image& inducer, const TargetSpec& spec, const TargetPlacement& placement,
                   double central_fraction = kDefaultCentralFraction);

/// Left half white, right half black, identical gray squares centred in each half.
Stimulus canonical_contrast_stimulus(double gray);

/// Horizontal mirror of a stimulus; the left and right roles swap.
Stimulus mirror(const Stimulus& stimulus);

Image upscale_nearest(const Image& image, int factor);
/// Keep every `factor`-th pixel starting at the origin.
Image subsample(const Image& image, int factor);
/// Adjoint of upscale_nearest: sums each factor x factor block.
Image block_sum(const Image& image, int factor);

/// Zero out `grad` over both target masks (pasted pixels do not depend on the inducer).
void clear_target_pixels(Image& grad, const Stimulus& stimulus);

}  // namespace phantasmagoria
