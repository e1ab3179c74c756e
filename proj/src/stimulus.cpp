#include "phantasmagoria/stimulus.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace phantasmagoria {

std::string_view to_string(TargetShape shape) {
  switch (shape) {
    case TargetShape::square: return "square";
    case TargetShape::ring: return "ring";
    case TargetShape::bar: return "bar";
    case TargetShape::grating: return "grating";
  }
  return "unknown";
}

TargetShape parse_target_shape(std::string_view name) {
  if (name == "square") return TargetShape::square;
  if (name == "ring") return TargetShape::ring;
  if (name == "bar") return TargetShape::bar;
  if (name == "grating") return TargetShape::grating;
  throw std::invalid_argument("unknown target shape '" + std::string(name) + "'");
}

TargetSpec TargetSpec::square(std::vector<double> value) {
  TargetSpec s;
  s.shape = TargetShape::square;
  s.width = s.height = 28;
  s.value = std::move(value);
  return s;
}

TargetSpec TargetSpec::ring(std::vector<double> value) {
  TargetSpec s;
  s.shape = TargetShape::ring;
  s.width = s.height = 28;
  s.hole = 14;
  s.value = std::move(value);
  return s;
}

TargetSpec TargetSpec::bar(std::vector<double> value) {
  TargetSpec s;
  s.shape = TargetShape::bar;
  s.width = 12;
  s.height = 80;
  s.value = std::move(value);
  return s;
}

TargetSpec TargetSpec::grating(double value, double orientation_deg, double contrast) {
  TargetSpec s;
  s.shape = TargetShape::grating;
  s.width = s.height = 28;
  s.value = {value};
  s.orientation_deg = orientation_deg;
  s.frequency = 0.25;
  s.contrast = contrast;
  return s;
}

void TargetSpec::validate() const {
  if (width <= 0 || height <= 0) throw std::invalid_argument("target size must be positive");
  if (value.size() != 1 && value.size() != 3)
    throw std::invalid_argument("target value must have 1 or 3 channels");
  for (double v : value)
    if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument("target value outside [0,1]");
  switch (shape) {
    case TargetShape::square:
    case TargetShape::bar:
      break;
    case TargetShape::ring:
      if (width != height) throw std::invalid_argument("ring targets must be square");
      if (hole <= 0 || hole >= width)
        throw std::invalid_argument("ring hole must be inside the outer diameter");
      break;
    case TargetShape::grating: {
      if (orientation_deg != 0.0 && orientation_deg != 45.0 && orientation_deg != 90.0)
        throw std::invalid_argument("grating orientation must be 0, 45 or 90 degrees");
      if (!(frequency > 0.0)) throw std::invalid_argument("grating frequency must be positive");
      if (!(contrast >= 0.0 && contrast <= 1.0))
        throw std::invalid_argument("grating contrast must lie in [0,1]");
      for (double v : value)
        if (v * (1.0 + contrast) > 1.0)
          throw std::invalid_argument("grating excursion leaves [0,1]");
      break;
    }
  }
}

TargetPatch make_target(const TargetSpec& spec, double central_fraction) {
  spec.validate();
  if (!(central_fraction > 0.0 && central_fraction <= 1.0))
    throw std::invalid_argument("central fraction must lie in (0,1]");

  const int w = spec.width;
  const int h = spec.height;
  const int channels = spec.channels();
  TargetPatch patch{Image(h, w, channels), Mask(h, w), Mask(h, w)};

  if (spec.shape == TargetShape::ring) {
    const double cx = (w - 1) / 2.0;
    const double cy = (h - 1) / 2.0;
    const double outer = w / 2.0;
    const double inner = spec.hole / 2.0;
    const double trim = (1.0 - central_fraction) / 2.0 * (outer - inner);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const double r = std::hypot(x - cx, y - cy);
        if (r > outer || r < inner) continue;
        patch.coverage.set(y, x, true);
        if (r >= inner + trim && r <= outer - trim) patch.central.set(y, x, true);
        for (int c = 0; c < channels; ++c) patch.pixels.at(y, x, c) = spec.value[c];
      }
    return patch;
  }

  const int cw = std::max(1, static_cast<int>(std::lround(central_fraction * w)));
  const int ch = std::max(1, static_cast<int>(std::lround(central_fraction * h)));
  const int cx0 = (w - cw) / 2;
  const int cy0 = (h - ch) / 2;
  const double theta = spec.orientation_deg * std::numbers::pi / 180.0;
  const double ct = std::cos(theta);
  const double st = std::sin(theta);

  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      patch.coverage.set(y, x, true);
      if (x >= cx0 && x < cx0 + cw && y >= cy0 && y < cy0 + ch) patch.central.set(y, x, true);
      double modulation = 1.0;
      if (spec.shape == TargetShape::grating && spec.contrast > 0.0) {
        // 0 and 90 degrees use exact axis-aligned phases so sampled extrema are exact.
        const double u = spec.orientation_deg == 0.0    ? x
                         : spec.orientation_deg == 90.0 ? y
                                                        : x * ct + y * st;
        modulation = 1.0 + spec.contrast * std::sin(2.0 * std::numbers::pi * spec.frequency * u);
      }
      for (int c = 0; c < channels; ++c) patch.pixels.at(y, x, c) = spec.value[c] * modulation;
    }
  return patch;
}

TargetPlacement default_placement(const TargetSpec& spec, int stimulus_size) {
  const int centre_left = static_cast<int>(std::lround(stimulus_size * 34.0 / 128.0));
  const int left_x = centre_left - spec.width / 2;
  const int right_x = stimulus_size - left_x - spec.width;
  const int y = stimulus_size / 2 - spec.height / 2;
  return {{left_x, y}, {right_x, y}};
}

Stimulus composite(const Image& inducer, const TargetSpec& spec, const TargetPlacement& placement,
                   double central_fraction) {
  const TargetPatch patch = make_target(spec, central_fraction);
  if (inducer.channels() != spec.channels())
    throw std::invalid_argument("inducer and target channel counts differ");
  const int H = inducer.height();
  const int W = inducer.width();
  auto fits = [&](PixelPos p) {
    return p.x >= 0 && p.y >= 0 && p.x + spec.width <= W && p.y + spec.height <= H;
  };
  if (!fits(placement.left) || !fits(placement.right))
    throw std::out_of_range("target placement falls outside the inducer");
  if (placement.left.y != placement.right.y ||
      placement.left.x + spec.width + placement.right.x != W)
    throw std::invalid_argument("target placement is not mirror-symmetric about the midline");

  Stimulus s{inducer, Mask(H, W), Mask(H, W), Mask(H, W), Mask(H, W),
             placement.right.x - placement.left.x};
  auto paste = [&](PixelPos p, Mask& region, Mask& central) {
    for (int y = 0; y < spec.height; ++y)
      for (int x = 0; x < spec.width; ++x) {
        if (!patch.coverage.at(y, x)) continue;
        region.set(p.y + y, p.x + x, true);
        if (patch.central.at(y, x)) central.set(p.y + y, p.x + x, true);
        for (int c = 0; c < s.image.channels(); ++c)
          s.image.at(p.y + y, p.x + x, c) = patch.pixels.at(y, x, c);
      }
  };
  paste(placement.left, s.left_mask, s.central_left);
  paste(placement.right, s.right_mask, s.central_right);
  if (!s.left_mask.disjoint(s.right_mask)) throw std::invalid_argument("target regions overlap");
  return s;
}

Stimulus canonical_contrast_stimulus(double gray) {
  if (!(gray > 0.0 && gray < 1.0)) throw std::invalid_argument("gray must lie in (0,1)");
  Image background(kStimulusSize, kStimulusSize, 1);
  for (int y = 0; y < kStimulusSize; ++y)
    for (int x = 0; x < kStimulusSize / 2; ++x) background.at(y, x) = 1.0;
  const TargetSpec spec = TargetSpec::square({gray});
  const int left_x = kStimulusSize / 4 - spec.width / 2;
  const int y = kStimulusSize / 2 - spec.height / 2;
  return composite(background, spec,
                   {{left_x, y}, {kStimulusSize - left_x - spec.width, y}});
}

Stimulus mirror(const Stimulus& s) {
  return {mirror_horizontal(s.image), mirror_horizontal(s.right_mask),
          mirror_horizontal(s.left_mask), mirror_horizontal(s.central_right),
          mirror_horizontal(s.central_left), s.offset};
}

Image upscale_nearest(const Image& image, int factor) {
  if (factor < 1) throw std::invalid_argument("upscale factor must be >= 1");
  Image out(image.height() * factor, image.width() * factor, image.channels());
  for (int y = 0; y < out.height(); ++y)
    for (int x = 0; x < out.width(); ++x)
      for (int c = 0; c < image.channels(); ++c)
        out.at(y, x, c) = image.at(y / factor, x / factor, c);
  return out;
}

Image subsample(const Image& image, int factor) {
  if (factor < 1) throw std::invalid_argument("subsample factor must be >= 1");
  if (image.height() % factor != 0 || image.width() % factor != 0)
    throw std::invalid_argument("image size is not a multiple of the subsample factor");
  Image out(image.height() / factor, image.width() / factor, image.channels());
  for (int y = 0; y < out.height(); ++y)
    for (int x = 0; x < out.width(); ++x)
      for (int c = 0; c < image.channels(); ++c)
        out.at(y, x, c) = image.at(y * factor, x * factor, c);
  return out;
}

Image block_sum(const Image& image, int factor) {
  if (factor < 1) throw std::invalid_argument("block factor must be >= 1");
  if (image.height() % factor != 0 || image.width() % factor != 0)
    throw std::invalid_argument("image size is not a multiple of the block factor");
  Image out(image.height() / factor, image.width() / factor, image.channels(), 0.0);
  for (int y = 0; y < image.height(); ++y)
    for (int x = 0; x < image.width(); ++x)
      for (int c = 0; c < image.channels(); ++c)
        out.at(y / factor, x / factor, c) += image.at(y, x, c);
  return out;
}

void clear_target_pixels(Image& grad, const Stimulus& stimulus) {
  for (int y = 0; y < grad.height(); ++y)
    for (int x = 0; x < grad.width(); ++x)
      if (stimulus.left_mask.at(y, x) || stimulus.right_mask.at(y, x))
        for (int c = 0; c < grad.channels(); ++c) grad.at(y, x, c) = 0.0;
}

}  // namespace phantasmagoria
