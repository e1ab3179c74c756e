#include "phantasmagoria/image.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace phantasmagoria {

namespace {
void check_dims(int height, int width, int channels) {
  if (height <= 0 || width <= 0) throw std::invalid_argument("image dimensions must be positive");
  if (channels != 1 && channels != 3)
    throw std::invalid_argument("image channels must be 1 or 3, got " + std::to_string(channels));
}
}  // namespace

Image::Image(int height, int width, int channels, double fill)
    : height_(height), width_(width), channels_(channels) {
  check_dims(height, width, channels);
  data_.assign(static_cast<std::size_t>(height) * width * channels, fill);
}

Image::Image(int height, int width, int channels, std::vector<double> data)
    : height_(height), width_(width), channels_(channels), data_(std::move(data)) {
  check_dims(height, width, channels);
  if (data_.size() != static_cast<std::size_t>(height) * width * channels)
    throw std::invalid_argument("image data size does not match dimensions");
}

bool Image::is_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

bool Image::is_unit_range() const {
  return std::all_of(data_.begin(), data_.end(),
                     [](double v) { return std::isfinite(v) && v >= 0.0 && v <= 1.0; });
}

Image Image::channel(int c) const {
  if (c < 0 || c >= channels_) throw std::out_of_range("channel index out of range");
  Image out(height_, width_, 1);
  for (int y = 0; y < height_; ++y)
    for (int x = 0; x < width_; ++x) out.at(y, x) = at(y, x, c);
  return out;
}

Mask::Mask(int height, int width, bool fill) : height_(height), width_(width) {
  if (height <= 0 || width <= 0) throw std::invalid_argument("mask dimensions must be positive");
  bits_.assign(static_cast<std::size_t>(height) * width, fill ? 1 : 0);
}

std::size_t Mask::count() const {
  return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

bool Mask::disjoint(const Mask& other) const {
  if (height_ != other.height_ || width_ != other.width_)
    throw std::invalid_argument("mask shapes differ");
  for (std::size_t i = 0; i < bits_.size(); ++i)
    if (bits_[i] && other.bits_[i]) return false;
  return true;
}

Mask Mask::shifted(int dx) const {
  Mask out(height_, width_);
  for (int y = 0; y < height_; ++y)
    for (int x = 0; x < width_; ++x) {
      const int nx = x + dx;
      if (at(y, x) && nx >= 0 && nx < width_) out.set(y, nx, true);
    }
  return out;
}

Image to_luminance(const Image& rgb) {
  if (rgb.channels() == 1) return rgb;
  Image out(rgb.height(), rgb.width(), 1);
  for (int y = 0; y < rgb.height(); ++y)
    for (int x = 0; x < rgb.width(); ++x)
      out.at(y, x) = 0.299 * rgb.at(y, x, 0) + 0.587 * rgb.at(y, x, 1) + 0.114 * rgb.at(y, x, 2);
  return out;
}

Image replicate_to_rgb(const Image& gray) {
  if (gray.channels() != 1) throw std::invalid_argument("replicate_to_rgb expects 1 channel");
  Image out(gray.height(), gray.width(), 3);
  for (int y = 0; y < gray.height(); ++y)
    for (int x = 0; x < gray.width(); ++x)
      for (int c = 0; c < 3; ++c) out.at(y, x, c) = gray.at(y, x);
  return out;
}

Image average_channels(const Image& image) {
  if (image.channels() == 1) return image;
  Image out(image.height(), image.width(), 1);
  const double inv = 1.0 / image.channels();
  for (int y = 0; y < image.height(); ++y)
    for (int x = 0; x < image.width(); ++x) {
      double s = 0.0;
      for (int c = 0; c < image.channels(); ++c) s += image.at(y, x, c);
      out.at(y, x) = s * inv;
    }
  return out;
}

Image mirror_horizontal(const Image& image) {
  Image out(image.height(), image.width(), image.channels());
  const int w = image.width();
  for (int y = 0; y < image.height(); ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < image.channels(); ++c) out.at(y, w - 1 - x, c) = image.at(y, x, c);
  return out;
}

Mask mirror_horizontal(const Mask& mask) {
  Mask out(mask.height(), mask.width());
  const int w = mask.width();
  for (int y = 0; y < mask.height(); ++y)
    for (int x = 0; x < w; ++x) out.set(y, w - 1 - x, mask.at(y, x));
  return out;
}

}  // namespace phantasmagoria
