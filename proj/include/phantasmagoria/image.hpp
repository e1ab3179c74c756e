#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace phantasmagoria {

/// Dense H x W x C image with interleaved channels.
///
/// Pixel intensities of constructed stimuli live in [0,1]; model responses
/// (ODOG, network activations) reuse the same container without that bound,
/// so the range is checked with `is_unit_range()` where it matters rather
/// than enforced on every write.
class Image {
 public:
  Image() = default;
  Image(int height, int width, int channels, double fill = 0.0);
  Image(int height, int width, int channels, std::vector<double> data);

  int height() const { return height_; }
  int width() const { return width_; }
  int channels() const { return channels_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& at(int y, int x, int c = 0) {
    return data_[(static_cast<std::size_t>(y) * width_ + x) * channels_ + c];
  }
  double at(int y, int x, int c = 0) const {
    return data_[(static_cast<std::size_t>(y) * width_ + x) * channels_ + c];
  }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }

  bool same_shape(const Image& other) const {
    return height_ == other.height_ && width_ == other.width_ && channels_ == other.channels_;
  }

  bool is_finite() const;
  bool is_unit_range() const;

  /// Single channel `c` as a 1-channel image.
  Image channel(int c) const;

  friend bool operator==(const Image&, const Image&) = default;

 private:
  int height_ = 0;
  int width_ = 0;
  int channels_ = 0;
  std::vector<double> data_;
};

/// Binary region mask with the same spatial layout as an Image.
class Mask {
 public:
  Mask() = default;
  Mask(int height, int width, bool fill = false);

  int height() const { return height_; }
  int width() const { return width_; }

  bool at(int y, int x) const { return bits_[static_cast<std::size_t>(y) * width_ + x] != 0; }
  void set(int y, int x, bool v) { bits_[static_cast<std::size_t>(y) * width_ + x] = v ? 1 : 0; }

  std::size_t count() const;
  bool empty() const { return count() == 0; }
  bool disjoint(const Mask& other) const;

  /// Mask shifted right by `dx` columns (negative shifts left); pixels pushed
  /// outside are dropped.
  Mask shifted(int dx) const;

  friend bool operator==(const Mask&, const Mask&) = default;

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<std::uint8_t> bits_;
};

/// 0.299 R + 0.587 G + 0.114 B; 1-channel input is returned unchanged.
Image to_luminance(const Image& rgb);

/// Replicate a 1-channel image into three identical channels.
Image replicate_to_rgb(const Image& gray);

/// Average the channels of an image into one.
Image average_channels(const Image& image);

/// Left-right mirror of the full image.
Image mirror_horizontal(const Image& image);
Mask mirror_horizontal(const Mask& mask);

}  // namespace phantasmagoria
