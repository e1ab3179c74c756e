#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "phantasmagoria/image.hpp"

namespace phantasmagoria {

enum class DataSource { textures, natural };

std::string_view to_string(DataSource source);
DataSource parse_data_source(std::string_view name);

inline constexpr int kCropSize = 32;

struct ImageStore {
  DataSource source = DataSource::textures;
  int crop_size = kCropSize;
  int channels = 1;
  std::uint64_t seed = 0;
  std::vector<std::string> items;  // origin of each image (file path or archive:index)
  std::vector<Image> images;       // decoded, already converted to `channels`
  int rejected_small = 0;          // images under crop_size on a side
  int rejected_undecodable = 0;

  std::size_t size() const { return images.size(); }
};

/// Load every decodable PNG/JPEG in `dir` (non-recursive, sorted by name),
/// or, when the directory holds `*.bin` files, the natural-image corpus in
/// its binary batch format. Throws on an empty directory or when most files
/// fail to decode.
ImageStore load_store(const std::filesystem::path& dir, DataSource source, int channels, std::uint64_t seed);

/// Records of 1 label byte followed by 32x32 R, G and B planes.
std::vector<Image> read_natural_batch(const std::filesystem::path& file);

/// `n` crops of crop_size x crop_size: uniform image choice, uniform offset.
std::vector<Image> sample_batch(const ImageStore& store, int n, std::mt19937_64& rng);

/// Independent reproducible stream for one consumer of a store.
std::mt19937_64 batch_stream(const ImageStore& store, std::uint64_t consumer = 0);

/// Procedural texture generator used in place of an external texture corpus:
/// oriented gratings, checkerboards, band-limited noise, dots and stripes.
Image synthesize_texture(int size, int channels, std::mt19937_64& rng);

/// Write `count` textures as PNGs named texture_0000.png... into `dir`.
void write_texture_corpus(const std::filesystem::path& dir, int count, int size, int channels,
                          std::uint64_t seed);

/// Clean 128x128x3 training images for the restoration solver: store crops
/// upscaled to stimulus resolution.
std::vector<Image> restoration_corpus(const ImageStore& store, int count, std::mt19937_64& rng);

}  // namespace phantasmagoria
