#include "phantasmagoria/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <numbers>
#include <stdexcept>

#include "phantasmagoria/png_io.hpp"
#include "phantasmagoria/stimulus.hpp"

namespace phantasmagoria {

namespace fs = std::filesystem;

std::string_view to_string(DataSource source) {
  return source == DataSource::textures ? "textures" : "natural";
}

DataSource parse_data_source(std::string_view name) {
  if (name == "textures") return DataSource::textures;
  if (name == "natural") return DataSource::natural;
  throw std::invalid_argument("unknown dataset '" + std::string(name) + "' (expected textures or natural)");
}

namespace {

bool has_image_extension(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

Image convert_channels(const Image& im, int channels) {
  if (im.channels() == channels) return im;
  return channels == 1 ? to_luminance(im) : replicate_to_rgb(im);
}

std::vector<fs::path> sorted_entries(const fs::path& dir) {
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file()) out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

std::vector<Image> read_natural_batch(const fs::path& file) {
  constexpr std::size_t kPlane = 32 * 32;
  constexpr std::size_t kRecord = 1 + 3 * kPlane;
  const auto bytes = read_file_bytes(file);
  if (bytes.empty() || bytes.size() % kRecord != 0)
    throw std::runtime_error(file.string() + " is not a 32x32 RGB batch file (size " +
                             std::to_string(bytes.size()) + ")");
  std::vector<Image> out;
  out.reserve(bytes.size() / kRecord);
  for (std::size_t r = 0; r < bytes.size(); r += kRecord) {
    Image im(32, 32, 3);
    for (int c = 0; c < 3; ++c)
      for (std::size_t i = 0; i < kPlane; ++i)
        im.at(static_cast<int>(i / 32), static_cast<int>(i % 32), c) = bytes[r + 1 + c * kPlane + i] / 255.0;
    out.push_back(std::move(im));
  }
  return out;
}

ImageStore load_store(const fs::path& dir, DataSource source, int channels, std::uint64_t seed) {
  if (channels != 1 && channels != 3) throw std::invalid_argument("channels must be 1 or 3");
  if (!fs::is_directory(dir)) throw std::runtime_error("dataset directory " + dir.string() + " does not exist");

  ImageStore store;
  store.source = source;
  store.channels = channels;
  store.seed = seed;

  const auto entries = sorted_entries(dir);
  std::vector<fs::path> batches, images;
  for (const auto& p : entries) {
    if (p.extension() == ".bin") batches.push_back(p);
    else if (has_image_extension(p)) images.push_back(p);
  }

  auto accept = [&](Image im, std::string origin) {
    if (im.height() < store.crop_size || im.width() < store.crop_size) {
      ++store.rejected_small;
      return;
    }
    store.images.push_back(convert_channels(im, channels));
    store.items.push_back(std::move(origin));
  };

  if (!batches.empty()) {
    for (const auto& b : batches) {
      auto decoded = read_natural_batch(b);
      for (std::size_t i = 0; i < decoded.size(); ++i)
        accept(std::move(decoded[i]), b.filename().string() + ":" + std::to_string(i));
    }
  } else {
    if (images.empty()) throw std::runtime_error("no images found in " + dir.string());
    for (const auto& p : images) {
      try {
        accept(read_image(p), p.string());
      } catch (const std::exception&) {
        ++store.rejected_undecodable;
      }
    }
    if (2 * store.rejected_undecodable > static_cast<int>(images.size()))
      throw std::runtime_error("most files in " + dir.string() + " could not be decoded (" +
                               std::to_string(store.rejected_undecodable) + " of " +
                               std::to_string(images.size()) + ")");
  }
  if (store.rejected_small > 0)
    std::cerr << "warning: skipped " << store.rejected_small << " image(s) smaller than " << store.crop_size
              << " pixels in " << dir.string() << "\n";
  if (store.images.empty()) throw std::runtime_error("no usable images in " + dir.string());
  return store;
}

std::vector<Image> sample_batch(const ImageStore& store, int n, std::mt19937_64& rng) {
  if (store.images.empty()) throw std::invalid_argument("cannot sample from an empty store");
  const int s = store.crop_size;
  std::uniform_int_distribution<std::size_t> pick(0, store.images.size() - 1);
  std::vector<Image> out;
  out.reserve(n);
  for (int k = 0; k < n; ++k) {
    const Image& src = store.images[pick(rng)];
    const int oy = std::uniform_int_distribution<int>(0, src.height() - s)(rng);
    const int ox = std::uniform_int_distribution<int>(0, src.width() - s)(rng);
    Image crop(s, s, src.channels());
    for (int y = 0; y < s; ++y)
      for (int x = 0; x < s; ++x)
        for (int c = 0; c < src.channels(); ++c) crop.at(y, x, c) = src.at(oy + y, ox + x, c);
    out.push_back(std::move(crop));
  }
  return out;
}

std::mt19937_64 batch_stream(const ImageStore& store, std::uint64_t consumer) {
  std::seed_seq seq{static_cast<std::uint32_t>(store.seed), static_cast<std::uint32_t>(store.seed >> 32),
                    static_cast<std::uint32_t>(consumer), static_cast<std::uint32_t>(store.source)};
  return std::mt19937_64(seq);
}

Image synthesize_texture(int size, int channels, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> g(0.0, 1.0);
  const double pi = std::numbers::pi;
  const int kind = std::uniform_int_distribution<int>(0, 4)(rng);
  const double lo = 0.05 + 0.4 * u(rng);
  const double hi = std::min(1.0, lo + 0.2 + 0.55 * u(rng));

  Image pattern(size, size, 1);
  switch (kind) {
    case 0: {  // oriented grating
      const double theta = pi * u(rng);
      const double period = 3.0 + 13.0 * u(rng);
      const double phase = 2 * pi * u(rng);
      for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x)
          pattern.at(y, x) = 0.5 + 0.5 * std::sin(2 * pi * (x * std::cos(theta) + y * std::sin(theta)) / period + phase);
      break;
    }
    case 1: {  // checkerboard
      const int cell = std::uniform_int_distribution<int>(2, 10)(rng);
      const int oy = std::uniform_int_distribution<int>(0, cell - 1)(rng);
      const int ox = std::uniform_int_distribution<int>(0, cell - 1)(rng);
      for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) pattern.at(y, x) = (((y + oy) / cell + (x + ox) / cell) % 2) ? 1.0 : 0.0;
      break;
    }
    case 2: {  // band-limited noise: sum of random plane waves
      const int waves = 12;
      const double f0 = 1.0 / (3.0 + 10.0 * u(rng));
      for (int k = 0; k < waves; ++k) {
        const double theta = 2 * pi * u(rng);
        const double f = f0 * (0.7 + 0.6 * u(rng));
        const double ph = 2 * pi * u(rng);
        for (int y = 0; y < size; ++y)
          for (int x = 0; x < size; ++x)
            pattern.at(y, x) += std::cos(2 * pi * f * (x * std::cos(theta) + y * std::sin(theta)) + ph);
      }
      double mn = 1e9, mx = -1e9;
      for (double v : pattern.data()) mn = std::min(mn, v), mx = std::max(mx, v);
      for (double& v : pattern.data()) v = (v - mn) / std::max(mx - mn, 1e-12);
      break;
    }
    case 3: {  // dots on a lattice
      const double spacing = 5.0 + 9.0 * u(rng);
      const double radius = spacing * (0.2 + 0.25 * u(rng));
      const double jx = spacing * u(rng), jy = spacing * u(rng);
      for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
          const double dx = std::fmod(x + jx, spacing) - spacing / 2;
          const double dy = std::fmod(y + jy, spacing) - spacing / 2;
          pattern.at(y, x) = std::hypot(dx, dy) < radius ? 1.0 : 0.0;
        }
      break;
    }
    default: {  // irregular stripes
      const bool vertical = u(rng) < 0.5;
      std::vector<double> band(size);
      double level = u(rng);
      for (int i = 0; i < size; ++i) {
        if (u(rng) < 0.2) level = u(rng);
        band[i] = level;
      }
      for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) pattern.at(y, x) = band[vertical ? x : y];
      break;
    }
  }

  const double noise = 0.02 + 0.06 * u(rng);
  Image out(size, size, channels);
  std::vector<double> tint(channels, 1.0);
  if (channels == 3)
    for (auto& t : tint) t = 0.6 + 0.4 * u(rng);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      const double base = lo + (hi - lo) * pattern.at(y, x);
      for (int c = 0; c < channels; ++c)
        out.at(y, x, c) = std::clamp(base * tint[c] + noise * g(rng), 0.0, 1.0);
    }
  return out;
}

void write_texture_corpus(const fs::path& dir, int count, int size, int channels, std::uint64_t seed) {
  fs::create_directories(dir);
  std::mt19937_64 rng(seed);
  for (int i = 0; i < count; ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "texture_%04d.png", i);
    write_png(dir / name, synthesize_texture(size, channels, rng));
  }
}

std::vector<Image> restoration_corpus(const ImageStore& store, int count, std::mt19937_64& rng) {
  std::vector<Image> out;
  out.reserve(count);
  for (const Image& crop : sample_batch(store, count, rng))
    out.push_back(upscale_nearest(crop.channels() == 3 ? crop : replicate_to_rgb(crop), kUpscaleFactor));
  return out;
}

}  // namespace phantasmagoria
