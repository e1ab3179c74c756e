#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "phantasmagoria/image.hpp"

namespace phantasmagoria {

/// 8-bit quantisation used for every persisted image: round(v * 255), clamped.
std::uint8_t quantize_8bit(double v);

/// Encode as 8-bit grayscale or RGB PNG.
std::vector<std::uint8_t> encode_png(const Image& image);
/// Encode as a 1-bit grayscale PNG (set pixels white).
std::vector<std::uint8_t> encode_png(const Mask& mask);

void write_png(const std::filesystem::path& path, const Image& image);
void write_png(const std::filesystem::path& path, const Mask& mask);

/// Decode PNG or JPEG bytes into [0,1] intensities. Alpha is dropped,
/// palettes expanded; the result has 1 channel for gray sources, 3 otherwise.
/// Throws std::runtime_error on undecodable input.
Image decode_image(std::span<const std::uint8_t> bytes);
Image read_image(const std::filesystem::path& path);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace phantasmagoria
