#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "phantasmagoria/networks.hpp"

namespace phantasmagoria {

inline constexpr const char* kCheckpointFormat = "phantasmagoria-ckpt-v1";

/// On-disk layout: the format tag and a newline, a little-endian u64 header
/// length, a JSON header (role, architecture, free-form metadata, and one
/// entry per tensor with name, shape, dtype and byte offset), then the raw
/// little-endian float32 payload.
struct CheckpointData {
  std::string role;
  nlohmann::json architecture;
  nlohmann::json meta;
  std::map<std::string, nn::ParamTensor<float>> tensors;
};

void write_checkpoint(const std::filesystem::path& path, const CheckpointData& data);
CheckpointData read_checkpoint(const std::filesystem::path& path);

void save_generator(const std::filesystem::path& path, const GeneratorParams<float>& p,
                    const nlohmann::json& meta = nlohmann::json::object());
void save_discriminator(const std::filesystem::path& path, const DiscriminatorParams<float>& p,
                        const nlohmann::json& meta = nlohmann::json::object());
void save_restorenet(const std::filesystem::path& path, const RestoreNetParams<float>& p,
                     const nlohmann::json& meta = nlohmann::json::object());

GeneratorParams<float> load_generator(const std::filesystem::path& path, nlohmann::json* meta = nullptr);
DiscriminatorParams<float> load_discriminator(const std::filesystem::path& path,
                                              nlohmann::json* meta = nullptr);
RestoreNetParams<float> load_restorenet(const std::filesystem::path& path, nlohmann::json* meta = nullptr);

/// Lowercase hex SHA-256 of a byte buffer / file.
std::string sha256_hex(std::span<const std::uint8_t> bytes);
std::string sha256_file(const std::filesystem::path& path);

}  // namespace phantasmagoria
