#include "phantasmagoria/checkpoint.hpp"

#include <openssl/evp.h>

#include <bit>
#include <fstream>
#include <stdexcept>

namespace phantasmagoria {

static_assert(std::endian::native == std::endian::little,
              "checkpoint payloads are written in host order and assume little-endian");

using nlohmann::json;

void write_checkpoint(const std::filesystem::path& path, const CheckpointData& data) {
  json header;
  header["format"] = kCheckpointFormat;
  header["role"] = data.role;
  header["architecture"] = data.architecture;
  header["meta"] = data.meta;
  header["tensors"] = json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, t] : data.tensors) {
    header["tensors"].push_back(
        {{"name", name}, {"shape", t.shape}, {"dtype", "float32"}, {"offset", offset}, {"count", t.size()}});
    offset += t.size() * sizeof(float);
  }
  const std::string text = header.dump();
  const std::uint64_t len = text.size();

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  out << kCheckpointFormat << '\n';
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& [name, t] : data.tensors)
    out.write(reinterpret_cast<const char*>(t.values.data()),
              static_cast<std::streamsize>(t.size() * sizeof(float)));
  if (!out) throw std::runtime_error("short write to checkpoint " + path.string());
}

CheckpointData read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  std::string tag;
  std::getline(in, tag);
  if (tag != kCheckpointFormat)
    throw std::runtime_error(path.string() + " is not a " + kCheckpointFormat + " checkpoint");
  std::uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  if (!in || len > (1u << 26)) throw std::runtime_error("corrupt checkpoint header in " + path.string());
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  const json header = json::parse(text);
  if (header.at("format") != kCheckpointFormat) throw std::runtime_error("checkpoint format mismatch");

  CheckpointData data;
  data.role = header.at("role").get<std::string>();
  data.architecture = header.at("architecture");
  data.meta = header.value("meta", json::object());
  const auto payload_start = in.tellg();
  for (const auto& entry : header.at("tensors")) {
    if (entry.at("dtype") != "float32") throw std::runtime_error("unsupported tensor dtype");
    nn::ParamTensor<float> t(entry.at("shape").get<std::vector<int>>());
    if (t.size() != entry.at("count").get<std::size_t>())
      throw std::runtime_error("tensor shape and count disagree in checkpoint");
    in.seekg(payload_start + static_cast<std::streamoff>(entry.at("offset").get<std::uint64_t>()));
    in.read(reinterpret_cast<char*>(t.values.data()), static_cast<std::streamsize>(t.size() * sizeof(float)));
    if (!in) throw std::runtime_error("truncated checkpoint payload in " + path.string());
    data.tensors.emplace(entry.at("name").get<std::string>(), std::move(t));
  }
  return data;
}

namespace {

template <typename Params>
CheckpointData pack(const std::string& role, const Params& p, json architecture, const json& meta) {
  CheckpointData data{role, std::move(architecture), meta, {}};
  p.for_each([&](const char* name, const nn::ParamTensor<float>& t) { data.tensors.emplace(name, t); });
  return data;
}

template <typename Params>
void unpack(const CheckpointData& data, const std::string& role, Params& p) {
  if (data.role != role)
    throw std::runtime_error("checkpoint holds a " + data.role + ", expected a " + role);
  p.for_each([&](const char* name, nn::ParamTensor<float>& t) {
    const auto it = data.tensors.find(name);
    if (it == data.tensors.end()) throw std::runtime_error(std::string("checkpoint lacks ") + name);
    if (it->second.shape != t.shape) throw std::runtime_error(std::string("shape mismatch for ") + name);
    t = it->second;
  });
}

}  // namespace

void save_generator(const std::filesystem::path& path, const GeneratorParams<float>& p, const json& meta) {
  const auto& s = p.shape;
  write_checkpoint(path, pack("generator", p,
                              {{"latent", s.latent}, {"hidden", s.hidden}, {"base_channels", s.base_channels},
                               {"base_size", s.base_size}, {"mid_channels", s.mid_channels},
                               {"out_channels", s.out_channels}, {"kernel", s.kernel}},
                              meta));
}

void save_discriminator(const std::filesystem::path& path, const DiscriminatorParams<float>& p,
                        const json& meta) {
  const auto& s = p.shape;
  write_checkpoint(path, pack("discriminator", p,
                              {{"in_channels", s.in_channels}, {"input_size", s.input_size},
                               {"conv1_channels", s.conv1_channels}, {"conv2_channels", s.conv2_channels},
                               {"conv3_channels", s.conv3_channels}, {"conv1_kernel", s.conv1_kernel},
                               {"conv_kernel", s.conv_kernel}, {"hidden", s.hidden}},
                              meta));
}

void save_restorenet(const std::filesystem::path& path, const RestoreNetParams<float>& p, const json& meta) {
  const auto& s = p.shape;
  write_checkpoint(path, pack("restorenet", p,
                              {{"channels", s.channels}, {"hidden", s.hidden}, {"kernel", s.kernel},
                               {"input_size", s.input_size}},
                              meta));
}

GeneratorParams<float> load_generator(const std::filesystem::path& path, json* meta) {
  const CheckpointData data = read_checkpoint(path);
  const json& a = data.architecture;
  GeneratorShape s;
  s.latent = a.at("latent");
  s.hidden = a.at("hidden");
  s.base_channels = a.at("base_channels");
  s.base_size = a.at("base_size");
  s.mid_channels = a.at("mid_channels");
  s.out_channels = a.at("out_channels");
  s.kernel = a.at("kernel");
  GeneratorParams<float> p(s);
  unpack(data, "generator", p);
  if (meta) *meta = data.meta;
  return p;
}

DiscriminatorParams<float> load_discriminator(const std::filesystem::path& path, json* meta) {
  const CheckpointData data = read_checkpoint(path);
  const json& a = data.architecture;
  DiscriminatorShape s;
  s.in_channels = a.at("in_channels");
  s.input_size = a.at("input_size");
  s.conv1_channels = a.at("conv1_channels");
  s.conv2_channels = a.at("conv2_channels");
  s.conv3_channels = a.at("conv3_channels");
  s.conv1_kernel = a.at("conv1_kernel");
  s.conv_kernel = a.at("conv_kernel");
  s.hidden = a.at("hidden");
  DiscriminatorParams<float> p(s);
  unpack(data, "discriminator", p);
  if (meta) *meta = data.meta;
  return p;
}

RestoreNetParams<float> load_restorenet(const std::filesystem::path& path, json* meta) {
  const CheckpointData data = read_checkpoint(path);
  const json& a = data.architecture;
  RestoreNetShape s;
  s.channels = a.at("channels");
  s.hidden = a.at("hidden");
  s.kernel = a.at("kernel");
  s.input_size = a.at("input_size");
  RestoreNetParams<float> p(s);
  unpack(data, "restorenet", p);
  if (meta) *meta = data.meta;
  return p;
}

std::string sha256_hex(std::span<const std::uint8_t> bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("SHA-256 failed");
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[digest[i] >> 4]);
    out.push_back(kHex[digest[i] & 0xf]);
  }
  return out;
}

std::string sha256_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  std::vector<char> buf(1 << 20);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    EVP_DigestUpdate(ctx, buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, digest, &len);
  EVP_MD_CTX_free(ctx);
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[digest[i] >> 4]);
    out.push_back(kHex[digest[i] & 0xf]);
  }
  return out;
}

}  // namespace phantasmagoria
