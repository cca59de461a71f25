#include "p3o/checkpoint.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>

#include "json.hpp"

namespace p3o {

namespace {

constexpr char kMagic[8] = {'P', '3', 'O', 'C', 'K', 'P', 'T', '\0'};
constexpr uint32_t kVersion = 1;

uint64_t fnv1a64(const uint8_t* p, size_t n) {
  uint64_t h = 14695981039346656037ULL;
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ULL;
  }
  return h;
}

nlohmann::json arch_to_json(const ArchConfig& a) {
  nlohmann::json j;
  j["resolution"] = a.resolution;
  j["in_channels"] = a.in_channels;
  j["conv_channels"] = a.conv_channels;
  j["latent_dim"] = a.latent_dim;
  j["policy_hidden"] = a.policy_hidden;
  j["action_dim"] = a.action_dim;
  j["num_classes"] = a.num_classes;
  return j;
}

ArchConfig arch_from_json(const nlohmann::json& j) {
  ArchConfig a;
  a.resolution = j.at("resolution").get<int>();
  a.in_channels = j.at("in_channels").get<int>();
  const auto cc = j.at("conv_channels").get<std::vector<int>>();
  require(cc.size() == a.conv_channels.size(), "checkpoint arch: conv_channels must have 4 stages");
  std::copy(cc.begin(), cc.end(), a.conv_channels.begin());
  a.latent_dim = j.at("latent_dim").get<int>();
  a.policy_hidden = j.at("policy_hidden").get<int>();
  a.action_dim = j.at("action_dim").get<int>();
  a.num_classes = j.at("num_classes").get<int>();
  compute_arch_shapes(a);  // validates the conv chain
  return a;
}

// Reads and checksum-verifies the file; returns manifest + payload bytes.
void read_verified(const std::string& path, nlohmann::json& manifest, std::string& payload) {
  std::ifstream f(path, std::ios::binary);
  require(f.good(), "cannot open checkpoint: " + path);
  std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  require(bytes.size() >= 8 + 4 + 8 + 8, "checkpoint too small: " + path);

  uint64_t stored_sum = 0;
  std::memcpy(&stored_sum, bytes.data() + bytes.size() - 8, 8);
  const uint64_t actual_sum =
      fnv1a64(reinterpret_cast<const uint8_t*>(bytes.data()), bytes.size() - 8);
  require(stored_sum == actual_sum, "checkpoint checksum mismatch (corrupt file): " + path);

  require(std::memcmp(bytes.data(), kMagic, 8) == 0, "bad checkpoint magic: " + path);
  uint32_t ver = 0;
  std::memcpy(&ver, bytes.data() + 8, 4);
  require(ver == kVersion, "unsupported checkpoint version " + std::to_string(ver));
  uint64_t mlen = 0;
  std::memcpy(&mlen, bytes.data() + 12, 8);
  require(mlen > 0 && 20 + mlen + 8 <= bytes.size(), "corrupt checkpoint manifest length");
  manifest = nlohmann::json::parse(bytes.substr(20, mlen), nullptr, false);
  require(!manifest.is_discarded(), "checkpoint manifest is not valid JSON");

  const uint64_t payload_bytes = manifest.at("payload_bytes").get<uint64_t>();
  require(20 + mlen + payload_bytes + 8 == bytes.size(),
          "checkpoint payload size mismatch (truncated or padded file)");
  payload = bytes.substr(20 + mlen, payload_bytes);
}

CheckpointMeta meta_from_manifest(const nlohmann::json& m) {
  CheckpointMeta meta;
  meta.stage = stage_from_name(m.at("stage").get<std::string>());
  meta.preset = m.at("preset").get<std::string>();
  meta.seed = m.at("seed").get<uint64_t>();
  meta.arch = arch_from_json(m.at("arch"));
  return meta;
}

}  // namespace

void save_checkpoint(const std::string& path, const ParamStore& params,
                     const CheckpointMeta& meta) {
  require(!params.entries().empty(), "refusing to save an empty parameter store");
  nlohmann::json manifest;
  manifest["stage"] = stage_name(meta.stage);
  manifest["preset"] = meta.preset;
  manifest["seed"] = meta.seed;
  manifest["arch"] = arch_to_json(meta.arch);
  uint64_t offset = 0;
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& e : params.entries()) {
    nlohmann::json je;
    je["name"] = e.name;
    je["component"] = component_name(e.tag);
    je["trainable"] = e.trainable;
    je["shape"] = e.tensor.shape;
    je["dtype"] = "f32";
    je["byte_offset"] = offset;
    entries.push_back(std::move(je));
    offset += uint64_t(e.tensor.size()) * sizeof(float);
  }
  manifest["entries"] = std::move(entries);
  manifest["payload_bytes"] = offset;
  const std::string ms = manifest.dump();

  std::string bytes;
  bytes.reserve(20 + ms.size() + offset + 8);
  bytes.append(kMagic, 8);
  const uint32_t ver = kVersion;
  bytes.append(reinterpret_cast<const char*>(&ver), 4);
  const uint64_t mlen = ms.size();
  bytes.append(reinterpret_cast<const char*>(&mlen), 8);
  bytes.append(ms);
  for (const auto& e : params.entries())
    bytes.append(reinterpret_cast<const char*>(e.tensor.data.data()),
                 e.tensor.data.size() * sizeof(float));
  const uint64_t sum = fnv1a64(reinterpret_cast<const uint8_t*>(bytes.data()), bytes.size());
  bytes.append(reinterpret_cast<const char*>(&sum), 8);

  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    require(f.good(), "cannot open for writing: " + tmp);
    f.write(bytes.data(), std::streamsize(bytes.size()));
    require(f.good(), "write failed: " + tmp);
  }
  require(std::rename(tmp.c_str(), path.c_str()) == 0, "atomic rename failed for " + path);
}

CheckpointMeta load_checkpoint(const std::string& path, ParamStore& params) {
  nlohmann::json manifest;
  std::string payload;
  read_verified(path, manifest, payload);
  const CheckpointMeta meta = meta_from_manifest(manifest);

  ParamStore loaded;
  uint64_t expect_offset = 0;
  for (const auto& je : manifest.at("entries")) {
    const std::string name = je.at("name").get<std::string>();
    require(je.at("dtype").get<std::string>() == "f32",
            "unsupported dtype for " + name + " (only f32)");
    const uint64_t off = je.at("byte_offset").get<uint64_t>();
    require(off == expect_offset, "non-contiguous payload offset for " + name);
    const auto shape = je.at("shape").get<std::vector<int>>();
    TensorF t(shape);
    require(t.size() > 0, "empty parameter shape for " + name);
    const uint64_t nbytes = uint64_t(t.size()) * sizeof(float);
    require(off + nbytes <= payload.size(), "payload overrun for " + name);
    std::memcpy(t.data.data(), payload.data() + off, nbytes);
    for (float v : t.data)
      require(std::isfinite(v), "non-finite parameter value in " + name);
    auto& entry = loaded.add(name, component_from_name(je.at("component").get<std::string>()),
                             std::move(t));
    entry.trainable = je.at("trainable").get<bool>();
    expect_offset = off + nbytes;
  }
  require(!loaded.entries().empty(), "checkpoint holds no parameters");
  require(expect_offset == payload.size(), "checkpoint payload has trailing bytes");
  params = std::move(loaded);
  return meta;
}

CheckpointMeta peek_checkpoint(const std::string& path) {
  nlohmann::json manifest;
  std::string payload;
  read_verified(path, manifest, payload);
  return meta_from_manifest(manifest);
}

}  // namespace p3o
