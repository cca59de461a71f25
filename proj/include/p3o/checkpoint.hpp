#pragma once

#include <cstdint>
#include <string>

#include "p3o/agent.hpp"
#include "p3o/param_store.hpp"

namespace p3o {

// Binary checkpoint (.p3o):
//   "P3OCKPT\0" | u32 format version | u64 manifest_len | manifest JSON |
//   f32 little-endian payload | u64 FNV-1a checksum of all preceding bytes
// The manifest pins parameter order, shapes, component tags, trainable flags,
// and the architecture, so a load rebuilds the store exactly. Writes go to a
// temp file and are renamed into place.
struct CheckpointMeta {
  Stage stage = Stage::pretrain;
  std::string preset = "env0";
  uint64_t seed = 0;
  ArchConfig arch;
};

void save_checkpoint(const std::string& path, const ParamStore& params, const CheckpointMeta& meta);

// Replaces `params` with the stored parameters. Throws std::invalid_argument
// on bad magic/version, manifest/payload inconsistencies, truncation, or a
// checksum mismatch.
CheckpointMeta load_checkpoint(const std::string& path, ParamStore& params);

// Convenience: read only the metadata block.
CheckpointMeta peek_checkpoint(const std::string& path);

}  // namespace p3o
