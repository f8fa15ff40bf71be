#pragma once

#include <filesystem>
#include <string>

#include "lnet/lesion_net.hpp"
#include "lnet/multitask.hpp"
#include "lnet/params.hpp"

namespace lnet {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Flat name -> array map plus a JSON metadata document.
///
/// File layout (little-endian):
///   "LNETCKPT" | u32 version | u32 meta_len | meta bytes | u32 count |
///   count x { u32 name_len | name | i32 dims[4] | f64 values[prod(dims)] }
struct Checkpoint {
  std::string kind;      // "lesion_net" or "multitask"
  std::string metadata;  // JSON object text, includes "kind"
  ParamSet params;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
/// Throws IoError on a bad magic, version or truncated file.
Checkpoint load_checkpoint(const std::filesystem::path& path);

Checkpoint to_checkpoint(const LesionNet& net);
/// Multi-task checkpoints store the side branch under the "side." prefix.
Checkpoint to_checkpoint(const MultiTaskNet& net);
/// Throws ConfigError if the checkpoint holds a different kind of network.
LesionNet lesion_net_from_checkpoint(const Checkpoint& ckpt);
MultiTaskNet multitask_from_checkpoint(const Checkpoint& ckpt);

std::string lesion_net_config_json(const LesionNetConfig& config);
LesionNetConfig lesion_net_config_from_json(const std::string& text);

}  // namespace lnet
