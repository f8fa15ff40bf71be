#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "lnet/lesion_net.hpp"
#include "lnet/multitask.hpp"
#include "lnet/synth.hpp"
#include "lnet/training.hpp"

namespace lnet::cli {

enum class Task { segment, grade };

/// Everything `lnet train` and `lnet eval` need. Relative paths resolve
/// against the directory holding the config file.
struct RunConfig {
  Task task = Task::segment;
  LesionNetConfig lesion_net{};
  MultiTaskConfig multitask{};
  TrainConfig train{};
  std::filesystem::path manifest;
  std::filesystem::path output_dir;
  /// Pretrained segmentation checkpoint feeding the side branch (grade task).
  std::optional<std::filesystem::path> side_checkpoint;
};

/// Throws ConfigError on unknown keys, bad values or missing paths.
RunConfig parse_run_config(const std::filesystem::path& path);
RunConfig run_config_from_json(const std::string& text, const std::filesystem::path& base_dir);
std::string run_config_to_json(const RunConfig& config);

/// Starts from SynthConfig::defaults(image_side) and applies overrides.
SynthConfig synth_config_from_json(const std::string& text);
SynthConfig parse_synth_config(const std::filesystem::path& path);

}  // namespace lnet::cli
