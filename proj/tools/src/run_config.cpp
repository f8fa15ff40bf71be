#include "lnet/cli/run_config.hpp"

#include <fstream>
#include <nlohmann/json.hpp>
#include <set>
#include <sstream>

#include "lnet/errors.hpp"

namespace lnet::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string slurp(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json parse_object(const std::string& text, const char* what) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string(what) + " is not valid JSON: " + e.what());
  }
  if (!j.is_object()) throw ConfigError(std::string(what) + " must be a JSON object");
  return j;
}

void reject_unknown(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  for (const auto& [key, _] : j.items()) {
    if (!allowed.count(key)) throw ConfigError("unknown key '" + key + "' in " + where);
  }
}

template <typename T>
void read(const json& j, const char* key, T& into) {
  if (!j.contains(key)) return;
  try {
    into = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string("bad value for '") + key + "'");
  }
}

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : (base / path).lexically_normal();
}

BackboneConfig read_backbone(const json& j) {
  BackboneConfig b;
  reject_unknown(j, {"stage_channels", "activation"}, "backbone");
  if (j.contains("activation")) b.activation = activation_from_string(j.at("activation").get<std::string>());
  if (j.contains("stage_channels")) {
    const json& s = j.at("stage_channels");
    if (!s.is_array() || s.size() != kNumStages) throw ConfigError("stage_channels needs 5 entries");
    for (int i = 0; i < kNumStages; ++i) b.stage_channels[i] = s[i].get<int>();
  }
  b.validate();
  return b;
}

void read_augment(const json& j, AugmentConfig& a) {
  if (j.is_boolean()) {
    a.enabled = j.get<bool>();
    return;
  }
  reject_unknown(j, {"enabled", "max_rotation_deg", "min_crop_scale", "flip_prob", "jitter"}, "augment");
  read(j, "enabled", a.enabled);
  read(j, "max_rotation_deg", a.max_rotation_deg);
  read(j, "min_crop_scale", a.min_crop_scale);
  read(j, "flip_prob", a.flip_prob);
  read(j, "jitter", a.jitter);
}

}  // namespace

RunConfig run_config_from_json(const std::string& text, const fs::path& base_dir) {
  const json j = parse_object(text, "run config");
  reject_unknown(j,
                 {"task", "variant", "backbone", "attention", "attention_hidden", "manifest", "output_dir",
                  "side_checkpoint", "loss", "switch_to_dual", "lr0", "momentum", "weight_decay", "validate_every",
                  "lr_patience", "stop_patience", "lr_factor", "batch_size", "lambda", "seed", "max_batches",
                  "focal_alpha", "focal_gamma", "augment", "warm_start_main"},
                 "run config");
  RunConfig c;
  const std::string task = j.value("task", "segment");
  if (task == "segment") {
    c.task = Task::segment;
  } else if (task == "grade") {
    c.task = Task::grade;
  } else {
    throw ConfigError("task must be 'segment' or 'grade'");
  }
  if (j.contains("backbone")) {
    c.lesion_net.backbone = read_backbone(j.at("backbone"));
    c.multitask.backbone = c.lesion_net.backbone;
  }
  read(j, "variant", c.lesion_net.variant);
  c.lesion_net.validate();
  if (j.contains("attention")) c.multitask.mode = grading_mode_from_string(j.at("attention").get<std::string>());
  read(j, "attention_hidden", c.multitask.attention_hidden);
  c.multitask.validate();

  TrainConfig& t = c.train;
  if (j.contains("loss")) t.loss = seg_loss_from_string(j.at("loss").get<std::string>());
  read(j, "switch_to_dual", t.switch_to_dual);
  read(j, "lr0", t.lr0);
  read(j, "momentum", t.momentum);
  read(j, "weight_decay", t.weight_decay);
  read(j, "validate_every", t.validate_every);
  read(j, "lr_patience", t.lr_patience);
  read(j, "stop_patience", t.stop_patience);
  read(j, "lr_factor", t.lr_factor);
  read(j, "batch_size", t.batch_size);
  read(j, "lambda", t.lambda);
  read(j, "seed", t.seed);
  read(j, "max_batches", t.max_batches);
  read(j, "focal_alpha", t.focal_alpha);
  read(j, "focal_gamma", t.focal_gamma);
  read(j, "warm_start_main", t.warm_start_main);
  if (j.contains("augment")) read_augment(j.at("augment"), t.augment);
  t.validate();

  if (!j.contains("manifest")) throw ConfigError("run config needs 'manifest'");
  c.manifest = resolve(base_dir, j.at("manifest").get<std::string>());
  if (!fs::is_regular_file(c.manifest)) throw ConfigError("manifest not found: " + c.manifest.string());
  c.output_dir = resolve(base_dir, j.value("output_dir", "run"));
  if (j.contains("side_checkpoint")) {
    c.side_checkpoint = resolve(base_dir, j.at("side_checkpoint").get<std::string>());
    if (!fs::is_regular_file(*c.side_checkpoint)) {
      throw ConfigError("side checkpoint not found: " + c.side_checkpoint->string());
    }
  }
  return c;
}

RunConfig parse_run_config(const fs::path& path) {
  if (!fs::is_regular_file(path)) throw ConfigError("config not found: " + path.string());
  return run_config_from_json(slurp(path), fs::absolute(path).parent_path());
}

std::string run_config_to_json(const RunConfig& c) {
  const TrainConfig& t = c.train;
  json j{{"task", c.task == Task::segment ? "segment" : "grade"},
         {"variant", c.lesion_net.variant},
         {"backbone",
          {{"stage_channels", c.lesion_net.backbone.stage_channels},
           {"activation", std::string(to_string(c.lesion_net.backbone.activation))}}},
         {"attention", std::string(to_string(c.multitask.mode))},
         {"attention_hidden", c.multitask.attention_hidden},
         {"manifest", c.manifest.generic_string()},
         {"output_dir", c.output_dir.generic_string()},
         {"loss", std::string(to_string(t.loss))},
         {"switch_to_dual", t.switch_to_dual},
         {"lr0", t.lr0},
         {"momentum", t.momentum},
         {"weight_decay", t.weight_decay},
         {"validate_every", t.validate_every},
         {"lr_patience", t.lr_patience},
         {"stop_patience", t.stop_patience},
         {"lr_factor", t.lr_factor},
         {"batch_size", t.batch_size},
         {"lambda", t.lambda},
         {"seed", t.seed},
         {"max_batches", t.max_batches},
         {"focal_alpha", t.focal_alpha},
         {"focal_gamma", t.focal_gamma},
         {"warm_start_main", t.warm_start_main},
         {"augment",
          {{"enabled", t.augment.enabled},
           {"max_rotation_deg", t.augment.max_rotation_deg},
           {"min_crop_scale", t.augment.min_crop_scale},
           {"flip_prob", t.augment.flip_prob},
           {"jitter", t.augment.jitter}}}};
  if (c.side_checkpoint) j["side_checkpoint"] = c.side_checkpoint->generic_string();
  return j.dump(2);
}

SynthConfig synth_config_from_json(const std::string& text) {
  const json j = parse_object(text, "synth config");
  reject_unknown(j, {"image_side", "seed", "noise", "companion_prob", "grade_mix", "field_color", "lesions"},
                 "synth config");
  int side = 128;
  read(j, "image_side", side);
  SynthConfig c = SynthConfig::defaults(side);
  read(j, "seed", c.seed);
  read(j, "noise", c.noise);
  read(j, "companion_prob", c.companion_prob);
  read(j, "grade_mix", c.grade_mix);
  read(j, "field_color", c.field_color);
  if (j.contains("lesions")) {
    for (const auto& [name, style] : j.at("lesions").items()) {
      const auto idx = lesion_index(name);
      if (!idx) throw ConfigError("unknown lesion '" + name + "' in synth config");
      reject_unknown(style, {"min_blobs", "max_blobs", "min_radius", "max_radius", "color"}, "lesion " + name);
      LesionStyle& s = c.lesions[*idx];
      read(style, "min_blobs", s.min_blobs);
      read(style, "max_blobs", s.max_blobs);
      read(style, "min_radius", s.min_radius);
      read(style, "max_radius", s.max_radius);
      read(style, "color", s.color);
    }
  }
  c.validate();
  return c;
}

SynthConfig parse_synth_config(const fs::path& path) { return synth_config_from_json(slurp(path)); }

}  // namespace lnet::cli
