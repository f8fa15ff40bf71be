#include "lnet/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <nlohmann/json.hpp>

#include "lnet/errors.hpp"

namespace lnet {
namespace {

using nlohmann::json;
constexpr char kMagic[8] = {'L', 'N', 'E', 'T', 'C', 'K', 'P', 'T'};

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

template <typename T>
void put(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T get(std::istream& in, const std::string& what) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) throw IoError("truncated checkpoint reading " + what);
  return v;
}

json backbone_json(const BackboneConfig& b) {
  return json{{"stage_channels", b.stage_channels}, {"activation", std::string(to_string(b.activation))}};
}

BackboneConfig backbone_from(const json& j) {
  BackboneConfig b;
  b.stage_channels = j.at("stage_channels").get<std::array<int, kNumStages>>();
  if (j.contains("activation")) b.activation = activation_from_string(j.at("activation").get<std::string>());
  return b;
}

json lesion_json(const LesionNetConfig& c) {
  return json{{"variant", c.variant}, {"m", c.m}, {"backbone", backbone_json(c.backbone)}};
}

LesionNetConfig lesion_from(const json& j) {
  LesionNetConfig c;
  c.variant = j.at("variant").get<int>();
  c.m = j.at("m").get<int>();
  c.backbone = backbone_from(j.at("backbone"));
  return c;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  out.write(kMagic, sizeof kMagic);
  put(out, kCheckpointVersion);
  put(out, static_cast<std::uint32_t>(ckpt.metadata.size()));
  out.write(ckpt.metadata.data(), static_cast<std::streamsize>(ckpt.metadata.size()));
  put(out, static_cast<std::uint32_t>(ckpt.params.size()));
  for (std::size_t i = 0; i < ckpt.params.size(); ++i) {
    const std::string& name = ckpt.params.name(i);
    const Tensor& t = ckpt.params.value(i);
    put(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    const Shape s = t.shape();
    for (int d : {s.n, s.h, s.w, s.c}) put(out, static_cast<std::int32_t>(d));
    out.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(double)));
  }
  if (!out) throw IoError("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  char magic[8];
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof magic) != 0) {
    throw IoError("not a checkpoint file: " + path.string());
  }
  const auto version = get<std::uint32_t>(in, "version");
  if (version != kCheckpointVersion) throw IoError("unsupported checkpoint version " + std::to_string(version));
  Checkpoint ckpt;
  const auto meta_len = get<std::uint32_t>(in, "metadata length");
  ckpt.metadata.resize(meta_len);
  if (!in.read(ckpt.metadata.data(), meta_len)) throw IoError("truncated checkpoint metadata");
  try {
    ckpt.kind = json::parse(ckpt.metadata).at("kind").get<std::string>();
  } catch (const json::exception& e) {
    throw IoError(std::string("bad checkpoint metadata: ") + e.what());
  }
  const auto count = get<std::uint32_t>(in, "entry count");
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = get<std::uint32_t>(in, "name length");
    std::string name(name_len, '\0');
    if (!in.read(name.data(), name_len)) throw IoError("truncated checkpoint entry name");
    Shape s;
    s.n = get<std::int32_t>(in, name);
    s.h = get<std::int32_t>(in, name);
    s.w = get<std::int32_t>(in, name);
    s.c = get<std::int32_t>(in, name);
    Tensor t(s);
    if (!in.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(double)))) {
      throw IoError("truncated checkpoint values for " + name);
    }
    ckpt.params.add(std::move(name), std::move(t));
  }
  return ckpt;
}

std::string lesion_net_config_json(const LesionNetConfig& config) { return lesion_json(config).dump(); }

LesionNetConfig lesion_net_config_from_json(const std::string& text) { return lesion_from(json::parse(text)); }

Checkpoint to_checkpoint(const LesionNet& net) {
  Checkpoint c;
  c.kind = "lesion_net";
  c.metadata = json{{"kind", c.kind}, {"lesion_net", lesion_json(net.config())}}.dump();
  c.params = net.params();
  return c;
}

Checkpoint to_checkpoint(const MultiTaskNet& net) {
  Checkpoint c;
  c.kind = "multitask";
  const MultiTaskConfig& mc = net.config();
  c.metadata = json{{"kind", c.kind},
                    {"mode", std::string(to_string(mc.mode))},
                    {"attention_hidden", mc.attention_hidden},
                    {"backbone", backbone_json(mc.backbone)},
                    {"lesion_net", lesion_json(net.side().config())}}
                   .dump();
  c.params = net.params();
  c.params.merge(net.side().params(), "side.");
  return c;
}

LesionNet lesion_net_from_checkpoint(const Checkpoint& ckpt) {
  if (ckpt.kind == "multitask") {
    const json meta = json::parse(ckpt.metadata);
    return LesionNet(lesion_from(meta.at("lesion_net")), ckpt.params.extract("side."));
  }
  if (ckpt.kind != "lesion_net") throw ConfigError("checkpoint kind '" + ckpt.kind + "' is not a Lesion-Net");
  const json meta = json::parse(ckpt.metadata);
  return LesionNet(lesion_from(meta.at("lesion_net")), ckpt.params);
}

MultiTaskNet multitask_from_checkpoint(const Checkpoint& ckpt) {
  if (ckpt.kind != "multitask") throw ConfigError("checkpoint kind '" + ckpt.kind + "' is not a multi-task network");
  const json meta = json::parse(ckpt.metadata);
  MultiTaskConfig mc;
  mc.mode = grading_mode_from_string(meta.at("mode").get<std::string>());
  mc.attention_hidden = meta.at("attention_hidden").get<int>();
  mc.backbone = backbone_from(meta.at("backbone"));
  LesionNet side(lesion_from(meta.at("lesion_net")), ckpt.params.extract("side."));
  ParamSet main;
  for (std::size_t i = 0; i < ckpt.params.size(); ++i) {
    if (!ckpt.params.name(i).starts_with("side.")) main.add(ckpt.params.name(i), ckpt.params.value(i));
  }
  return MultiTaskNet(mc, std::move(main), std::move(side));
}

}  // namespace lnet
