#pragma once

#include <array>
#include <memory>
#include <string>
#include <string_view>

#include "lnet/params.hpp"

namespace lnet {

inline constexpr int kNumStages = 5;

/// Pointwise nonlinearity inside the backbone stages.
enum class Activation { silu, relu };

std::string_view to_string(Activation a);
/// Throws ConfigError on an unknown name.
Activation activation_from_string(std::string_view name);

struct BackboneConfig {
  std::array<int, kNumStages> stage_channels{16, 32, 64, 128, 256};
  Activation activation = Activation::silu;

  /// k, the channel count of the deepest stage.
  int final_channels() const { return stage_channels.back(); }
  void validate() const;
  bool operator==(const BackboneConfig&) const = default;
};

/// Contracting-path output: stage i (0-based) has side s / 2^(i+1).
struct FeaturePyramid {
  std::array<Var, kNumStages> stages;
  const Var& last() const { return stages.back(); }
};

/// Contract every contracting path honours: five stages at strides 2..32.
class ContractingPath {
 public:
  virtual ~ContractingPath() = default;
  virtual const BackboneConfig& config() const = 0;
  virtual void register_params(ParamSet& params, Rng* rng) const = 0;
  /// Throws ShapeError unless `images` is (n, s, s, 3) with s divisible by 32.
  virtual FeaturePyramid forward(const BoundParams& p, const Var& images) const = 0;
};

/// Each stage: stride-2 3x3 conv, nonlinearity, 3x3 conv, nonlinearity.
class ReferenceBackbone final : public ContractingPath {
 public:
  explicit ReferenceBackbone(BackboneConfig config, std::string prefix = "backbone");
  const BackboneConfig& config() const override { return config_; }
  void register_params(ParamSet& params, Rng* rng) const override;
  FeaturePyramid forward(const BoundParams& p, const Var& images) const override;

 private:
  BackboneConfig config_;
  std::string prefix_;
  std::array<Conv2d, kNumStages> down_;
  std::array<Conv2d, kNumStages> refine_;
};

void check_input_images(const Tensor& images);

/// Inference convenience: runs `path` with `params` on a batch of images.
FeaturePyramid backbone_forward(const ContractingPath& path, const ParamSet& params, const Tensor& images);

}  // namespace lnet
