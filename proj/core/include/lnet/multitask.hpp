#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lnet/backbone.hpp"
#include "lnet/lesion_net.hpp"

namespace lnet {

/// How lesion maps enter the grading branch. `plain` ignores them (the
/// baseline classifier), `lesion_concat` appends the presence vector to the
/// pooled features; the two attention modes weight the last feature maps.
enum class GradingMode { plain, cw_maxpool, conv, lesion_concat };

std::string_view to_string(GradingMode mode);
/// Throws ConfigError on an unknown name.
GradingMode grading_mode_from_string(std::string_view name);

struct MultiTaskConfig {
  BackboneConfig backbone{};
  GradingMode mode = GradingMode::conv;
  int attention_hidden = 64;
  int num_grades = kNumGrades;

  void validate() const;
  bool operator==(const MultiTaskConfig&) const = default;
};

/// Max pooling with kernel == stride == side / target_side. Throws ShapeError
/// when target_side does not divide the map side.
Var downsample_maps(const Var& maps, int target_side);
Tensor downsample_maps(const Tensor& maps, int target_side);

/// Single map max_j s_j(x, y), replicated over k channels.
Var cw_maxpool_weights(const Var& maps, int k);

/// 3x3 conv (m -> hidden), ReLU, 3x3 conv (hidden -> k), sigmoid.
struct ConvAttention {
  Conv2d first;
  Conv2d second;
  ConvAttention() = default;
  ConvAttention(int m, int hidden, int k, const std::string& prefix = "att");
  void register_params(ParamSet& params, Rng* rng) const;
  Var operator()(const BoundParams& p, const Var& maps) const;
};

Var conv_attention_weights(const BoundParams& p, const ConvAttention& block, const Var& maps);

/// GAP(features) ++ presence -> fully connected (k + m) x 5 -> softmax.
Var lesion_concat_forward(const BoundParams& p, const Linear& fc, const Var& features, const Var& presence);

/// Argmax with ties resolved toward the lower grade.
DRGrade predict_grade(std::span<const double> probabilities);

struct GradingOutput {
  std::array<double, kNumGrades> probabilities{};
  ProbMapStack maps;
  LesionPresenceVector presence;
};

/// Two-branch grading network: its own main backbone plus a frozen Lesion-Net
/// side branch whose maps are turned into attention weights.
class MultiTaskNet {
 public:
  MultiTaskNet() = default;
  MultiTaskNet(MultiTaskConfig config, ParamSet params, LesionNet side);

  const MultiTaskConfig& config() const { return config_; }
  const ParamSet& params() const { return params_; }
  ParamSet& params() { return params_; }
  const LesionNet& side() const { return side_; }

  /// Side-branch maps for a batch, (n, s, s, m). Never part of the gradient graph.
  Tensor side_maps(const Tensor& images) const;
  /// Differentiable grading forward given precomputed side maps -> (n,1,1,5).
  Var grade(const BoundParams& p, const Var& images, const Tensor& side_maps) const;
  /// Grading with externally supplied weight maps of the last-stage shape.
  Var grade_with_weights(const BoundParams& p, const Var& images, const Var& weights) const;
  /// Attention weights for the last-stage feature grid.
  Var weights(const BoundParams& p, const Tensor& side_maps, int feature_side) const;
  Tensor grade_probabilities(const Tensor& images) const;

  /// Grade probabilities, full-resolution lesion maps and presence in one pass.
  GradingOutput fuse_and_grade(const FundusImage& image) const;

  static void register_params(const MultiTaskConfig& config, int m, ParamSet& params, Rng* rng);

 private:
  void init_layers();

  MultiTaskConfig config_{};
  ParamSet params_;
  LesionNet side_;
  std::shared_ptr<const ContractingPath> main_;
  ConvAttention attention_;
  Linear fc_;
};

MultiTaskNet build_multitask_net(const MultiTaskConfig& config, LesionNet side, std::uint64_t seed);
GradingOutput fuse_and_grade(const MultiTaskNet& net, const FundusImage& image);

}  // namespace lnet
