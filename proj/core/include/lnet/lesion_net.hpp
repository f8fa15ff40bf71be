#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "lnet/backbone.hpp"
#include "lnet/types.hpp"

namespace lnet {

/// Initial head probability; the head bias starts at logit(kLesionPrior).
inline constexpr double kLesionPrior = 0.02;

struct LesionNetConfig {
  int variant = 16;  // X in {2, 4, 8, 16, 32}
  BackboneConfig backbone{};
  int m = kNumLesions;

  /// log2(32 / X).
  int merge_steps() const;
  void validate() const;
  bool operator==(const LesionNetConfig&) const = default;
};

/// Copy-and-merge: 1x1 conv of `current` to the skip's width, bilinear x2,
/// then channel concatenation [upsampled, skip]. Throws ShapeError unless the
/// skip side is twice the current side.
Var merge_step(const BoundParams& p, const Conv2d& reduce, const Var& current, const Var& skip);

/// Segmentation network with a contracting path and an expansive path of
/// configurable length, ending in an m-channel 1x1 head, a sigmoid and a
/// parameter-free bilinear upsample by X.
class LesionNet {
 public:
  LesionNet() = default;
  LesionNet(LesionNetConfig config, ParamSet params);

  const LesionNetConfig& config() const { return config_; }
  const ParamSet& params() const { return params_; }
  ParamSet& params() { return params_; }

  /// Differentiable forward on (n, s, s, 3) images -> (n, s, s, m) probabilities.
  Var forward(const BoundParams& p, const Var& images) const;
  /// Inference on a batch.
  Tensor predict(const Tensor& images) const;
  ProbMapStack forward(const FundusImage& image) const;
  /// presence_from_maps of forward(image).
  LesionPresenceVector classify(const FundusImage& image) const;

  /// Registers every parameter with He initialisation and the head bias at the
  /// lesion prior (all zeros when rng is null).
  static void register_params(const LesionNetConfig& config, ParamSet& params, Rng* rng);

 private:
  void init_layers();

  LesionNetConfig config_{};
  ParamSet params_;
  std::shared_ptr<const ContractingPath> backbone_;
  std::vector<Conv2d> reduce_;
  Conv2d head_;
};

/// Throws ConfigError for a variant outside {2, 4, 8, 16, 32}.
LesionNet build_lesion_net(const LesionNetConfig& config, std::uint64_t seed);

ProbMapStack lesion_net_forward(const LesionNet& net, const FundusImage& image);
LesionPresenceVector classify_lesions(const LesionNet& net, const FundusImage& image);

}  // namespace lnet
