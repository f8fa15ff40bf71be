#include "lnet/lesion_net.hpp"

#include <cmath>

#include "lnet/errors.hpp"
#include "lnet/ops.hpp"

namespace lnet {

int LesionNetConfig::merge_steps() const {
  switch (variant) {
    case 32: return 0;
    case 16: return 1;
    case 8: return 2;
    case 4: return 3;
    case 2: return 4;
    default: throw ConfigError("Lesion-Net variant must be one of 2, 4, 8, 16, 32; got " + std::to_string(variant));
  }
}

void LesionNetConfig::validate() const {
  merge_steps();
  backbone.validate();
  if (m <= 0) throw ConfigError("lesion count must be positive");
}

namespace {

std::vector<Conv2d> reduce_layers(const LesionNetConfig& config) {
  std::vector<Conv2d> layers;
  int width = config.backbone.final_channels();
  for (int step = 0; step < config.merge_steps(); ++step) {
    const int skip_channels = config.backbone.stage_channels[kNumStages - 2 - step];
    layers.push_back(Conv2d{"merge" + std::to_string(step + 1) + ".reduce", width, skip_channels, 1, 1, true});
    width = 2 * skip_channels;
  }
  return layers;
}

int head_inputs(const LesionNetConfig& config) {
  const int steps = config.merge_steps();
  return steps == 0 ? config.backbone.final_channels()
                    : 2 * config.backbone.stage_channels[kNumStages - 1 - steps];
}

}  // namespace

Var merge_step(const BoundParams& p, const Conv2d& reduce, const Var& current, const Var& skip) {
  const Tensor& cur = current->value;
  const Tensor& sk = skip->value;
  if (sk.h() != 2 * cur.h() || sk.w() != 2 * cur.w() || sk.n() != cur.n()) {
    throw ShapeError("merge_step: skip " + sk.shape().str() + " is not twice the side of " + cur.shape().str());
  }
  if (reduce.out != sk.c()) throw ShapeError("merge_step: reduce width must equal skip channels");
  const Var up = ops::upsample_bilinear(reduce(p, current), 2);
  return ops::concat_channels(up, skip);
}

void LesionNet::register_params(const LesionNetConfig& config, ParamSet& params, Rng* rng) {
  config.validate();
  ReferenceBackbone(config.backbone).register_params(params, rng);
  for (const Conv2d& layer : reduce_layers(config)) layer.register_params(params, rng);
  Conv2d{"head", head_inputs(config), config.m, 1, 1, true}.register_params(params, rng);
  // Lesions are rare: start every map near the prior rather than at 0.5.
  if (rng) params.at("head.bias").fill(std::log(kLesionPrior / (1.0 - kLesionPrior)));
}

LesionNet::LesionNet(LesionNetConfig config, ParamSet params) : config_(config), params_(std::move(params)) {
  config_.validate();
  init_layers();
  // Verify the parameter set matches the architecture.
  ParamSet expected;
  register_params(config_, expected, nullptr);
  if (expected.size() != params_.size()) throw ConfigError("parameter set does not match Lesion-Net architecture");
  for (std::size_t i = 0; i < expected.size(); ++i) {
    if (!params_.contains(expected.name(i)) || params_.at(expected.name(i)).shape() != expected.value(i).shape()) {
      throw ConfigError("parameter " + expected.name(i) + " missing or mis-shaped");
    }
  }
}

void LesionNet::init_layers() {
  backbone_ = std::make_shared<ReferenceBackbone>(config_.backbone);
  reduce_ = reduce_layers(config_);
  head_ = Conv2d{"head", head_inputs(config_), config_.m, 1, 1, true};
}

Var LesionNet::forward(const BoundParams& p, const Var& images) const {
  const FeaturePyramid pyr = backbone_->forward(p, images);
  Var x = pyr.last();
  for (std::size_t step = 0; step < reduce_.size(); ++step) {
    x = merge_step(p, reduce_[step], x, pyr.stages[kNumStages - 2 - step]);
  }
  return ops::upsample_bilinear(ops::sigmoid(head_(p, x)), config_.variant);
}

Tensor LesionNet::predict(const Tensor& images) const {
  const BoundParams bound(params_, false);
  return forward(bound, constant(images))->value;
}

ProbMapStack LesionNet::forward(const FundusImage& image) const { return ProbMapStack(predict(image.pixels())); }

LesionPresenceVector LesionNet::classify(const FundusImage& image) const {
  return presence_from_maps(forward(image));
}

LesionNet build_lesion_net(const LesionNetConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(seed);
  ParamSet params;
  LesionNet::register_params(config, params, &rng);
  return LesionNet(config, std::move(params));
}

ProbMapStack lesion_net_forward(const LesionNet& net, const FundusImage& image) { return net.forward(image); }

LesionPresenceVector classify_lesions(const LesionNet& net, const FundusImage& image) {
  return net.classify(image);
}

}  // namespace lnet
