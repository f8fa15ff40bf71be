#include "lnet/backbone.hpp"

#include "lnet/errors.hpp"
#include "lnet/ops.hpp"

namespace lnet {

std::string_view to_string(Activation a) { return a == Activation::relu ? "relu" : "silu"; }

Activation activation_from_string(std::string_view name) {
  if (name == "silu") return Activation::silu;
  if (name == "relu") return Activation::relu;
  throw ConfigError("unknown activation '" + std::string(name) + "'");
}

void BackboneConfig::validate() const {
  for (int c : stage_channels) {
    if (c <= 0) throw ConfigError("backbone stage channels must be positive");
  }
}

void check_input_images(const Tensor& images) {
  if (images.c() != 3) throw ShapeError("expected 3-channel images, got " + images.shape().str());
  if (images.h() != images.w()) throw ShapeError("expected square images, got " + images.shape().str());
  if (images.h() <= 0 || images.h() % 32 != 0) {
    throw ShapeError("image side " + std::to_string(images.h()) + " is not divisible by 32");
  }
}

ReferenceBackbone::ReferenceBackbone(BackboneConfig config, std::string prefix)
    : config_(config), prefix_(std::move(prefix)) {
  config_.validate();
  int in = 3;
  for (int i = 0; i < kNumStages; ++i) {
    const std::string stage = prefix_ + ".stage" + std::to_string(i + 1);
    const int out = config_.stage_channels[i];
    down_[i] = Conv2d{stage + ".down", in, out, 3, 2, true};
    refine_[i] = Conv2d{stage + ".refine", out, out, 3, 1, true};
    in = out;
  }
}

void ReferenceBackbone::register_params(ParamSet& params, Rng* rng) const {
  for (int i = 0; i < kNumStages; ++i) {
    down_[i].register_params(params, rng);
    refine_[i].register_params(params, rng);
  }
}

FeaturePyramid ReferenceBackbone::forward(const BoundParams& p, const Var& images) const {
  check_input_images(images->value);
  FeaturePyramid pyr;
  auto activate = [&](const Var& v) { return config_.activation == Activation::relu ? ops::relu(v) : ops::silu(v); };
  Var x = images;
  for (int i = 0; i < kNumStages; ++i) {
    x = activate(down_[i](p, x));
    x = activate(refine_[i](p, x));
    pyr.stages[i] = x;
  }
  return pyr;
}

FeaturePyramid backbone_forward(const ContractingPath& path, const ParamSet& params, const Tensor& images) {
  const BoundParams bound(params, false);
  return path.forward(bound, constant(images));
}

}  // namespace lnet
