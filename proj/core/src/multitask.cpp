#include "lnet/multitask.hpp"

#include "lnet/errors.hpp"
#include "lnet/ops.hpp"

namespace lnet {

std::string_view to_string(GradingMode mode) {
  switch (mode) {
    case GradingMode::plain: return "plain";
    case GradingMode::cw_maxpool: return "cw_maxpool";
    case GradingMode::conv: return "conv";
    case GradingMode::lesion_concat: return "lesion_concat";
  }
  return "unknown";
}

GradingMode grading_mode_from_string(std::string_view name) {
  for (GradingMode m : {GradingMode::plain, GradingMode::cw_maxpool, GradingMode::conv, GradingMode::lesion_concat}) {
    if (to_string(m) == name) return m;
  }
  throw ConfigError("unknown grading mode '" + std::string(name) + "'");
}

void MultiTaskConfig::validate() const {
  backbone.validate();
  if (attention_hidden <= 0) throw ConfigError("attention_hidden must be positive");
  if (num_grades != kNumGrades) throw ConfigError("grading head must have 5 outputs");
}

Var downsample_maps(const Var& maps, int target_side) {
  const int side = maps->value.h();
  if (target_side <= 0 || side % target_side != 0 || maps->value.w() != side) {
    throw ShapeError("downsample_maps: target side " + std::to_string(target_side) + " does not divide " +
                     std::to_string(side));
  }
  return ops::max_pool(maps, side / target_side);
}

Tensor downsample_maps(const Tensor& maps, int target_side) {
  return downsample_maps(constant(maps), target_side)->value;
}

Var cw_maxpool_weights(const Var& maps, int k) { return ops::broadcast_channels(ops::channel_max(maps), k); }

ConvAttention::ConvAttention(int m, int hidden, int k, const std::string& prefix)
    : first{prefix + ".conv1", m, hidden, 3, 1, true}, second{prefix + ".conv2", hidden, k, 3, 1, true} {}

void ConvAttention::register_params(ParamSet& params, Rng* rng) const {
  first.register_params(params, rng);
  second.register_params(params, rng);
}

Var ConvAttention::operator()(const BoundParams& p, const Var& maps) const {
  return ops::sigmoid(second(p, ops::relu(first(p, maps))));
}

Var conv_attention_weights(const BoundParams& p, const ConvAttention& block, const Var& maps) {
  return block(p, maps);
}

Var lesion_concat_forward(const BoundParams& p, const Linear& fc, const Var& features, const Var& presence) {
  const Var pooled = ops::global_avg_pool(features);
  if (presence->value.n() != pooled->value.n() || presence->value.h() != 1 || presence->value.w() != 1) {
    throw ShapeError("lesion_concat_forward: presence must be (n,1,1,m)");
  }
  if (fc.in != pooled->value.c() + presence->value.c()) {
    throw ShapeError("lesion_concat_forward: head expects " + std::to_string(fc.in) + " inputs, got " +
                     std::to_string(pooled->value.c() + presence->value.c()));
  }
  return ops::softmax(fc(p, ops::concat_channels(pooled, presence)));
}

DRGrade predict_grade(std::span<const double> probabilities) {
  if (probabilities.size() != static_cast<std::size_t>(kNumGrades)) {
    throw InvalidInput("predict_grade expects 5 probabilities");
  }
  int best = 0;
  for (int g = 1; g < kNumGrades; ++g) {
    if (probabilities[g] > probabilities[best]) best = g;
  }
  return static_cast<DRGrade>(best);
}

namespace {

Linear make_head(const MultiTaskConfig& config, int m) {
  const int k = config.backbone.final_channels();
  const int in = config.mode == GradingMode::lesion_concat ? k + m : k;
  return Linear{"head.fc", in, config.num_grades};
}

}  // namespace

void MultiTaskNet::register_params(const MultiTaskConfig& config, int m, ParamSet& params, Rng* rng) {
  config.validate();
  ReferenceBackbone(config.backbone, "main").register_params(params, rng);
  if (config.mode == GradingMode::conv) {
    ConvAttention(m, config.attention_hidden, config.backbone.final_channels()).register_params(params, rng);
  }
  make_head(config, m).register_params(params, rng);
}

MultiTaskNet::MultiTaskNet(MultiTaskConfig config, ParamSet params, LesionNet side)
    : config_(config), params_(std::move(params)), side_(std::move(side)) {
  config_.validate();
  init_layers();
  ParamSet expected;
  register_params(config_, side_.config().m, expected, nullptr);
  if (expected.size() != params_.size()) throw ConfigError("parameter set does not match multi-task architecture");
  for (std::size_t i = 0; i < expected.size(); ++i) {
    if (!params_.contains(expected.name(i)) || params_.at(expected.name(i)).shape() != expected.value(i).shape()) {
      throw ConfigError("parameter " + expected.name(i) + " missing or mis-shaped");
    }
  }
}

void MultiTaskNet::init_layers() {
  main_ = std::make_shared<ReferenceBackbone>(config_.backbone, "main");
  if (config_.mode == GradingMode::conv) {
    attention_ = ConvAttention(side_.config().m, config_.attention_hidden, config_.backbone.final_channels());
  }
  fc_ = make_head(config_, side_.config().m);
}

Tensor MultiTaskNet::side_maps(const Tensor& images) const { return side_.predict(images); }

Var MultiTaskNet::weights(const BoundParams& p, const Tensor& side_maps, int feature_side) const {
  const Var small = downsample_maps(constant(side_maps), feature_side);
  const int k = config_.backbone.final_channels();
  switch (config_.mode) {
    case GradingMode::cw_maxpool: return cw_maxpool_weights(small, k);
    case GradingMode::conv: return conv_attention_weights(p, attention_, small);
    default: throw ConfigError("grading mode has no attention weights");
  }
}

Var MultiTaskNet::grade_with_weights(const BoundParams& p, const Var& images, const Var& weights) const {
  const Var features = main_->forward(p, images).last();
  return ops::softmax(fc_(p, ops::global_avg_pool(ops::mul(features, weights))));
}

Var MultiTaskNet::grade(const BoundParams& p, const Var& images, const Tensor& side_maps) const {
  const Var features = main_->forward(p, images).last();
  switch (config_.mode) {
    case GradingMode::plain:
      return ops::softmax(fc_(p, ops::global_avg_pool(features)));
    case GradingMode::lesion_concat:
      return lesion_concat_forward(p, fc_, features, constant(presence_from_maps(side_maps)));
    case GradingMode::cw_maxpool:
    case GradingMode::conv: {
      const Var w = weights(p, side_maps, features->value.h());
      return ops::softmax(fc_(p, ops::global_avg_pool(ops::mul(features, w))));
    }
  }
  throw ConfigError("unknown grading mode");
}

Tensor MultiTaskNet::grade_probabilities(const Tensor& images) const {
  const BoundParams bound(params_, false);
  const Tensor maps = config_.mode == GradingMode::plain ? Tensor() : side_maps(images);
  return grade(bound, constant(images), maps)->value;
}

GradingOutput MultiTaskNet::fuse_and_grade(const FundusImage& image) const {
  check_input_images(image.pixels());
  const Tensor maps = side_maps(image.pixels());
  const BoundParams bound(params_, false);
  const Tensor probs = grade(bound, constant(image.pixels()), maps)->value;
  GradingOutput out;
  for (int g = 0; g < kNumGrades; ++g) out.probabilities[g] = probs[g];
  out.maps = ProbMapStack(maps);
  out.presence = presence_from_maps(out.maps);
  return out;
}

MultiTaskNet build_multitask_net(const MultiTaskConfig& config, LesionNet side, std::uint64_t seed) {
  Rng rng(seed);
  ParamSet params;
  MultiTaskNet::register_params(config, side.config().m, params, &rng);
  return MultiTaskNet(config, std::move(params), std::move(side));
}

GradingOutput fuse_and_grade(const MultiTaskNet& net, const FundusImage& image) { return net.fuse_and_grade(image); }

}  // namespace lnet
