#include <doctest.h>

#include <numeric>
#include <random>

#include "lnet/errors.hpp"
#include "lnet/losses.hpp"
#include "lnet/multitask.hpp"
#include "lnet/ops.hpp"
#include "lnet/training.hpp"
#include "support/oracles.hpp"
#include "support/samples.hpp"

using namespace lnet;

namespace {

BackboneConfig tiny_backbone() {
  BackboneConfig b;
  b.stage_channels = {4, 4, 6, 6, 8};
  return b;
}

LesionNet tiny_side(std::uint64_t seed = 1) {
  LesionNetConfig c;
  c.variant = 16;
  c.backbone = tiny_backbone();
  return build_lesion_net(c, seed);
}

MultiTaskConfig tiny_config(GradingMode mode) {
  MultiTaskConfig c;
  c.backbone = tiny_backbone();
  c.mode = mode;
  c.attention_hidden = 5;
  return c;
}

// Same main-branch and head parameters under a different mode.
MultiTaskNet with_mode(const MultiTaskNet& net, GradingMode mode) {
  MultiTaskConfig c = net.config();
  c.mode = mode;
  ParamSet expected;
  MultiTaskNet::register_params(c, net.side().config().m, expected, nullptr);
  ParamSet params;
  for (std::size_t i = 0; i < expected.size(); ++i) params.add(expected.name(i), net.params().at(expected.name(i)));
  return MultiTaskNet(c, params, net.side());
}

Tensor images(int n, int side, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return oracle::random_tensor(Shape{n, side, side, 3}, rng);
}

}  // namespace

TEST_CASE("downsample_maps examples") {
  Tensor one(Shape{1, 4, 4, 1});
  one(0, 2, 1, 0) = 1.0;
  const Tensor d = downsample_maps(one, 2);
  CHECK(d.shape() == Shape{1, 2, 2, 1});
  CHECK(std::count(d.values().begin(), d.values().end(), 1.0) == 1);
  CHECK(d(0, 1, 0, 0) == 1.0);

  const Tensor c(Shape{2, 8, 8, 3}, 0.37);
  const Tensor dc = downsample_maps(c, 2);
  CHECK(dc.shape() == Shape{2, 2, 2, 3});
  for (double v : dc.values()) CHECK(v == 0.37);

  std::mt19937_64 rng(1);
  const Tensor r = oracle::random_tensor(Shape{1, 4, 4, 2}, rng);
  CHECK(downsample_maps(r, 4) == r);
  CHECK_THROWS_AS(downsample_maps(r, 3), ShapeError);
  CHECK_THROWS_AS(downsample_maps(r, 0), ShapeError);
}

TEST_CASE("property: downsampled maps take the block maximum and stay in [0,1]") {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const int f = 1 << (rng() % 3), t = 1 + static_cast<int>(rng() % 3);
    const Tensor m = oracle::random_tensor(Shape{1, f * t, f * t, 3}, rng);
    const Tensor d = downsample_maps(m, t);
    for (int y = 0; y < t; ++y)
      for (int x = 0; x < t; ++x)
        for (int j = 0; j < 3; ++j) {
          double best = 0.0;
          for (int dy = 0; dy < f; ++dy)
            for (int dx = 0; dx < f; ++dx) best = std::max(best, m(0, y * f + dy, x * f + dx, j));
          CHECK(d(0, y, x, j) == best);
          CHECK(d(0, y, x, j) <= 1.0);
        }
  }
}

TEST_CASE("cw_maxpool_weights examples") {
  const Tensor maps(Shape{1, 1, 1, 2}, {0.1, 0.7});
  const Tensor w = cw_maxpool_weights(constant(maps), 6)->value;
  CHECK(w.shape() == Shape{1, 1, 1, 6});
  for (double v : w.values()) CHECK(v == 0.7);

  const Tensor zero = cw_maxpool_weights(constant(Tensor(Shape{1, 3, 3, 8})), 4)->value;
  for (double v : zero.values()) CHECK(v == 0.0);
}

TEST_CASE("property: cw_maxpool weights ignore lesion channel order") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor m = oracle::random_tensor(Shape{2, 3, 3, 8}, rng);
    std::vector<int> perm(8);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    Tensor pm(m.shape());
    for (int b = 0; b < 2; ++b)
      for (int y = 0; y < 3; ++y)
        for (int x = 0; x < 3; ++x)
          for (int j = 0; j < 8; ++j) pm(b, y, x, j) = m(b, y, x, perm[j]);
    CHECK(cw_maxpool_weights(constant(m), 5)->value == cw_maxpool_weights(constant(pm), 5)->value);
  }
}

TEST_CASE("conv attention examples") {
  const ConvAttention block(8, 64, 256);
  ParamSet zeros;
  block.register_params(zeros, nullptr);
  std::mt19937_64 rng(4);
  const Tensor maps = oracle::random_tensor(Shape{1, 4, 4, 8}, rng);
  const Tensor w = conv_attention_weights(BoundParams(zeros, false), block, constant(maps))->value;
  CHECK(w.shape() == Shape{1, 4, 4, 256});
  for (double v : w.values()) CHECK(v == 0.5);

  Rng init(5);
  const ConvAttention small(3, 4, 5);
  ParamSet params;
  small.register_params(params, &init);
  const Tensor m = oracle::random_tensor(Shape{1, 4, 4, 3}, rng);
  const Tensor target = oracle::random_binary(Shape{1, 4, 4, 5}, rng, 0.5);
  const auto r = oracle::param_grad_check(
      params,
      [&](const BoundParams& p) {
        return weighted_cross_entropy(conv_attention_weights(p, small, constant(m)), target, {1, 2, 3, 4, 5});
      },
      rng, 1000);
  CAPTURE(r.worst);
  CHECK(r.passed == r.checked);
}

TEST_CASE("lesion_concat_forward examples") {
  std::mt19937_64 rng(6);
  Rng init(6);
  const Linear fc{"fc", 6 + 8, 5};
  ParamSet params;
  fc.register_params(params, &init);
  const Tensor feats = oracle::random_tensor(Shape{3, 2, 2, 6}, rng);
  const Tensor presence = oracle::random_binary(Shape{3, 1, 1, 8}, rng, 0.5);
  const Tensor out = lesion_concat_forward(BoundParams(params, false), fc, constant(feats), constant(presence))->value;
  CHECK(out.shape() == Shape{3, 1, 1, 5});
  for (int b = 0; b < 3; ++b) {
    double s = 0;
    for (int g = 0; g < 5; ++g) s += out(b, 0, 0, g);
    CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
  }

  // With zero presence the concatenated block contributes nothing.
  ParamSet image_only;
  const Linear fc_img{"fc", 6, 5};
  Tensor w(Shape{1, 1, 6, 5});
  const Tensor& full = params.at("fc.weight");
  for (int i = 0; i < 6; ++i)
    for (int g = 0; g < 5; ++g) w(0, 0, i, g) = full(0, 0, i, g);
  image_only.add("fc.weight", w);
  image_only.add("fc.bias", params.at("fc.bias"));
  const Tensor zero_p = lesion_concat_forward(BoundParams(params, false), fc, constant(feats),
                                              constant(Tensor(Shape{3, 1, 1, 8})))->value;
  const Tensor plain =
      ops::softmax(fc_img(BoundParams(image_only, false), ops::global_avg_pool(constant(feats))))->value;
  for (std::size_t i = 0; i < plain.size(); ++i) CHECK(zero_p[i] == doctest::Approx(plain[i]).epsilon(1e-14));

  CHECK_THROWS_AS(lesion_concat_forward(BoundParams(params, false), fc, constant(feats),
                                        constant(Tensor(Shape{3, 1, 1, 7}))),
                  ShapeError);

  // Head input is k + m; at ResNet-50 width that is 2048 + 5.
  MultiTaskConfig concat;
  concat.mode = GradingMode::lesion_concat;
  ParamSet head;
  MultiTaskNet::register_params(concat, 5, head, nullptr);
  CHECK(head.at("head.fc.weight").shape().w == concat.backbone.final_channels() + 5);
  concat.backbone.stage_channels = {64, 256, 512, 1024, 2048};
  CHECK(concat.backbone.final_channels() + 5 == 2053);
}

TEST_CASE("predict_grade examples") {
  const std::array<double, 5> a{0.1, 0.2, 0.4, 0.2, 0.1}, b{0.3, 0.3, 0.2, 0.1, 0.1}, c{0, 0, 0, 0, 1};
  CHECK(predict_grade(a) == DRGrade::DR2);
  CHECK(predict_grade(b) == DRGrade::DR0);
  CHECK(predict_grade(c) == DRGrade::DR4);
  CHECK_THROWS_AS(predict_grade(std::vector<double>{0.5, 0.5}), InvalidInput);
}

TEST_CASE("grading modes and configuration") {
  for (auto m : {GradingMode::plain, GradingMode::cw_maxpool, GradingMode::conv, GradingMode::lesion_concat}) {
    CHECK(grading_mode_from_string(to_string(m)) == m);
  }
  CHECK_THROWS_AS(grading_mode_from_string("self_attention"), ConfigError);
  MultiTaskConfig bad;
  bad.attention_hidden = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = {};
  bad.num_grades = 4;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  // Parameter sets must match the architecture.
  const MultiTaskNet conv = build_multitask_net(tiny_config(GradingMode::conv), tiny_side(), 1);
  CHECK(conv.params().contains("att.conv1.weight"));
  CHECK_THROWS_AS(MultiTaskNet(tiny_config(GradingMode::plain), conv.params(), tiny_side()), ConfigError);
  const MultiTaskNet plain = build_multitask_net(tiny_config(GradingMode::plain), tiny_side(), 1);
  CHECK_FALSE(plain.params().contains("att.conv1.weight"));
}

TEST_CASE("all-ones weights reproduce the plain classifier") {
  const MultiTaskNet net = build_multitask_net(tiny_config(GradingMode::conv), tiny_side(), 7);
  const MultiTaskNet plain = with_mode(net, GradingMode::plain);
  const Tensor x = images(2, 64, 8);
  const BoundParams p(net.params(), false);
  const Tensor ones(Shape{2, 2, 2, 8}, 1.0);
  const Tensor fused = net.grade_with_weights(p, constant(x), constant(ones))->value;
  CHECK(fused == plain.grade_probabilities(x));
}

TEST_CASE("all-zero weights give the softmax of the head bias") {
  MultiTaskNet net = build_multitask_net(tiny_config(GradingMode::conv), tiny_side(), 9);
  Tensor& bias = net.params().at("head.fc.bias");
  bias = Tensor(bias.shape(), {0.3, -1.0, 2.0, 0.0, 0.5});
  const Tensor x = images(1, 64, 10);
  const Tensor out =
      net.grade_with_weights(BoundParams(net.params(), false), constant(x), constant(Tensor(Shape{1, 2, 2, 8})))->value;
  const Tensor expect = ops::softmax(constant(bias))->value;
  for (int g = 0; g < 5; ++g) CHECK(out[g] == doctest::Approx(expect[g]).epsilon(1e-14));
}

TEST_CASE("fuse_and_grade returns consistent outputs") {
  const LesionNet side = tiny_side(11);
  for (auto mode : {GradingMode::plain, GradingMode::cw_maxpool, GradingMode::conv, GradingMode::lesion_concat}) {
    CAPTURE(to_string(mode));
    const MultiTaskNet net = build_multitask_net(tiny_config(mode), side, 12);
    const FundusImage image(images(1, 64, 13));
    const GradingOutput out = fuse_and_grade(net, image);
    const ProbMapStack direct = lesion_net_forward(side, image);
    CHECK(out.maps.maps() == direct.maps());
    CHECK(out.presence.values == presence_from_maps(out.maps).values);
    CHECK(std::accumulate(out.probabilities.begin(), out.probabilities.end(), 0.0) ==
          doctest::Approx(1.0).epsilon(1e-12));
    const Tensor batch = net.grade_probabilities(image.pixels());
    for (int g = 0; g < 5; ++g) CHECK(batch[g] == out.probabilities[g]);
  }
  const MultiTaskNet net = build_multitask_net(tiny_config(GradingMode::conv), side, 12);
  CHECK_THROWS_AS(fuse_and_grade(net, FundusImage(images(1, 48, 1))), ShapeError);
}

TEST_CASE("grading loss gradient through attention and fusion") {
  const MultiTaskNet net = build_multitask_net(tiny_config(GradingMode::conv), tiny_side(14), 15);
  const Tensor x = images(2, 32, 16);
  const Tensor maps = net.side_maps(x);
  std::mt19937_64 rng(17);
  const auto r = oracle::param_grad_check(
      net.params(),
      [&](const BoundParams& p) { return cross_entropy_grading(net.grade(p, constant(x), maps), {1, 3}); },
      rng, 12);
  CAPTURE(r.worst);
  CHECK(r.pass_fraction() >= 0.99);
}

TEST_CASE("grading training leaves the side branch untouched") {
  const auto data = testing_support::synth_samples(64, 6, 18);
  const LesionNet side = tiny_side(19);
  const std::uint64_t before = side.params().checksum();
  TrainConfig cfg;
  cfg.batch_size = 2;
  cfg.max_batches = 3;
  cfg.validate_every = 2;
  cfg.augment.enabled = false;
  const GradingResult res = train_grading(data, data, side, tiny_config(GradingMode::conv), cfg);
  CHECK(side.params().checksum() == before);
  CHECK(res.last.side().params().checksum() == before);
  CHECK(res.best.side().params().checksum() == before);
  CHECK(res.last.params().checksum() != build_multitask_net(tiny_config(GradingMode::conv), side, 0).params().checksum());
}
