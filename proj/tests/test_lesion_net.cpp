#include <doctest.h>

#include <random>

#include "lnet/errors.hpp"
#include "lnet/lesion_net.hpp"
#include "lnet/losses.hpp"
#include "lnet/ops.hpp"
#include "support/oracles.hpp"

using namespace lnet;

namespace {

LesionNetConfig small(int variant) {
  LesionNetConfig c;
  c.variant = variant;
  c.backbone.stage_channels = {4, 6, 8, 10, 12};
  return c;
}

LesionNet zero_head(const LesionNet& net) {
  ParamSet p = net.params();
  p.at("head.weight").fill(0.0);
  p.at("head.bias").fill(0.0);
  return LesionNet(net.config(), p);
}

}  // namespace

TEST_CASE("variant selects the number of merge steps") {
  const std::array<std::pair<int, int>, 5> expected{{{32, 0}, {16, 1}, {8, 2}, {4, 3}, {2, 4}}};
  for (auto [variant, steps] : expected) {
    LesionNetConfig c;
    c.variant = variant;
    CHECK(c.merge_steps() == steps);
    const LesionNet net = build_lesion_net(c, 1);
    for (int i = 0; i < 4; ++i) CHECK(net.params().contains("merge" + std::to_string(i + 1) + ".reduce.weight") == (i < steps));
    CHECK(net.params().at("head.weight").shape().c == 8);
  }
  LesionNetConfig bad;
  bad.variant = 7;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  CHECK_THROWS_AS(build_lesion_net(bad, 1), ConfigError);
}

TEST_CASE("2s consumes skips from stages 4, 3, 2 and 1") {
  const LesionNet net = build_lesion_net(LesionNetConfig{2}, 2);
  const auto& ch = net.config().backbone.stage_channels;
  // merge i reduces to the width of stage 4 - i (1-based), so its output count reveals the skip.
  for (int i = 0; i < 4; ++i) {
    CHECK(net.params().at("merge" + std::to_string(i + 1) + ".reduce.weight").shape().c == ch[3 - i]);
  }
}

TEST_CASE("merge_step shape rule") {
  Rng rng(3);
  ParamSet params;
  const Conv2d reduce{"r", 256, 128, 1, 1, true};
  reduce.register_params(params, &rng);
  const BoundParams p(params, false);
  std::mt19937_64 g(3);
  const Var current = constant(oracle::random_tensor(Shape{1, 4, 4, 256}, g));
  const Var skip = constant(oracle::random_tensor(Shape{1, 8, 8, 128}, g));
  CHECK(merge_step(p, reduce, current, skip)->value.shape() == Shape{1, 8, 8, 256});
  CHECK_THROWS_AS(merge_step(p, reduce, current, constant(Tensor(Shape{1, 4, 4, 128}))), ShapeError);

  // Constants survive the parameter-free upsample exactly.
  const Tensor up = ops::upsample_bilinear(constant(Tensor(Shape{1, 4, 4, 3}, 0.37)), 2)->value;
  for (double v : up.values()) CHECK(v == 0.37);
}

TEST_CASE("forward produces s x s x m probabilities for every variant") {
  std::mt19937_64 rng(4);
  const Tensor image = oracle::random_tensor(Shape{1, 128, 128, 3}, rng);
  for (int variant : {2, 4, 8, 16, 32}) {
    const LesionNet net = build_lesion_net(LesionNetConfig{variant}, 4);
    const ProbMapStack maps = lesion_net_forward(net, FundusImage(image));
    CHECK(maps.maps().shape() == Shape{1, 128, 128, 8});
    for (double v : maps.maps().values()) {
      CHECK(v > 0.0);
      CHECK(v < 1.0);
    }
    const ProbMapStack half = lesion_net_forward(zero_head(net), FundusImage(image));
    for (double v : half.maps().values()) CHECK(v == 0.5);
    for (double v : classify_lesions(zero_head(net), FundusImage(image)).values) CHECK(v == 0.5);
  }
}

TEST_CASE("property: shape invariant across sides") {
  for (int variant : {2, 4, 8, 16, 32}) {
    const LesionNet net = build_lesion_net(small(variant), 5);
    for (int side : {32, 64, 128, 256}) {
      CHECK(net.predict(Tensor(Shape{1, side, side, 3}, 0.3)).shape() == Shape{1, side, side, 8});
    }
  }
  CHECK_THROWS_AS(build_lesion_net(small(16), 5).predict(Tensor(Shape{1, 48, 48, 3})), ShapeError);
}

TEST_CASE("property: parameter count grows with the expansive path") {
  std::size_t previous = 0;
  for (int variant : {32, 16, 8, 4, 2}) {
    const std::size_t count = param_count(build_lesion_net(LesionNetConfig{variant}, 6));
    CHECK(count > previous);
    previous = count;
  }
}

TEST_CASE("classification equals global max pooling of the maps") {
  const LesionNet net = build_lesion_net(small(16), 7);
  std::mt19937_64 rng(7);
  for (int i = 0; i < 20; ++i) {
    const FundusImage image(oracle::random_tensor(Shape{1, 64, 64, 3}, rng));
    CHECK(classify_lesions(net, image) == presence_from_maps(lesion_net_forward(net, image)));
  }
  // One super-threshold pixel per channel makes every presence positive.
  Tensor maps(Shape{1, 4, 4, 8}, 0.1);
  for (int j = 0; j < 8; ++j) maps(0, j % 4, j / 2, j) = 0.8;
  for (double v : threshold(presence_from_maps(ProbMapStack(maps))).values) CHECK(v == 1.0);
}

TEST_CASE("batched forward equals per-image forward") {
  const LesionNet net = build_lesion_net(small(8), 8);
  std::mt19937_64 rng(8);
  const Tensor a = oracle::random_tensor(Shape{1, 32, 32, 3}, rng);
  const Tensor b = oracle::random_tensor(Shape{1, 32, 32, 3}, rng);
  const std::vector<Tensor> both{a, b};
  const Tensor batched = net.predict(Tensor::stack(both));
  CHECK(batched.slice(0) == net.predict(a));
  CHECK(batched.slice(1) == net.predict(b));
}

TEST_CASE("dual-loss parameter gradients match central differences") {
  const LesionNet net = build_lesion_net(small(16), 9);
  std::mt19937_64 rng(9);
  const Tensor image = oracle::random_tensor(Shape{2, 32, 32, 3}, rng);
  const Tensor target = oracle::random_binary(Shape{2, 32, 32, 8}, rng, 0.1);
  auto loss = [&](const BoundParams& p) { return dual_loss(net.forward(p, constant(image)), target); };
  const auto r = oracle::param_grad_check(net.params(), loss, rng, 12);
  CHECK(r.checked > 200);
  CHECK(r.pass_fraction() >= 0.99);
}
