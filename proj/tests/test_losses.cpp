#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "lnet/errors.hpp"
#include "lnet/losses.hpp"
#include "lnet/ops.hpp"
#include "support/oracles.hpp"

using namespace lnet;

namespace {

constexpr double kEps = 1e-6;

double value(const Var& v) { return v->value[0]; }

Tensor t1(std::vector<double> v) {
  const int c = static_cast<int>(v.size());
  return Tensor(Shape{1, 1, 1, c}, std::move(v));
}

// Reorders channels by `perm` in an (n,h,w,c) tensor.
Tensor permute_channels(const Tensor& x, const std::vector<int>& perm) {
  Tensor out(x.shape());
  for (int b = 0; b < x.n(); ++b)
    for (int y = 0; y < x.h(); ++y)
      for (int xx = 0; xx < x.w(); ++xx)
        for (int j = 0; j < x.c(); ++j) out(b, y, xx, j) = x(b, y, xx, perm[j]);
  return out;
}

}  // namespace

TEST_CASE("dice_seg_loss examples") {
  std::mt19937_64 rng(1);
  const Tensor t = oracle::random_binary(Shape{2, 4, 4, 3}, rng, 0.4);
  CHECK(std::abs(dice_seg_loss(t, t)) < 1e-15);

  const double st = std::accumulate(t.values().begin(), t.values().end(), 0.0);
  CHECK(dice_seg_loss(Tensor(t.shape()), t) == doctest::Approx(1.0 - kEps / (st + kEps)));
  CHECK(dice_seg_loss(Tensor(t.shape()), t) > 0.999999);

  // 1 - (2*0.5 + eps) / (0.5 + 1 + eps)
  CHECK(dice_seg_loss(t1({0.5, 0.5}), t1({1, 0})) == doctest::Approx(0.3333331111112593).epsilon(1e-12));
}

TEST_CASE("dice_clf_loss examples") {
  CHECK(std::abs(dice_clf_loss(t1({1, 0, 1}), t1({1, 0, 1}))) < 1e-15);
  CHECK(dice_clf_loss(t1({0, 0}), t1({0, 0})) == 0.0);
  // 1 - (1.8 + eps) / (0.81 + 0.01 + 1 + eps)
  CHECK(dice_clf_loss(t1({0.9, 0.1}), t1({1, 0})) == doctest::Approx(0.010989004951096226).epsilon(1e-12));
  CHECK_THROWS_AS(dice_clf_loss(Tensor(Shape{1, 2, 2, 2}), Tensor(Shape{1, 2, 2, 2})), ShapeError);
}

TEST_CASE("dual_loss is the lambda blend of its components") {
  std::mt19937_64 rng(2);
  const Tensor p = oracle::random_tensor(Shape{2, 4, 4, 3}, rng);
  const Tensor t = oracle::random_binary(Shape{2, 4, 4, 3}, rng);
  const double seg = dice_seg_loss(p, t);
  const double clf = dice_clf_loss(presence_from_maps(p), presence_from_maps(t));
  CHECK(dual_loss(p, t, {1.0, kEps}) == seg);
  CHECK(dual_loss(p, t, {0.0, kEps}) == clf);
  CHECK(dual_loss(p, t, {0.8, kEps}) == doctest::Approx(0.8 * seg + 0.2 * clf).epsilon(1e-14));
  // Composition of the two worked component examples.
  const double composed = 0.8 * dice_seg_loss(t1({0.5, 0.5}), t1({1, 0})) + 0.2 * dice_clf_loss(t1({0.9, 0.1}), t1({1, 0}));
  CHECK(composed == doctest::Approx(0.2688642898792267).epsilon(1e-12));
  CHECK_THROWS_AS((DualLossConfig{1.5, kEps}).validate(), ConfigError);
  CHECK_THROWS_AS((DualLossConfig{0.5, 0.0}).validate(), ConfigError);
}

TEST_CASE("weighted cross-entropy examples") {
  std::mt19937_64 rng(3);
  Tensor p(Shape{1, 2, 2, 1}, 0.5);
  const Tensor t(Shape{1, 2, 2, 1}, {1, 0, 1, 0});
  CHECK(value(weighted_cross_entropy(constant(p), t, {2.0})) == doctest::Approx(1.0397207708399179).epsilon(1e-12));

  const Tensor exact(Shape{1, 2, 2, 2}, {1, 0, 0, 1, 1, 1, 0, 0});
  CHECK(value(weighted_cross_entropy(constant(exact), exact, {3.0, 5.0})) < 1e-6);

  const Tensor q = oracle::random_tensor(Shape{1, 3, 3, 2}, rng);
  const Tensor tt = oracle::random_binary(Shape{1, 3, 3, 2}, rng);
  double bce = 0;
  for (std::size_t i = 0; i < q.size(); ++i) bce -= tt[i] * std::log(q[i]) + (1 - tt[i]) * std::log(1 - q[i]);
  CHECK(value(weighted_cross_entropy(constant(q), tt, {1.0, 1.0})) == doctest::Approx(bce / 18).epsilon(1e-12));

  CHECK_THROWS_AS(weighted_cross_entropy(constant(q), tt, {1.0, 0.0}), ConfigError);
  CHECK_THROWS_AS(weighted_cross_entropy(constant(q), tt, {1.0}), ConfigError);
}

TEST_CASE("focal loss examples") {
  std::mt19937_64 rng(4);
  CHECK(value(focal_loss(constant(t1({0.9})), t1({1}), 0.8, 2.0)) ==
        doctest::Approx(0.0008428841252626103).epsilon(1e-10));
  const Tensor q = oracle::random_tensor(Shape{1, 3, 3, 2}, rng);
  const Tensor t = oracle::random_binary(Shape{1, 3, 3, 2}, rng);
  const double bce = value(weighted_cross_entropy(constant(q), t, {1.0, 1.0}));
  CHECK(value(focal_loss(constant(q), t, 0.5, 0.0)) == doctest::Approx(0.5 * bce).epsilon(1e-12));
  CHECK(value(focal_loss(constant(t), t)) < 1e-12);
}

TEST_CASE("grading cross-entropy examples") {
  const Tensor onehot(Shape{2, 1, 1, 5}, {0, 0, 1, 0, 0, 1, 0, 0, 0, 0});
  CHECK(value(cross_entropy_grading(constant(onehot), {2, 0})) < 1e-6);
  const Tensor uniform(Shape{1, 1, 1, 5}, 0.2);
  CHECK(value(cross_entropy_grading(constant(uniform), {3})) == doctest::Approx(1.6094379124341003).epsilon(1e-12));
  const double clamped = value(cross_entropy_grading(constant(onehot), {4, 4}));
  CHECK(std::isfinite(clamped));
  CHECK(clamped == doctest::Approx(16.11809565095832).epsilon(1e-9));
  CHECK_THROWS_AS(cross_entropy_grading(constant(Tensor(Shape{1, 1, 1, 5}, 0.3)), {0}), InvalidInput);
  CHECK_THROWS(cross_entropy_grading(constant(uniform), {5}));
}

TEST_CASE("input checks") {
  CHECK_THROWS_AS(dice_seg_loss(Tensor(Shape{1, 2, 2, 2}), Tensor(Shape{1, 2, 2, 3})), ShapeError);
  CHECK_THROWS_AS(dice_seg_loss(Tensor(Shape{1, 1, 1, 2}), t1({0.5, 1.0})), InvalidInput);
}

TEST_CASE("library losses agree with direct-formula oracles on random tensors") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto rel = [](double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); };
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 1 + static_cast<int>(rng() % 3), s = 1 + static_cast<int>(rng() % 5), c = 1 + static_cast<int>(rng() % 4);
    const Shape shape{n, s, s, c};
    const Tensor p = oracle::random_tensor(shape, rng);
    const Tensor t = oracle::random_binary(shape, rng, u(rng));
    const auto fp = oracle::flat(p), ft = oracle::flat(t);
    const double lambda = u(rng);
    std::vector<double> w(c);
    for (double& x : w) x = 0.1 + 10 * u(rng);
    CHECK(rel(dice_seg_loss(p, t), oracle::dice(fp, ft, kEps)) <= 1e-10);
    CHECK(rel(dual_loss(p, t, {lambda, kEps}), oracle::dual(fp, ft, n, s * s, c, lambda, kEps)) <= 1e-10);
    CHECK(rel(value(weighted_cross_entropy(constant(p), t, w)), oracle::wce(fp, ft, w)) <= 1e-10);
    CHECK(rel(value(focal_loss(constant(p), t, 0.8, 2.0)), oracle::focal(fp, ft, 0.8, 2.0)) <= 1e-10);
  }
}

TEST_CASE("property: Dice-family losses lie in [0, 1)") {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 200; ++trial) {
    const Tensor p = oracle::random_tensor(Shape{2, 3, 3, 2}, rng);
    const Tensor t = oracle::random_binary(Shape{2, 3, 3, 2}, rng, 0.2);
    for (double v : {dice_seg_loss(p, t), dual_loss(p, t), dice_clf_loss(presence_from_maps(p), presence_from_maps(t))}) {
      CHECK(v >= 0.0);
      CHECK(v < 1.0);
    }
  }
}

TEST_CASE("property: image-level Dice ignores blob size") {
  std::mt19937_64 rng(7);
  const Tensor p = oracle::random_tensor(Shape{1, 6, 6, 2}, rng);
  Tensor small(Shape{1, 6, 6, 2}), large(Shape{1, 6, 6, 2});
  small(0, 1, 1, 0) = 1;
  for (int y = 0; y < 5; ++y)
    for (int x = 0; x < 4; ++x) large(0, y, x, 0) = 1;
  const Tensor presence = presence_from_maps(p);
  CHECK(dice_clf_loss(presence, presence_from_maps(small)) == dice_clf_loss(presence, presence_from_maps(large)));
}

TEST_CASE("property: dual loss is linear in lambda") {
  std::mt19937_64 rng(8);
  const Tensor p = oracle::random_tensor(Shape{2, 4, 4, 3}, rng);
  const Tensor t = oracle::random_binary(Shape{2, 4, 4, 3}, rng);
  const double a = dual_loss(p, t, {0.0, kEps}), b = dual_loss(p, t, {1.0, kEps});
  for (double lambda : {0.1, 0.25, 0.5, 0.8, 0.95}) {
    CHECK(dual_loss(p, t, {lambda, kEps}) == doctest::Approx(lambda * b + (1 - lambda) * a).epsilon(1e-13));
  }
}

TEST_CASE("property: consistent channel permutation leaves every loss unchanged") {
  std::mt19937_64 rng(9);
  const Tensor p = oracle::random_tensor(Shape{2, 3, 3, 4}, rng);
  const Tensor t = oracle::random_binary(Shape{2, 3, 3, 4}, rng);
  const std::vector<int> perm{2, 0, 3, 1};
  const Tensor pp = permute_channels(p, perm), tp = permute_channels(t, perm);
  const std::vector<double> w{1, 2, 3, 4};
  std::vector<double> wp(4);
  for (int j = 0; j < 4; ++j) wp[j] = w[perm[j]];
  CHECK(dice_seg_loss(pp, tp) == doctest::Approx(dice_seg_loss(p, t)).epsilon(1e-14));
  CHECK(dual_loss(pp, tp) == doctest::Approx(dual_loss(p, t)).epsilon(1e-14));
  CHECK(value(weighted_cross_entropy(constant(pp), tp, wp)) ==
        doctest::Approx(value(weighted_cross_entropy(constant(p), t, w))).epsilon(1e-14));
  CHECK(value(focal_loss(constant(pp), tp)) == doctest::Approx(value(focal_loss(constant(p), t))).epsilon(1e-14));
}

TEST_CASE("loss gradients match central differences") {
  std::mt19937_64 rng(10);
  const Shape shape{1, 4, 4, 2};
  // Keep probabilities away from the clamp and from GMP ties.
  const Tensor p = oracle::random_tensor(shape, rng, 0.05, 0.95);
  const Tensor t = oracle::random_binary(shape, rng, 0.4);
  const std::vector<double> w{2.5, 0.7};
  using F = std::function<Var(const std::vector<Var>&)>;
  const std::vector<std::pair<const char*, F>> cases{
      {"seg", [&](const std::vector<Var>& v) { return dice_seg_loss(v[0], t); }},
      {"clf", [&](const std::vector<Var>& v) { return dice_clf_loss(ops::global_max_pool(v[0]), presence_from_maps(t)); }},
      {"dual", [&](const std::vector<Var>& v) { return dual_loss(v[0], t); }},
      {"wce", [&](const std::vector<Var>& v) { return weighted_cross_entropy(v[0], t, w); }},
      {"focal", [&](const std::vector<Var>& v) { return focal_loss(v[0], t); }},
  };
  for (const auto& [name, f] : cases) {
    CAPTURE(name);
    const auto r = oracle::grad_check(f, {p}, rng);
    CHECK(r.checked == 32);
    CHECK(r.passed == r.checked);
  }
  // Grading loss through a softmax of free logits.
  const Tensor logits = oracle::random_tensor(Shape{3, 1, 1, 5}, rng, -2, 2);
  const auto r = oracle::grad_check(
      [](const std::vector<Var>& v) { return cross_entropy_grading(ops::softmax(v[0]), {0, 3, 4}); }, {logits}, rng);
  CHECK(r.passed == r.checked);
}

TEST_CASE("inverse-frequency weights") {
  LesionMaskStack a(10, 10, kNumLesions);
  for (int x = 0; x < 10; ++x) a.at(0, x, 0) = 1;  // 10 of 100 pixels
  a.at(5, 5, 1) = 1;                                 // 1 of 100
  const auto w = inverse_frequency_weights({a});
  CHECK(w[0] == doctest::Approx(9.0));
  CHECK(w[1] == doctest::Approx(99.0));
  CHECK(w[2] == 100.0);  // no positives: capped
  CHECK(inverse_frequency_weights({a}, 50.0)[1] == 50.0);
}
