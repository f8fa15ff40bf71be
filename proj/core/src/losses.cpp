#include "lnet/losses.hpp"

#include <algorithm>
#include <cmath>

#include "lnet/errors.hpp"
#include "lnet/ops.hpp"

namespace lnet {

void DualLossConfig::validate() const {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ConfigError("lambda must lie in [0,1]");
  if (!(epsilon > 0.0)) throw ConfigError("epsilon must be positive");
}

namespace {

void require_binary(const Tensor& t, const char* what) {
  for (double v : t.values()) {
    if (v != 0.0 && v != 1.0) throw InvalidInput(std::string(what) + ": targets must be binary");
  }
}

Tensor scalar(double v) { return Tensor({1, 1, 1, 1}, v); }

double clamp_prob(double p) { return std::clamp(p, kProbClamp, 1.0 - kProbClamp); }
bool clamped(double p) { return p < kProbClamp || p > 1.0 - kProbClamp; }

}  // namespace

Var dice_loss(const Var& p, const Tensor& t, double epsilon) {
  require_same_shape(p->value, t, "dice_loss");
  require_binary(t, "dice_loss");
  if (!(epsilon > 0.0)) throw ConfigError("dice smoothing must be positive");
  const Tensor& pv = p->value;
  double inter = 0.0, pp = 0.0, tt = 0.0;
  for (std::size_t i = 0; i < pv.size(); ++i) {
    inter += pv[i] * t[i];
    pp += pv[i] * pv[i];
    tt += t[i] * t[i];
  }
  const double num = 2.0 * inter + epsilon;
  const double den = pp + tt + epsilon;
  auto target = std::make_shared<Tensor>(t);
  return make_node(scalar(1.0 - num / den), {p}, [target, num, den](Node& self) {
    Node& pn = *self.inputs[0];
    Tensor& dp = pn.grad_buffer();
    const double g = self.grad[0];
    const double den2 = den * den;
    for (std::size_t i = 0; i < dp.size(); ++i) {
      dp[i] -= g * (2.0 * (*target)[i] * den - num * 2.0 * pn.value[i]) / den2;
    }
  });
}

Var dice_seg_loss(const Var& p, const Tensor& t, double epsilon) { return dice_loss(p, t, epsilon); }

Var dice_clf_loss(const Var& presence, const Tensor& truth, double epsilon) {
  if (presence->value.h() != 1 || presence->value.w() != 1) {
    throw ShapeError("dice_clf_loss expects (n,1,1,m) presence vectors");
  }
  return dice_loss(presence, truth, epsilon);
}

Var dual_loss(const Var& p, const Tensor& t, const DualLossConfig& config) {
  config.validate();
  require_same_shape(p->value, t, "dual_loss");
  const Var seg = dice_seg_loss(p, t, config.epsilon);
  const Var clf = dice_clf_loss(ops::global_max_pool(p), presence_from_maps(t), config.epsilon);
  return ops::lin_comb(config.lambda, seg, 1.0 - config.lambda, clf);
}

Var weighted_cross_entropy(const Var& p, const Tensor& t, const std::vector<double>& weights) {
  require_same_shape(p->value, t, "weighted_cross_entropy");
  const int m = t.c();
  if (weights.size() != static_cast<std::size_t>(m)) throw ConfigError("one WCE weight per lesion channel required");
  for (double w : weights) {
    if (!(w > 0.0)) throw ConfigError("WCE weights must be positive");
  }
  const Tensor& pv = p->value;
  const double count = static_cast<double>(pv.size());
  double total = 0.0;
  for (std::size_t i = 0; i < pv.size(); ++i) {
    const double q = clamp_prob(pv[i]);
    const double w = weights[i % m];
    total -= w * t[i] * std::log(q) + (1.0 - t[i]) * std::log(1.0 - q);
  }
  auto target = std::make_shared<Tensor>(t);
  return make_node(scalar(total / count), {p}, [target, weights, m, count](Node& self) {
    Node& pn = *self.inputs[0];
    Tensor& dp = pn.grad_buffer();
    const double g = self.grad[0] / count;
    for (std::size_t i = 0; i < dp.size(); ++i) {
      if (clamped(pn.value[i])) continue;
      const double q = pn.value[i];
      const double ti = (*target)[i];
      dp[i] += g * (-weights[i % m] * ti / q + (1.0 - ti) / (1.0 - q));
    }
  });
}

Var focal_loss(const Var& p, const Tensor& t, double alpha, double gamma) {
  require_same_shape(p->value, t, "focal_loss");
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("focal alpha must lie in (0,1)");
  if (!(gamma >= 0.0)) throw ConfigError("focal gamma must be non-negative");
  const Tensor& pv = p->value;
  const double count = static_cast<double>(pv.size());
  double total = 0.0;
  for (std::size_t i = 0; i < pv.size(); ++i) {
    const double q = clamp_prob(pv[i]);
    total -= alpha * std::pow(1.0 - q, gamma) * t[i] * std::log(q) +
             (1.0 - alpha) * std::pow(q, gamma) * (1.0 - t[i]) * std::log(1.0 - q);
  }
  auto target = std::make_shared<Tensor>(t);
  return make_node(scalar(total / count), {p}, [target, alpha, gamma, count](Node& self) {
    Node& pn = *self.inputs[0];
    Tensor& dp = pn.grad_buffer();
    const double g = self.grad[0] / count;
    for (std::size_t i = 0; i < dp.size(); ++i) {
      if (clamped(pn.value[i])) continue;
      const double q = pn.value[i];
      const double ti = (*target)[i];
      double d = 0.0;
      if (ti != 0.0) {
        const double pos = (gamma == 0.0 ? 0.0 : -gamma * std::pow(1.0 - q, gamma - 1.0) * std::log(q)) +
                           std::pow(1.0 - q, gamma) / q;
        d -= alpha * ti * pos;
      }
      if (ti != 1.0) {
        const double neg = (gamma == 0.0 ? 0.0 : gamma * std::pow(q, gamma - 1.0) * std::log(1.0 - q)) -
                           std::pow(q, gamma) / (1.0 - q);
        d -= (1.0 - alpha) * (1.0 - ti) * neg;
      }
      dp[i] += g * d;
    }
  });
}

Var cross_entropy_grading(const Var& probabilities, const std::vector<int>& grades) {
  const Tensor& pv = probabilities->value;
  if (pv.h() != 1 || pv.w() != 1) throw ShapeError("cross_entropy_grading expects (n,1,1,c) rows");
  const int n = pv.n(), c = pv.c();
  if (grades.size() != static_cast<std::size_t>(n)) throw ShapeError("one grade per probability row required");
  if (n == 0) throw InvalidInput("cross_entropy_grading: empty batch");
  double total = 0.0;
  for (int b = 0; b < n; ++b) {
    double row = 0.0;
    for (int k = 0; k < c; ++k) row += pv[static_cast<std::size_t>(b) * c + k];
    if (std::abs(row - 1.0) > 1e-6) throw InvalidInput("probability row does not sum to 1");
    if (grades[b] < 0 || grades[b] >= c) throw InvalidInput("grade out of range");
    total -= std::log(std::max(pv[static_cast<std::size_t>(b) * c + grades[b]], kProbClamp));
  }
  return make_node(scalar(total / n), {probabilities}, [grades, n, c](Node& self) {
    Node& pn = *self.inputs[0];
    Tensor& dp = pn.grad_buffer();
    const double g = self.grad[0] / n;
    for (int b = 0; b < n; ++b) {
      const std::size_t i = static_cast<std::size_t>(b) * c + grades[b];
      if (pn.value[i] >= kProbClamp) dp[i] -= g / pn.value[i];
    }
  });
}

std::vector<double> inverse_frequency_weights(const std::vector<LesionMaskStack>& masks, double cap) {
  std::vector<double> pos(kNumLesions, 0.0), total(kNumLesions, 0.0);
  for (const LesionMaskStack& s : masks) {
    const int m = std::min(s.channels(), kNumLesions);
    for (int j = 0; j < m; ++j) {
      pos[j] += static_cast<double>(s.positive_count(j));
      total[j] += static_cast<double>(s.height()) * s.width();
    }
  }
  std::vector<double> w(kNumLesions, cap);
  for (int j = 0; j < kNumLesions; ++j) {
    if (pos[j] > 0.0) w[j] = std::min(cap, (total[j] - pos[j]) / pos[j]);
    w[j] = std::max(w[j], 1e-3);
  }
  return w;
}

double dice_seg_loss(const Tensor& p, const Tensor& t, double epsilon) {
  return dice_seg_loss(constant(p), t, epsilon)->value[0];
}

double dice_clf_loss(const Tensor& presence, const Tensor& truth, double epsilon) {
  return dice_clf_loss(constant(presence), truth, epsilon)->value[0];
}

double dual_loss(const Tensor& p, const Tensor& t, const DualLossConfig& config) {
  return dual_loss(constant(p), t, config)->value[0];
}

}  // namespace lnet
