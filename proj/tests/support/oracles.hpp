#pragma once

// Independent reference implementations used as test oracles. They work on
// flat vectors with plain loops and share no code with the library.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "lnet/autograd.hpp"
#include "lnet/params.hpp"
#include "lnet/tensor.hpp"

namespace oracle {

inline double dice(const std::vector<double>& p, const std::vector<double>& t, double eps) {
  double pt = 0, pp = 0, tt = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    pt += p[i] * t[i];
    pp += p[i] * p[i];
    tt += t[i] * t[i];
  }
  return 1.0 - (2.0 * pt + eps) / (pp + tt + eps);
}

// Per-(image, channel) maxima of an (n, h, w, c) layout.
inline std::vector<double> gmp(const std::vector<double>& x, int n, int hw, int c) {
  std::vector<double> out(static_cast<std::size_t>(n) * c, -INFINITY);
  for (int b = 0; b < n; ++b)
    for (int i = 0; i < hw; ++i)
      for (int j = 0; j < c; ++j) {
        double& o = out[static_cast<std::size_t>(b) * c + j];
        o = std::max(o, x[(static_cast<std::size_t>(b) * hw + i) * c + j]);
      }
  return out;
}

inline double dual(const std::vector<double>& p, const std::vector<double>& t, int n, int hw, int c, double lambda,
                   double eps) {
  return lambda * dice(p, t, eps) + (1.0 - lambda) * dice(gmp(p, n, hw, c), gmp(t, n, hw, c), eps);
}

inline double clampp(double p) { return std::min(std::max(p, 1e-7), 1.0 - 1e-7); }

inline double wce(const std::vector<double>& p, const std::vector<double>& t, const std::vector<double>& w) {
  const std::size_t c = w.size();
  double s = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double q = clampp(p[i]);
    s += -(w[i % c] * t[i] * std::log(q) + (1 - t[i]) * std::log(1 - q));
  }
  return s / static_cast<double>(p.size());
}

inline double focal(const std::vector<double>& p, const std::vector<double>& t, double a, double g) {
  double s = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double q = clampp(p[i]);
    s += -a * std::pow(1 - q, g) * t[i] * std::log(q) - (1 - a) * std::pow(q, g) * (1 - t[i]) * std::log(1 - q);
  }
  return s / static_cast<double>(p.size());
}

inline double grading_ce(const std::vector<double>& probs, const std::vector<int>& grades, int classes) {
  double s = 0;
  for (std::size_t b = 0; b < grades.size(); ++b) s += -std::log(clampp(probs[b * classes + grades[b]]));
  return s / static_cast<double>(grades.size());
}

// Textbook weighted kappa: build O and E as count matrices, normalise each to
// unit mass, then compare weighted disagreement.
inline double kappa(const std::vector<int>& a, const std::vector<int>& b) {
  constexpr int N = 5;
  double O[N][N] = {}, ra[N] = {}, rb[N] = {};
  for (std::size_t i = 0; i < a.size(); ++i) {
    O[a[i]][b[i]] += 1;
    ra[a[i]] += 1;
    rb[b[i]] += 1;
  }
  const double n = static_cast<double>(a.size());
  double num = 0, den = 0;
  for (int i = 0; i < N; ++i)
    for (int j = 0; j < N; ++j) {
      const double w = static_cast<double>((i - j) * (i - j)) / ((N - 1) * (N - 1));
      num += w * O[i][j] / n;
      den += w * (ra[i] / n) * (rb[j] / n);
    }
  if (den == 0.0) return 1.0;
  return 1.0 - num / den;
}

inline lnet::Tensor random_tensor(lnet::Shape s, std::mt19937_64& rng, double lo = 0.0, double hi = 1.0) {
  std::uniform_real_distribution<double> d(lo, hi);
  lnet::Tensor t(s);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = d(rng);
  return t;
}

inline lnet::Tensor random_binary(lnet::Shape s, std::mt19937_64& rng, double p = 0.3) {
  std::bernoulli_distribution d(p);
  lnet::Tensor t(s);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = d(rng) ? 1.0 : 0.0;
  return t;
}

inline std::vector<double> flat(const lnet::Tensor& t) { return {t.values().begin(), t.values().end()}; }

struct GradCheckResult {
  std::size_t checked = 0;
  std::size_t passed = 0;
  double worst = 0.0;
  double pass_fraction() const { return checked ? static_cast<double>(passed) / checked : 1.0; }
};

// Compares analytic gradients of a scalar function of several leaves with
// central differences. A coordinate passes when the relative error is within
// `rel_tol`, or when both values are below `abs_floor` in difference (flat
// regions where relative error is meaningless). At most `per_leaf` randomly
// chosen coordinates are checked for each leaf.
inline GradCheckResult grad_check(const std::function<lnet::Var(const std::vector<lnet::Var>&)>& f,
                                  std::vector<lnet::Tensor> leaves, std::mt19937_64& rng,
                                  std::size_t per_leaf = 1000000, double step = 1e-3, double rel_tol = 1e-4,
                                  double abs_floor = 1e-9) {
  std::vector<lnet::Var> vars;
  for (const auto& t : leaves) vars.push_back(lnet::variable(t));
  const lnet::Var out = f(vars);
  lnet::backward(out);
  GradCheckResult r;
  auto eval = [&](std::size_t leaf, std::size_t k, double value) {
    std::vector<lnet::Var> v;
    for (std::size_t i = 0; i < leaves.size(); ++i) {
      lnet::Tensor t = leaves[i];
      if (i == leaf) t[k] = value;
      v.push_back(lnet::constant(std::move(t)));
    }
    return f(v)->value[0];
  };
  for (std::size_t i = 0; i < leaves.size(); ++i) {
    std::vector<std::size_t> coords(leaves[i].size());
    for (std::size_t k = 0; k < coords.size(); ++k) coords[k] = k;
    std::shuffle(coords.begin(), coords.end(), rng);
    if (coords.size() > per_leaf) coords.resize(per_leaf);
    const lnet::Tensor analytic = vars[i]->grad.empty() ? lnet::Tensor(leaves[i].shape()) : vars[i]->grad;
    for (std::size_t k : coords) {
      const double x = leaves[i][k];
      const double numeric = (eval(i, k, x + step) - eval(i, k, x - step)) / (2 * step);
      const double a = analytic[k];
      const double diff = std::abs(a - numeric);
      const double rel = diff / std::max({std::abs(a), std::abs(numeric), 1e-300});
      ++r.checked;
      if (rel <= rel_tol || diff <= abs_floor) {
        ++r.passed;
      } else {
        r.worst = std::max(r.worst, rel);
      }
    }
  }
  return r;
}

// Same comparison for every parameter of a network: analytic gradients come
// from BoundParams, numeric ones from perturbing a copy of the ParamSet.
inline GradCheckResult param_grad_check(const lnet::ParamSet& params,
                                        const std::function<lnet::Var(const lnet::BoundParams&)>& loss,
                                        std::mt19937_64& rng, std::size_t per_leaf, double step = 1e-3,
                                        double rel_tol = 1e-4, double abs_floor = 1e-9) {
  const lnet::BoundParams bound(params, true);
  lnet::backward(loss(bound));
  const lnet::ParamSet grads = bound.gradients();
  lnet::ParamSet work = params;
  auto eval = [&] {
    const lnet::BoundParams b(work, false);
    return loss(b)->value[0];
  };
  GradCheckResult r;
  for (std::size_t i = 0; i < params.size(); ++i) {
    std::vector<std::size_t> coords(params.value(i).size());
    for (std::size_t k = 0; k < coords.size(); ++k) coords[k] = k;
    std::shuffle(coords.begin(), coords.end(), rng);
    if (coords.size() > per_leaf) coords.resize(per_leaf);
    for (std::size_t k : coords) {
      const double x = params.value(i)[k];
      work.value(i)[k] = x + step;
      const double up = eval();
      work.value(i)[k] = x - step;
      const double down = eval();
      work.value(i)[k] = x;
      const double numeric = (up - down) / (2 * step);
      const double a = grads.value(i)[k];
      const double diff = std::abs(a - numeric);
      const double rel = diff / std::max({std::abs(a), std::abs(numeric), 1e-300});
      ++r.checked;
      if (rel <= rel_tol || diff <= abs_floor) {
        ++r.passed;
      } else {
        r.worst = std::max(r.worst, rel);
      }
    }
  }
  return r;
}

}  // namespace oracle
