#include "lnet/metrics.hpp"

#include "lnet/errors.hpp"

namespace lnet {

double ConfusionCounts::f1() const {
  const std::uint64_t denom = 2 * tp + fp + fn;
  if (denom == 0) return 1.0;
  return 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
}

ConfusionCounts& ConfusionCounts::operator+=(const ConfusionCounts& o) {
  tp += o.tp;
  fp += o.fp;
  fn += o.fn;
  tn += o.tn;
  return *this;
}

void accumulate_counts(const Tensor& pred, const Tensor& truth, std::vector<ConfusionCounts>& counts) {
  require_same_shape(pred, truth, "F1 counts");
  const int m = pred.c();
  if (counts.empty()) counts.resize(static_cast<std::size_t>(m));
  if (counts.size() != static_cast<std::size_t>(m)) throw ShapeError("F1 counts: channel count changed");
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double p = pred[i], t = truth[i];
    if ((p != 0.0 && p != 1.0) || (t != 0.0 && t != 1.0)) throw InvalidInput("F1 inputs must be binary");
    ConfusionCounts& c = counts[i % m];
    if (p == 1.0) {
      ++(t == 1.0 ? c.tp : c.fp);
    } else {
      ++(t == 1.0 ? c.fn : c.tn);
    }
  }
}

LesionF1Report finalize_f1(std::vector<ConfusionCounts> counts) {
  LesionF1Report r;
  r.counts = std::move(counts);
  double sum = 0.0;
  for (const ConfusionCounts& c : r.counts) {
    r.f1.push_back(c.f1());
    sum += r.f1.back();
  }
  r.mean = r.counts.empty() ? 0.0 : sum / static_cast<double>(r.counts.size());
  return r;
}

LesionF1Report pixel_f1(std::span<const LesionMaskStack> pred, std::span<const LesionMaskStack> truth) {
  if (pred.size() != truth.size()) throw ShapeError("pixel_f1: batch sizes differ");
  std::vector<ConfusionCounts> counts;
  for (std::size_t i = 0; i < pred.size(); ++i) accumulate_counts(pred[i].to_tensor(), truth[i].to_tensor(), counts);
  if (counts.empty()) counts.resize(kNumLesions);
  return finalize_f1(std::move(counts));
}

LesionF1Report image_f1(std::span<const LesionPresenceVector> pred, std::span<const LesionPresenceVector> truth) {
  if (pred.size() != truth.size()) throw ShapeError("image_f1: batch sizes differ");
  std::vector<ConfusionCounts> counts;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const int m = static_cast<int>(pred[i].values.size());
    if (truth[i].values.size() != pred[i].values.size()) throw ShapeError("image_f1: lesion counts differ");
    accumulate_counts(Tensor({1, 1, 1, m}, pred[i].values), Tensor({1, 1, 1, m}, truth[i].values), counts);
  }
  if (counts.empty()) counts.resize(kNumLesions);
  return finalize_f1(std::move(counts));
}

std::uint64_t GradeConfusion::total() const {
  std::uint64_t t = 0;
  for (const auto& row : counts) {
    for (std::uint64_t v : row) t += v;
  }
  return t;
}

GradeConfusion grade_confusion(std::span<const int> truth, std::span<const int> pred) {
  if (truth.size() != pred.size()) throw InvalidInput("grade lists differ in length");
  GradeConfusion c;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] < 0 || truth[i] >= kNumGrades || pred[i] < 0 || pred[i] >= kNumGrades) {
      throw InvalidInput("grade out of range");
    }
    ++c.counts[truth[i]][pred[i]];
  }
  return c;
}

double quadratic_weighted_kappa(std::span<const int> truth, std::span<const int> pred) {
  if (truth.empty()) throw InvalidInput("quadratic_weighted_kappa: empty input");
  const GradeConfusion conf = grade_confusion(truth, pred);
  const double n = static_cast<double>(truth.size());
  std::array<double, kNumGrades> rows{}, cols{};
  for (int i = 0; i < kNumGrades; ++i) {
    for (int j = 0; j < kNumGrades; ++j) {
      rows[i] += conf.counts[i][j] / n;
      cols[j] += conf.counts[i][j] / n;
    }
  }
  constexpr double norm = (kNumGrades - 1) * (kNumGrades - 1);
  double observed = 0.0, expected = 0.0;
  for (int i = 0; i < kNumGrades; ++i) {
    for (int j = 0; j < kNumGrades; ++j) {
      const double w = (i - j) * (i - j) / norm;
      observed += w * conf.counts[i][j] / n;
      expected += w * rows[i] * cols[j];
    }
  }
  // Both marginals concentrated on one grade: every pair agrees.
  if (expected == 0.0) return 1.0;
  return 1.0 - observed / expected;
}

}  // namespace lnet
