#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "lnet/types.hpp"

namespace lnet {

struct ConfusionCounts {
  std::uint64_t tp = 0, fp = 0, fn = 0, tn = 0;

  /// 2 TP / (2 TP + FP + FN); 1.0 when no positives were predicted or present.
  double f1() const;
  std::uint64_t total() const { return tp + fp + fn + tn; }
  ConfusionCounts& operator+=(const ConfusionCounts& o);
  bool operator==(const ConfusionCounts&) const = default;
};

/// Per-lesion counts pooled over every evaluated unit, their F1 and the
/// unweighted mean over lesions.
struct LesionF1Report {
  std::vector<ConfusionCounts> counts;
  std::vector<double> f1;
  double mean = 0.0;
};

/// Accumulates counts from binary (n, h, w, m) tensors; InvalidInput on non-binary values.
void accumulate_counts(const Tensor& pred, const Tensor& truth, std::vector<ConfusionCounts>& counts);
LesionF1Report finalize_f1(std::vector<ConfusionCounts> counts);

LesionF1Report pixel_f1(std::span<const LesionMaskStack> pred, std::span<const LesionMaskStack> truth);
LesionF1Report image_f1(std::span<const LesionPresenceVector> pred, std::span<const LesionPresenceVector> truth);

struct GradeConfusion {
  std::array<std::array<std::uint64_t, kNumGrades>, kNumGrades> counts{};  // [true][pred]
  std::uint64_t total() const;
};

GradeConfusion grade_confusion(std::span<const int> truth, std::span<const int> pred);

/// Cohen's kappa with weights (i - j)^2 / 16. Throws InvalidInput on empty
/// input, length mismatch or grades outside 0..4.
double quadratic_weighted_kappa(std::span<const int> truth, std::span<const int> pred);

}  // namespace lnet
