#pragma once

#include <vector>

#include "lnet/autograd.hpp"
#include "lnet/types.hpp"

namespace lnet {

inline constexpr double kDiceSmoothing = 1e-6;
inline constexpr double kProbClamp = 1e-7;

struct DualLossConfig {
  double lambda = 0.8;
  double epsilon = kDiceSmoothing;
  void validate() const;
};

/// 1 - (2 sum(p t) + eps) / (sum(p^2) + sum(t^2) + eps), summed over every
/// element of the batch. Throws ShapeError on mismatch, InvalidInput if t is not binary.
Var dice_loss(const Var& p, const Tensor& t, double epsilon = kDiceSmoothing);

/// Pixel-level Dice over (n, s, s, m) maps.
Var dice_seg_loss(const Var& p, const Tensor& t, double epsilon = kDiceSmoothing);
/// Image-level Dice over (n, 1, 1, m) presence vectors.
Var dice_clf_loss(const Var& presence, const Tensor& truth, double epsilon = kDiceSmoothing);
/// lambda * seg + (1 - lambda) * clf with presences from global max pooling of p and t.
Var dual_loss(const Var& p, const Tensor& t, const DualLossConfig& config = {});

/// Mean of -[w_j t log p + (1 - t) log(1 - p)] with p clamped to [1e-7, 1 - 1e-7].
/// `weights` holds one positive weight per channel; ConfigError otherwise.
Var weighted_cross_entropy(const Var& p, const Tensor& t, const std::vector<double>& weights);
/// Mean of -alpha (1-p)^gamma t log p - (1-alpha) p^gamma (1-t) log(1-p), p clamped.
Var focal_loss(const Var& p, const Tensor& t, double alpha = 0.8, double gamma = 2.0);
/// Mean of -log prob[true grade] for (n, 1, 1, 5) probability rows.
/// Rows must sum to 1 within 1e-6 (InvalidInput otherwise).
Var cross_entropy_grading(const Var& probabilities, const std::vector<int>& grades);

/// Per-lesion positive weight: negatives / positives over `masks`, capped at `cap`.
/// A lesion without positives gets the cap.
std::vector<double> inverse_frequency_weights(const std::vector<LesionMaskStack>& masks, double cap = 100.0);

// Value-only conveniences.
double dice_seg_loss(const Tensor& p, const Tensor& t, double epsilon = kDiceSmoothing);
double dice_clf_loss(const Tensor& presence, const Tensor& truth, double epsilon = kDiceSmoothing);
double dual_loss(const Tensor& p, const Tensor& t, const DualLossConfig& config = {});

}  // namespace lnet
