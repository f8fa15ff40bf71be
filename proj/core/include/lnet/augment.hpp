#pragma once

#include <utility>

#include "lnet/params.hpp"
#include "lnet/types.hpp"

namespace lnet {

struct AugmentConfig {
  bool enabled = true;
  double max_rotation_deg = 180.0;
  double min_crop_scale = 0.9;
  double flip_prob = 0.5;
  /// Brightness, saturation and contrast factors are drawn from [1 - jitter, 1 + jitter].
  double jitter = 0.2;
  void validate() const;
};

/// One concrete draw. `identity()` leaves a pair unchanged.
struct AugmentParams {
  double rotation = 0.0;  // radians, about the image centre
  double crop_scale = 1.0;
  double crop_x = 0.0;  // crop origin as a fraction of the free margin
  double crop_y = 0.0;
  bool hflip = false;
  bool vflip = false;
  double brightness = 1.0;
  double saturation = 1.0;
  double contrast = 1.0;

  static AugmentParams identity() { return {}; }
  bool is_identity() const;
};

AugmentParams draw_augment(const AugmentConfig& config, Rng& rng);

/// Maps output pixel (x, y) to a source point: flips, then crop-resize, then
/// rotation. The image is sampled bilinearly (black outside), masks by the
/// pixel containing the source point. Photometric jitter touches the image only.
std::pair<FundusImage, LesionMaskStack> apply_augment(const FundusImage& image, const LesionMaskStack& masks,
                                                      const AugmentParams& params);

std::pair<FundusImage, LesionMaskStack> augment(const FundusImage& image, const LesionMaskStack& masks, Rng& rng,
                                                const AugmentConfig& config = {});

}  // namespace lnet
