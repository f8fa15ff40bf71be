#include "lnet/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "lnet/errors.hpp"

namespace lnet {
namespace {

double uniform(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }
double uniform(Rng& rng, double lo, double hi) { return lo + (hi - lo) * uniform(rng); }

struct SourcePoint {
  double x, y;
};

SourcePoint source_of(const AugmentParams& a, int side, int x, int y) {
  double px = x + 0.5, py = y + 0.5;
  if (a.hflip) px = side - px;
  if (a.vflip) py = side - py;
  const double margin = (1.0 - a.crop_scale) * side;
  px = a.crop_x * margin + px * a.crop_scale;
  py = a.crop_y * margin + py * a.crop_scale;
  if (a.rotation != 0.0) {
    const double c = side / 2.0;
    const double cs = std::cos(a.rotation), sn = std::sin(a.rotation);
    const double dx = px - c, dy = py - c;
    px = c + cs * dx - sn * dy;
    py = c + sn * dx + cs * dy;
  }
  return {px, py};
}

}  // namespace

void AugmentConfig::validate() const {
  if (max_rotation_deg < 0.0) throw ConfigError("max_rotation_deg must be non-negative");
  if (!(min_crop_scale > 0.0 && min_crop_scale <= 1.0)) throw ConfigError("min_crop_scale must lie in (0,1]");
  if (flip_prob < 0.0 || flip_prob > 1.0) throw ConfigError("flip_prob must lie in [0,1]");
  if (jitter < 0.0 || jitter >= 1.0) throw ConfigError("jitter must lie in [0,1)");
}

bool AugmentParams::is_identity() const {
  return rotation == 0.0 && crop_scale == 1.0 && !hflip && !vflip && brightness == 1.0 && saturation == 1.0 &&
         contrast == 1.0;
}

AugmentParams draw_augment(const AugmentConfig& config, Rng& rng) {
  config.validate();
  AugmentParams a;
  if (!config.enabled) return a;
  const double max_rot = config.max_rotation_deg * std::numbers::pi / 180.0;
  a.rotation = uniform(rng, -max_rot, max_rot);
  a.crop_scale = uniform(rng, config.min_crop_scale, 1.0);
  a.crop_x = uniform(rng);
  a.crop_y = uniform(rng);
  a.hflip = uniform(rng) < config.flip_prob;
  a.vflip = uniform(rng) < config.flip_prob;
  a.brightness = uniform(rng, 1.0 - config.jitter, 1.0 + config.jitter);
  a.saturation = uniform(rng, 1.0 - config.jitter, 1.0 + config.jitter);
  a.contrast = uniform(rng, 1.0 - config.jitter, 1.0 + config.jitter);
  return a;
}

std::pair<FundusImage, LesionMaskStack> apply_augment(const FundusImage& image, const LesionMaskStack& masks,
                                                      const AugmentParams& a) {
  const int side = image.side();
  if (masks.height() != side || masks.width() != side) throw ShapeError("augment: masks not aligned with image");
  if (a.is_identity()) return {image, masks};

  const Tensor& src = image.pixels();
  Tensor out({1, side, side, 3});
  LesionMaskStack out_masks(side, side, masks.channels());
  for (int y = 0; y < side; ++y) {
    for (int x = 0; x < side; ++x) {
      const SourcePoint sp = source_of(a, side, x, y);
      // Mask: pixel containing the source point.
      const int mx = static_cast<int>(std::floor(sp.x)), my = static_cast<int>(std::floor(sp.y));
      if (mx >= 0 && mx < side && my >= 0 && my < side) {
        for (int j = 0; j < masks.channels(); ++j) out_masks.at(y, x, j) = masks.at(my, mx, j);
      }
      // Image: bilinear over pixel centres, zero outside.
      const double fx = sp.x - 0.5, fy = sp.y - 0.5;
      const int x0 = static_cast<int>(std::floor(fx)), y0 = static_cast<int>(std::floor(fy));
      const double tx = fx - x0, ty = fy - y0;
      for (int ch = 0; ch < 3; ++ch) {
        double v = 0.0;
        for (int dy = 0; dy <= 1; ++dy) {
          for (int dx = 0; dx <= 1; ++dx) {
            const int sx = x0 + dx, sy = y0 + dy;
            if (sx < 0 || sx >= side || sy < 0 || sy >= side) continue;
            const double w = (dx ? tx : 1.0 - tx) * (dy ? ty : 1.0 - ty);
            if (w != 0.0) v += w * src(0, sy, sx, ch);
          }
        }
        out(0, y, x, ch) = v;
      }
    }
  }

  // Photometric jitter: brightness, saturation about per-pixel gray, contrast about the mean.
  double mean = 0.0;
  for (std::size_t p = 0; p < out.size() / 3; ++p) {
    double* px = out.data() + 3 * p;
    for (int ch = 0; ch < 3; ++ch) px[ch] *= a.brightness;
    const double gray = 0.299 * px[0] + 0.587 * px[1] + 0.114 * px[2];
    for (int ch = 0; ch < 3; ++ch) px[ch] = gray + a.saturation * (px[ch] - gray);
    mean += px[0] + px[1] + px[2];
  }
  mean /= static_cast<double>(out.size());
  for (double& v : out.values()) v = std::clamp(mean + a.contrast * (v - mean), 0.0, 1.0);
  return {FundusImage(std::move(out)), std::move(out_masks)};
}

std::pair<FundusImage, LesionMaskStack> augment(const FundusImage& image, const LesionMaskStack& masks, Rng& rng,
                                                const AugmentConfig& config) {
  return apply_augment(image, masks, draw_augment(config, rng));
}

}  // namespace lnet
