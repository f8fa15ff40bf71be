#include "lnet/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>

#include "lnet/errors.hpp"

namespace lnet {
namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Portable draws: the standard distributions are implementation-defined.
class Draw {
 public:
  explicit Draw(std::uint64_t seed) : engine_(seed) {}
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  int integer(int lo, int hi) {  // inclusive
    return lo + static_cast<int>(uniform() * (hi - lo + 1));
  }
  bool chance(double p) { return uniform() < p; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace

SynthConfig SynthConfig::defaults(int side) {
  SynthConfig c;
  c.image_side = side;
  const double s = side / 128.0;
  auto style = [s](int lo, int hi, double rmin, double rmax, std::array<double, 3> color) {
    return LesionStyle{lo, hi, rmin * s, rmax * s, color};
  };
  c.lesions[static_cast<int>(Lesion::MA)] = style(1, 2, 8.0, 12.0, {0.95, 0.05, 0.05});
  c.lesions[static_cast<int>(Lesion::iHE)] = style(1, 2, 9.0, 13.0, {0.45, 0.0, 0.35});
  c.lesions[static_cast<int>(Lesion::HaEx)] = style(1, 2, 8.0, 12.0, {0.95, 0.9, 0.15});
  c.lesions[static_cast<int>(Lesion::CWS)] = style(1, 1, 10.0, 14.0, {0.97, 0.97, 0.97});
  // Dark red rather than near-black so it does not read as the area outside the field.
  c.lesions[static_cast<int>(Lesion::vHE)] = style(1, 1, 12.0, 16.0, {0.35, 0.0, 0.0});
  c.lesions[static_cast<int>(Lesion::pHE)] = style(1, 1, 10.0, 14.0, {0.95, 0.55, 0.05});
  c.lesions[static_cast<int>(Lesion::NV)] = style(1, 1, 10.0, 14.0, {0.1, 0.85, 0.25});
  c.lesions[static_cast<int>(Lesion::FiP)] = style(1, 1, 10.0, 14.0, {0.2, 0.35, 0.95});
  return c;
}

void SynthConfig::validate() const {
  if (image_side <= 0 || image_side % 32 != 0) throw ConfigError("image_side must be a positive multiple of 32");
  for (int j = 0; j < kNumLesions; ++j) {
    const LesionStyle& st = lesions[j];
    const std::string name(lesion_name(j));
    if (st.min_blobs < 1 || st.max_blobs < st.min_blobs) throw ConfigError("invalid blob count range for " + name);
    if (!(st.min_radius > 0.0) || st.max_radius < st.min_radius) throw ConfigError("invalid radius range for " + name);
    for (double v : st.color) {
      if (v < 0.0 || v > 1.0) throw ConfigError("colour component outside [0,1] for " + name);
    }
  }
  double total = 0.0;
  for (double p : grade_mix) {
    if (p < 0.0) throw ConfigError("negative grade proportion");
    total += p;
  }
  if (!(total > 0.0)) throw ConfigError("grade proportions sum to zero");
  if (companion_prob < 0.0 || companion_prob > 1.0) throw ConfigError("companion_prob outside [0,1]");
  if (noise < 0.0) throw ConfigError("negative noise");
}

SynthSample synth_sample(const SynthConfig& config, int index) {
  Draw rng(splitmix64(config.seed ^ splitmix64(static_cast<std::uint64_t>(index) + 1)));
  const int side = config.image_side;

  // Grade first, then a lesion set consistent with it.
  double total = 0.0;
  for (double p : config.grade_mix) total += p;
  double pick = rng.uniform() * total;
  int target = kNumGrades - 1;
  for (int g = 0; g < kNumGrades; ++g) {
    if (pick < config.grade_mix[g]) {
      target = g;
      break;
    }
    pick -= config.grade_mix[g];
  }

  std::array<bool, kNumLesions> present{};
  auto set = [&](Lesion l) { present[static_cast<int>(l)] = true; };
  auto maybe = [&](Lesion l) {
    if (rng.chance(config.companion_prob)) set(l);
  };
  switch (target) {
    case 1:
      set(Lesion::MA);
      break;
    case 2: {
      const double u = rng.uniform();
      if (u < 0.4) {
        set(Lesion::iHE);
      } else if (u < 0.8) {
        set(Lesion::HaEx);
      } else {
        set(Lesion::iHE);
        set(Lesion::HaEx);
      }
      maybe(Lesion::MA);
      break;
    }
    case 3:
      set(Lesion::CWS);
      maybe(Lesion::MA);
      maybe(Lesion::iHE);
      maybe(Lesion::HaEx);
      break;
    case 4: {
      static constexpr std::array<Lesion, 4> severe{Lesion::NV, Lesion::vHE, Lesion::pHE, Lesion::FiP};
      // Each severe finding independently, at least one.
      bool any = false;
      for (Lesion l : severe) {
        if (rng.chance(0.5)) {
          set(l);
          any = true;
        }
      }
      if (!any) set(severe[rng.integer(0, 3)]);
      maybe(Lesion::MA);
      maybe(Lesion::iHE);
      maybe(Lesion::HaEx);
      maybe(Lesion::CWS);
      break;
    }
    default:
      break;
  }

  SynthSample out;
  char id[32];
  std::snprintf(id, sizeof id, "synth_%05d", index);
  out.image_id = id;

  // Place blobs inside the field, rejecting overlaps where possible.
  const double cx = side / 2.0, cy = side / 2.0, field_r = 0.47 * side;
  struct Disc {
    double x, y, r;
  };
  std::vector<Disc> placed;
  std::vector<std::array<double, 3>> colors;
  for (int j = 0; j < kNumLesions; ++j) {
    if (!present[j]) continue;
    const LesionStyle& st = config.lesions[j];
    const int count = rng.integer(st.min_blobs, st.max_blobs);
    for (int b = 0; b < count; ++b) {
      const double a = rng.uniform(st.min_radius, st.max_radius);
      const double bb = a * rng.uniform(0.7, 1.0);
      const double rot = rng.uniform(0.0, std::numbers::pi);
      Disc d{cx, cy, a};
      for (int attempt = 0; attempt < 30; ++attempt) {
        const double rr = (field_r - a - 2.0) * std::sqrt(rng.uniform());
        const double th = rng.uniform(0.0, 2.0 * std::numbers::pi);
        d = {cx + rr * std::cos(th), cy + rr * std::sin(th), a};
        const bool clear = std::all_of(placed.begin(), placed.end(), [&](const Disc& o) {
          return std::hypot(o.x - d.x, o.y - d.y) > o.r + d.r + 2.0;
        });
        if (clear) break;
      }
      placed.push_back(d);
      Annotation ann;
      ann.lesion = std::string(lesion_name(j));
      ann.kind = ShapeKind::ellipse;
      ann.ellipse = {d.x, d.y, a, bb, rot};
      out.blobs.push_back(ann);
      colors.push_back(st.color);
      if (j == static_cast<int>(Lesion::iHE)) ++out.ihe_blobs;
    }
  }

  Tensor pixels({1, side, side, 3});
  for (int y = 0; y < side; ++y) {
    for (int x = 0; x < side; ++x) {
      const double r = std::hypot(x + 0.5 - cx, y + 0.5 - cy);
      if (r > field_r) continue;
      const double shade = 1.0 - 0.35 * (r / field_r) * (r / field_r);
      for (int ch = 0; ch < 3; ++ch) {
        const double v = config.field_color[ch] * shade + config.noise * (rng.uniform() - 0.5) * 2.0;
        pixels(0, y, x, ch) = std::clamp(v, 0.0, 1.0);
      }
    }
  }
  out.masks = LesionMaskStack(side, side, kNumLesions);
  for (std::size_t i = 0; i < out.blobs.size(); ++i) {
    const BinaryMask mask = rasterize_annotation(out.blobs[i], side);
    const int j = *lesion_index(out.blobs[i].lesion);
    for (int y = 0; y < side; ++y) {
      for (int x = 0; x < side; ++x) {
        if (!mask.at(y, x)) continue;
        out.masks.at(y, x, j) = 1;
        for (int ch = 0; ch < 3; ++ch) {
          const double v = colors[i][ch] + config.noise * (rng.uniform() - 0.5) * 2.0;
          pixels(0, y, x, ch) = std::clamp(v, 0.0, 1.0);
        }
      }
    }
  }
  out.image = FundusImage(std::move(pixels));

  LesionPresenceVector presence;
  for (int j = 0; j < kNumLesions; ++j) presence.values.push_back(out.masks.positive_count(j) > 0 ? 1.0 : 0.0);
  out.grade = grade_from_lesions(presence, out.ihe_blobs);
  return out;
}

std::vector<SynthSample> synth_generate(const SynthConfig& config, int n, int first_index) {
  config.validate();
  if (n < 0) throw ConfigError("sample count must be non-negative");
  std::vector<SynthSample> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) out.push_back(synth_sample(config, first_index + i));
  return out;
}

}  // namespace lnet
