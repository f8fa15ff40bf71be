#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "lnet/ingestion.hpp"
#include "lnet/types.hpp"

namespace lnet {

struct LesionStyle {
  int min_blobs = 1;
  int max_blobs = 2;
  double min_radius = 6.0;  // pixels
  double max_radius = 10.0;
  std::array<double, 3> color{1.0, 1.0, 1.0};
};

/// Parameters of the synthetic fundus generator. The seed fully determines output.
struct SynthConfig {
  int image_side = 128;
  std::array<LesionStyle, kNumLesions> lesions{};
  std::array<double, kNumGrades> grade_mix{0.2, 0.2, 0.2, 0.2, 0.2};
  /// Probability that each lower-grade lesion accompanies the grade-defining one.
  double companion_prob = 0.3;
  std::array<double, 3> field_color{0.55, 0.22, 0.10};
  double noise = 0.03;
  std::uint64_t seed = 0;

  /// Default styles with radii proportional to `side`.
  static SynthConfig defaults(int side = 128);
  /// Throws ConfigError on invalid values.
  void validate() const;
};

struct SynthSample {
  std::string image_id;
  FundusImage image;
  LesionMaskStack masks;
  DRGrade grade = DRGrade::DR0;
  int ihe_blobs = 0;
  std::vector<Annotation> blobs;
};

/// Generates sample `index` from its own seed-derived substream, so shards
/// produce identical samples regardless of how the range is split.
SynthSample synth_sample(const SynthConfig& config, int index);
std::vector<SynthSample> synth_generate(const SynthConfig& config, int n, int first_index = 0);

}  // namespace lnet
