#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "lnet/tensor.hpp"

namespace lnet {

// Canonical lesion order used by every serialized artifact.
inline constexpr std::array<std::string_view, 8> kLesionNames{"MA",  "iHE", "HaEx", "CWS",
                                                              "vHE", "pHE", "NV",   "FiP"};
inline constexpr int kNumLesions = static_cast<int>(kLesionNames.size());

enum class Lesion : int { MA = 0, iHE, HaEx, CWS, vHE, pHE, NV, FiP };

std::optional<int> lesion_index(std::string_view name);
std::string_view lesion_name(int index);

inline constexpr int kNumGrades = 5;

enum class DRGrade : int { DR0 = 0, DR1, DR2, DR3, DR4 };

inline int to_int(DRGrade g) { return static_cast<int>(g); }
/// Throws InvalidInput outside 0..4.
DRGrade grade_from_int(int value);

/// RGB fundus photograph as a (1, s, s, 3) tensor with values in [0,1].
class FundusImage {
 public:
  FundusImage() = default;
  /// Validates 3 channels, a single batch element and values in [0,1].
  explicit FundusImage(Tensor pixels);
  const Tensor& pixels() const { return pixels_; }
  int side() const { return pixels_.h(); }

 private:
  Tensor pixels_;
};

/// Per-pixel multi-label binary masks, stored channels-last (h, w, m).
class LesionMaskStack {
 public:
  LesionMaskStack() = default;
  LesionMaskStack(int height, int width, int channels);

  int height() const { return h_; }
  int width() const { return w_; }
  int channels() const { return m_; }

  std::uint8_t& at(int y, int x, int j) { return bits_[(static_cast<std::size_t>(y) * w_ + x) * m_ + j]; }
  std::uint8_t at(int y, int x, int j) const { return bits_[(static_cast<std::size_t>(y) * w_ + x) * m_ + j]; }
  const std::vector<std::uint8_t>& bits() const { return bits_; }

  /// (1, h, w, m) tensor of 0.0 / 1.0.
  Tensor to_tensor() const;
  /// Throws InvalidInput unless every value is exactly 0 or 1.
  static LesionMaskStack from_tensor(const Tensor& t);
  std::size_t positive_count(int j) const;

  bool operator==(const LesionMaskStack&) const = default;

 private:
  int h_ = 0, w_ = 0, m_ = 0;
  std::vector<std::uint8_t> bits_;
};

/// Lesion probability maps, a (1, s', s', m) tensor with values in [0,1].
class ProbMapStack {
 public:
  ProbMapStack() = default;
  explicit ProbMapStack(Tensor maps);
  const Tensor& maps() const { return maps_; }
  int side() const { return maps_.h(); }
  int channels() const { return maps_.c(); }

 private:
  Tensor maps_;
};

/// Image-level lesion presence, one value in [0,1] per lesion.
struct LesionPresenceVector {
  std::vector<double> values;
  bool operator==(const LesionPresenceVector&) const = default;
};

struct Point {
  double x = 0.0;
  double y = 0.0;
};

struct Ellipse {
  double cx = 0.0, cy = 0.0;
  double semi_a = 0.0, semi_b = 0.0;
  double rotation = 0.0;  // radians
};

enum class ShapeKind { polygon, ellipse };

/// Expert annotation of one lesion region.
struct Annotation {
  std::string lesion;
  ShapeKind kind = ShapeKind::polygon;
  std::vector<Point> polygon;
  Ellipse ellipse;
};

struct DatasetRecord {
  std::string image_id;
  std::filesystem::path image_path;
  std::optional<std::filesystem::path> masks_dir;
  std::vector<Annotation> annotations;
  int grade = 0;
  std::string split;
  std::optional<int> ihe_blobs;
  int line = 0;
};

/// P_j = max_i p_{i,j}. Throws InvalidInput on an empty spatial extent.
LesionPresenceVector presence_from_maps(const ProbMapStack& maps);
/// Batched form on an (n, h, w, m) tensor; returns (n, 1, 1, m).
Tensor presence_from_maps(const Tensor& maps);

/// Pixel is positive iff value >= tau. Throws ConfigError unless tau in (0,1).
LesionMaskStack threshold_maps(const ProbMapStack& maps, double tau = 0.5);
Tensor threshold(const Tensor& maps, double tau = 0.5);
LesionPresenceVector threshold(const LesionPresenceVector& presence, double tau = 0.5);

/// Lists every violation found in `record`; empty means valid.
std::vector<std::string> validate_record(const DatasetRecord& record);

}  // namespace lnet
