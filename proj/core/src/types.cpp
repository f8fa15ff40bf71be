#include "lnet/types.hpp"

#include <algorithm>

#include "lnet/errors.hpp"
#include "lnet/ops.hpp"

namespace lnet {

std::optional<int> lesion_index(std::string_view name) {
  for (int i = 0; i < kNumLesions; ++i) {
    if (kLesionNames[i] == name) return i;
  }
  return std::nullopt;
}

std::string_view lesion_name(int index) {
  if (index < 0 || index >= kNumLesions) throw InvalidInput("lesion index out of range");
  return kLesionNames[index];
}

DRGrade grade_from_int(int value) {
  if (value < 0 || value >= kNumGrades) {
    throw InvalidInput("grade out of range: " + std::to_string(value));
  }
  return static_cast<DRGrade>(value);
}

FundusImage::FundusImage(Tensor pixels) : pixels_(std::move(pixels)) {
  if (pixels_.n() != 1 || pixels_.c() != 3) {
    throw ShapeError("fundus image must be (1,s,s,3), got " + pixels_.shape().str());
  }
  if (pixels_.h() != pixels_.w()) throw ShapeError("fundus image must be square");
  for (double v : pixels_.values()) {
    if (!(v >= 0.0 && v <= 1.0)) throw InvalidInput("fundus image values must lie in [0,1]");
  }
}

LesionMaskStack::LesionMaskStack(int height, int width, int channels)
    : h_(height), w_(width), m_(channels),
      bits_(static_cast<std::size_t>(height) * width * channels, 0) {
  if (height < 0 || width < 0 || channels < 0) throw ShapeError("negative mask extent");
}

Tensor LesionMaskStack::to_tensor() const {
  Tensor t({1, h_, w_, m_});
  for (std::size_t i = 0; i < bits_.size(); ++i) t[i] = bits_[i];
  return t;
}

LesionMaskStack LesionMaskStack::from_tensor(const Tensor& t) {
  if (t.n() != 1) throw ShapeError("mask tensor must have a single batch element");
  LesionMaskStack out(t.h(), t.w(), t.c());
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (t[i] == 1.0) {
      out.bits_[i] = 1;
    } else if (t[i] != 0.0) {
      throw InvalidInput("mask values must be binary");
    }
  }
  return out;
}

std::size_t LesionMaskStack::positive_count(int j) const {
  std::size_t count = 0;
  for (std::size_t p = 0; p < static_cast<std::size_t>(h_) * w_; ++p) count += bits_[p * m_ + j];
  return count;
}

ProbMapStack::ProbMapStack(Tensor maps) : maps_(std::move(maps)) {
  if (maps_.n() != 1) throw ShapeError("probability maps must have a single batch element");
  for (double v : maps_.values()) {
    if (!(v >= 0.0 && v <= 1.0)) throw InvalidInput("probability values must lie in [0,1]");
  }
}

LesionPresenceVector presence_from_maps(const ProbMapStack& maps) {
  const Tensor pooled = presence_from_maps(maps.maps());
  return {std::vector<double>(pooled.values().begin(), pooled.values().end())};
}

Tensor presence_from_maps(const Tensor& maps) {
  if (maps.h() == 0 || maps.w() == 0 || maps.c() == 0) {
    throw InvalidInput("presence_from_maps: empty spatial extent");
  }
  return ops::global_max_pool(constant(maps))->value;
}

namespace {
void check_tau(double tau) {
  if (!(tau > 0.0 && tau < 1.0)) throw ConfigError("threshold must lie in (0,1)");
}
}  // namespace

Tensor threshold(const Tensor& maps, double tau) {
  check_tau(tau);
  Tensor out(maps.shape());
  for (std::size_t i = 0; i < maps.size(); ++i) out[i] = maps[i] >= tau ? 1.0 : 0.0;
  return out;
}

LesionMaskStack threshold_maps(const ProbMapStack& maps, double tau) {
  return LesionMaskStack::from_tensor(threshold(maps.maps(), tau));
}

LesionPresenceVector threshold(const LesionPresenceVector& presence, double tau) {
  check_tau(tau);
  LesionPresenceVector out;
  out.values.reserve(presence.values.size());
  for (double v : presence.values) out.values.push_back(v >= tau ? 1.0 : 0.0);
  return out;
}

std::vector<std::string> validate_record(const DatasetRecord& record) {
  namespace fs = std::filesystem;
  std::vector<std::string> report;
  if (record.image_id.empty()) report.emplace_back("missing image_id");
  if (record.grade < 0 || record.grade >= kNumGrades) {
    report.push_back("grade out of range: " + std::to_string(record.grade));
  }
  if (record.split != "train" && record.split != "val" && record.split != "test") {
    report.push_back("invalid split '" + record.split + "'");
  }
  std::error_code ec;
  if (record.image_path.empty() || !fs::is_regular_file(record.image_path, ec)) {
    report.push_back("missing file: " + record.image_path.string());
  }
  if (record.masks_dir) {
    for (std::string_view lesion : kLesionNames) {
      const fs::path file = *record.masks_dir / (record.image_id + "_" + std::string(lesion) + ".png");
      if (!fs::is_regular_file(file, ec)) report.push_back("missing file: " + file.string());
    }
  }
  for (std::size_t i = 0; i < record.annotations.size(); ++i) {
    const Annotation& a = record.annotations[i];
    const std::string where = " (annotation " + std::to_string(i) + ")";
    if (!lesion_index(a.lesion)) report.push_back("unknown lesion '" + a.lesion + "'" + where);
    if (a.kind == ShapeKind::polygon && a.polygon.size() < 3) {
      report.push_back("malformed annotation: polygon needs >= 3 vertices" + where);
    }
    if (a.kind == ShapeKind::ellipse && !(a.ellipse.semi_a > 0.0 && a.ellipse.semi_b > 0.0)) {
      report.push_back("malformed annotation: ellipse semi-axes must be positive" + where);
    }
  }
  if (record.ihe_blobs && *record.ihe_blobs < 0) report.emplace_back("negative ihe_blobs");
  return report;
}

}  // namespace lnet
