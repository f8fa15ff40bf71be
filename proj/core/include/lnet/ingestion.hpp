#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "lnet/types.hpp"

namespace lnet {

/// Single-channel binary raster, row-major.
struct BinaryMask {
  int side = 0;
  std::vector<std::uint8_t> bits;

  std::uint8_t at(int y, int x) const { return bits[static_cast<std::size_t>(y) * side + x]; }
  std::size_t count() const;
};

/// Reads a line-delimited JSON manifest. Relative paths resolve against the
/// manifest's directory. Throws ParseError (with line number) or DuplicateError.
std::vector<DatasetRecord> parse_manifest(const std::filesystem::path& path);
/// Writes records with paths relative to the manifest's directory.
void write_manifest(const std::filesystem::path& path, const std::vector<DatasetRecord>& records);

/// Pixel (x, y) is set iff its centre (x + 0.5, y + 0.5) lies inside the shape.
/// Polygons use the even-odd rule. A polygon with zero area after clipping to the
/// image yields an empty mask and appends a message to `warnings` when given.
BinaryMask rasterize_annotation(const Annotation& ann, int side,
                                std::vector<std::string>* warnings = nullptr);

/// Per-lesion union of all rasterized annotations.
LesionMaskStack masks_to_stack(const std::vector<Annotation>& annotations, int side,
                               std::vector<std::string>* warnings = nullptr);

/// Synthetic grading rule, evaluated in priority order:
/// DR4 if NV, vHE, pHE or FiP; DR3 if CWS or at least 20 iHE blobs;
/// DR2 if iHE or HaEx; DR1 if MA; otherwise DR0.
DRGrade grade_from_lesions(const LesionPresenceVector& presence, int ihe_blob_count);

inline constexpr int kDr3IheBlobThreshold = 20;

/// One {0,255} 8-bit PNG per lesion, named <image_id>_<lesion>.png.
void write_masks(const LesionMaskStack& stack, const std::filesystem::path& dir,
                 const std::string& image_id);
/// Throws IoError naming the lesion when a channel file is missing.
LesionMaskStack read_masks(const std::filesystem::path& dir, const std::string& image_id);

/// Loaded training sample.
struct Sample {
  std::string image_id;
  FundusImage image;
  LesionMaskStack masks;
  DRGrade grade = DRGrade::DR0;
};

/// Loads the image and its masks (from masks_dir or by rasterizing annotations).
Sample load_sample(const DatasetRecord& record);

}  // namespace lnet
