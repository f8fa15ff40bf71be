#include "lnet/ingestion.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <set>

#include "lnet/errors.hpp"
#include "lnet/image_io.hpp"

namespace lnet {
namespace fs = std::filesystem;
using nlohmann::json;

std::size_t BinaryMask::count() const {
  return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), std::uint8_t{1}));
}

namespace {

Annotation parse_annotation(const json& j) {
  Annotation a;
  a.lesion = j.at("lesion").get<std::string>();
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "polygon") {
    a.kind = ShapeKind::polygon;
    for (const json& p : j.at("points")) a.polygon.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
  } else if (kind == "ellipse") {
    a.kind = ShapeKind::ellipse;
    const json& e = j.at("ellipse");
    a.ellipse = {e.at(0).get<double>(), e.at(1).get<double>(), e.at(2).get<double>(),
                 e.at(3).get<double>(), e.size() > 4 ? e.at(4).get<double>() : 0.0};
  } else {
    throw std::invalid_argument("unknown annotation kind '" + kind + "'");
  }
  return a;
}

json annotation_json(const Annotation& a) {
  json j{{"lesion", a.lesion}};
  if (a.kind == ShapeKind::polygon) {
    j["kind"] = "polygon";
    json pts = json::array();
    for (const Point& p : a.polygon) pts.push_back({p.x, p.y});
    j["points"] = std::move(pts);
  } else {
    j["kind"] = "ellipse";
    j["ellipse"] = {a.ellipse.cx, a.ellipse.cy, a.ellipse.semi_a, a.ellipse.semi_b, a.ellipse.rotation};
  }
  return j;
}

fs::path resolve(const fs::path& base, const std::string& p) {
  fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

}  // namespace

std::vector<DatasetRecord> parse_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path.string());
  const fs::path base = path.parent_path();
  std::vector<DatasetRecord> records;
  std::set<std::string> seen;
  std::string text;
  int line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string at = " at line " + std::to_string(line);
    DatasetRecord r;
    r.line = line;
    try {
      const json j = json::parse(text);
      r.image_id = j.at("image_id").get<std::string>();
      r.image_path = resolve(base, j.at("image").get<std::string>());
      if (j.contains("masks_dir")) r.masks_dir = resolve(base, j.at("masks_dir").get<std::string>());
      if (j.contains("annotations")) {
        for (const json& a : j.at("annotations")) r.annotations.push_back(parse_annotation(a));
      }
      if (!r.masks_dir && !j.contains("annotations")) {
        throw std::invalid_argument("record needs masks_dir or annotations");
      }
      const json& g = j.at("grade");
      r.grade = g.is_string() ? std::stoi(g.get<std::string>()) : g.get<int>();
      r.split = j.at("split").get<std::string>();
      if (j.contains("ihe_blobs")) r.ihe_blobs = j.at("ihe_blobs").get<int>();
    } catch (const std::exception& e) {
      throw ParseError("malformed record" + at + ": " + e.what(), line);
    }
    if (r.grade < 0 || r.grade >= kNumGrades) throw ParseError("grade out of range" + at, line);
    for (const std::string& v : validate_record(r)) {
      // File presence is checked lazily by load_sample; structure is checked here.
      if (v.rfind("missing file", 0) == 0) continue;
      throw ParseError(v + at, line);
    }
    if (!seen.insert(r.image_id).second) {
      throw DuplicateError("duplicate image_id '" + r.image_id + "'" + at);
    }
    records.push_back(std::move(r));
  }
  return records;
}

void write_manifest(const fs::path& path, const std::vector<DatasetRecord>& records) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write manifest " + path.string());
  const fs::path base = path.parent_path();
  auto rel = [&](const fs::path& p) { return p.lexically_relative(base).generic_string(); };
  for (const DatasetRecord& r : records) {
    json j{{"image_id", r.image_id}, {"image", rel(r.image_path)}};
    if (r.masks_dir) j["masks_dir"] = rel(*r.masks_dir);
    if (!r.annotations.empty() || !r.masks_dir) {
      json anns = json::array();
      for (const Annotation& a : r.annotations) anns.push_back(annotation_json(a));
      j["annotations"] = std::move(anns);
    }
    j["grade"] = r.grade;
    j["split"] = r.split;
    if (r.ihe_blobs) j["ihe_blobs"] = *r.ihe_blobs;
    out << j.dump() << '\n';
  }
}

namespace {

double polygon_area(const std::vector<Point>& poly) {
  double twice = 0.0;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const Point& a = poly[i];
    const Point& b = poly[(i + 1) % poly.size()];
    twice += a.x * b.y - b.x * a.y;
  }
  return 0.5 * twice;
}

// Sutherland-Hodgman clip against the axis-aligned box [0, side]^2.
std::vector<Point> clip_to_square(std::vector<Point> poly, double side) {
  auto clip = [&](auto inside, auto intersect) {
    std::vector<Point> out;
    for (std::size_t i = 0; i < poly.size(); ++i) {
      const Point& cur = poly[i];
      const Point& prev = poly[(i + poly.size() - 1) % poly.size()];
      const bool ci = inside(cur), pi = inside(prev);
      if (ci) {
        if (!pi) out.push_back(intersect(prev, cur));
        out.push_back(cur);
      } else if (pi) {
        out.push_back(intersect(prev, cur));
      }
    }
    poly = std::move(out);
  };
  auto at_x = [](double x) {
    return [x](const Point& a, const Point& b) {
      const double t = (x - a.x) / (b.x - a.x);
      return Point{x, a.y + t * (b.y - a.y)};
    };
  };
  auto at_y = [](double y) {
    return [y](const Point& a, const Point& b) {
      const double t = (y - a.y) / (b.y - a.y);
      return Point{a.x + t * (b.x - a.x), y};
    };
  };
  clip([](const Point& p) { return p.x >= 0.0; }, at_x(0.0));
  if (!poly.empty()) clip([side](const Point& p) { return p.x <= side; }, at_x(side));
  if (!poly.empty()) clip([](const Point& p) { return p.y >= 0.0; }, at_y(0.0));
  if (!poly.empty()) clip([side](const Point& p) { return p.y <= side; }, at_y(side));
  return poly;
}

bool inside_even_odd(const std::vector<Point>& poly, double px, double py) {
  bool inside = false;
  for (std::size_t i = 0, j = poly.size() - 1; i < poly.size(); j = i++) {
    const Point& a = poly[i];
    const Point& b = poly[j];
    if ((a.y > py) != (b.y > py)) {
      const double x_cross = a.x + (py - a.y) * (b.x - a.x) / (b.y - a.y);
      if (px < x_cross) inside = !inside;
    }
  }
  return inside;
}

}  // namespace

BinaryMask rasterize_annotation(const Annotation& ann, int side, std::vector<std::string>* warnings) {
  if (side <= 0) throw ShapeError("rasterize_annotation: side must be positive");
  BinaryMask mask{side, std::vector<std::uint8_t>(static_cast<std::size_t>(side) * side, 0)};

  if (ann.kind == ShapeKind::polygon) {
    if (ann.polygon.size() < 3) throw InvalidInput("polygon needs at least 3 vertices");
    const std::vector<Point> clipped = clip_to_square(ann.polygon, side);
    if (clipped.size() < 3 || std::abs(polygon_area(clipped)) <= 0.0) {
      if (warnings) warnings->push_back("degenerate polygon for lesion " + ann.lesion + " ignored");
      return mask;
    }
    double x0 = side, y0 = side, x1 = 0, y1 = 0;
    for (const Point& p : clipped) {
      x0 = std::min(x0, p.x), x1 = std::max(x1, p.x);
      y0 = std::min(y0, p.y), y1 = std::max(y1, p.y);
    }
    const int ys = std::max(0, static_cast<int>(std::floor(y0)) - 1);
    const int ye = std::min(side - 1, static_cast<int>(std::ceil(y1)));
    const int xs = std::max(0, static_cast<int>(std::floor(x0)) - 1);
    const int xe = std::min(side - 1, static_cast<int>(std::ceil(x1)));
    // The unclipped polygon is tested so clipping never alters the even-odd parity.
    for (int y = ys; y <= ye; ++y) {
      for (int x = xs; x <= xe; ++x) {
        if (inside_even_odd(ann.polygon, x + 0.5, y + 0.5)) mask.bits[static_cast<std::size_t>(y) * side + x] = 1;
      }
    }
    return mask;
  }

  const Ellipse& e = ann.ellipse;
  if (!(e.semi_a > 0.0 && e.semi_b > 0.0)) throw InvalidInput("ellipse semi-axes must be positive");
  const double c = std::cos(e.rotation), s = std::sin(e.rotation);
  const double reach = std::max(e.semi_a, e.semi_b);
  const int ys = std::max(0, static_cast<int>(std::floor(e.cy - reach)) - 1);
  const int ye = std::min(side - 1, static_cast<int>(std::ceil(e.cy + reach)));
  const int xs = std::max(0, static_cast<int>(std::floor(e.cx - reach)) - 1);
  const int xe = std::min(side - 1, static_cast<int>(std::ceil(e.cx + reach)));
  for (int y = ys; y <= ye; ++y) {
    for (int x = xs; x <= xe; ++x) {
      const double dx = x + 0.5 - e.cx, dy = y + 0.5 - e.cy;
      const double u = (dx * c + dy * s) / e.semi_a;
      const double v = (-dx * s + dy * c) / e.semi_b;
      if (u * u + v * v <= 1.0) mask.bits[static_cast<std::size_t>(y) * side + x] = 1;
    }
  }
  return mask;
}

LesionMaskStack masks_to_stack(const std::vector<Annotation>& annotations, int side,
                               std::vector<std::string>* warnings) {
  LesionMaskStack stack(side, side, kNumLesions);
  for (const Annotation& ann : annotations) {
    const auto j = lesion_index(ann.lesion);
    if (!j) throw InvalidInput("unknown lesion '" + ann.lesion + "'");
    const BinaryMask mask = rasterize_annotation(ann, side, warnings);
    for (int y = 0; y < side; ++y) {
      for (int x = 0; x < side; ++x) {
        if (mask.at(y, x)) stack.at(y, x, *j) = 1;
      }
    }
  }
  return stack;
}

DRGrade grade_from_lesions(const LesionPresenceVector& presence, int ihe_blob_count) {
  if (presence.values.size() != static_cast<std::size_t>(kNumLesions)) {
    throw ShapeError("grade_from_lesions expects one entry per lesion");
  }
  auto has = [&](Lesion l) { return presence.values[static_cast<int>(l)] >= 0.5; };
  if (has(Lesion::NV) || has(Lesion::vHE) || has(Lesion::pHE) || has(Lesion::FiP)) return DRGrade::DR4;
  if (has(Lesion::CWS) || ihe_blob_count >= kDr3IheBlobThreshold) return DRGrade::DR3;
  if (has(Lesion::iHE) || has(Lesion::HaEx)) return DRGrade::DR2;
  if (has(Lesion::MA)) return DRGrade::DR1;
  return DRGrade::DR0;
}

void write_masks(const LesionMaskStack& stack, const fs::path& dir, const std::string& image_id) {
  fs::create_directories(dir);
  const int h = stack.height(), w = stack.width();
  for (int j = 0; j < stack.channels(); ++j) {
    io::Raster r{h, w, 1, 8, std::vector<std::uint16_t>(static_cast<std::size_t>(h) * w)};
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) r.samples[static_cast<std::size_t>(y) * w + x] = stack.at(y, x, j) ? 255 : 0;
    }
    io::write_png(dir / (image_id + "_" + std::string(lesion_name(j)) + ".png"), r);
  }
}

LesionMaskStack read_masks(const fs::path& dir, const std::string& image_id) {
  LesionMaskStack stack;
  for (int j = 0; j < kNumLesions; ++j) {
    const std::string lesion(lesion_name(j));
    const fs::path file = dir / (image_id + "_" + lesion + ".png");
    if (!fs::is_regular_file(file)) {
      throw IoError("missing mask for lesion " + lesion + ": " + file.string());
    }
    const io::Raster r = io::read_png(file);
    if (r.channels != 1) throw IoError("mask for lesion " + lesion + " is not single-channel");
    if (j == 0) stack = LesionMaskStack(r.height, r.width, kNumLesions);
    if (r.height != stack.height() || r.width != stack.width()) {
      throw IoError("mask for lesion " + lesion + " has inconsistent size");
    }
    const std::uint16_t on = r.bit_depth == 16 ? 65535 : 255;
    for (int y = 0; y < r.height; ++y) {
      for (int x = 0; x < r.width; ++x) {
        const std::uint16_t v = r.samples[static_cast<std::size_t>(y) * r.width + x];
        if (v != 0 && v != on) throw IoError("mask for lesion " + lesion + " is not binary");
        stack.at(y, x, j) = v == on ? 1 : 0;
      }
    }
  }
  return stack;
}

Sample load_sample(const DatasetRecord& record) {
  Sample s;
  s.image_id = record.image_id;
  const io::Raster raster = io::read_png(record.image_path);
  if (raster.channels != 3) throw IoError("image is not RGB: " + record.image_path.string());
  s.image = FundusImage(io::to_tensor(raster));
  if (record.masks_dir) {
    s.masks = read_masks(*record.masks_dir, record.image_id);
    if (s.masks.height() != s.image.side()) throw IoError("mask/image size mismatch for " + record.image_id);
  } else {
    s.masks = masks_to_stack(record.annotations, s.image.side());
  }
  s.grade = grade_from_int(record.grade);
  return s;
}

}  // namespace lnet
