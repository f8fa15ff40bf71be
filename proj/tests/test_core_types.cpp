#include <doctest.h>

#include <random>

#include "lnet/errors.hpp"
#include "lnet/image_io.hpp"
#include "lnet/ingestion.hpp"
#include "lnet/synth.hpp"
#include "lnet/types.hpp"
#include "support/oracles.hpp"
#include "support/tempdir.hpp"

using namespace lnet;

namespace {

bool mentions(const std::vector<std::string>& report, const std::string& needle) {
  for (const auto& s : report) {
    if (s.find(needle) != std::string::npos) return true;
  }
  return false;
}

}  // namespace

TEST_CASE("lesion vocabulary has the canonical order") {
  const std::vector<std::string> expected{"MA", "iHE", "HaEx", "CWS", "vHE", "pHE", "NV", "FiP"};
  REQUIRE(kNumLesions == 8);
  for (int j = 0; j < kNumLesions; ++j) {
    CHECK(std::string(lesion_name(j)) == expected[j]);
    CHECK(lesion_index(expected[j]) == j);
  }
  CHECK_FALSE(lesion_index("IrMA").has_value());
  CHECK_THROWS_AS(grade_from_int(5), InvalidInput);
  CHECK(grade_from_int(4) == DRGrade::DR4);
}

TEST_CASE("presence_from_maps takes the per-channel maximum") {
  CHECK(presence_from_maps(ProbMapStack(Tensor(Shape{1, 2, 2, 1}, {0, 0, 0, 0}))).values == std::vector<double>{0.0});
  CHECK(presence_from_maps(ProbMapStack(Tensor(Shape{1, 2, 2, 1}, {0.2, 0.9, 0.1, 0.4}))).values ==
        std::vector<double>{0.9});
  CHECK_THROWS_AS(presence_from_maps(Tensor(Shape{1, 0, 0, 2})), InvalidInput);

  std::mt19937_64 rng(7);
  const Tensor mask = oracle::random_binary(Shape{1, 6, 6, 8}, rng, 0.02);
  const auto presence = presence_from_maps(ProbMapStack(mask)).values;
  for (int j = 0; j < 8; ++j) {
    bool any = false;
    for (int y = 0; y < 6; ++y)
      for (int x = 0; x < 6; ++x) any |= mask(0, y, x, j) == 1.0;
    CHECK(presence[j] == (any ? 1.0 : 0.0));
  }
}

TEST_CASE("threshold_maps is inclusive at tau") {
  const auto m = threshold_maps(ProbMapStack(Tensor(Shape{1, 1, 2, 1}, {0.49, 0.5})));
  CHECK(m.at(0, 0, 0) == 0);
  CHECK(m.at(0, 1, 0) == 1);
  const auto zeros = threshold_maps(ProbMapStack(Tensor(Shape{1, 3, 3, 2})));
  for (auto b : zeros.bits()) CHECK(b == 0);
  std::mt19937_64 rng(3);
  const Tensor binary = oracle::random_binary(Shape{1, 5, 5, 3}, rng);
  CHECK(threshold_maps(ProbMapStack(binary)).to_tensor() == binary);
  CHECK_THROWS_AS(threshold_maps(ProbMapStack(binary), 0.0), ConfigError);
  CHECK_THROWS_AS(threshold_maps(ProbMapStack(binary), 1.0), ConfigError);
  CHECK_THROWS_AS(threshold(binary, 1.5), ConfigError);
}

TEST_CASE("property: presence is monotone in every pixel") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    Tensor maps = oracle::random_tensor(Shape{1, 4, 4, 3}, rng);
    const auto before = presence_from_maps(ProbMapStack(maps)).values;
    const std::size_t k = rng() % maps.size();
    maps[k] = maps[k] + (1.0 - maps[k]) * u(rng);
    const auto after = presence_from_maps(ProbMapStack(maps)).values;
    for (int j = 0; j < 3; ++j) CHECK(after[j] >= before[j]);
  }
}

TEST_CASE("property: max and threshold commute") {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 200; ++trial) {
    const ProbMapStack maps(oracle::random_tensor(Shape{1, 4, 4, 8}, rng));
    const auto lhs = presence_from_maps(ProbMapStack(threshold_maps(maps).to_tensor())).values;
    const auto rhs = threshold(presence_from_maps(maps)).values;
    CHECK(lhs == rhs);
  }
}

TEST_CASE("property: thresholding depends only on the comparison with tau") {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    const Tensor maps = oracle::random_tensor(Shape{1, 4, 4, 2}, rng);
    Tensor moved = maps;
    // Move every value to another point on the same side of 0.5.
    for (std::size_t i = 0; i < moved.size(); ++i) moved[i] = maps[i] >= 0.5 ? 0.5 + 0.5 * u(rng) : 0.5 * u(rng) * 0.999;
    CHECK(threshold(maps) == threshold(moved));
  }
}

TEST_CASE("validate_record reports violations") {
  testing_support::TempDir dir;
  const auto s = synth_sample(SynthConfig::defaults(64), 0);
  const auto image = dir / "img.png";
  io::write_png(image, io::to_raster(s.image.pixels()));
  write_masks(s.masks, dir.path(), s.image_id);

  DatasetRecord good;
  good.image_id = s.image_id;
  good.image_path = image;
  good.masks_dir = dir.path();
  good.grade = to_int(s.grade);
  good.split = "train";
  CHECK(validate_record(good).empty());

  DatasetRecord bad_grade = good;
  bad_grade.grade = 5;
  CHECK(mentions(validate_record(bad_grade), "grade out of range"));

  DatasetRecord bad_lesion = good;
  Annotation a;
  a.lesion = "IrMA";
  a.polygon = {{0, 0}, {4, 0}, {4, 4}};
  bad_lesion.annotations.push_back(a);
  CHECK(mentions(validate_record(bad_lesion), "unknown lesion"));

  DatasetRecord missing = good;
  missing.image_path = dir / "nope.png";
  CHECK(mentions(validate_record(missing), "missing file"));

  DatasetRecord bad_split = good;
  bad_split.split = "holdout";
  CHECK(mentions(validate_record(bad_split), "invalid split"));

  DatasetRecord degenerate = good;
  Annotation line;
  line.lesion = "MA";
  line.polygon = {{0, 0}, {4, 4}};
  degenerate.annotations.push_back(line);
  CHECK(mentions(validate_record(degenerate), "malformed annotation"));
}

TEST_CASE("domain types validate their invariants") {
  CHECK_THROWS_AS(FundusImage(Tensor(Shape{1, 4, 4, 1})), ShapeError);
  CHECK_THROWS_AS(FundusImage(Tensor(Shape{1, 4, 4, 3}, 1.5)), InvalidInput);
  CHECK_THROWS_AS(ProbMapStack(Tensor(Shape{1, 2, 2, 1}, -0.1)), InvalidInput);
  CHECK_THROWS_AS(LesionMaskStack::from_tensor(Tensor(Shape{1, 2, 2, 1}, 0.5)), InvalidInput);
}
