#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <map>

#include "icevit/common.hpp"
#include "icevit/synthetic.hpp"
#include "icevit/taxonomy.hpp"
#include "icevit/tiling.hpp"

using Catch::Approx;
using icevit::ClassTaxonomy;
using icevit::LabelRaster;
using icevit::PatchRecord;
using icevit::SceneRaster;

namespace {

// Brute-force reference: recompute validity, majority and purity per patch
// straight from the pixel data, independent of tile_scene's bookkeeping.
std::vector<PatchRecord> oracle_tile(const SceneRaster& scene, const LabelRaster& labels,
                                     const ClassTaxonomy& tax, int patch, float rho, int block) {
  std::vector<PatchRecord> out;
  for (int r0 = 0; r0 + patch <= scene.height; r0 += patch) {
    for (int c0 = 0; c0 + patch <= scene.width; c0 += patch) {
      std::map<int, int> counts;
      int valid = 0;
      bool nan_found = false;
      for (int r = r0; r < r0 + patch; ++r)
        for (int c = c0; c < c0 + patch; ++c) {
          if (std::isnan(scene.at(0, r, c)) || std::isnan(scene.at(1, r, c))) nan_found = true;
          auto cls = tax.map_code(labels.at(r, c));
          if (cls) {
            ++counts[*cls];
            ++valid;
          }
        }
      if (nan_found) continue;
      if (valid * 2 < patch * patch) continue;
      int best_class = -1, best_count = -1;
      for (const auto& [cls, cnt] : counts)
        if (cnt > best_count) {
          best_class = cls;
          best_count = cnt;
        }
      const float purity = static_cast<float>(best_count) / static_cast<float>(valid);
      if (purity < rho) continue;
      out.push_back({scene.scene_id, r0, c0, patch, best_class, purity, r0 / (block * patch),
                     c0 / (block * patch)});
    }
  }
  return out;
}

bool same_records(const std::vector<PatchRecord>& a, const std::vector<PatchRecord>& b) {
  if (a.size() != b.size()) return false;
  for (size_t i = 0; i < a.size(); ++i) {
    if (a[i].scene_id != b[i].scene_id || a[i].row0 != b[i].row0 || a[i].col0 != b[i].col0 ||
        a[i].patch_size != b[i].patch_size || a[i].class_index != b[i].class_index ||
        a[i].purity != b[i].purity || a[i].block_row != b[i].block_row ||
        a[i].block_col != b[i].block_col)
      return false;
  }
  return true;
}

}  // namespace

TEST_CASE("homogeneous scene tiles into full-purity records", "[tiling]") {
  icevit::SceneSpec spec;
  spec.scene_id = "homog";
  spec.width = 128;
  spec.height = 128;
  spec.seed = 3;
  spec.regions = {{0, 0, 128, 128, {"fyi", 87, -10, -16, 2, 2, 2, 0}}};
  auto [scene, labels] = icevit::generate_synthetic_scene(spec);
  const auto tax = icevit::default_taxonomy();
  const auto recs = icevit::tile_scene(scene, labels, tax, 32, 0.7f, 4);
  REQUIRE(recs.size() == 16);
  for (const auto& r : recs) {
    REQUIRE(r.purity == 1.0f);
    REQUIRE(r.class_index == 3);
    REQUIRE(r.patch_size == 32);
    REQUIRE(r.block_row == r.row0 / 128);
  }
}

TEST_CASE("a 60/40 straddling patch is discarded at purity 0.7", "[tiling]") {
  SceneRaster scene = SceneRaster::create("straddle", 10, 10);
  LabelRaster labels = LabelRaster::create(10, 10);
  for (int r = 0; r < 10; ++r)
    for (int c = 0; c < 10; ++c) labels.at(r, c) = r < 6 ? 0 : 87;  // 60% water, 40% FYI
  const auto tax = icevit::default_taxonomy();
  REQUIRE(icevit::tile_scene(scene, labels, tax, 10, 0.7f).empty());
  // The same patch passes at a 0.6 threshold and takes the majority label.
  const auto recs = icevit::tile_scene(scene, labels, tax, 10, 0.6f);
  REQUIRE(recs.size() == 1);
  REQUIRE(recs[0].class_index == 0);
  REQUIRE(recs[0].purity == Approx(0.6).margin(1e-6));
}

TEST_CASE("tiling matches the brute-force oracle on constructed geometry", "[tiling]") {
  const auto tax = icevit::default_taxonomy();
  icevit::Rng rng(41);
  for (int trial = 0; trial < 6; ++trial) {
    // Random rectangles of random classes over a 96x64 scene, with invalid
    // bands and some NaN pixels sprinkled in.
    SceneRaster scene = SceneRaster::create("oracle_" + std::to_string(trial), 96, 64);
    LabelRaster labels = LabelRaster::create(96, 64);  // starts all-invalid
    const std::vector<uint8_t> codes{0, 80, 83, 87, 96, 97};
    for (int i = 0; i < 12; ++i) {
      const int h = 8 + static_cast<int>(rng.uniform_int(24));
      const int w = 8 + static_cast<int>(rng.uniform_int(32));
      const int r0 = static_cast<int>(rng.uniform_int(64 - h));
      const int c0 = static_cast<int>(rng.uniform_int(96 - w));
      const uint8_t code = codes[rng.uniform_int(codes.size())];
      for (int r = r0; r < r0 + h; ++r)
        for (int c = c0; c < c0 + w; ++c) labels.at(r, c) = code;
    }
    for (int i = 0; i < 20; ++i) {
      const int r = static_cast<int>(rng.uniform_int(64));
      const int c = static_cast<int>(rng.uniform_int(96));
      scene.at(static_cast<int>(rng.uniform_int(2)), r, c) = std::nanf("");
    }
    for (int patch : {8, 16}) {
      for (float rho : {0.6f, 0.8f, 1.0f}) {
        const auto got = icevit::tile_scene(scene, labels, tax, patch, rho, 4);
        const auto want = oracle_tile(scene, labels, tax, patch, rho, 4);
        INFO("trial " << trial << " patch " << patch << " rho " << rho);
        REQUIRE(same_records(got, want));
      }
    }
  }
}

TEST_CASE("patches with NaN backscatter or sparse labels are discarded", "[tiling]") {
  const auto tax = icevit::default_taxonomy();
  SceneRaster scene = SceneRaster::create("nan", 16, 16);
  LabelRaster labels = LabelRaster::create(16, 16, 87);
  scene.at(1, 3, 11) = std::nanf("");  // poisons the right 8x8 quadrant
  auto recs = icevit::tile_scene(scene, labels, tax, 8, 0.7f);
  REQUIRE(recs.size() == 3);

  // Fewer than 50% valid pixels: top-left patch has 31 of 64 labeled.
  LabelRaster sparse = LabelRaster::create(16, 16, 255);
  int painted = 0;
  for (int r = 0; r < 8 && painted < 31; ++r)
    for (int c = 0; c < 8 && painted < 31; ++c) {
      sparse.at(r, c) = 87;
      ++painted;
    }
  SceneRaster clean = SceneRaster::create("nan2", 16, 16);
  recs = icevit::tile_scene(clean, sparse, tax, 8, 0.7f);
  REQUIRE(recs.empty());
  // Exactly 50% valid passes.
  sparse.at(3, 7) = 87;
  recs = icevit::tile_scene(clean, sparse, tax, 8, 0.7f);
  REQUIRE(recs.size() == 1);
}

TEST_CASE("residual margins are dropped and inputs validated", "[tiling]") {
  const auto tax = icevit::default_taxonomy();
  SceneRaster scene = SceneRaster::create("margins", 100, 100);
  LabelRaster labels = LabelRaster::create(100, 100, 83);
  const auto recs = icevit::tile_scene(scene, labels, tax, 32, 0.7f);
  REQUIRE(recs.size() == 9);  // 3x3 grid, 4-pixel margins dropped

  REQUIRE_THROWS_AS(icevit::tile_scene(scene, labels, tax, 128, 0.7f), icevit::InputError);
  REQUIRE_THROWS_AS(icevit::tile_scene(scene, labels, tax, 32, 0.0f), icevit::ParamError);
  REQUIRE_THROWS_AS(icevit::tile_scene(scene, labels, tax, 32, 1.5f), icevit::ParamError);
  LabelRaster mismatched = LabelRaster::create(100, 99);
  REQUIRE_THROWS_AS(icevit::tile_scene(scene, mismatched, tax, 32, 0.7f), icevit::InputError);
}

TEST_CASE("extract_patch slices channel-major pixel windows", "[tiling]") {
  SceneRaster scene = SceneRaster::create("slice", 8, 8);
  for (int ch = 0; ch < 2; ++ch)
    for (int r = 0; r < 8; ++r)
      for (int c = 0; c < 8; ++c) scene.at(ch, r, c) = static_cast<float>(ch * 1000 + r * 10 + c);
  const auto px = icevit::extract_patch(scene, 2, 4, 2);
  REQUIRE(px == std::vector<float>{24, 25, 34, 35, 1024, 1025, 1034, 1035});
  REQUIRE_THROWS_AS(icevit::extract_patch(scene, 7, 7, 2), icevit::InputError);
}
