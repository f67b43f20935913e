#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "icevit/common.hpp"
#include "icevit/raster.hpp"
#include "icevit/taxonomy.hpp"

namespace icevit {

// One retained patch: a P×P crop of a scene with its majority-class label.
// block_row/block_col address the B·P-pixel super-block used as the leakage
// unit when splitting.
struct PatchRecord {
  std::string scene_id;
  int row0 = 0;
  int col0 = 0;
  int patch_size = 0;
  int class_index = 0;
  float purity = 0.0f;
  int block_row = 0;
  int block_col = 0;

  std::string block_key() const {
    return scene_id + ":" + std::to_string(block_row) + ":" + std::to_string(block_col);
  }
};

// Non-overlapping stride-P tiling. A patch is retained when it has no NaN
// backscatter, at least 50% valid (taxonomy-mapped) pixels, and majority
// purity >= purity_threshold. Residual margins smaller than P are dropped.
inline std::vector<PatchRecord> tile_scene(const SceneRaster& scene, const LabelRaster& labels,
                                           const ClassTaxonomy& taxonomy, int patch,
                                           float purity_threshold, int block_patches = 4) {
  check_scene_label_pair(scene, labels);
  if (patch < 1 || patch > scene.width || patch > scene.height)
    throw InputError("tile_scene: patch size " + std::to_string(patch) +
                     " exceeds scene dims " + std::to_string(scene.width) + "x" +
                     std::to_string(scene.height));
  if (!(purity_threshold > 0.0f) || purity_threshold > 1.0f)
    throw ParamError("tile_scene: purity threshold must be in (0,1]");
  if (block_patches < 1) throw ParamError("tile_scene: block size must be >= 1");

  const int k = taxonomy.num_classes();
  const int grid_rows = scene.height / patch;
  const int grid_cols = scene.width / patch;
  const int block_px = block_patches * patch;
  std::vector<PatchRecord> out;
  std::vector<int> counts(k);

  for (int gr = 0; gr < grid_rows; ++gr) {
    for (int gc = 0; gc < grid_cols; ++gc) {
      const int r0 = gr * patch, c0 = gc * patch;
      std::fill(counts.begin(), counts.end(), 0);
      int valid = 0;
      bool has_nan = false;
      for (int r = r0; r < r0 + patch && !has_nan; ++r) {
        for (int c = c0; c < c0 + patch; ++c) {
          if (std::isnan(scene.at(0, r, c)) || std::isnan(scene.at(1, r, c))) {
            has_nan = true;
            break;
          }
          if (auto cls = taxonomy.map_code(labels.at(r, c))) {
            ++counts[*cls];
            ++valid;
          }
        }
      }
      if (has_nan) continue;
      if (2 * valid < patch * patch) continue;
      int best = 0;
      for (int c = 1; c < k; ++c)
        if (counts[c] > counts[best]) best = c;  // ties keep the lowest index
      const float purity = static_cast<float>(counts[best]) / static_cast<float>(valid);
      if (purity < purity_threshold) continue;
      PatchRecord rec;
      rec.scene_id = scene.scene_id;
      rec.row0 = r0;
      rec.col0 = c0;
      rec.patch_size = patch;
      rec.class_index = best;
      rec.purity = purity;
      rec.block_row = r0 / block_px;
      rec.block_col = c0 / block_px;
      out.push_back(std::move(rec));
    }
  }
  return out;
}

// Raw patch pixels [C, P, P] flattened channel-major, matching the model's
// expected sample layout.
inline std::vector<float> extract_patch(const SceneRaster& scene, int row0, int col0, int patch) {
  if (row0 < 0 || col0 < 0 || row0 + patch > scene.height || col0 + patch > scene.width)
    throw InputError("extract_patch: window (" + std::to_string(row0) + "," +
                     std::to_string(col0) + ")+" + std::to_string(patch) +
                     " outside scene " + scene.scene_id);
  std::vector<float> px(static_cast<size_t>(2) * patch * patch);
  size_t o = 0;
  for (int ch = 0; ch < 2; ++ch)
    for (int r = row0; r < row0 + patch; ++r)
      for (int c = col0; c < col0 + patch; ++c) px[o++] = scene.at(ch, r, c);
  return px;
}

}  // namespace icevit
