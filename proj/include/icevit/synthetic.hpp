#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <string>
#include <utility>
#include <vector>

#include "icevit/common.hpp"
#include "icevit/raster.hpp"

namespace icevit {

// Gaussian texture parameters for one surface class. Means are dB-scale
// backscatter; corr_len > 0 smears the noise with a box filter of that
// radius (variance is restored after filtering).
struct ClassTexture {
  std::string name;
  int sa_code = 0;
  float mean_hh = -20.0f;
  float mean_hv = -26.0f;
  float sigma_hh = 1.5f;
  float sigma_hv = 1.5f;
  int corr_len = 2;
  float mean_jitter = 0.25f;  // per-region, per-channel mean offset sigma
};

struct RegionSpec {
  int row0 = 0, col0 = 0, height = 0, width = 0;
  ClassTexture texture;
};

struct SceneSpec {
  std::string scene_id;
  int width = 0, height = 0;
  double pixel_spacing_m = 40.0;
  uint64_t seed = 0;
  std::vector<RegionSpec> regions;
};

namespace detail {

// Separable box blur with replicated edges, in place over an h×w buffer.
inline void box_blur(std::vector<double>& buf, int h, int w, int radius) {
  if (radius <= 0) return;
  const int win = 2 * radius + 1;
  std::vector<double> tmp(buf.size());
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      double acc = 0.0;
      for (int k = -radius; k <= radius; ++k) {
        int cc = std::min(std::max(c + k, 0), w - 1);
        acc += buf[static_cast<size_t>(r) * w + cc];
      }
      tmp[static_cast<size_t>(r) * w + c] = acc / win;
    }
  }
  // Vertical pass as a plain sum: var(sum of `win` samples of var 1/win) = 1,
  // so interior pixels keep unit variance.
  for (int c = 0; c < w; ++c) {
    for (int r = 0; r < h; ++r) {
      double acc = 0.0;
      for (int k = -radius; k <= radius; ++k) {
        int rr = std::min(std::max(r + k, 0), h - 1);
        acc += tmp[static_cast<size_t>(rr) * w + c];
      }
      buf[static_cast<size_t>(r) * w + c] = acc;
    }
  }
}

}  // namespace detail

// Per-class Gaussian-textured backscatter in both channels plus the matching
// label raster. Regions must exactly tile the scene. Deterministic per seed.
inline std::pair<SceneRaster, LabelRaster> generate_synthetic_scene(const SceneSpec& spec) {
  if (spec.width < 1 || spec.height < 1)
    throw SpecError("synthetic scene: dimensions must be positive");
  if (spec.regions.empty()) throw SpecError("synthetic scene: no regions given");

  // Coverage check: each pixel painted exactly once.
  std::vector<uint8_t> cover(static_cast<size_t>(spec.width) * spec.height, 0);
  for (size_t i = 0; i < spec.regions.size(); ++i) {
    const RegionSpec& rg = spec.regions[i];
    if (rg.row0 < 0 || rg.col0 < 0 || rg.height < 1 || rg.width < 1 ||
        rg.row0 + rg.height > spec.height || rg.col0 + rg.width > spec.width)
      throw SpecError("synthetic scene " + spec.scene_id + ": region " + std::to_string(i) +
                      " out of bounds");
    if (rg.texture.sa_code < 0 || rg.texture.sa_code > 254)
      throw SpecError("synthetic scene: region " + std::to_string(i) + " has invalid SA code");
    for (int r = rg.row0; r < rg.row0 + rg.height; ++r)
      for (int c = rg.col0; c < rg.col0 + rg.width; ++c) {
        uint8_t& mark = cover[static_cast<size_t>(r) * spec.width + c];
        if (mark)
          throw SpecError("synthetic scene " + spec.scene_id + ": region " + std::to_string(i) +
                          " overlaps another region at (" + std::to_string(r) + "," +
                          std::to_string(c) + ")");
        mark = 1;
      }
  }
  for (size_t i = 0; i < cover.size(); ++i)
    if (!cover[i])
      throw SpecError("synthetic scene " + spec.scene_id + ": regions do not tile the scene");

  SceneRaster scene = SceneRaster::create(spec.scene_id, spec.width, spec.height,
                                          spec.pixel_spacing_m);
  LabelRaster labels = LabelRaster::create(spec.width, spec.height);

  for (size_t i = 0; i < spec.regions.size(); ++i) {
    const RegionSpec& rg = spec.regions[i];
    const ClassTexture& tex = rg.texture;
    for (int ch = 0; ch < 2; ++ch) {
      Rng rng(derive_seed(spec.seed, "texture:" + spec.scene_id, i, static_cast<uint64_t>(ch)));
      const double mean = (ch == 0 ? tex.mean_hh : tex.mean_hv) +
                          (tex.mean_jitter > 0 ? rng.normal() * tex.mean_jitter : 0.0);
      const double sigma = ch == 0 ? tex.sigma_hh : tex.sigma_hv;
      std::vector<double> noise(static_cast<size_t>(rg.height) * rg.width);
      for (auto& v : noise) v = rng.normal();
      detail::box_blur(noise, rg.height, rg.width, tex.corr_len);
      for (int r = 0; r < rg.height; ++r)
        for (int c = 0; c < rg.width; ++c)
          scene.at(ch, rg.row0 + r, rg.col0 + c) =
              static_cast<float>(mean + sigma * noise[static_cast<size_t>(r) * rg.width + c]);
    }
    for (int r = rg.row0; r < rg.row0 + rg.height; ++r)
      for (int c = rg.col0; c < rg.col0 + rg.width; ++c)
        labels.at(r, c) = static_cast<uint8_t>(tex.sa_code);
  }
  return {std::move(scene), std::move(labels)};
}

// ---------------------------------------------------------------------------
// Corpus planning: randomized guillotine layouts with class shares tracked
// across the whole corpus so small-share classes still materialize.
// ---------------------------------------------------------------------------

struct CorpusClassSpec {
  ClassTexture texture;
  double share = 0.0;  // target fraction of total corpus area
};

struct CorpusSpec {
  int num_scenes = 16;
  int width = 288, height = 288;
  double pixel_spacing_m = 40.0;
  uint64_t seed = 7;
  int min_region = 24;
  int max_region = 88;
  std::vector<CorpusClassSpec> classes;

  // Six-class SAR-like palette. The Old/Multi-Year Ice minority (~2% of
  // patches after tiling) overlaps First-Year Ice in both channels; the
  // other classes are well separated.
  static CorpusSpec defaults() {
    CorpusSpec s;
    s.classes = {
        {{"Water", 0, -23.0f, -29.0f, 1.6f, 1.6f, 2, 0.3f}, 0.20},
        {{"New Ice", 80, -18.0f, -24.5f, 1.8f, 1.8f, 2, 0.3f}, 0.20},
        {{"Young Ice", 83, -13.5f, -20.0f, 2.0f, 2.0f, 2, 0.3f}, 0.20},
        {{"First-Year Ice", 87, -9.5f, -16.0f, 2.2f, 2.2f, 2, 0.3f}, 0.26},
        {{"Old/Multi-Year Ice", 96, -7.4f, -13.8f, 2.2f, 2.2f, 2, 0.3f}, 0.022},
        {{"Glacier Ice", 97, -4.0f, -10.5f, 2.0f, 2.0f, 2, 0.3f}, 0.118},
    };
    return s;
  }
};

namespace detail {

struct Rect {
  int row0, col0, height, width;
};

inline void guillotine_split(Rect r, int min_side, int max_side, Rng& rng,
                             std::vector<Rect>& out) {
  const int longest = std::max(r.height, r.width);
  if (longest <= max_side || longest < 2 * min_side) {
    out.push_back(r);
    return;
  }
  const bool split_rows = r.height >= r.width;
  const int side = split_rows ? r.height : r.width;
  const int cut = min_side + static_cast<int>(rng.uniform_int(
                                 static_cast<uint64_t>(side - 2 * min_side + 1)));
  Rect a = r, b = r;
  if (split_rows) {
    a.height = cut;
    b.row0 = r.row0 + cut;
    b.height = r.height - cut;
  } else {
    a.width = cut;
    b.col0 = r.col0 + cut;
    b.width = r.width - cut;
  }
  guillotine_split(a, min_side, max_side, rng, out);
  guillotine_split(b, min_side, max_side, rng, out);
}

}  // namespace detail

// Deterministic scene layouts for a whole corpus. Class assignment is a
// seeded roulette over remaining share deficits, accumulated corpus-wide.
inline std::vector<SceneSpec> plan_corpus(const CorpusSpec& spec) {
  if (spec.num_scenes < 1) throw SpecError("corpus: num_scenes must be >= 1");
  if (spec.classes.empty()) throw SpecError("corpus: no classes configured");
  if (spec.min_region < 8 || spec.max_region < spec.min_region)
    throw SpecError("corpus: bad region size bounds");
  double share_sum = 0.0;
  for (const auto& c : spec.classes) {
    if (c.share < 0.0) throw SpecError("corpus: negative class share");
    share_sum += c.share;
  }
  if (share_sum <= 0.0) throw SpecError("corpus: class shares sum to zero");

  const double total_area =
      static_cast<double>(spec.num_scenes) * spec.width * spec.height;
  std::vector<double> target(spec.classes.size());
  for (size_t c = 0; c < spec.classes.size(); ++c)
    target[c] = spec.classes[c].share / share_sum * total_area;
  std::vector<double> achieved(spec.classes.size(), 0.0);

  std::vector<SceneSpec> scenes;
  scenes.reserve(spec.num_scenes);
  for (int i = 0; i < spec.num_scenes; ++i) {
    char idbuf[32];
    std::snprintf(idbuf, sizeof(idbuf), "scene_%04d", i);
    SceneSpec sc;
    sc.scene_id = idbuf;
    sc.width = spec.width;
    sc.height = spec.height;
    sc.pixel_spacing_m = spec.pixel_spacing_m;
    sc.seed = derive_seed(spec.seed, "scene", static_cast<uint64_t>(i));

    Rng rng(derive_seed(spec.seed, "layout", static_cast<uint64_t>(i)));
    std::vector<detail::Rect> rects;
    detail::guillotine_split({0, 0, spec.height, spec.width}, spec.min_region, spec.max_region,
                             rng, rects);
    for (const auto& r : rects) {
      const double area = static_cast<double>(r.height) * r.width;
      std::vector<double> w(spec.classes.size());
      double wsum = 0.0;
      for (size_t c = 0; c < w.size(); ++c) {
        w[c] = std::max(target[c] - achieved[c], 0.0) + 1e-9;
        wsum += w[c];
      }
      double pick = rng.uniform() * wsum;
      size_t chosen = 0;
      for (size_t c = 0; c < w.size(); ++c) {
        if (pick < w[c] || c == w.size() - 1) {
          chosen = c;
          break;
        }
        pick -= w[c];
      }
      achieved[chosen] += area;
      sc.regions.push_back({r.row0, r.col0, r.height, r.width, spec.classes[chosen].texture});
    }
    scenes.push_back(std::move(sc));
  }
  return scenes;
}

}  // namespace icevit
