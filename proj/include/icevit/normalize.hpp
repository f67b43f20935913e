#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"

#include "icevit/common.hpp"
#include "icevit/raster.hpp"
#include "icevit/split.hpp"
#include "icevit/tiling.hpp"

namespace icevit {

inline constexpr double kStdFloor = 1e-6;

struct ChannelStats {
  double mean = 0.0;
  double std = 1.0;
};

struct NormalizationStats {
  std::vector<ChannelStats> channels;  // HH, HV
  int64_t count = 0;                   // pixels per channel
  std::string source_split = "train";
  std::string manifest_hash;  // FNV-1a 64 of the manifest file bytes, hex
};

// Per-channel mean/std over all pixels of the chosen split's patches,
// single-pass (Welford), population std floored at 1e-6. Patches are visited
// in (scene_id, row0, col0) order so results do not depend on manifest order.
inline NormalizationStats compute_norm_stats(const SplitManifest& manifest,
                                             const std::map<std::string, SceneRaster>& scenes,
                                             Split split = Split::train) {
  std::vector<const ManifestEntry*> picked;
  for (const auto& e : manifest.entries)
    if (e.split == split) picked.push_back(&e);
  if (picked.empty())
    throw InputError(std::string("compute_norm_stats: no patches in split '") +
                     split_name(split) + "'");
  std::sort(picked.begin(), picked.end(), [](const ManifestEntry* a, const ManifestEntry* b) {
    if (a->rec.scene_id != b->rec.scene_id) return a->rec.scene_id < b->rec.scene_id;
    if (a->rec.row0 != b->rec.row0) return a->rec.row0 < b->rec.row0;
    return a->rec.col0 < b->rec.col0;
  });

  double mean[2] = {0.0, 0.0}, m2[2] = {0.0, 0.0};
  int64_t n[2] = {0, 0};
  for (const ManifestEntry* e : picked) {
    auto it = scenes.find(e->rec.scene_id);
    if (it == scenes.end())
      throw InputError("compute_norm_stats: manifest references missing scene " +
                       e->rec.scene_id);
    const SceneRaster& sc = it->second;
    const int p = e->rec.patch_size;
    if (e->rec.row0 < 0 || e->rec.col0 < 0 || e->rec.row0 + p > sc.height ||
        e->rec.col0 + p > sc.width)
      throw InputError("compute_norm_stats: patch outside scene " + e->rec.scene_id);
    for (int ch = 0; ch < 2; ++ch) {
      for (int r = e->rec.row0; r < e->rec.row0 + p; ++r) {
        for (int c = e->rec.col0; c < e->rec.col0 + p; ++c) {
          const double x = sc.at(ch, r, c);
          const double delta = x - mean[ch];
          mean[ch] += delta / static_cast<double>(++n[ch]);
          m2[ch] += delta * (x - mean[ch]);
        }
      }
    }
  }

  NormalizationStats stats;
  stats.count = n[0];
  stats.channels.resize(2);
  for (int ch = 0; ch < 2; ++ch) {
    stats.channels[ch].mean = mean[ch];
    stats.channels[ch].std =
        std::max(std::sqrt(m2[ch] / static_cast<double>(n[ch])), kStdFloor);
  }
  stats.source_split = split_name(split);
  return stats;
}

// Per-channel (x - mean) / std over a [C, P, P] channel-major pixel buffer.
inline void normalize_patch(std::vector<float>& pixels, const NormalizationStats& stats) {
  if (stats.channels.size() != 2 || pixels.size() % 2 != 0)
    throw ParamError("normalize_patch: expected 2-channel stats and pixels");
  const size_t per = pixels.size() / 2;
  for (int ch = 0; ch < 2; ++ch) {
    const double mu = stats.channels[ch].mean;
    const double sd = stats.channels[ch].std;
    for (size_t i = 0; i < per; ++i) {
      float& v = pixels[static_cast<size_t>(ch) * per + i];
      v = static_cast<float>((v - mu) / sd);
    }
  }
}

inline void write_stats(const NormalizationStats& stats, const std::string& path) {
  nlohmann::ordered_json j;
  j["channels"] = nlohmann::ordered_json::array();
  for (const auto& ch : stats.channels)
    j["channels"].push_back({{"mean", ch.mean}, {"std", ch.std}});
  j["count"] = stats.count;
  j["source_split"] = stats.source_split;
  j["manifest_hash"] = stats.manifest_hash;
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw InputError("cannot open stats file for writing: " + path);
  os << j.dump(2) << "\n";
  if (!os) throw InputError("stats: write failed for " + path);
}

inline NormalizationStats read_stats(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InputError("cannot open stats file: " + path);
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("stats: unparsable json: ") + e.what());
  }
  NormalizationStats stats;
  try {
    for (const auto& ch : j.at("channels"))
      stats.channels.push_back({ch.at("mean").get<double>(), ch.at("std").get<double>()});
    stats.count = j.at("count").get<int64_t>();
    stats.source_split = j.value("source_split", std::string("train"));
    stats.manifest_hash = j.value("manifest_hash", std::string());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("stats: missing field: ") + e.what());
  }
  if (stats.channels.size() != 2) throw FormatError("stats: expected exactly 2 channels");
  for (const auto& ch : stats.channels)
    if (!(ch.std >= kStdFloor)) throw FormatError("stats: std below floor");
  return stats;
}

// Hex FNV-1a 64 over a file's bytes; identifies the manifest stats came from.
inline std::string hash_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InputError("cannot open for hashing: " + path);
  uint64_t h = 0xcbf29ce484222325ull;
  char buf[4096];
  while (is.read(buf, sizeof(buf)) || is.gcount() > 0) {
    h = fnv1a64(buf, static_cast<size_t>(is.gcount()), h);
    if (!is) break;
  }
  char out[17];
  std::snprintf(out, sizeof(out), "%016llx", static_cast<unsigned long long>(h));
  return std::string(out);
}

}  // namespace icevit
