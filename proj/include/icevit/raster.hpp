#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "icevit/binio.hpp"
#include "icevit/common.hpp"

namespace icevit {

inline constexpr char kSceneMagic[] = "ICESCN01";
inline constexpr char kLabelMagic[] = "ICELBL01";
inline constexpr uint8_t kInvalidSaCode = 255;

// Two-channel (HH, HV) backscatter raster in dB. Data is channel-major,
// row-major within a channel; NaN marks nodata pixels.
struct SceneRaster {
  std::string scene_id;
  int width = 0;
  int height = 0;
  int channels = 2;
  double pixel_spacing_m = 40.0;
  std::vector<float> data;

  static SceneRaster create(std::string id, int w, int h, double spacing = 40.0) {
    if (w < 1 || h < 1) throw ParamError("SceneRaster: dimensions must be positive");
    if (spacing <= 0.0) throw ParamError("SceneRaster: pixel spacing must be positive");
    SceneRaster s;
    s.scene_id = std::move(id);
    s.width = w;
    s.height = h;
    s.pixel_spacing_m = spacing;
    s.data.assign(static_cast<size_t>(2) * w * h, 0.0f);
    return s;
  }

  float& at(int ch, int r, int c) {
    return data[(static_cast<size_t>(ch) * height + r) * width + c];
  }
  float at(int ch, int r, int c) const {
    return data[(static_cast<size_t>(ch) * height + r) * width + c];
  }
};

// Per-pixel SIGRID-3 stage-of-development codes; 255 = invalid/land/unlabeled.
struct LabelRaster {
  int width = 0;
  int height = 0;
  std::vector<uint8_t> codes;

  static LabelRaster create(int w, int h, uint8_t fill = kInvalidSaCode) {
    if (w < 1 || h < 1) throw ParamError("LabelRaster: dimensions must be positive");
    LabelRaster l;
    l.width = w;
    l.height = h;
    l.codes.assign(static_cast<size_t>(w) * h, fill);
    return l;
  }

  uint8_t& at(int r, int c) { return codes[static_cast<size_t>(r) * width + c]; }
  uint8_t at(int r, int c) const { return codes[static_cast<size_t>(r) * width + c]; }
};

inline void check_scene_label_pair(const SceneRaster& scene, const LabelRaster& labels) {
  if (scene.width != labels.width || scene.height != labels.height)
    throw InputError("scene " + scene.scene_id + " is " + std::to_string(scene.width) + "x" +
                     std::to_string(scene.height) + " but label raster is " +
                     std::to_string(labels.width) + "x" + std::to_string(labels.height));
}

inline void write_scene(const SceneRaster& s, const std::string& path) {
  auto os = binio::open_out(path);
  os.write(kSceneMagic, 8);
  binio::write_u32(os, static_cast<uint32_t>(s.width));
  binio::write_u32(os, static_cast<uint32_t>(s.height));
  binio::write_u32(os, static_cast<uint32_t>(s.channels));
  binio::write_f64(os, s.pixel_spacing_m);
  binio::write_u32(os, static_cast<uint32_t>(s.scene_id.size()));
  os.write(s.scene_id.data(), static_cast<std::streamsize>(s.scene_id.size()));
  binio::write_f32_array(os, s.data.data(), s.data.size());
  if (!os) throw InputError("write_scene: write failed for " + path);
}

inline SceneRaster read_scene(const std::string& path) {
  auto is = binio::open_in(path);
  binio::expect_magic(is, kSceneMagic, "scene file");
  SceneRaster s;
  s.width = static_cast<int>(binio::read_u32(is, "scene width"));
  s.height = static_cast<int>(binio::read_u32(is, "scene height"));
  s.channels = static_cast<int>(binio::read_u32(is, "scene channels"));
  if (s.width < 1 || s.height < 1)
    throw FormatError("scene file: non-positive dimensions in header");
  if (s.channels != 2)
    throw FormatError("scene file: expected 2 channels (HH, HV), header says " +
                      std::to_string(s.channels));
  s.pixel_spacing_m = binio::read_f64(is, "pixel spacing");
  if (!(s.pixel_spacing_m > 0.0)) throw FormatError("scene file: non-positive pixel spacing");
  const uint32_t id_len = binio::read_u32(is, "scene id length");
  s.scene_id.resize(id_len);
  binio::read_exact(is, s.scene_id.data(), id_len, "scene id");
  const size_t n = static_cast<size_t>(s.channels) * s.width * s.height;
  s.data.resize(n);
  binio::read_f32_array(is, s.data.data(), n, "scene payload");
  char extra;
  if (is.read(&extra, 1); is.gcount() != 0)
    throw FormatError("scene file: payload longer than width*height*channels in header");
  return s;
}

inline void write_labels(const LabelRaster& l, const std::string& path) {
  auto os = binio::open_out(path);
  os.write(kLabelMagic, 8);
  binio::write_u32(os, static_cast<uint32_t>(l.width));
  binio::write_u32(os, static_cast<uint32_t>(l.height));
  os.write(reinterpret_cast<const char*>(l.codes.data()),
           static_cast<std::streamsize>(l.codes.size()));
  if (!os) throw InputError("write_labels: write failed for " + path);
}

inline LabelRaster read_labels(const std::string& path) {
  auto is = binio::open_in(path);
  binio::expect_magic(is, kLabelMagic, "label file");
  LabelRaster l;
  l.width = static_cast<int>(binio::read_u32(is, "label width"));
  l.height = static_cast<int>(binio::read_u32(is, "label height"));
  if (l.width < 1 || l.height < 1)
    throw FormatError("label file: non-positive dimensions in header");
  l.codes.resize(static_cast<size_t>(l.width) * l.height);
  binio::read_exact(is, l.codes.data(), l.codes.size(), "label payload");
  char extra;
  if (is.read(&extra, 1); is.gcount() != 0)
    throw FormatError("label file: payload longer than width*height in header");
  return l;
}

// Loads every `<scene_id>.scn` in a directory, keyed and ordered by scene_id.
inline std::map<std::string, SceneRaster> load_scene_dir(const std::string& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw InputError("scene directory not found: " + dir);
  std::map<std::string, SceneRaster> scenes;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file() || entry.path().extension() != ".scn") continue;
    SceneRaster s = read_scene(entry.path().string());
    scenes.emplace(s.scene_id, std::move(s));
  }
  if (scenes.empty()) throw InputError("no .scn files in " + dir);
  return scenes;
}

// Loads co-registered scene/label pairs (`x.scn` + `x.lbl`), validating dims.
inline std::map<std::string, std::pair<SceneRaster, LabelRaster>> load_scene_pairs(
    const std::string& dir) {
  namespace fs = std::filesystem;
  std::map<std::string, std::pair<SceneRaster, LabelRaster>> out;
  auto scenes = load_scene_dir(dir);
  for (auto& [id, scene] : scenes) {
    fs::path lbl = fs::path(dir) / (fs::path(scene.scene_id).string() + ".lbl");
    if (!fs::exists(lbl))
      throw InputError("missing label file for scene " + id + ": " + lbl.string());
    LabelRaster labels = read_labels(lbl.string());
    check_scene_label_pair(scene, labels);
    out.emplace(id, std::make_pair(std::move(scene), std::move(labels)));
  }
  return out;
}

}  // namespace icevit
