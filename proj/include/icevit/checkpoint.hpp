#pragma once

#include <string>
#include <vector>

#include "json.hpp"

#include "icevit/binio.hpp"
#include "icevit/common.hpp"
#include "icevit/vit.hpp"

namespace icevit {

inline constexpr char kCheckpointMagic[] = "ICEVIT01";

struct CheckpointMeta {
  uint64_t seed = 0;
  int64_t step_count = 0;
  std::string loss_name = "ce";
};

struct Checkpoint {
  ViTConfig config;
  CheckpointMeta meta;
  ViTParams params;
};

inline nlohmann::ordered_json config_to_json(const ViTConfig& c) {
  return {{"image_size", c.image_size}, {"patch_size", c.patch_size},
          {"in_channels", c.in_channels}, {"embed_dim", c.embed_dim},
          {"depth", c.depth},           {"heads", c.heads},
          {"mlp_ratio", c.mlp_ratio},   {"num_classes", c.num_classes}};
}

inline ViTConfig config_from_json(const nlohmann::json& j) {
  ViTConfig c;
  try {
    c.image_size = j.at("image_size").get<int>();
    c.patch_size = j.at("patch_size").get<int>();
    c.in_channels = j.at("in_channels").get<int>();
    c.embed_dim = j.at("embed_dim").get<int>();
    c.depth = j.at("depth").get<int>();
    c.heads = j.at("heads").get<int>();
    c.mlp_ratio = j.at("mlp_ratio").get<int>();
    c.num_classes = j.at("num_classes").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint: bad config blob: ") + e.what());
  }
  c.validate();
  return c;
}

// Layout: magic, u32 JSON length + UTF-8 {config, meta} blob, then one record
// per tensor in layout order: u32 name length, name, u32 ndim, u32 dims[],
// raw little-endian f32 data.
inline void save_checkpoint(const ViTParams& params, const ViTConfig& config,
                            const CheckpointMeta& meta, const std::string& path) {
  nlohmann::ordered_json blob;
  blob["config"] = config_to_json(config);
  blob["meta"] = {{"seed", meta.seed}, {"step_count", meta.step_count}, {"loss", meta.loss_name}};
  const std::string json_text = blob.dump();

  auto os = binio::open_out(path);
  os.write(kCheckpointMagic, 8);
  binio::write_u32(os, static_cast<uint32_t>(json_text.size()));
  os.write(json_text.data(), static_cast<std::streamsize>(json_text.size()));
  for (size_t i = 0; i < params.tensors.size(); ++i) {
    const std::string& name = params.names[i];
    const Tensor& t = params.tensors[i];
    binio::write_u32(os, static_cast<uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    binio::write_u32(os, static_cast<uint32_t>(t.shape.size()));
    for (int d : t.shape) binio::write_u32(os, static_cast<uint32_t>(d));
    binio::write_f32_array(os, t.data.data(), t.data.size());
  }
  if (!os) throw InputError("checkpoint: write failed for " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  auto is = binio::open_in(path);
  binio::expect_magic(is, kCheckpointMagic, "checkpoint");

  const uint32_t json_len = binio::read_u32(is, "checkpoint json length");
  std::string json_text(json_len, '\0');
  binio::read_exact(is, json_text.data(), json_len, "checkpoint json blob");
  nlohmann::json blob;
  try {
    blob = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint: unparsable json blob: ") + e.what());
  }

  Checkpoint ck;
  ck.config = config_from_json(blob.at("config"));
  if (blob.contains("meta")) {
    const auto& m = blob["meta"];
    ck.meta.seed = m.value("seed", 0ull);
    ck.meta.step_count = m.value("step_count", static_cast<int64_t>(0));
    ck.meta.loss_name = m.value("loss", std::string("ce"));
  }

  const auto layout = param_layout(ck.config);
  for (const auto& [want_name, want_shape] : layout) {
    const uint32_t name_len = binio::read_u32(is, "tensor name length");
    std::string name(name_len, '\0');
    binio::read_exact(is, name.data(), name_len, "tensor name");
    if (name != want_name)
      throw FormatError("checkpoint: expected tensor " + want_name + ", found " + name);
    const uint32_t ndim = binio::read_u32(is, "tensor ndim");
    std::vector<int> shape(ndim);
    for (uint32_t i = 0; i < ndim; ++i)
      shape[i] = static_cast<int>(binio::read_u32(is, "tensor dim"));
    if (shape != want_shape)
      throw FormatError("checkpoint: tensor " + name + " has dims " +
                        Tensor::shape_string(shape) + ", config requires " +
                        Tensor::shape_string(want_shape));
    Tensor t = Tensor::zeros(shape);
    binio::read_f32_array(is, t.data.data(), t.data.size(), name.c_str());
    ck.params.add(name, std::move(t));
  }
  // No trailing garbage allowed.
  char extra;
  if (is.read(&extra, 1); is.gcount() != 0)
    throw FormatError("checkpoint: trailing bytes after last tensor record");
  return ck;
}

}  // namespace icevit
