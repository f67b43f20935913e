#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "icevit/common.hpp"
#include "icevit/tape.hpp"
#include "icevit/tensor.hpp"

namespace icevit {

struct ViTConfig {
  int image_size = 8;
  int patch_size = 4;
  int in_channels = 2;
  int embed_dim = 8;
  int depth = 1;
  int heads = 2;
  int mlp_ratio = 4;
  int num_classes = 3;

  // Tiny configuration used by tests and desk-scale experiments.
  static ViTConfig vit_test() { return ViTConfig{8, 4, 2, 8, 1, 2, 4, 3}; }

  // Standard ViT-B/16 dimensions.
  static ViTConfig vit_base(int image_size = 224, int in_channels = 2, int num_classes = 6,
                            int patch_size = 16) {
    return ViTConfig{image_size, patch_size, in_channels, 768, 12, 12, 4, num_classes};
  }

  // Standard ViT-L/16 dimensions.
  static ViTConfig vit_large(int image_size = 224, int in_channels = 2, int num_classes = 6,
                             int patch_size = 16) {
    return ViTConfig{image_size, patch_size, in_channels, 1024, 24, 16, 4, num_classes};
  }

  int grid_side() const { return image_size / patch_size; }
  int num_patches() const { return grid_side() * grid_side(); }
  int tokens() const { return num_patches() + 1; }
  int head_dim() const { return embed_dim / heads; }
  int mlp_hidden() const { return mlp_ratio * embed_dim; }
  int patch_dim() const { return in_channels * patch_size * patch_size; }

  void validate() const {
    if (image_size < 1 || patch_size < 1 || in_channels < 1 || embed_dim < 1 || depth < 1 ||
        heads < 1 || mlp_ratio < 1 || num_classes < 1)
      throw ParamError("ViTConfig: all fields must be >= 1");
    if (image_size % patch_size != 0)
      throw ParamError("ViTConfig: image_size " + std::to_string(image_size) +
                       " not divisible by patch_size " + std::to_string(patch_size));
    if (embed_dim % heads != 0)
      throw ParamError("ViTConfig: embed_dim " + std::to_string(embed_dim) +
                       " not divisible by heads " + std::to_string(heads));
  }

  bool operator==(const ViTConfig&) const = default;
};

// Named parameter set, in a fixed layout order shared by initialization,
// optimizer state and the checkpoint codec.
struct ViTParams {
  std::vector<std::string> names;
  std::vector<Tensor> tensors;

  void add(std::string name, Tensor t) {
    index_[name] = names.size();
    names.push_back(std::move(name));
    tensors.push_back(std::move(t));
  }

  Tensor& get(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw InputError("ViTParams: no tensor named " + name);
    return tensors[it->second];
  }
  const Tensor& get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw InputError("ViTParams: no tensor named " + name);
    return tensors[it->second];
  }

  int64_t count() const {
    int64_t n = 0;
    for (const auto& t : tensors) n += t.numel();
    return n;
  }

  bool all_finite() const {
    for (const auto& t : tensors)
      if (!t.all_finite()) return false;
    return true;
  }

 private:
  std::unordered_map<std::string, size_t> index_;
};

// (name, shape) pairs in layout order for a given config.
inline std::vector<std::pair<std::string, std::vector<int>>> param_layout(const ViTConfig& c) {
  c.validate();
  const int d = c.embed_dim, pd = c.patch_dim(), t = c.tokens(), h = c.mlp_hidden(),
            k = c.num_classes;
  std::vector<std::pair<std::string, std::vector<int>>> out;
  out.push_back({"patch_proj.weight", {d, pd}});
  out.push_back({"patch_proj.bias", {d}});
  out.push_back({"cls_token", {d}});
  out.push_back({"pos_embed", {t, d}});
  for (int i = 0; i < c.depth; ++i) {
    const std::string p = "block" + std::to_string(i) + ".";
    out.push_back({p + "ln1.gamma", {d}});
    out.push_back({p + "ln1.beta", {d}});
    out.push_back({p + "attn.qkv.weight", {3 * d, d}});
    out.push_back({p + "attn.qkv.bias", {3 * d}});
    out.push_back({p + "attn.proj.weight", {d, d}});
    out.push_back({p + "attn.proj.bias", {d}});
    out.push_back({p + "ln2.gamma", {d}});
    out.push_back({p + "ln2.beta", {d}});
    out.push_back({p + "mlp.fc1.weight", {h, d}});
    out.push_back({p + "mlp.fc1.bias", {h}});
    out.push_back({p + "mlp.fc2.weight", {d, h}});
    out.push_back({p + "mlp.fc2.bias", {d}});
  }
  out.push_back({"final_ln.gamma", {d}});
  out.push_back({"final_ln.beta", {d}});
  out.push_back({"head.weight", {k, d}});
  out.push_back({"head.bias", {k}});
  return out;
}

inline int64_t param_count(const ViTConfig& c) {
  int64_t n = 0;
  for (const auto& [name, shape] : param_layout(c)) n += Tensor::numel_of(shape);
  return n;
}

// Truncated-normal (sigma 0.02, clipped at 2 sigma) projection weights, unit
// layernorm scales, zero biases, zero class token and positional embeddings.
inline ViTParams init_params(const ViTConfig& c, uint64_t seed) {
  Rng rng(derive_seed(seed, "vit_init"));
  ViTParams params;
  for (const auto& [name, shape] : param_layout(c)) {
    Tensor t = Tensor::zeros(shape);
    const bool is_weight_matrix = shape.size() == 2 && name != "pos_embed";
    const bool is_ln_scale = name.size() >= 5 && name.substr(name.size() - 5) == "gamma";
    if (is_weight_matrix) {
      for (auto& v : t.data) v = static_cast<float>(rng.normal_truncated(0.02, 0.04));
    } else if (is_ln_scale) {
      for (auto& v : t.data) v = 1.0f;
    }
    params.add(name, std::move(t));
  }
  return params;
}

// Non-overlapping P×P blocks in row-major block order, channel-major within
// each block. image shape is [C, H, W].
inline Tensor patchify(const Tensor& image, int p) {
  if (image.ndim() != 3)
    throw ShapeError("patchify: expected [C,H,W], got " + Tensor::shape_string(image.shape));
  const int c = image.shape[0], hgt = image.shape[1], wid = image.shape[2];
  if (p < 1 || hgt % p != 0 || wid % p != 0)
    throw ShapeError("patchify: dims " + Tensor::shape_string(image.shape) +
                     " not divisible by patch size " + std::to_string(p));
  const int gh = hgt / p, gw = wid / p;
  Tensor out = Tensor::zeros({gh * gw, c * p * p});
  size_t o = 0;
  for (int br = 0; br < gh; ++br)
    for (int bc = 0; bc < gw; ++bc)
      for (int ch = 0; ch < c; ++ch)
        for (int pr = 0; pr < p; ++pr)
          for (int pc = 0; pc < p; ++pc)
            out.data[o++] = image.data[(static_cast<size_t>(ch) * hgt + br * p + pr) * wid +
                                       bc * p + pc];
  return out;
}

inline Tensor unpatchify(const Tensor& tokens, int c, int hgt, int wid, int p) {
  tokens.require_2d();
  const int gh = hgt / p, gw = wid / p;
  if (tokens.shape[0] != gh * gw || tokens.shape[1] != c * p * p)
    throw ShapeError("unpatchify: token shape " + Tensor::shape_string(tokens.shape) +
                     " does not match target dims");
  Tensor out = Tensor::zeros({c, hgt, wid});
  size_t o = 0;
  for (int br = 0; br < gh; ++br)
    for (int bc = 0; bc < gw; ++bc)
      for (int ch = 0; ch < c; ++ch)
        for (int pr = 0; pr < p; ++pr)
          for (int pc = 0; pc < p; ++pc)
            out.data[(static_cast<size_t>(ch) * hgt + br * p + pr) * wid + bc * p + pc] =
                tokens.data[o++];
  return out;
}

// Registers every parameter as a gradient-enabled leaf on `tape`, refreshing
// the stored node handles. Must be called once per recording tape before
// vit_forward when gradients are wanted.
inline void register_leaves(Tape& tape, ViTParams& params) {
  for (auto& t : params.tensors) t = tape.leaf(std::move(t));
}

// Pre-LN transformer encoder over patch tokens with a prepended class token;
// classification head reads the final class-token state.
// batch is [B × C·S·S], one flattened [C,S,S] image per row.
inline Tensor vit_forward(Tape& tape, const ViTConfig& cfg, ViTParams& params, const Tensor& batch,
                          bool train_mode = false) {
  (void)train_mode;  // no stochastic layers in this model family
  cfg.validate();
  batch.require_2d();
  const int b = batch.shape[0];
  const int s = cfg.image_size, c = cfg.in_channels, p = cfg.patch_size;
  if (batch.shape[1] != c * s * s)
    throw ShapeError("vit_forward: sample length " + std::to_string(batch.shape[1]) +
                     " does not match in_channels*image_size^2 = " + std::to_string(c * s * s));
  const int np = cfg.num_patches(), t = cfg.tokens(), d = cfg.embed_dim, h = cfg.heads;
  const int dh = cfg.head_dim();

  // Tokenize the whole batch; the input carries no gradient.
  Tensor tokens = Tensor::zeros({b * np, cfg.patch_dim()});
  for (int i = 0; i < b; ++i) {
    Tensor img({c, s, s},
               std::vector<float>(batch.data.begin() + static_cast<size_t>(i) * c * s * s,
                                  batch.data.begin() + static_cast<size_t>(i + 1) * c * s * s));
    Tensor tk = patchify(img, p);
    std::copy(tk.data.begin(), tk.data.end(),
              tokens.data.begin() + static_cast<size_t>(i) * np * cfg.patch_dim());
  }

  Tensor x = tape.add_rowvec(tape.matmul_nt(tokens, params.get("patch_proj.weight")),
                             params.get("patch_proj.bias"));

  // Prepend one class token per sample: stack [B copies of cls | all tokens],
  // then reorder rows into per-sample [cls, tokens...] blocks.
  Tensor cls_row = tape.reshape(params.get("cls_token"), {1, d});
  Tensor stacked = tape.concat_rows({tape.tile_rows(cls_row, b), x});
  std::vector<int> order;
  order.reserve(static_cast<size_t>(b) * t);
  for (int i = 0; i < b; ++i) {
    order.push_back(i);
    for (int j = 0; j < np; ++j) order.push_back(b + i * np + j);
  }
  Tensor seq = tape.gather_rows(stacked, order);
  seq = tape.add(seq, tape.tile_rows(params.get("pos_embed"), b));

  const float attn_scale = 1.0f / std::sqrt(static_cast<float>(dh));
  for (int blk = 0; blk < cfg.depth; ++blk) {
    const std::string pre = "block" + std::to_string(blk) + ".";
    Tensor normed = tape.layernorm(seq, params.get(pre + "ln1.gamma"), params.get(pre + "ln1.beta"),
                                   1e-5f);
    Tensor qkv = tape.add_rowvec(tape.matmul_nt(normed, params.get(pre + "attn.qkv.weight")),
                                 params.get(pre + "attn.qkv.bias"));
    Tensor q = tape.split_heads(qkv, b, t, h, 0);
    Tensor kk = tape.split_heads(qkv, b, t, h, 1);
    Tensor v = tape.split_heads(qkv, b, t, h, 2);
    Tensor scores = tape.scale(tape.bmm_nt(q, kk, b * h), attn_scale);
    Tensor attn = tape.softmax(scores, -1);
    Tensor ctx = tape.merge_heads(tape.bmm(attn, v, b * h), b, t, h);
    Tensor proj = tape.add_rowvec(tape.matmul_nt(ctx, params.get(pre + "attn.proj.weight")),
                                  params.get(pre + "attn.proj.bias"));
    seq = tape.add(seq, proj);

    Tensor normed2 = tape.layernorm(seq, params.get(pre + "ln2.gamma"),
                                    params.get(pre + "ln2.beta"), 1e-5f);
    Tensor hidden = tape.gelu(tape.add_rowvec(tape.matmul_nt(normed2, params.get(pre + "mlp.fc1.weight")),
                                              params.get(pre + "mlp.fc1.bias")));
    Tensor mlp_out = tape.add_rowvec(tape.matmul_nt(hidden, params.get(pre + "mlp.fc2.weight")),
                                     params.get(pre + "mlp.fc2.bias"));
    seq = tape.add(seq, mlp_out);
  }

  Tensor final_norm = tape.layernorm(seq, params.get("final_ln.gamma"), params.get("final_ln.beta"),
                                     1e-5f);
  std::vector<int> cls_rows(b);
  for (int i = 0; i < b; ++i) cls_rows[i] = i * t;
  Tensor pooled = tape.gather_rows(final_norm, cls_rows);
  return tape.add_rowvec(tape.matmul_nt(pooled, params.get("head.weight")),
                         params.get("head.bias"));
}

}  // namespace icevit
