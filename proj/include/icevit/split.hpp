#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "icevit/common.hpp"
#include "icevit/tiling.hpp"

namespace icevit {

enum class Split { none, train, val };

inline const char* split_name(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    default: return "";
  }
}

inline Split split_from_name(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s.empty()) return Split::none;
  throw FormatError("manifest: unknown split value '" + s + "'");
}

struct ManifestEntry {
  PatchRecord rec;
  Split split = Split::none;
};

struct SplitManifest {
  std::vector<ManifestEntry> entries;
  double ratio = 0.8;
  uint64_t seed = 0;
  int block_size = 4;
  double divergence = 0.0;
  std::vector<std::string> warnings;
};

// L1 distance between the two splits' class-proportion vectors; 2 (the
// maximum) when either side is empty.
inline double class_divergence(const std::vector<int64_t>& train_counts,
                               const std::vector<int64_t>& val_counts) {
  int64_t nt = 0, nv = 0;
  for (int64_t c : train_counts) nt += c;
  for (int64_t c : val_counts) nv += c;
  if (nt == 0 || nv == 0) return 2.0;
  double d = 0.0;
  for (size_t c = 0; c < train_counts.size(); ++c)
    d += std::abs(static_cast<double>(train_counts[c]) / nt -
                  static_cast<double>(val_counts[c]) / nv);
  return d;
}

// Assigns whole blocks to train or val, largest blocks first, minimizing at
// each step the class divergence plus the deviation from the target ratio.
// Seeded shuffle breaks ordering ties between equal-sized blocks.
inline SplitManifest stratified_block_split(const std::vector<PatchRecord>& records,
                                            int num_classes, double ratio, int block_patches,
                                            uint64_t seed, double tolerance = 0.02) {
  if (records.empty()) throw InputError("stratified_block_split: no records");
  if (!(ratio > 0.0 && ratio < 1.0))
    throw ParamError("stratified_block_split: ratio must be in (0,1)");
  if (block_patches < 1) throw ParamError("stratified_block_split: block size must be >= 1");
  if (num_classes < 1) throw ParamError("stratified_block_split: num_classes must be >= 1");

  // Recompute block addresses from coordinates so the leakage unit always
  // reflects the block size given here.
  struct Block {
    std::string key;
    std::vector<size_t> members;
    std::vector<int64_t> counts;
    int64_t total = 0;
  };
  std::map<std::string, Block> by_key;
  std::vector<PatchRecord> recs = records;
  for (size_t i = 0; i < recs.size(); ++i) {
    PatchRecord& r = recs[i];
    if (r.class_index < 0 || r.class_index >= num_classes)
      throw InputError("stratified_block_split: record class " + std::to_string(r.class_index) +
                       " outside [0," + std::to_string(num_classes) + ")");
    const int block_px = block_patches * r.patch_size;
    r.block_row = r.row0 / block_px;
    r.block_col = r.col0 / block_px;
    Block& b = by_key[r.block_key()];
    if (b.counts.empty()) {
      b.key = r.block_key();
      b.counts.assign(num_classes, 0);
    }
    b.members.push_back(i);
    b.counts[r.class_index] += 1;
    b.total += 1;
  }

  std::vector<const Block*> blocks;
  blocks.reserve(by_key.size());
  for (const auto& [key, b] : by_key) blocks.push_back(&b);
  Rng rng(derive_seed(seed, "block_split"));
  rng.shuffle(blocks);
  std::stable_sort(blocks.begin(), blocks.end(),
                   [](const Block* a, const Block* b) { return a->total > b->total; });

  std::vector<int64_t> tc(num_classes, 0), vc(num_classes, 0);
  int64_t nt = 0, nv = 0;
  std::vector<Split> assignment(blocks.size());
  for (size_t bi = 0; bi < blocks.size(); ++bi) {
    const Block& b = *blocks[bi];
    auto cost_of = [&](bool to_train) {
      std::vector<int64_t> t2 = tc, v2 = vc;
      int64_t nt2 = nt, nv2 = nv;
      if (to_train) {
        for (int c = 0; c < num_classes; ++c) t2[c] += b.counts[c];
        nt2 += b.total;
      } else {
        for (int c = 0; c < num_classes; ++c) v2[c] += b.counts[c];
        nv2 += b.total;
      }
      double div = class_divergence(t2, v2);
      double frac = static_cast<double>(nt2) / static_cast<double>(nt2 + nv2);
      return std::make_pair(div + std::abs(frac - ratio), std::abs(frac - ratio));
    };
    auto [cost_t, dev_t] = cost_of(true);
    auto [cost_v, dev_v] = cost_of(false);
    bool to_train;
    if (cost_t != cost_v)
      to_train = cost_t < cost_v;
    else
      to_train = dev_t <= dev_v;
    assignment[bi] = to_train ? Split::train : Split::val;
    if (to_train) {
      for (int c = 0; c < num_classes; ++c) tc[c] += b.counts[c];
      nt += b.total;
    } else {
      for (int c = 0; c < num_classes; ++c) vc[c] += b.counts[c];
      nv += b.total;
    }
  }

  SplitManifest out;
  out.ratio = ratio;
  out.seed = seed;
  out.block_size = block_patches;
  out.divergence = class_divergence(tc, vc);
  out.entries.resize(recs.size());
  for (size_t bi = 0; bi < blocks.size(); ++bi)
    for (size_t i : blocks[bi]->members) out.entries[i] = ManifestEntry{recs[i], assignment[bi]};

  // Classes present in fewer than 2 blocks cannot be stratified.
  for (int c = 0; c < num_classes; ++c) {
    int present = 0;
    for (const auto* b : blocks) present += (b->counts[c] > 0);
    if (present == 1)
      out.warnings.push_back("class " + std::to_string(c) +
                             " present in a single block; perfect stratification impossible");
  }

  if (out.divergence > tolerance)
    throw StratificationError("stratified_block_split: achieved class divergence " +
                                  format_double(out.divergence) + " exceeds tolerance " +
                                  format_double(tolerance),
                              out.divergence);
  return out;
}

// ---------------------------------------------------------------------------
// Manifest CSV: scene_id,row0,col0,patch_size,class_index,purity,block_id,split
// ---------------------------------------------------------------------------

inline constexpr const char* kManifestHeader =
    "scene_id,row0,col0,patch_size,class_index,purity,block_id,split";

inline void write_manifest(const SplitManifest& m, const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw InputError("cannot open manifest for writing: " + path);
  os << kManifestHeader << "\n";
  for (const auto& e : m.entries) {
    const PatchRecord& r = e.rec;
    if (r.scene_id.find_first_of(",:\n\"") != std::string::npos)
      throw InputError("manifest: scene_id '" + r.scene_id + "' contains reserved characters");
    os << r.scene_id << "," << r.row0 << "," << r.col0 << "," << r.patch_size << ","
       << r.class_index << "," << format_float(r.purity) << "," << r.block_key() << ","
       << split_name(e.split) << "\n";
  }
  if (!os) throw InputError("manifest: write failed for " + path);
}

inline SplitManifest read_manifest(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InputError("cannot open manifest: " + path);
  std::string line;
  if (!std::getline(is, line)) throw FormatError("manifest: empty file " + path);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kManifestHeader)
    throw FormatError("manifest: bad header, expected '" + std::string(kManifestHeader) + "'");
  SplitManifest m;
  int line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) f.push_back(field);
    if (line.back() == ',') f.push_back("");
    if (f.size() != 8)
      throw FormatError("manifest line " + std::to_string(line_no) + ": expected 8 fields, got " +
                        std::to_string(f.size()));
    ManifestEntry e;
    try {
      e.rec.scene_id = f[0];
      e.rec.row0 = std::stoi(f[1]);
      e.rec.col0 = std::stoi(f[2]);
      e.rec.patch_size = std::stoi(f[3]);
      e.rec.class_index = std::stoi(f[4]);
      e.rec.purity = std::stof(f[5]);
      const std::string& bk = f[6];
      size_t p2 = bk.rfind(':');
      size_t p1 = p2 == std::string::npos ? std::string::npos : bk.rfind(':', p2 - 1);
      if (p1 == std::string::npos) throw std::invalid_argument("bad block id");
      e.rec.block_row = std::stoi(bk.substr(p1 + 1, p2 - p1 - 1));
      e.rec.block_col = std::stoi(bk.substr(p2 + 1));
      e.split = split_from_name(f[7]);
    } catch (const std::exception& ex) {
      throw FormatError("manifest line " + std::to_string(line_no) + ": " + ex.what());
    }
    m.entries.push_back(std::move(e));
  }
  return m;
}

inline std::vector<int64_t> split_class_counts(const SplitManifest& m, Split split,
                                               int num_classes) {
  std::vector<int64_t> counts(num_classes, 0);
  for (const auto& e : m.entries) {
    if (e.split != split) continue;
    if (e.rec.class_index < 0 || e.rec.class_index >= num_classes)
      throw InputError("manifest: class index " + std::to_string(e.rec.class_index) +
                       " outside [0," + std::to_string(num_classes) + ")");
    counts[e.rec.class_index] += 1;
  }
  return counts;
}

}  // namespace icevit
