#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "icevit/common.hpp"
#include "icevit/normalize.hpp"
#include "icevit/synthetic.hpp"

using Catch::Approx;
using icevit::ManifestEntry;
using icevit::NormalizationStats;
using icevit::SceneRaster;
using icevit::Split;
using icevit::SplitManifest;

namespace fs = std::filesystem;

namespace {

fs::path scratch_dir() {
  fs::path p = fs::current_path() / "test_artifacts" / "normalize";
  fs::create_directories(p);
  return p;
}

// A scene of deterministic pseudo-random dB values.
SceneRaster noisy_scene(const std::string& id, int w, int h, uint64_t seed) {
  SceneRaster s = SceneRaster::create(id, w, h);
  icevit::Rng rng(seed);
  for (auto& v : s.data) v = static_cast<float>(-18.0 + 4.0 * rng.normal());
  return s;
}

ManifestEntry entry(const std::string& scene, int r0, int c0, int p, Split split) {
  ManifestEntry e;
  e.rec.scene_id = scene;
  e.rec.row0 = r0;
  e.rec.col0 = c0;
  e.rec.patch_size = p;
  e.rec.class_index = 0;
  e.rec.purity = 1.0f;
  e.split = split;
  return e;
}

}  // namespace

TEST_CASE("constant channels hit the std floor", "[normalize]") {
  SceneRaster s = SceneRaster::create("flat", 16, 16);
  for (int r = 0; r < 16; ++r)
    for (int c = 0; c < 16; ++c) {
      s.at(0, r, c) = -7.25f;
      s.at(1, r, c) = -13.5f;
    }
  std::map<std::string, SceneRaster> scenes;
  scenes.emplace("flat", s);
  SplitManifest m;
  m.entries.push_back(entry("flat", 0, 0, 8, Split::train));
  m.entries.push_back(entry("flat", 8, 8, 8, Split::train));
  const auto stats = icevit::compute_norm_stats(m, scenes);
  REQUIRE(stats.channels[0].mean == Approx(-7.25).margin(1e-9));
  REQUIRE(stats.channels[1].mean == Approx(-13.5).margin(1e-9));
  REQUIRE(stats.channels[0].std == icevit::kStdFloor);
  REQUIRE(stats.channels[1].std == icevit::kStdFloor);
  REQUIRE(stats.count == 128);
}

TEST_CASE("streaming statistics match a two-pass oracle", "[normalize]") {
  std::map<std::string, SceneRaster> scenes;
  scenes.emplace("a", noisy_scene("a", 32, 32, 1));
  scenes.emplace("b", noisy_scene("b", 32, 32, 2));
  SplitManifest m;
  icevit::Rng rng(3);
  for (int i = 0; i < 14; ++i) {
    const std::string id = i % 2 ? "a" : "b";
    const int r0 = static_cast<int>(rng.uniform_int(25));
    const int c0 = static_cast<int>(rng.uniform_int(25));
    m.entries.push_back(entry(id, r0, c0, 8, i < 10 ? Split::train : Split::val));
  }
  const auto stats = icevit::compute_norm_stats(m, scenes);

  // Two-pass reference over the same train pixels.
  for (int ch = 0; ch < 2; ++ch) {
    std::vector<double> vals;
    for (const auto& e : m.entries) {
      if (e.split != Split::train) continue;
      const auto& s = scenes.at(e.rec.scene_id);
      for (int r = e.rec.row0; r < e.rec.row0 + 8; ++r)
        for (int c = e.rec.col0; c < e.rec.col0 + 8; ++c) vals.push_back(s.at(ch, r, c));
    }
    double mean = 0;
    for (double v : vals) mean += v;
    mean /= static_cast<double>(vals.size());
    double var = 0;
    for (double v : vals) var += (v - mean) * (v - mean);
    var /= static_cast<double>(vals.size());
    REQUIRE(stats.channels[ch].mean == Approx(mean).margin(1e-5));
    REQUIRE(stats.channels[ch].std == Approx(std::sqrt(var)).margin(1e-5));
    REQUIRE(stats.count == static_cast<int64_t>(vals.size()));
  }
}

TEST_CASE("stats are a pure function of the train split", "[normalize]") {
  std::map<std::string, SceneRaster> scenes;
  scenes.emplace("a", noisy_scene("a", 32, 32, 4));
  SplitManifest base;
  for (int i = 0; i < 6; ++i) base.entries.push_back(entry("a", i * 4, i * 4, 8, Split::train));
  const auto s1 = icevit::compute_norm_stats(base, scenes);

  SplitManifest extended = base;
  extended.entries.push_back(entry("a", 20, 2, 8, Split::val));
  extended.entries.push_back(entry("a", 2, 20, 8, Split::val));
  const auto s2 = icevit::compute_norm_stats(extended, scenes);

  // Byte-identical including serialization.
  REQUIRE(s1.channels[0].mean == s2.channels[0].mean);
  REQUIRE(s1.channels[0].std == s2.channels[0].std);
  REQUIRE(s1.channels[1].mean == s2.channels[1].mean);
  REQUIRE(s1.channels[1].std == s2.channels[1].std);
  REQUIRE(s1.count == s2.count);
  const std::string p1 = (scratch_dir() / "s1.json").string();
  const std::string p2 = (scratch_dir() / "s2.json").string();
  icevit::write_stats(s1, p1);
  icevit::write_stats(s2, p2);
  std::ifstream f1(p1), f2(p2);
  std::string b1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
  std::string b2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
  REQUIRE(b1 == b2);
}

TEST_CASE("stats ignore manifest ordering", "[normalize]") {
  std::map<std::string, SceneRaster> scenes;
  scenes.emplace("a", noisy_scene("a", 32, 32, 8));
  scenes.emplace("b", noisy_scene("b", 32, 32, 9));
  SplitManifest m1, m2;
  std::vector<ManifestEntry> ents{entry("b", 0, 0, 8, Split::train),
                                  entry("a", 8, 8, 8, Split::train),
                                  entry("a", 0, 0, 8, Split::train),
                                  entry("b", 16, 8, 8, Split::train)};
  m1.entries = ents;
  std::reverse(ents.begin(), ents.end());
  m2.entries = ents;
  const auto s1 = icevit::compute_norm_stats(m1, scenes);
  const auto s2 = icevit::compute_norm_stats(m2, scenes);
  REQUIRE(s1.channels[0].mean == s2.channels[0].mean);
  REQUIRE(s1.channels[0].std == s2.channels[0].std);
}

TEST_CASE("normalize_patch centers, scales and inverts", "[normalize]") {
  NormalizationStats stats;
  stats.channels = {{-10.0, 2.0}, {-16.0, 4.0}};
  std::vector<float> px{-10.0f, -8.0f, -12.0f, -10.0f, -16.0f, -12.0f, -20.0f, -16.0f};
  auto orig = px;
  icevit::normalize_patch(px, stats);
  REQUIRE(px[0] == 0.0f);
  REQUIRE(px[1] == Approx(1.0).margin(1e-6));
  REQUIRE(px[4] == 0.0f);
  REQUIRE(px[5] == Approx(1.0).margin(1e-6));
  for (size_t i = 0; i < px.size(); ++i) {
    const int ch = i < 4 ? 0 : 1;
    const double back = px[i] * stats.channels[ch].std + stats.channels[ch].mean;
    REQUIRE(back == Approx(orig[i]).margin(1e-5));
  }
}

TEST_CASE("a normalized corpus has zero mean and unit std", "[normalize]") {
  std::map<std::string, SceneRaster> scenes;
  scenes.emplace("a", noisy_scene("a", 64, 64, 12));
  SplitManifest m;
  for (int r = 0; r < 8; ++r)
    for (int c = 0; c < 8; ++c) m.entries.push_back(entry("a", r * 8, c * 8, 8, Split::train));
  const auto stats = icevit::compute_norm_stats(m, scenes);

  for (int ch = 0; ch < 2; ++ch) {
    double sum = 0, sum2 = 0;
    int64_t n = 0;
    for (const auto& e : m.entries) {
      auto px = icevit::extract_patch(scenes.at("a"), e.rec.row0, e.rec.col0, 8);
      icevit::normalize_patch(px, stats);
      for (int i = 0; i < 64; ++i) {
        const double v = px[static_cast<size_t>(ch) * 64 + i];
        sum += v;
        sum2 += v * v;
        ++n;
      }
    }
    const double mean = sum / static_cast<double>(n);
    const double sd = std::sqrt(sum2 / static_cast<double>(n) - mean * mean);
    REQUIRE(std::abs(mean) <= 1e-3);
    REQUIRE(std::abs(sd - 1.0) <= 1e-2);
  }
}

TEST_CASE("stats JSON round trips and validates", "[normalize]") {
  NormalizationStats s;
  s.channels = {{-11.25, 1.75}, {-17.5, 2.5}};
  s.count = 4096;
  s.manifest_hash = "00ff00ff00ff00ff";
  const std::string path = (scratch_dir() / "stats.json").string();
  icevit::write_stats(s, path);
  const auto r = icevit::read_stats(path);
  REQUIRE(r.channels[0].mean == s.channels[0].mean);
  REQUIRE(r.channels[0].std == s.channels[0].std);
  REQUIRE(r.channels[1].mean == s.channels[1].mean);
  REQUIRE(r.channels[1].std == s.channels[1].std);
  REQUIRE(r.count == 4096);
  REQUIRE(r.source_split == "train");
  REQUIRE(r.manifest_hash == s.manifest_hash);

  auto write_text = [&](const std::string& name, const std::string& text) {
    const std::string p = (scratch_dir() / name).string();
    std::ofstream(p) << text;
    return p;
  };
  REQUIRE_THROWS_AS(icevit::read_stats(write_text("bad.json", "not json")),
                    icevit::FormatError);
  REQUIRE_THROWS_AS(
      icevit::read_stats(write_text("one_channel.json",
                                    R"({"channels":[{"mean":0,"std":1}],"count":1})")),
      icevit::FormatError);
  REQUIRE_THROWS_AS(
      icevit::read_stats(write_text(
          "zero_std.json",
          R"({"channels":[{"mean":0,"std":0},{"mean":0,"std":1}],"count":1})")),
      icevit::FormatError);
}

TEST_CASE("empty train split is an input error", "[normalize]") {
  std::map<std::string, SceneRaster> scenes;
  scenes.emplace("a", noisy_scene("a", 16, 16, 1));
  SplitManifest m;
  m.entries.push_back(entry("a", 0, 0, 8, Split::val));
  REQUIRE_THROWS_AS(icevit::compute_norm_stats(m, scenes), icevit::InputError);
}

TEST_CASE("file hashing is content addressed", "[normalize]") {
  const std::string p1 = (scratch_dir() / "h1.txt").string();
  const std::string p2 = (scratch_dir() / "h2.txt").string();
  std::ofstream(p1) << "alpha";
  std::ofstream(p2) << "alpha";
  REQUIRE(icevit::hash_file(p1) == icevit::hash_file(p2));
  std::ofstream(p2) << "beta";
  REQUIRE(icevit::hash_file(p1) != icevit::hash_file(p2));
  REQUIRE(icevit::hash_file(p1).size() == 16);
}
