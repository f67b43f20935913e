// icevit: desk-scale SAR sea-ice patch classification pipeline.
//
// Subcommands: gen-synthetic, tile, split, stats, train, eval, experiment.
// Exit codes: 0 success, 2 usage/input error, 3 stratification failure,
// 4 numerical failure.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "icevit/checkpoint.hpp"
#include "icevit/common.hpp"
#include "icevit/metrics.hpp"
#include "icevit/normalize.hpp"
#include "icevit/raster.hpp"
#include "icevit/split.hpp"
#include "icevit/synthetic.hpp"
#include "icevit/taxonomy.hpp"
#include "icevit/tiling.hpp"
#include "icevit/train.hpp"
#include "icevit/vit.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitStratification = 3;
constexpr int kExitNumeric = 4;

icevit::ClassTaxonomy taxonomy_or_default(const std::string& path) {
  return path.empty() ? icevit::default_taxonomy() : icevit::load_taxonomy(path);
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw icevit::InputError("cannot create directory " + dir + ": " + ec.message());
}

json load_json_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw icevit::InputError("cannot open config file: " + path);
  try {
    json j;
    is >> j;
    return j;
  } catch (const json::exception& e) {
    throw icevit::InputError("config " + path + ": " + e.what());
  }
}

void reject_unknown_keys(const json& j, const std::vector<std::string>& known,
                         const std::string& what) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const auto& k : known) ok |= (it.key() == k);
    if (!ok) throw icevit::InputError(what + ": unknown key '" + it.key() + "'");
  }
}

// ---------------------------------------------------------------------------
// gen-synthetic
// ---------------------------------------------------------------------------

icevit::CorpusSpec corpus_spec_from_json(const json& j) {
  icevit::CorpusSpec spec = icevit::CorpusSpec::defaults();
  reject_unknown_keys(j,
                      {"num_scenes", "width", "height", "pixel_spacing_m", "seed", "min_region",
                       "max_region", "classes"},
                      "corpus spec");
  spec.num_scenes = j.value("num_scenes", spec.num_scenes);
  spec.width = j.value("width", spec.width);
  spec.height = j.value("height", spec.height);
  spec.pixel_spacing_m = j.value("pixel_spacing_m", spec.pixel_spacing_m);
  spec.seed = j.value("seed", spec.seed);
  spec.min_region = j.value("min_region", spec.min_region);
  spec.max_region = j.value("max_region", spec.max_region);
  if (j.contains("classes")) {
    spec.classes.clear();
    for (const auto& cj : j.at("classes")) {
      reject_unknown_keys(cj,
                          {"name", "sa_code", "share", "mean_hh", "mean_hv", "sigma_hh",
                           "sigma_hv", "corr_len", "mean_jitter"},
                          "corpus class");
      icevit::CorpusClassSpec c;
      c.texture.name = cj.at("name").get<std::string>();
      c.texture.sa_code = cj.at("sa_code").get<int>();
      c.share = cj.at("share").get<double>();
      c.texture.mean_hh = cj.at("mean_hh").get<float>();
      c.texture.mean_hv = cj.at("mean_hv").get<float>();
      c.texture.sigma_hh = cj.value("sigma_hh", 2.0f);
      c.texture.sigma_hv = cj.value("sigma_hv", 2.0f);
      c.texture.corr_len = cj.value("corr_len", 2);
      c.texture.mean_jitter = cj.value("mean_jitter", 0.25f);
      spec.classes.push_back(std::move(c));
    }
  }
  return spec;
}

struct GenArgs {
  int scenes = -1;
  int width = -1, height = -1;
  std::optional<uint64_t> seed;
  std::string spec_path;
  std::string out;
};

int cmd_gen_synthetic(const GenArgs& a) {
  icevit::CorpusSpec spec = a.spec_path.empty() ? icevit::CorpusSpec::defaults()
                                                : corpus_spec_from_json(load_json_file(a.spec_path));
  if (a.scenes >= 0) spec.num_scenes = a.scenes;
  if (a.width >= 0) spec.width = a.width;
  if (a.height >= 0) spec.height = a.height;
  if (a.seed) spec.seed = *a.seed;
  if (spec.num_scenes < 1) throw icevit::InputError("gen-synthetic: --scenes must be >= 1");
  ensure_dir(a.out);
  const auto plans = icevit::plan_corpus(spec);
  for (const auto& plan : plans) {
    auto [scene, labels] = icevit::generate_synthetic_scene(plan);
    icevit::write_scene(scene, (fs::path(a.out) / (plan.scene_id + ".scn")).string());
    icevit::write_labels(labels, (fs::path(a.out) / (plan.scene_id + ".lbl")).string());
  }
  std::cout << "wrote " << plans.size() << " scenes (" << spec.width << "x" << spec.height
            << ") to " << a.out << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// tile / split / stats
// ---------------------------------------------------------------------------

struct TileArgs {
  std::string scenes, taxonomy, out;
  int patch = 64;
  double purity = 0.7;
  int block = 4;
};

int cmd_tile(const TileArgs& a) {
  const auto taxonomy = taxonomy_or_default(a.taxonomy);
  const auto pairs = icevit::load_scene_pairs(a.scenes);
  icevit::SplitManifest manifest;
  manifest.block_size = a.block;
  for (const auto& [id, pair] : pairs) {
    auto records = icevit::tile_scene(pair.first, pair.second, taxonomy, a.patch,
                                      static_cast<float>(a.purity), a.block);
    for (auto& r : records) manifest.entries.push_back({std::move(r), icevit::Split::none});
  }
  icevit::write_manifest(manifest, a.out);
  std::cout << "tiled " << manifest.entries.size() << " patches from " << pairs.size()
            << " scenes into " << a.out << "\n";
  return 0;
}

struct SplitArgs {
  std::string manifest, taxonomy, out;
  double ratio = 0.8;
  int block = 4;
  std::optional<uint64_t> seed;
  double tolerance = 0.02;
};

int cmd_split(const SplitArgs& a) {
  if (!a.seed) throw icevit::InputError("split: --seed is required");
  const auto taxonomy = taxonomy_or_default(a.taxonomy);
  const auto input = icevit::read_manifest(a.manifest);
  std::vector<icevit::PatchRecord> records;
  records.reserve(input.entries.size());
  for (const auto& e : input.entries) records.push_back(e.rec);
  auto manifest = icevit::stratified_block_split(records, taxonomy.num_classes(), a.ratio,
                                                 a.block, *a.seed, a.tolerance);
  icevit::write_manifest(manifest, a.out);
  for (const auto& w : manifest.warnings) std::cout << "warning: " << w << "\n";
  std::cout << "split " << manifest.entries.size() << " patches, class divergence "
            << icevit::format_double(manifest.divergence) << "\n";
  return 0;
}

struct StatsArgs {
  std::string manifest, scenes, out;
  std::string split = "train";
};

int cmd_stats(const StatsArgs& a) {
  if (a.split != "train")
    throw icevit::InputError(
        "stats: normalization statistics are derived from the training corpus only; "
        "--split must be 'train'");
  const auto manifest = icevit::read_manifest(a.manifest);
  const auto scenes = icevit::load_scene_dir(a.scenes);
  auto stats = icevit::compute_norm_stats(manifest, scenes, icevit::Split::train);
  stats.manifest_hash = icevit::hash_file(a.manifest);
  icevit::write_stats(stats, a.out);
  std::cout << "stats over " << stats.count << " pixels/channel: HH mean "
            << icevit::format_double(stats.channels[0].mean) << " std "
            << icevit::format_double(stats.channels[0].std) << ", HV mean "
            << icevit::format_double(stats.channels[1].mean) << " std "
            << icevit::format_double(stats.channels[1].std) << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// train / eval / experiment
// ---------------------------------------------------------------------------

icevit::ViTConfig model_from_name(const std::string& name) {
  if (name == "vit_test") return icevit::ViTConfig::vit_test();
  if (name == "vit_base") return icevit::ViTConfig::vit_base();
  if (name == "vit_large") return icevit::ViTConfig::vit_large();
  throw icevit::InputError("unknown model preset '" + name +
                           "' (expected vit_test, vit_base or vit_large)");
}

struct RunConfig {
  icevit::TrainSettings train;
  bool seed_present = false;
  std::vector<std::string> losses{"ce", "wce", "focal"};
  json minority;  // int index or class-name string; defaults below
  std::string manifest, stats, scenes, taxonomy;
};

void apply_config_json(RunConfig& cfg, const json& j) {
  reject_unknown_keys(j,
                      {"model", "image_size", "num_classes", "loss", "losses", "gamma", "lr",
                       "beta1", "beta2", "epsilon", "batch_size", "steps", "seed", "manifest",
                       "stats", "scenes", "taxonomy", "minority_class"},
                      "run config");
  if (j.contains("model")) {
    if (j["model"].is_string())
      cfg.train.model = model_from_name(j["model"].get<std::string>());
    else
      cfg.train.model = icevit::config_from_json(j["model"]);
  }
  if (j.contains("image_size")) cfg.train.model.image_size = j["image_size"].get<int>();
  if (j.contains("num_classes")) cfg.train.model.num_classes = j["num_classes"].get<int>();
  if (j.contains("loss")) cfg.train.loss = j["loss"].get<std::string>();
  if (j.contains("losses")) cfg.losses = j["losses"].get<std::vector<std::string>>();
  if (j.contains("gamma")) cfg.train.gamma = j["gamma"].get<float>();
  if (j.contains("lr")) cfg.train.adam.lr = j["lr"].get<float>();
  if (j.contains("beta1")) cfg.train.adam.beta1 = j["beta1"].get<float>();
  if (j.contains("beta2")) cfg.train.adam.beta2 = j["beta2"].get<float>();
  if (j.contains("epsilon")) cfg.train.adam.epsilon = j["epsilon"].get<float>();
  if (j.contains("batch_size")) cfg.train.batch_size = j["batch_size"].get<int>();
  if (j.contains("steps")) cfg.train.steps = j["steps"].get<int64_t>();
  if (j.contains("seed")) {
    cfg.train.seed = j["seed"].get<uint64_t>();
    cfg.seed_present = true;
  }
  if (j.contains("manifest")) cfg.manifest = j["manifest"].get<std::string>();
  if (j.contains("stats")) cfg.stats = j["stats"].get<std::string>();
  if (j.contains("scenes")) cfg.scenes = j["scenes"].get<std::string>();
  if (j.contains("taxonomy")) cfg.taxonomy = j["taxonomy"].get<std::string>();
  if (j.contains("minority_class")) cfg.minority = j["minority_class"];
}

// Raw flag values; `set` mirrors which flags were given so they win over the
// config file.
struct TrainFlags {
  std::string config_path, manifest, stats, scenes, taxonomy, out, loss, model;
  double gamma = 2.0, lr = 3e-4;
  int batch = 32, num_classes = 0, image_size = 0;
  int64_t steps = 500;
  uint64_t seed = 0;
  std::string minority;
  CLI::App* sub = nullptr;

  RunConfig resolve() const {
    RunConfig cfg;
    if (!config_path.empty()) apply_config_json(cfg, load_json_file(config_path));
    if (sub->count("--model")) cfg.train.model = model_from_name(model);
    if (sub->count("--image-size")) cfg.train.model.image_size = image_size;
    if (sub->count("--num-classes")) cfg.train.model.num_classes = num_classes;
    if (sub->count("--loss")) cfg.train.loss = loss;
    if (sub->count("--gamma")) cfg.train.gamma = static_cast<float>(gamma);
    if (sub->count("--lr")) cfg.train.adam.lr = static_cast<float>(lr);
    if (sub->count("--batch")) cfg.train.batch_size = batch;
    if (sub->count("--steps")) cfg.train.steps = steps;
    if (sub->count("--seed")) {
      cfg.train.seed = seed;
      cfg.seed_present = true;
    }
    if (sub->count("--manifest")) cfg.manifest = manifest;
    if (sub->count("--stats")) cfg.stats = stats;
    if (sub->count("--scenes")) cfg.scenes = scenes;
    if (sub->count("--taxonomy")) cfg.taxonomy = taxonomy;
    if (auto* opt = sub->get_option_no_throw("--minority"); opt && opt->count())
      cfg.minority = minority;
    if (!cfg.seed_present)
      throw icevit::InputError("a seed is required (--seed or \"seed\" in --config)");
    if (cfg.manifest.empty() || cfg.stats.empty() || cfg.scenes.empty())
      throw icevit::InputError("manifest, stats and scenes paths are all required");
    return cfg;
  }
};

struct LoadedData {
  icevit::ClassTaxonomy taxonomy;
  icevit::SplitManifest manifest;
  icevit::NormalizationStats stats;
  std::map<std::string, icevit::SceneRaster> scenes;
};

LoadedData load_run_inputs(const RunConfig& cfg) {
  LoadedData d;
  d.taxonomy = taxonomy_or_default(cfg.taxonomy);
  d.manifest = icevit::read_manifest(cfg.manifest);
  d.stats = icevit::read_stats(cfg.stats);
  d.scenes = icevit::load_scene_dir(cfg.scenes);
  return d;
}

int resolve_minority_class(const json& minority, const icevit::ClassTaxonomy& taxonomy) {
  if (minority.is_null()) return taxonomy.class_index("Old/Multi-Year Ice");
  if (minority.is_number_integer()) return minority.get<int>();
  if (minority.is_string()) return taxonomy.class_index(minority.get<std::string>());
  throw icevit::InputError("minority_class must be a class index or class name");
}

int cmd_train(const TrainFlags& flags) {
  RunConfig cfg = flags.resolve();
  cfg.train.validate();
  LoadedData d = load_run_inputs(cfg);
  auto train_data =
      icevit::load_split_samples(d.manifest, icevit::Split::train, d.scenes, d.stats);
  auto out = icevit::run_training(cfg.train, train_data);
  ensure_dir(flags.out);
  icevit::CheckpointMeta meta{cfg.train.seed, cfg.train.steps, cfg.train.loss};
  icevit::save_checkpoint(out.params, cfg.train.model, meta,
                          (fs::path(flags.out) / "checkpoint.ivt").string());
  icevit::write_train_log(out.log, (fs::path(flags.out) / "train_log.csv").string());
  const auto& last = out.log.back();
  std::cout << "trained " << cfg.train.loss << " for " << last.step << " steps, final loss "
            << icevit::format_float(last.loss) << ", running train accuracy "
            << icevit::format_double(last.train_acc) << "\n";
  return 0;
}

struct EvalArgs {
  std::string checkpoint, manifest, stats, scenes, taxonomy, out;
  std::string split = "val";
};

int cmd_eval(const EvalArgs& a) {
  auto ck = icevit::load_checkpoint(a.checkpoint);
  const auto taxonomy = taxonomy_or_default(a.taxonomy);
  if (ck.config.num_classes != taxonomy.num_classes())
    throw icevit::InputError("eval: checkpoint has " + std::to_string(ck.config.num_classes) +
                             " classes but taxonomy defines " +
                             std::to_string(taxonomy.num_classes()));
  const auto manifest = icevit::read_manifest(a.manifest);
  const auto stats = icevit::read_stats(a.stats);
  const auto scenes = icevit::load_scene_dir(a.scenes);
  const icevit::Split split = icevit::split_from_name(a.split);
  if (split == icevit::Split::none) throw icevit::InputError("eval: --split must be train or val");
  auto data = icevit::load_split_samples(manifest, split, scenes, stats);
  auto ev = icevit::run_eval(ck.config, ck.params, data, taxonomy.class_names);
  icevit::render_report(ev.cm, ev.report, a.out);
  std::cout << "evaluated " << data.size() << " " << a.split << " patches: accuracy "
            << icevit::format_double(ev.report.accuracy) << ", weighted F1 "
            << icevit::format_double(ev.report.weighted_f1) << "\n";
  return 0;
}

int cmd_experiment(const TrainFlags& flags) {
  RunConfig cfg = flags.resolve();
  if (cfg.losses.empty()) throw icevit::InputError("experiment: empty losses list");
  for (const auto& l : cfg.losses) {
    icevit::TrainSettings probe = cfg.train;
    probe.loss = l;
    probe.validate();
  }
  LoadedData d = load_run_inputs(cfg);
  if (cfg.train.model.num_classes != d.taxonomy.num_classes())
    throw icevit::InputError("experiment: model has " +
                             std::to_string(cfg.train.model.num_classes) +
                             " classes but taxonomy defines " +
                             std::to_string(d.taxonomy.num_classes()));
  const int minority = resolve_minority_class(cfg.minority, d.taxonomy);
  auto train_data =
      icevit::load_split_samples(d.manifest, icevit::Split::train, d.scenes, d.stats);
  auto val_data = icevit::load_split_samples(d.manifest, icevit::Split::val, d.scenes, d.stats);
  ensure_dir(flags.out);
  auto result = icevit::run_experiment(cfg.train, cfg.losses, train_data, val_data, minority,
                                       d.taxonomy.class_names, flags.out);
  icevit::write_experiment_csv(result.rows, (fs::path(flags.out) / "experiment.csv").string());
  std::cout << "minority class: " << d.taxonomy.class_names[minority] << "\n";
  std::cout << icevit::kExperimentHeader << "\n";
  for (const auto& r : result.rows)
    std::cout << r.config << "," << icevit::format_double(r.accuracy) << ","
              << icevit::format_double(r.weighted_f1) << ","
              << icevit::format_double(r.minority_recall) << ","
              << icevit::format_double(r.minority_precision) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"icevit: desk-scale SAR sea-ice classification pipeline"};
  app.require_subcommand(1);

  GenArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-synthetic", "generate a synthetic SAR-like corpus");
  gen_cmd->add_option("--scenes", gen.scenes, "number of scenes");
  gen_cmd->add_option("--width", gen.width, "scene width in pixels");
  gen_cmd->add_option("--height", gen.height, "scene height in pixels");
  gen_cmd->add_option("--seed", gen.seed, "corpus seed");
  gen_cmd->add_option("--spec", gen.spec_path, "corpus spec JSON (palette, shares, layout)");
  gen_cmd->add_option("--out", gen.out, "output directory")->required();

  TileArgs tile;
  auto* tile_cmd = app.add_subcommand("tile", "tile scenes into labeled patches");
  tile_cmd->add_option("--scenes", tile.scenes, "scene directory")->required();
  tile_cmd->add_option("--taxonomy", tile.taxonomy, "SA-code taxonomy file (default built-in)");
  tile_cmd->add_option("--patch", tile.patch, "patch size in pixels (default 64)");
  tile_cmd->add_option("--purity", tile.purity, "majority purity threshold (default 0.7)");
  tile_cmd->add_option("--block", tile.block, "leakage block size in patches (default 4)");
  tile_cmd->add_option("--out", tile.out, "output manifest CSV")->required();

  SplitArgs split;
  auto* split_cmd = app.add_subcommand("split", "stratified leakage-aware train/val split");
  split_cmd->add_option("--manifest", split.manifest, "input manifest CSV")->required();
  split_cmd->add_option("--taxonomy", split.taxonomy, "SA-code taxonomy file (default built-in)");
  split_cmd->add_option("--ratio", split.ratio, "train fraction (default 0.8)");
  split_cmd->add_option("--block", split.block, "leakage block size in patches (default 4)");
  split_cmd->add_option("--seed", split.seed, "split seed");
  split_cmd->add_option("--tolerance", split.tolerance, "max class divergence (default 0.02)");
  split_cmd->add_option("--out", split.out, "output manifest CSV")->required();

  StatsArgs stats;
  auto* stats_cmd = app.add_subcommand("stats", "training-corpus normalization statistics");
  stats_cmd->add_option("--manifest", stats.manifest, "split manifest CSV")->required();
  stats_cmd->add_option("--scenes", stats.scenes, "scene directory")->required();
  stats_cmd->add_option("--split", stats.split, "source split (train only)");
  stats_cmd->add_option("--out", stats.out, "output stats JSON")->required();

  auto add_train_flags = [](CLI::App* sub, TrainFlags& f) {
    f.sub = sub;
    sub->add_option("--config", f.config_path, "run config JSON");
    sub->add_option("--model", f.model, "model preset: vit_test, vit_base, vit_large");
    sub->add_option("--image-size", f.image_size, "input patch size override");
    sub->add_option("--num-classes", f.num_classes, "class count override");
    sub->add_option("--loss", f.loss, "loss: ce, wce or focal");
    sub->add_option("--gamma", f.gamma, "focal gamma (default 2.0)");
    sub->add_option("--lr", f.lr, "Adam learning rate");
    sub->add_option("--batch", f.batch, "batch size");
    sub->add_option("--steps", f.steps, "training steps");
    sub->add_option("--seed", f.seed, "run seed (required here or in config)");
    sub->add_option("--manifest", f.manifest, "split manifest CSV");
    sub->add_option("--stats", f.stats, "normalization stats JSON");
    sub->add_option("--scenes", f.scenes, "scene directory");
    sub->add_option("--taxonomy", f.taxonomy, "SA-code taxonomy file (default built-in)");
    sub->add_option("--out", f.out, "output directory")->required();
  };

  TrainFlags train_flags;
  auto* train_cmd = app.add_subcommand("train", "train one configuration");
  add_train_flags(train_cmd, train_flags);

  EvalArgs eval_args;
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a split");
  eval_cmd->add_option("--checkpoint", eval_args.checkpoint, "checkpoint file")->required();
  eval_cmd->add_option("--manifest", eval_args.manifest, "split manifest CSV")->required();
  eval_cmd->add_option("--stats", eval_args.stats, "normalization stats JSON")->required();
  eval_cmd->add_option("--scenes", eval_args.scenes, "scene directory")->required();
  eval_cmd->add_option("--taxonomy", eval_args.taxonomy, "SA-code taxonomy file (default built-in)");
  eval_cmd->add_option("--split", eval_args.split, "split to evaluate (default val)");
  eval_cmd->add_option("--out", eval_args.out, "report output directory")->required();

  TrainFlags exp_flags;
  auto* exp_cmd = app.add_subcommand("experiment", "run the CE / W-CE / focal comparison");
  add_train_flags(exp_cmd, exp_flags);
  exp_cmd->add_option("--minority", exp_flags.minority, "minority class name or index");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (gen_cmd->parsed()) return cmd_gen_synthetic(gen);
    if (tile_cmd->parsed()) return cmd_tile(tile);
    if (split_cmd->parsed()) return cmd_split(split);
    if (stats_cmd->parsed()) return cmd_stats(stats);
    if (train_cmd->parsed()) return cmd_train(train_flags);
    if (eval_cmd->parsed()) return cmd_eval(eval_args);
    if (exp_cmd->parsed()) return cmd_experiment(exp_flags);
  } catch (const icevit::StratificationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    std::cerr << "achieved divergence: " << icevit::format_double(e.achieved_divergence) << "\n";
    return kExitStratification;
  } catch (const icevit::NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return 0;
}
