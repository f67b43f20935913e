#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "icevit/adam.hpp"
#include "icevit/checkpoint.hpp"
#include "icevit/common.hpp"
#include "icevit/losses.hpp"
#include "icevit/metrics.hpp"
#include "icevit/normalize.hpp"
#include "icevit/raster.hpp"
#include "icevit/split.hpp"
#include "icevit/tiling.hpp"
#include "icevit/vit.hpp"

namespace icevit {

struct TrainSettings {
  ViTConfig model = ViTConfig::vit_test();
  std::string loss = "ce";  // ce | wce | focal
  float gamma = 2.0f;       // focal focusing exponent
  AdamConfig adam;
  int batch_size = 32;
  int64_t steps = 500;
  uint64_t seed = 0;

  void validate() const {
    model.validate();
    if (loss != "ce" && loss != "wce" && loss != "focal")
      throw InputError("train: unknown loss '" + loss + "' (expected ce, wce or focal)");
    if (loss == "focal" && (!(gamma >= 0.0f) || !std::isfinite(gamma)))
      throw InputError("train: focal loss requires finite gamma >= 0");
    if (batch_size < 1) throw InputError("train: batch_size must be >= 1");
    if (steps < 1) throw InputError("train: steps must be >= 1");
    if (!(adam.lr > 0.0f)) throw InputError("train: learning rate must be positive");
  }
};

// Normalized patches of one split, materialized in memory.
struct SampleSet {
  int image_size = 0;
  int channels = 2;
  std::vector<std::vector<float>> pixels;  // [C·P·P] channel-major per sample
  std::vector<int> labels;

  size_t size() const { return pixels.size(); }
};

// Slices patch pixels out of the scene rasters through the manifest and
// normalizes them; patches are never materialized on disk.
inline SampleSet load_split_samples(const SplitManifest& manifest, Split split,
                                    const std::map<std::string, SceneRaster>& scenes,
                                    const NormalizationStats& stats) {
  SampleSet out;
  for (const auto& e : manifest.entries) {
    if (e.split != split) continue;
    auto it = scenes.find(e.rec.scene_id);
    if (it == scenes.end())
      throw InputError("manifest references missing scene " + e.rec.scene_id);
    if (out.image_size == 0)
      out.image_size = e.rec.patch_size;
    else if (out.image_size != e.rec.patch_size)
      throw InputError("manifest mixes patch sizes " + std::to_string(out.image_size) + " and " +
                       std::to_string(e.rec.patch_size));
    std::vector<float> px = extract_patch(it->second, e.rec.row0, e.rec.col0, e.rec.patch_size);
    normalize_patch(px, stats);
    out.pixels.push_back(std::move(px));
    out.labels.push_back(e.rec.class_index);
  }
  if (out.pixels.empty())
    throw InputError(std::string("no patches in split '") + split_name(split) + "'");
  return out;
}

struct TrainLogRecord {
  int64_t step = 0;
  float loss = 0.0f;
  double train_acc = 0.0;  // running accuracy over all samples seen so far
  int64_t wall_ms = 0;
};

struct TrainOutput {
  ViTParams params;
  std::vector<TrainLogRecord> log;
  ClassWeights wce_weights;  // populated when loss == wce
};

inline int argmax_row(const Tensor& logits, int row) {
  const int k = logits.cols();
  int best = 0;
  for (int j = 1; j < k; ++j)
    if (logits.at(row, j) > logits.at(row, best)) best = j;
  return best;
}

// Seeded-shuffle minibatch loop: forward, selected loss, backward, Adam.
// Fully deterministic per seed; wall_ms in the log is the only wall-clock
// dependent field anywhere in the run's outputs.
inline TrainOutput run_training(const TrainSettings& s, const SampleSet& data) {
  s.validate();
  if (data.size() == 0) throw InputError("train: empty sample set");
  if (data.image_size != s.model.image_size)
    throw InputError("train: manifest patches are " + std::to_string(data.image_size) +
                     " px but model expects " + std::to_string(s.model.image_size));
  const int k = s.model.num_classes;
  for (int label : data.labels)
    if (label < 0 || label >= k)
      throw InputError("train: label " + std::to_string(label) + " outside model classes [0," +
                       std::to_string(k) + ")");

  TrainOutput out;
  out.params = init_params(s.model, s.seed);
  AdamState adam = AdamState::init(out.params.tensors, s.adam);

  if (s.loss == "wce") {
    std::vector<int64_t> counts(k, 0);
    for (int label : data.labels) ++counts[label];
    out.wce_weights = class_weights_from_counts(counts);
  }
  FocalParams focal{s.gamma, std::nullopt};

  Rng order_rng(derive_seed(s.seed, "batch_order"));
  std::vector<size_t> order(data.size());
  std::iota(order.begin(), order.end(), size_t{0});
  size_t cursor = order.size();  // forces a shuffle before the first batch

  const int sample_len = s.model.in_channels * s.model.image_size * s.model.image_size;
  int64_t seen = 0, correct = 0;
  const auto t0 = std::chrono::steady_clock::now();
  out.log.reserve(static_cast<size_t>(s.steps));

  for (int64_t step = 1; step <= s.steps; ++step) {
    Tensor batch = Tensor::zeros({s.batch_size, sample_len});
    std::vector<int> targets(s.batch_size);
    for (int i = 0; i < s.batch_size; ++i) {
      if (cursor == order.size()) {
        order_rng.shuffle(order);
        cursor = 0;
      }
      const size_t idx = order[cursor++];
      std::copy(data.pixels[idx].begin(), data.pixels[idx].end(),
                batch.data.begin() + static_cast<size_t>(i) * sample_len);
      targets[i] = data.labels[idx];
    }

    Tape tape;
    register_leaves(tape, out.params);
    Tensor logits = vit_forward(tape, s.model, out.params, batch, true);
    Tensor loss;
    if (s.loss == "ce")
      loss = cross_entropy(tape, logits, targets);
    else if (s.loss == "wce")
      loss = weighted_cross_entropy(tape, logits, targets, out.wce_weights);
    else
      loss = focal_loss(tape, logits, targets, focal);
    if (!std::isfinite(loss.data[0]))
      throw NumericError("train: non-finite loss at step " + std::to_string(step), step);

    for (int i = 0; i < s.batch_size; ++i) correct += (argmax_row(logits, i) == targets[i]);
    seen += s.batch_size;

    auto grads_by_node = tape.backward(loss);
    std::vector<Tensor> grads;
    grads.reserve(out.params.tensors.size());
    for (const auto& p : out.params.tensors) {
      auto it = grads_by_node.find(p.node);
      grads.push_back(it == grads_by_node.end() ? Tensor::zeros(p.shape) : std::move(it->second));
    }
    adam_step(out.params.tensors, grads, adam);

    const auto wall = std::chrono::duration_cast<std::chrono::milliseconds>(
                          std::chrono::steady_clock::now() - t0)
                          .count();
    out.log.push_back({step, loss.data[0],
                       static_cast<double>(correct) / static_cast<double>(seen), wall});
  }
  return out;
}

inline constexpr const char* kTrainLogHeader = "step,loss,train_acc,wall_ms";

inline void write_train_log(const std::vector<TrainLogRecord>& log, const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw InputError("cannot open train log for writing: " + path);
  os << kTrainLogHeader << "\n";
  for (const auto& r : log)
    os << r.step << "," << format_float(r.loss) << "," << format_double(r.train_acc) << ","
       << r.wall_ms << "\n";
  if (!os) throw InputError("train log: write failed for " + path);
}

struct EvalOutput {
  ConfusionMatrix cm;
  MetricsReport report;
};

// Argmax evaluation over one split; read-only and deterministic.
inline EvalOutput run_eval(const ViTConfig& cfg, ViTParams& params, const SampleSet& data,
                           std::vector<std::string> class_names = {}, int eval_batch = 64) {
  if (data.size() == 0) throw InputError("eval: empty sample set");
  if (data.image_size != cfg.image_size)
    throw InputError("eval: manifest patches are " + std::to_string(data.image_size) +
                     " px but model expects " + std::to_string(cfg.image_size));
  const int k = cfg.num_classes;
  const int sample_len = cfg.in_channels * cfg.image_size * cfg.image_size;
  std::vector<int> preds(data.size());
  Tape tape(false);
  for (size_t start = 0; start < data.size(); start += static_cast<size_t>(eval_batch)) {
    const int b = static_cast<int>(std::min(static_cast<size_t>(eval_batch), data.size() - start));
    Tensor batch = Tensor::zeros({b, sample_len});
    for (int i = 0; i < b; ++i)
      std::copy(data.pixels[start + i].begin(), data.pixels[start + i].end(),
                batch.data.begin() + static_cast<size_t>(i) * sample_len);
    Tensor logits = vit_forward(tape, cfg, params, batch, false);
    for (int i = 0; i < b; ++i) preds[start + i] = argmax_row(logits, i);
  }
  EvalOutput out{confusion_matrix(data.labels, preds, k, std::move(class_names)), {}};
  out.report = compute_report(out.cm);
  return out;
}

// ---------------------------------------------------------------------------
// Three-loss comparison experiment.
// ---------------------------------------------------------------------------

struct ExperimentRow {
  std::string config;
  double accuracy = 0.0;
  double weighted_f1 = 0.0;
  double minority_recall = 0.0;
  double minority_precision = 0.0;
};

inline constexpr const char* kExperimentHeader =
    "config,accuracy,weighted_f1,minority_recall,minority_precision";

struct ExperimentResult {
  std::vector<ExperimentRow> rows;
  std::vector<EvalOutput> evals;  // aligned with rows
};

// Trains and evaluates the three loss configurations on identical data and
// seed, reporting minority-class precision/recall next to overall metrics.
inline ExperimentResult run_experiment(const TrainSettings& base,
                                       const std::vector<std::string>& losses,
                                       const SampleSet& train_data, const SampleSet& eval_data,
                                       int minority_class,
                                       const std::vector<std::string>& class_names,
                                       const std::string& artifact_dir = "") {
  if (losses.empty()) throw InputError("experiment: no loss configurations listed");
  if (minority_class < 0 || minority_class >= base.model.num_classes)
    throw InputError("experiment: minority class " + std::to_string(minority_class) +
                     " outside [0," + std::to_string(base.model.num_classes) + ")");
  namespace fs = std::filesystem;
  ExperimentResult result;
  for (const std::string& loss : losses) {
    TrainSettings s = base;
    s.loss = loss;
    TrainOutput trained = run_training(s, train_data);
    EvalOutput ev = run_eval(s.model, trained.params, eval_data, class_names);
    ExperimentRow row;
    row.config = loss;
    row.accuracy = ev.report.accuracy;
    row.weighted_f1 = ev.report.weighted_f1;
    row.minority_recall = ev.report.per_class[minority_class].recall;
    row.minority_precision = ev.report.per_class[minority_class].precision;
    if (!artifact_dir.empty()) {
      fs::path run_dir = fs::path(artifact_dir) / loss;
      std::error_code ec;
      fs::create_directories(run_dir, ec);
      if (ec) throw InputError("experiment: cannot create " + run_dir.string());
      CheckpointMeta meta{s.seed, s.steps, loss};
      save_checkpoint(trained.params, s.model, meta, (run_dir / "checkpoint.ivt").string());
      write_train_log(trained.log, (run_dir / "train_log.csv").string());
      render_report(ev.cm, ev.report, (run_dir / "eval").string());
    }
    result.rows.push_back(row);
    result.evals.push_back(std::move(ev));
  }
  return result;
}

inline void write_experiment_csv(const std::vector<ExperimentRow>& rows, const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw InputError("cannot open experiment csv for writing: " + path);
  os << kExperimentHeader << "\n";
  for (const auto& r : rows)
    os << r.config << "," << format_double(r.accuracy) << "," << format_double(r.weighted_f1)
       << "," << format_double(r.minority_recall) << "," << format_double(r.minority_precision)
       << "\n";
  if (!os) throw InputError("experiment csv: write failed for " + path);
}

}  // namespace icevit
