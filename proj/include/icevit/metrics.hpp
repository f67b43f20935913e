#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "icevit/common.hpp"

namespace icevit {

// K×K counts; rows = true class, columns = predicted class.
struct ConfusionMatrix {
  std::vector<std::string> class_names;
  std::vector<int64_t> counts;

  static ConfusionMatrix zeros(int k, std::vector<std::string> names = {}) {
    if (k < 1) throw InputError("ConfusionMatrix: need at least one class");
    ConfusionMatrix cm;
    if (names.empty()) {
      for (int i = 0; i < k; ++i) names.push_back("class_" + std::to_string(i));
    } else if (static_cast<int>(names.size()) != k) {
      throw InputError("ConfusionMatrix: name count does not match class count");
    }
    cm.class_names = std::move(names);
    cm.counts.assign(static_cast<size_t>(k) * k, 0);
    return cm;
  }

  int k() const { return static_cast<int>(class_names.size()); }
  int64_t& at(int t, int p) { return counts[static_cast<size_t>(t) * k() + p]; }
  int64_t at(int t, int p) const { return counts[static_cast<size_t>(t) * k() + p]; }

  int64_t total() const {
    int64_t n = 0;
    for (int64_t c : counts) n += c;
    return n;
  }

  int64_t row_sum(int t) const {
    int64_t n = 0;
    for (int p = 0; p < k(); ++p) n += at(t, p);
    return n;
  }
  int64_t col_sum(int p) const {
    int64_t n = 0;
    for (int t = 0; t < k(); ++t) n += at(t, p);
    return n;
  }
};

inline ConfusionMatrix confusion_matrix(const std::vector<int>& true_labels,
                                        const std::vector<int>& predicted_labels, int k,
                                        std::vector<std::string> names = {}) {
  if (true_labels.size() != predicted_labels.size())
    throw InputError("confusion_matrix: " + std::to_string(true_labels.size()) +
                     " true labels vs " + std::to_string(predicted_labels.size()) +
                     " predictions");
  ConfusionMatrix cm = ConfusionMatrix::zeros(k, std::move(names));
  for (size_t i = 0; i < true_labels.size(); ++i) {
    const int t = true_labels[i], p = predicted_labels[i];
    if (t < 0 || t >= k || p < 0 || p >= k)
      throw InputError("confusion_matrix: label pair (" + std::to_string(t) + "," +
                       std::to_string(p) + ") outside [0," + std::to_string(k) + ") at sample " +
                       std::to_string(i));
    ++cm.at(t, p);
  }
  return cm;
}

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  int64_t support = 0;
  bool precision_undefined = false;  // no predictions for this class
  bool recall_undefined = false;     // zero support
  bool f1_undefined = false;
};

// Zero denominators report 0 with the corresponding undefined flag set.
inline std::vector<ClassMetrics> per_class_prf(const ConfusionMatrix& cm) {
  std::vector<ClassMetrics> out(cm.k());
  for (int c = 0; c < cm.k(); ++c) {
    ClassMetrics& m = out[c];
    const int64_t tp = cm.at(c, c);
    const int64_t pred = cm.col_sum(c);
    const int64_t sup = cm.row_sum(c);
    m.support = sup;
    if (pred > 0)
      m.precision = static_cast<double>(tp) / static_cast<double>(pred);
    else
      m.precision_undefined = true;
    if (sup > 0)
      m.recall = static_cast<double>(tp) / static_cast<double>(sup);
    else
      m.recall_undefined = true;
    if (m.precision + m.recall > 0.0)
      m.f1 = 2.0 * m.precision * m.recall / (m.precision + m.recall);
    else
      m.f1_undefined = true;
  }
  return out;
}

inline double accuracy(const ConfusionMatrix& cm) {
  const int64_t n = cm.total();
  if (n == 0) throw InputError("accuracy: empty confusion matrix");
  int64_t trace = 0;
  for (int c = 0; c < cm.k(); ++c) trace += cm.at(c, c);
  return static_cast<double>(trace) / static_cast<double>(n);
}

// Support-weighted mean of per-class F1.
inline double weighted_f1(const ConfusionMatrix& cm) {
  const int64_t n = cm.total();
  if (n == 0) throw InputError("weighted_f1: empty confusion matrix");
  const auto per = per_class_prf(cm);
  double acc = 0.0;
  for (int c = 0; c < cm.k(); ++c)
    acc += static_cast<double>(per[c].support) / static_cast<double>(n) * per[c].f1;
  return acc;
}

struct MetricsReport {
  double accuracy = 0.0;
  double weighted_f1 = 0.0;
  std::vector<ClassMetrics> per_class;
};

inline MetricsReport compute_report(const ConfusionMatrix& cm) {
  MetricsReport r;
  r.accuracy = accuracy(cm);
  r.weighted_f1 = weighted_f1(cm);
  r.per_class = per_class_prf(cm);
  return r;
}

// ---------------------------------------------------------------------------
// Report rendering: confusion.csv, metrics.json, confusion.pgm
// ---------------------------------------------------------------------------

inline void write_confusion_csv(const ConfusionMatrix& cm, const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw InputError("cannot open for writing: " + path);
  os << "true\\predicted";
  for (const auto& name : cm.class_names) {
    if (name.find_first_of(",\n\"") != std::string::npos)
      throw InputError("confusion csv: class name '" + name + "' contains reserved characters");
    os << "," << name;
  }
  os << "\n";
  for (int t = 0; t < cm.k(); ++t) {
    os << cm.class_names[t];
    for (int p = 0; p < cm.k(); ++p) os << "," << cm.at(t, p);
    os << "\n";
  }
  if (!os) throw InputError("confusion csv: write failed for " + path);
}

inline ConfusionMatrix parse_confusion_csv(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InputError("cannot open confusion csv: " + path);
  std::string line;
  if (!std::getline(is, line)) throw FormatError("confusion csv: empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, ',')) header.push_back(f);
  }
  if (header.size() < 2 || header[0] != "true\\predicted")
    throw FormatError("confusion csv: bad header");
  const int k = static_cast<int>(header.size()) - 1;
  ConfusionMatrix cm = ConfusionMatrix::zeros(k, {header.begin() + 1, header.end()});
  for (int t = 0; t < k; ++t) {
    if (!std::getline(is, line)) throw FormatError("confusion csv: missing row " + std::to_string(t));
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::stringstream ss(line);
    std::string f;
    std::vector<std::string> fields;
    while (std::getline(ss, f, ',')) fields.push_back(f);
    if (static_cast<int>(fields.size()) != k + 1 || fields[0] != cm.class_names[t])
      throw FormatError("confusion csv: malformed row " + std::to_string(t));
    for (int p = 0; p < k; ++p) cm.at(t, p) = std::stoll(fields[p + 1]);
  }
  return cm;
}

// Row-normalized grayscale heatmap, one 32×32-pixel cell per matrix entry.
// Byte values are ink density: 0 renders white, 255 black, so diagonal cells
// of an accurate classifier come out darkest.
inline void write_confusion_pgm(const ConfusionMatrix& cm, const std::string& path) {
  const int cell = 32;
  const int side = cell * cm.k();
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw InputError("cannot open for writing: " + path);
  os << "P5\n" << side << " " << side << "\n255\n";
  std::vector<unsigned char> row(static_cast<size_t>(side));
  for (int t = 0; t < cm.k(); ++t) {
    const int64_t rs = cm.row_sum(t);
    for (int p = 0; p < cm.k(); ++p) {
      const double f = rs > 0 ? static_cast<double>(cm.at(t, p)) / static_cast<double>(rs) : 0.0;
      const auto v = static_cast<unsigned char>(std::lround(f * 255.0));
      std::fill(row.begin() + static_cast<size_t>(p) * cell,
                row.begin() + static_cast<size_t>(p + 1) * cell, v);
    }
    for (int i = 0; i < cell; ++i)
      os.write(reinterpret_cast<const char*>(row.data()), side);
  }
  if (!os) throw InputError("confusion pgm: write failed for " + path);
}

inline void write_metrics_json(const ConfusionMatrix& cm, const MetricsReport& r,
                               const std::string& path) {
  nlohmann::ordered_json j;
  j["accuracy"] = r.accuracy;
  j["weighted_f1"] = r.weighted_f1;
  j["weighted_f1_scheme"] = "support-weighted mean of per-class F1";
  j["orientation"] = "rows=true,cols=predicted";
  j["total"] = cm.total();
  j["per_class"] = nlohmann::ordered_json::array();
  for (int c = 0; c < cm.k(); ++c) {
    const ClassMetrics& m = r.per_class[c];
    j["per_class"].push_back({{"name", cm.class_names[c]},
                              {"precision", m.precision},
                              {"recall", m.recall},
                              {"f1", m.f1},
                              {"support", m.support},
                              {"precision_undefined", m.precision_undefined},
                              {"recall_undefined", m.recall_undefined},
                              {"f1_undefined", m.f1_undefined}});
  }
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw InputError("cannot open for writing: " + path);
  os << j.dump(2) << "\n";
  if (!os) throw InputError("metrics json: write failed for " + path);
}

inline void render_report(const ConfusionMatrix& cm, const MetricsReport& report,
                          const std::string& out_dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw InputError("render_report: cannot create " + out_dir + ": " + ec.message());
  write_confusion_csv(cm, (fs::path(out_dir) / "confusion.csv").string());
  write_metrics_json(cm, report, (fs::path(out_dir) / "metrics.json").string());
  write_confusion_pgm(cm, (fs::path(out_dir) / "confusion.pgm").string());
}

}  // namespace icevit
