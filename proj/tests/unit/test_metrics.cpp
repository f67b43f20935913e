#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "icevit/common.hpp"
#include "icevit/metrics.hpp"

using Catch::Approx;
using icevit::ConfusionMatrix;

namespace fs = std::filesystem;

namespace {

fs::path scratch_dir() {
  fs::path p = fs::current_path() / "test_artifacts" / "metrics";
  fs::create_directories(p);
  return p;
}

// Independent reference: per-class tallies straight from label pairs.
struct BruteForce {
  std::vector<int64_t> tp, fp, fn, support;
  int64_t correct = 0, total = 0;

  BruteForce(const std::vector<int>& truth, const std::vector<int>& pred, int k)
      : tp(k, 0), fp(k, 0), fn(k, 0), support(k, 0) {
    for (size_t i = 0; i < truth.size(); ++i) {
      ++total;
      ++support[truth[i]];
      if (truth[i] == pred[i]) {
        ++correct;
        ++tp[truth[i]];
      } else {
        ++fp[pred[i]];
        ++fn[truth[i]];
      }
    }
  }

  double precision(int c) const {
    return tp[c] + fp[c] > 0 ? static_cast<double>(tp[c]) / static_cast<double>(tp[c] + fp[c])
                             : 0.0;
  }
  double recall(int c) const {
    return support[c] > 0 ? static_cast<double>(tp[c]) / static_cast<double>(support[c]) : 0.0;
  }
  double f1(int c) const {
    const double p = precision(c), r = recall(c);
    return p + r > 0 ? 2 * p * r / (p + r) : 0.0;
  }
  double weighted_f1() const {
    double acc = 0;
    for (size_t c = 0; c < tp.size(); ++c)
      acc += static_cast<double>(support[c]) / static_cast<double>(total) * f1(c);
    return acc;
  }
  double accuracy() const { return static_cast<double>(correct) / static_cast<double>(total); }
};

}  // namespace

TEST_CASE("perfect predictions give a diagonal matrix of supports", "[metrics]") {
  const std::vector<int> labels{0, 1, 1, 2, 2, 2};
  const auto cm = icevit::confusion_matrix(labels, labels, 3);
  for (int t = 0; t < 3; ++t)
    for (int p = 0; p < 3; ++p) REQUIRE(cm.at(t, p) == (t == p ? t + 1 : 0));
  REQUIRE(icevit::accuracy(cm) == 1.0);
  REQUIRE(icevit::weighted_f1(cm) == 1.0);
}

TEST_CASE("swapped binary labels produce the anti-diagonal", "[metrics]") {
  const auto cm = icevit::confusion_matrix({0, 1}, {1, 0}, 2);
  REQUIRE(cm.at(0, 0) == 0);
  REQUIRE(cm.at(0, 1) == 1);
  REQUIRE(cm.at(1, 0) == 1);
  REQUIRE(cm.at(1, 1) == 0);
}

TEST_CASE("random label pairs preserve totals and row sums", "[metrics]") {
  icevit::Rng rng(13);
  std::vector<int> truth, pred;
  std::vector<int64_t> true_counts(5, 0);
  for (int i = 0; i < 1000; ++i) {
    truth.push_back(static_cast<int>(rng.uniform_int(5)));
    pred.push_back(static_cast<int>(rng.uniform_int(5)));
    ++true_counts[truth.back()];
  }
  const auto cm = icevit::confusion_matrix(truth, pred, 5);
  REQUIRE(cm.total() == 1000);
  for (int t = 0; t < 5; ++t) REQUIRE(cm.row_sum(t) == true_counts[t]);
}

TEST_CASE("confusion matrix validates its inputs", "[metrics]") {
  REQUIRE_THROWS_AS(icevit::confusion_matrix({0, 1}, {0}, 2), icevit::InputError);
  REQUIRE_THROWS_AS(icevit::confusion_matrix({0, 2}, {0, 0}, 2), icevit::InputError);
  REQUIRE_THROWS_AS(icevit::confusion_matrix({0, -1}, {0, 0}, 2), icevit::InputError);
  const auto empty = ConfusionMatrix::zeros(2);
  REQUIRE_THROWS_AS(icevit::accuracy(empty), icevit::InputError);
  REQUIRE_THROWS_AS(icevit::weighted_f1(empty), icevit::InputError);
}

TEST_CASE("hand-evaluated 2x2 fixture", "[metrics]") {
  ConfusionMatrix cm = ConfusionMatrix::zeros(2);
  cm.at(0, 0) = 2;
  cm.at(1, 0) = 1;
  cm.at(1, 1) = 1;
  const auto per = icevit::per_class_prf(cm);
  REQUIRE(per[0].precision == Approx(2.0 / 3.0).margin(1e-12));
  REQUIRE(per[0].recall == 1.0);
  REQUIRE(per[0].f1 == Approx(0.8).margin(1e-12));
  REQUIRE(per[0].support == 2);
  REQUIRE(per[1].precision == 1.0);
  REQUIRE(per[1].recall == 0.5);
  REQUIRE(per[1].f1 == Approx(2.0 / 3.0).margin(1e-12));
  REQUIRE(icevit::weighted_f1(cm) == Approx((2 * 0.8 + 2 * (2.0 / 3.0)) / 4.0).margin(1e-9));
  REQUIRE(icevit::accuracy(cm) == 0.75);
}

TEST_CASE("zero denominators report zero with undefined flags", "[metrics]") {
  // Class 1 never occurs and is never predicted; class 2 has support but no
  // predictions; class 0 absorbs everything.
  const auto cm = icevit::confusion_matrix({0, 0, 2}, {0, 0, 0}, 3);
  const auto per = icevit::per_class_prf(cm);
  REQUIRE(per[1].support == 0);
  REQUIRE(per[1].recall == 0.0);
  REQUIRE(per[1].recall_undefined);
  REQUIRE(per[1].precision_undefined);
  REQUIRE(per[1].f1_undefined);
  REQUIRE(per[2].recall == 0.0);
  REQUIRE_FALSE(per[2].recall_undefined);  // defined, just zero
  REQUIRE(per[2].precision_undefined);
  REQUIRE(per[0].precision == Approx(2.0 / 3.0).margin(1e-12));
}

TEST_CASE("accuracy equals the support-weighted recall mean", "[metrics]") {
  icevit::Rng rng(29);
  for (int trial = 0; trial < 20; ++trial) {
    const int k = 2 + static_cast<int>(rng.uniform_int(6));
    ConfusionMatrix cm = ConfusionMatrix::zeros(k);
    for (int t = 0; t < k; ++t)
      for (int p = 0; p < k; ++p) cm.at(t, p) = static_cast<int64_t>(rng.uniform_int(30));
    if (cm.total() == 0) continue;
    const auto per = icevit::per_class_prf(cm);
    double expect = 0;
    for (int c = 0; c < k; ++c)
      expect += static_cast<double>(per[c].support) * per[c].recall;
    expect /= static_cast<double>(cm.total());
    REQUIRE(icevit::accuracy(cm) == Approx(expect).margin(1e-12));

    const double wf1 = icevit::weighted_f1(cm);
    double lo = 1.0, hi = 0.0;
    for (int c = 0; c < k; ++c) {
      if (per[c].support == 0) continue;
      lo = std::min(lo, per[c].f1);
      hi = std::max(hi, per[c].f1);
    }
    REQUIRE(wf1 >= lo - 1e-12);
    REQUIRE(wf1 <= hi + 1e-12);
  }
}

TEST_CASE("metrics are invariant under consistent relabeling", "[metrics]") {
  icevit::Rng rng(31);
  const int k = 5;
  std::vector<int> truth, pred;
  for (int i = 0; i < 400; ++i) {
    truth.push_back(static_cast<int>(rng.uniform_int(k)));
    pred.push_back(static_cast<int>(
        rng.uniform() < 0.6 ? truth.back() : static_cast<int>(rng.uniform_int(k))));
  }
  std::vector<int> perm{3, 0, 4, 1, 2};
  std::vector<int> truth2, pred2;
  for (size_t i = 0; i < truth.size(); ++i) {
    truth2.push_back(perm[truth[i]]);
    pred2.push_back(perm[pred[i]]);
  }
  const auto cm1 = icevit::confusion_matrix(truth, pred, k);
  const auto cm2 = icevit::confusion_matrix(truth2, pred2, k);
  REQUIRE(icevit::accuracy(cm1) == Approx(icevit::accuracy(cm2)).margin(1e-12));
  REQUIRE(icevit::weighted_f1(cm1) == Approx(icevit::weighted_f1(cm2)).margin(1e-12));
  const auto p1 = icevit::per_class_prf(cm1);
  const auto p2 = icevit::per_class_prf(cm2);
  for (int c = 0; c < k; ++c) {
    REQUIRE(p1[c].precision == Approx(p2[perm[c]].precision).margin(1e-12));
    REQUIRE(p1[c].recall == Approx(p2[perm[c]].recall).margin(1e-12));
    REQUIRE(p1[c].f1 == Approx(p2[perm[c]].f1).margin(1e-12));
  }
}

TEST_CASE("metrics match brute-force recomputation on random fixtures", "[metrics]") {
  icevit::Rng rng(37);
  for (int trial = 0; trial < 100; ++trial) {
    const int k = 2 + static_cast<int>(rng.uniform_int(7));
    const int n = 1 + static_cast<int>(rng.uniform_int(400));
    std::vector<int> truth, pred;
    // Leave some classes empty on purpose.
    const int active = 1 + static_cast<int>(rng.uniform_int(static_cast<uint64_t>(k)));
    for (int i = 0; i < n; ++i) {
      truth.push_back(static_cast<int>(rng.uniform_int(static_cast<uint64_t>(active))));
      pred.push_back(static_cast<int>(rng.uniform_int(static_cast<uint64_t>(k))));
    }
    const auto cm = icevit::confusion_matrix(truth, pred, k);
    const BruteForce ref(truth, pred, k);
    REQUIRE(icevit::accuracy(cm) == ref.accuracy());
    REQUIRE(icevit::weighted_f1(cm) == ref.weighted_f1());
    const auto per = icevit::per_class_prf(cm);
    for (int c = 0; c < k; ++c) {
      REQUIRE(per[c].precision == ref.precision(c));
      REQUIRE(per[c].recall == ref.recall(c));
      REQUIRE(per[c].f1 == ref.f1(c));
      REQUIRE(per[c].support == ref.support[c]);
    }
  }
}

TEST_CASE("uniform random predictions land near accuracy 1/K", "[metrics]") {
  icevit::Rng rng(43);
  const int k = 4, n = 20000;
  std::vector<int> truth, pred;
  for (int i = 0; i < n; ++i) {
    truth.push_back(static_cast<int>(rng.uniform_int(k)));
    pred.push_back(static_cast<int>(rng.uniform_int(k)));
  }
  const auto cm = icevit::confusion_matrix(truth, pred, k);
  const double p = 1.0 / k;
  const double sigma = std::sqrt(p * (1 - p) / n);
  REQUIRE(icevit::accuracy(cm) == Approx(p).margin(3 * sigma));
}

TEST_CASE("rendered reports round trip and encode the heatmap", "[metrics]") {
  std::vector<int> truth{0, 0, 0, 1, 1, 2, 2, 2, 2, 2};
  std::vector<int> pred{0, 0, 1, 1, 1, 2, 2, 2, 0, 2};
  const auto cm = icevit::confusion_matrix(truth, pred, 3, {"Water", "Young Ice", "Old Ice"});
  const auto report = icevit::compute_report(cm);
  const std::string dir = (scratch_dir() / "report").string();
  icevit::render_report(cm, report, dir);

  const auto cm2 = icevit::parse_confusion_csv(dir + "/confusion.csv");
  REQUIRE(cm2.class_names == cm.class_names);
  REQUIRE(cm2.counts == cm.counts);

  std::ifstream pgm(dir + "/confusion.pgm", std::ios::binary);
  std::string magic, dims;
  std::getline(pgm, magic);
  REQUIRE(magic == "P5");
  std::getline(pgm, dims);
  REQUIRE(dims == "96 96");  // 32 * K on both sides
  std::getline(pgm, dims);
  REQUIRE(dims == "255");
  std::string payload((std::istreambuf_iterator<char>(pgm)), std::istreambuf_iterator<char>());
  REQUIRE(payload.size() == 96u * 96u);

  // Perfect matrix: diagonal cells are the darkest (largest byte) in each row.
  const auto perfect = icevit::confusion_matrix({0, 1, 2}, {0, 1, 2}, 3);
  const std::string pdir = (scratch_dir() / "perfect").string();
  icevit::render_report(perfect, icevit::compute_report(perfect), pdir);
  std::ifstream pf(pdir + "/confusion.pgm", std::ios::binary);
  std::string line;
  std::getline(pf, line);
  std::getline(pf, line);
  std::getline(pf, line);
  std::string body((std::istreambuf_iterator<char>(pf)), std::istreambuf_iterator<char>());
  for (int t = 0; t < 3; ++t) {
    for (int p = 0; p < 3; ++p) {
      const unsigned char v =
          static_cast<unsigned char>(body[static_cast<size_t>(t) * 32 * 96 + p * 32]);
      REQUIRE(v == (t == p ? 255 : 0));
    }
  }

  // metrics.json accuracy agrees with the matrix trace.
  std::ifstream mj(dir + "/metrics.json");
  std::string json_text((std::istreambuf_iterator<char>(mj)), std::istreambuf_iterator<char>());
  REQUIRE(json_text.find("\"accuracy\": 0.8") != std::string::npos);
  REQUIRE(json_text.find("rows=true,cols=predicted") != std::string::npos);
}
