#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "icevit/common.hpp"
#include "icevit/tape.hpp"
#include "icevit/tensor.hpp"

namespace icevit {

// Per-class loss weights for weighted cross-entropy.
struct ClassWeights {
  std::vector<float> weights;
  std::vector<int> zero_count_classes;  // classes that had no samples; weight was substituted

  bool zero_count_warning() const { return !zero_count_classes.empty(); }
};

struct FocalParams {
  float gamma = 2.0f;
  std::optional<std::vector<float>> alpha;  // per-class weights; absent = all ones
};

// Inverse-frequency weights w_c = N / (K * n_c). Classes with zero counts
// receive the largest computed weight and are flagged.
inline ClassWeights class_weights_from_counts(const std::vector<int64_t>& counts) {
  if (counts.empty()) throw InputError("class_weights_from_counts: empty counts");
  int64_t total = 0;
  for (int64_t c : counts) {
    if (c < 0) throw InputError("class_weights_from_counts: negative count");
    total += c;
  }
  if (total == 0) throw InputError("class_weights_from_counts: all counts are zero");
  const double k = static_cast<double>(counts.size());
  ClassWeights out;
  out.weights.resize(counts.size(), 0.0f);
  float max_w = 0.0f;
  for (size_t c = 0; c < counts.size(); ++c) {
    if (counts[c] > 0) {
      float w = static_cast<float>(static_cast<double>(total) / (k * static_cast<double>(counts[c])));
      out.weights[c] = w;
      max_w = std::max(max_w, w);
    }
  }
  for (size_t c = 0; c < counts.size(); ++c) {
    if (counts[c] == 0) {
      out.weights[c] = max_w;
      out.zero_count_classes.push_back(static_cast<int>(c));
    }
  }
  return out;
}

namespace detail {

// One core for CE / W-CE / focal. All three reduce to
//   loss = sum_i w_i * a_i * (1-p_i)^gamma * (-log p_i) / sum_i w_i
// with w_i = 1 and gamma = 0 recovering plain cross-entropy bit for bit.
struct SoftmaxLossSpec {
  const std::vector<float>* class_weights = nullptr;  // W-CE sample weights by target class
  bool focal = false;
  double gamma = 0.0;
  const std::vector<float>* alpha = nullptr;  // focal per-class alpha
  const char* name = "cross_entropy";
};

inline void validate_targets(const Tensor& logits, const std::vector<int>& targets) {
  logits.require_2d();
  const int b = logits.shape[0], k = logits.shape[1];
  if (static_cast<int>(targets.size()) != b)
    throw InputError(std::string("loss: batch size ") + std::to_string(b) + " does not match " +
                     std::to_string(targets.size()) + " targets");
  for (size_t i = 0; i < targets.size(); ++i)
    if (targets[i] < 0 || targets[i] >= k)
      throw InputError("loss: target " + std::to_string(targets[i]) + " at sample " +
                       std::to_string(i) + " outside [0, " + std::to_string(k) + ")");
}

inline Tensor softmax_loss(Tape& tape, const Tensor& logits, const std::vector<int>& targets,
                           const SoftmaxLossSpec& spec) {
  validate_targets(logits, targets);
  const int b = logits.shape[0], k = logits.shape[1];

  // Row-wise log-softmax in double via log-sum-exp.
  std::vector<double> probs(static_cast<size_t>(b) * k);
  std::vector<double> sample_g(b);   // p_t * d(per-sample loss)/d(p_t)
  std::vector<double> sample_w(b);   // applied sample weight
  double total = 0.0, denom = 0.0;
  for (int i = 0; i < b; ++i) {
    const float* row = logits.data.data() + static_cast<size_t>(i) * k;
    double mx = row[0];
    for (int j = 1; j < k; ++j) mx = std::max(mx, static_cast<double>(row[j]));
    double sum = 0.0;
    for (int j = 0; j < k; ++j) sum += std::exp(static_cast<double>(row[j]) - mx);
    const double lse = mx + std::log(sum);
    for (int j = 0; j < k; ++j)
      probs[static_cast<size_t>(i) * k + j] = std::exp(static_cast<double>(row[j]) - lse);
    const int t = targets[i];
    const double logp = static_cast<double>(row[t]) - lse;
    const double p = std::exp(logp);
    const double q = -std::expm1(logp);  // 1 - p without cancellation

    double a = 1.0;
    if (spec.alpha) a = (*spec.alpha)[t];
    double term, g;
    if (!spec.focal || spec.gamma == 0.0) {
      term = a * (-logp);
      g = -a;
    } else {
      const double powq = q > 0.0 ? std::exp(spec.gamma * std::log(q)) : 0.0;
      double t1 = 0.0;
      if (q > 0.0) t1 = spec.gamma * std::exp((spec.gamma - 1.0) * std::log(q)) * p * logp;
      term = a * powq * (-logp);
      g = a * (t1 - powq);
    }
    const double w = spec.class_weights ? static_cast<double>((*spec.class_weights)[t]) : 1.0;
    sample_g[i] = g;
    sample_w[i] = w;
    total += w * term;
    denom += w;
  }
  Tensor out = Tensor::scalar(static_cast<float>(total / denom));
  Tape::check_finite(out, spec.name);
  if (!tape.will_track({logits.node})) return out;
  return tape.track(std::move(out), [ln = logits.node, probs = std::move(probs),
                                     sample_g = std::move(sample_g), sample_w = std::move(sample_w),
                                     targets, b, k, denom](Tape& t, const Tensor& gout) {
    Tensor dz = Tensor::zeros({b, k});
    const double go = gout.data[0];
    for (int i = 0; i < b; ++i) {
      const double s = go * sample_w[i] / denom;
      const double g = sample_g[i];
      const int tt = targets[i];
      for (int j = 0; j < k; ++j) {
        const double p = probs[static_cast<size_t>(i) * k + j];
        const double delta = (j == tt) ? 1.0 : 0.0;
        dz.data[static_cast<size_t>(i) * k + j] = static_cast<float>(s * g * (delta - p));
      }
    }
    t.accum(ln, dz);
  });
}

}  // namespace detail

// Mean of -log softmax(logits)[target].
inline Tensor cross_entropy(Tape& tape, const Tensor& logits, const std::vector<int>& targets) {
  return detail::softmax_loss(tape, logits, targets, {});
}

// Per-sample CE scaled by the target's class weight, normalized by the sum
// of applied weights.
inline Tensor weighted_cross_entropy(Tape& tape, const Tensor& logits,
                                     const std::vector<int>& targets, const ClassWeights& cw) {
  logits.require_2d();
  if (static_cast<int>(cw.weights.size()) != logits.shape[1])
    throw ParamError("weighted_cross_entropy: expected " + std::to_string(logits.shape[1]) +
                     " class weights, got " + std::to_string(cw.weights.size()));
  for (float w : cw.weights)
    if (!(w > 0.0f) || !std::isfinite(w))
      throw ParamError("weighted_cross_entropy: class weights must be positive and finite");
  detail::SoftmaxLossSpec spec;
  spec.class_weights = &cw.weights;
  spec.name = "weighted_cross_entropy";
  return detail::softmax_loss(tape, logits, targets, spec);
}

// Mean of alpha_t * (1 - p_t)^gamma * (-log p_t).
inline Tensor focal_loss(Tape& tape, const Tensor& logits, const std::vector<int>& targets,
                         const FocalParams& params) {
  logits.require_2d();
  if (!(params.gamma >= 0.0f) || !std::isfinite(params.gamma))
    throw ParamError("focal_loss: gamma must be finite and >= 0");
  if (params.alpha) {
    if (static_cast<int>(params.alpha->size()) != logits.shape[1])
      throw ParamError("focal_loss: alpha length must equal class count");
    for (float a : *params.alpha)
      if (!(a > 0.0f) || !std::isfinite(a)) throw ParamError("focal_loss: alpha must be positive");
  }
  detail::SoftmaxLossSpec spec;
  spec.focal = true;
  spec.gamma = params.gamma;
  spec.alpha = params.alpha ? &*params.alpha : nullptr;
  spec.name = "focal_loss";
  return detail::softmax_loss(tape, logits, targets, spec);
}

}  // namespace icevit
