#pragma once

#include <cstdint>
#include <vector>

#include "icevit/common.hpp"
#include "icevit/tensor.hpp"

namespace icevit {

struct AdamConfig {
  float lr = 3e-4f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float epsilon = 1e-8f;
};

// Per-parameter first/second moment estimates, aligned positionally with the
// parameter list they were initialized from.
struct AdamState {
  AdamConfig cfg;
  int64_t t = 0;
  std::vector<Tensor> m;
  std::vector<Tensor> v;

  static AdamState init(const std::vector<Tensor>& params, AdamConfig cfg = {}) {
    AdamState s;
    s.cfg = cfg;
    s.m.reserve(params.size());
    s.v.reserve(params.size());
    for (const auto& p : params) {
      s.m.push_back(Tensor::zeros(p.shape));
      s.v.push_back(Tensor::zeros(p.shape));
    }
    return s;
  }
};

// Bias-corrected Adam update, in place. Gradients are aligned with params.
inline void adam_step(std::vector<Tensor>& params, const std::vector<Tensor>& grads,
                      AdamState& state) {
  if (params.size() != grads.size() || params.size() != state.m.size())
    throw ShapeError("adam_step: parameter/gradient/state count mismatch");
  state.t += 1;
  const double bc1 = 1.0 - std::pow(static_cast<double>(state.cfg.beta1), static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(static_cast<double>(state.cfg.beta2), static_cast<double>(state.t));
  const double b1 = state.cfg.beta1, b2 = state.cfg.beta2;
  const double lr = state.cfg.lr, eps = state.cfg.epsilon;
  for (size_t pi = 0; pi < params.size(); ++pi) {
    Tensor& p = params[pi];
    const Tensor& g = grads[pi];
    Tensor& m = state.m[pi];
    Tensor& v = state.v[pi];
    if (p.shape != g.shape || p.shape != m.shape)
      throw ShapeError("adam_step: shape mismatch at parameter " + std::to_string(pi) + ": " +
                       Tensor::shape_string(p.shape) + " vs " + Tensor::shape_string(g.shape));
    for (size_t i = 0; i < p.data.size(); ++i) {
      double gi = g.data[i];
      double mi = b1 * m.data[i] + (1.0 - b1) * gi;
      double vi = b2 * v.data[i] + (1.0 - b2) * gi * gi;
      m.data[i] = static_cast<float>(mi);
      v.data[i] = static_cast<float>(vi);
      double mhat = mi / bc1;
      double vhat = vi / bc2;
      p.data[i] = static_cast<float>(p.data[i] - lr * mhat / (std::sqrt(vhat) + eps));
    }
  }
}

}  // namespace icevit
