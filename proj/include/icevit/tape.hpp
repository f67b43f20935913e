#pragma once

#include <cmath>
#include <functional>
#include <initializer_list>
#include <unordered_map>
#include <utility>
#include <vector>

#include "icevit/common.hpp"
#include "icevit/tensor.hpp"

namespace icevit {

namespace detail {

// Grouped matrix kernels; groups are stacked along the row axis and all
// accumulation happens in double. Fixed loop order keeps results
// deterministic for a given input.

// c_g(m×n) = a_g(m×k) · b_g(k×n)
inline void bmm_nn(const float* a, const float* b, float* c, int g, int m, int k, int n) {
  for (int gi = 0; gi < g; ++gi) {
    const float* ag = a + static_cast<size_t>(gi) * m * k;
    const float* bg = b + static_cast<size_t>(gi) * k * n;
    float* cg = c + static_cast<size_t>(gi) * m * n;
    for (int i = 0; i < m; ++i) {
      for (int j = 0; j < n; ++j) {
        double acc = 0.0;
        for (int l = 0; l < k; ++l) acc += static_cast<double>(ag[i * k + l]) * bg[l * n + j];
        cg[i * n + j] = static_cast<float>(acc);
      }
    }
  }
}

// c_g(m×n) = a_g(m×k) · b_g(n×k)^T
inline void bmm_nt(const float* a, const float* b, float* c, int g, int m, int k, int n) {
  for (int gi = 0; gi < g; ++gi) {
    const float* ag = a + static_cast<size_t>(gi) * m * k;
    const float* bg = b + static_cast<size_t>(gi) * n * k;
    float* cg = c + static_cast<size_t>(gi) * m * n;
    for (int i = 0; i < m; ++i) {
      for (int j = 0; j < n; ++j) {
        double acc = 0.0;
        for (int l = 0; l < k; ++l) acc += static_cast<double>(ag[i * k + l]) * bg[j * k + l];
        cg[i * n + j] = static_cast<float>(acc);
      }
    }
  }
}

inline constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
inline constexpr double kGeluA = 0.044715;

// c_g(k×n) = a_g(m×k)^T · b_g(m×n)
inline void bmm_tn(const float* a, const float* b, float* c, int g, int m, int k, int n) {
  for (int gi = 0; gi < g; ++gi) {
    const float* ag = a + static_cast<size_t>(gi) * m * k;
    const float* bg = b + static_cast<size_t>(gi) * m * n;
    float* cg = c + static_cast<size_t>(gi) * k * n;
    for (int i = 0; i < k; ++i) {
      for (int j = 0; j < n; ++j) {
        double acc = 0.0;
        for (int l = 0; l < m; ++l) acc += static_cast<double>(ag[l * k + i]) * bg[l * n + j];
        cg[i * n + j] = static_cast<float>(acc);
      }
    }
  }
}

}  // namespace detail

// Reverse-mode tape. Operations executed through a recording tape append one
// record each, in execution order; backward() replays them in exact reverse
// order and sums fan-out contributions.
class Tape {
 public:
  using BackFn = std::function<void(Tape&, const Tensor&)>;

  explicit Tape(bool recording = true) : recording_(recording) {}

  bool recording() const { return recording_; }
  size_t num_records() const { return records_.size(); }
  size_t num_nodes() const { return nodes_.size(); }

  void clear() {
    nodes_.clear();
    records_.clear();
    grads_.clear();
  }

  // Registers a gradient-enabled leaf (a trainable parameter).
  Tensor leaf(Tensor t) {
    if (!recording_) return t;
    t.node = new_node(t.shape, true);
    return t;
  }

  bool will_track(std::initializer_list<int> inputs) const {
    if (!recording_) return false;
    for (int n : inputs) {
      if (n >= 0) return true;
    }
    return false;
  }

  // Registers `out` as the result of a custom operation. `back` receives
  // d(loss)/d(out) and must accum() into the operation's inputs.
  Tensor track(Tensor out, BackFn back) {
    out.node = new_node(out.shape, false);
    records_.push_back(Record{out.node, std::move(back)});
    return out;
  }

  void accum(int node, const Tensor& g) {
    if (node < 0) return;
    Tensor& slot = grads_[node];
    if (slot.data.empty()) {
      slot = g;
      return;
    }
    if (slot.shape != g.shape)
      throw ShapeError("gradient accumulation shape mismatch: " + Tensor::shape_string(slot.shape) +
                       " vs " + Tensor::shape_string(g.shape));
    for (size_t i = 0; i < slot.data.size(); ++i) slot.data[i] += g.data[i];
  }

  // Gradients of a scalar loss w.r.t. every leaf, keyed by node id. Leaves
  // the loss does not reach get zero gradients.
  std::unordered_map<int, Tensor> backward(const Tensor& loss) {
    if (loss.node < 0) throw ContractError("backward: loss is not tracked on this tape");
    if (loss.numel() != 1)
      throw ContractError("backward: loss must be scalar, got shape " +
                          Tensor::shape_string(loss.shape));
    grads_.assign(nodes_.size(), Tensor{});
    grads_[loss.node] = Tensor::full(loss.shape, 1.0f);
    for (auto it = records_.rbegin(); it != records_.rend(); ++it) {
      const Tensor& g = grads_[it->out_node];
      if (g.data.empty()) continue;
      it->back(*this, g);
    }
    std::unordered_map<int, Tensor> result;
    for (size_t i = 0; i < nodes_.size(); ++i) {
      if (!nodes_[i].is_leaf) continue;
      if (grads_[i].data.empty())
        result[static_cast<int>(i)] = Tensor::zeros(nodes_[i].shape);
      else
        result[static_cast<int>(i)] = std::move(grads_[i]);
    }
    grads_.clear();
    return result;
  }

  // ---- operations -------------------------------------------------------

  Tensor matmul(const Tensor& a, const Tensor& b) { return bmm(a, b, 1); }

  // a · b^T; the usual form for linear layers storing weights [out × in].
  Tensor matmul_nt(const Tensor& a, const Tensor& b) { return bmm_nt(a, b, 1); }

  // Grouped matmul with groups stacked along rows: a[g·m × k] · b[g·k × n].
  Tensor bmm(const Tensor& a, const Tensor& b, int groups) {
    check_groups(a, b, groups, false);
    int m = a.shape[0] / groups, k = a.shape[1], n = b.shape[1];
    Tensor out = Tensor::zeros({groups * m, n});
    detail::bmm_nn(a.data.data(), b.data.data(), out.data.data(), groups, m, k, n);
    check_finite(out, "matmul");
    if (!will_track({a.node, b.node})) return out;
    return track(std::move(out),
                 [an = a.node, bn = b.node, av = a, bv = b, groups, m, k, n](Tape& t, const Tensor& g) {
                   if (an >= 0) {
                     Tensor da = Tensor::zeros(av.shape);
                     detail::bmm_nt(g.data.data(), bv.data.data(), da.data.data(), groups, m, n, k);
                     t.accum(an, da);
                   }
                   if (bn >= 0) {
                     Tensor db = Tensor::zeros(bv.shape);
                     detail::bmm_tn(av.data.data(), g.data.data(), db.data.data(), groups, m, k, n);
                     t.accum(bn, db);
                   }
                 });
  }

  // Grouped a[g·m × k] · b[g·n × k]^T.
  Tensor bmm_nt(const Tensor& a, const Tensor& b, int groups) {
    check_groups(a, b, groups, true);
    int m = a.shape[0] / groups, k = a.shape[1], n = b.shape[0] / groups;
    Tensor out = Tensor::zeros({groups * m, n});
    detail::bmm_nt(a.data.data(), b.data.data(), out.data.data(), groups, m, k, n);
    check_finite(out, "matmul_nt");
    if (!will_track({a.node, b.node})) return out;
    return track(std::move(out),
                 [an = a.node, bn = b.node, av = a, bv = b, groups, m, k, n](Tape& t, const Tensor& g) {
                   if (an >= 0) {
                     Tensor da = Tensor::zeros(av.shape);
                     detail::bmm_nn(g.data.data(), bv.data.data(), da.data.data(), groups, m, n, k);
                     t.accum(an, da);
                   }
                   if (bn >= 0) {
                     Tensor db = Tensor::zeros(bv.shape);
                     detail::bmm_tn(g.data.data(), av.data.data(), db.data.data(), groups, m, n, k);
                     t.accum(bn, db);
                   }
                 });
  }

  Tensor add(const Tensor& a, const Tensor& b) {
    if (a.shape != b.shape)
      throw ShapeError("add: shape mismatch " + Tensor::shape_string(a.shape) + " vs " +
                       Tensor::shape_string(b.shape));
    Tensor out = a;
    out.node = -1;
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] += b.data[i];
    check_finite(out, "add");
    if (!will_track({a.node, b.node})) return out;
    return track(std::move(out), [an = a.node, bn = b.node](Tape& t, const Tensor& g) {
      t.accum(an, g);
      t.accum(bn, g);
    });
  }

  // a[m×n] + v broadcast over rows; v has n elements.
  Tensor add_rowvec(const Tensor& a, const Tensor& v) {
    a.require_2d();
    int m = a.shape[0], n = a.shape[1];
    if (v.numel() != n)
      throw ShapeError("add_rowvec: vector " + Tensor::shape_string(v.shape) +
                       " does not match columns of " + Tensor::shape_string(a.shape));
    Tensor out = a;
    out.node = -1;
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) out.data[static_cast<size_t>(i) * n + j] += v.data[j];
    check_finite(out, "add_rowvec");
    if (!will_track({a.node, v.node})) return out;
    return track(std::move(out), [an = a.node, vn = v.node, vshape = v.shape, m, n](Tape& t, const Tensor& g) {
      t.accum(an, g);
      if (vn >= 0) {
        Tensor dv = Tensor::zeros(vshape);
        for (int j = 0; j < n; ++j) {
          double acc = 0.0;
          for (int i = 0; i < m; ++i) acc += g.data[static_cast<size_t>(i) * n + j];
          dv.data[j] = static_cast<float>(acc);
        }
        t.accum(vn, dv);
      }
    });
  }

  Tensor mul(const Tensor& a, const Tensor& b) {
    if (a.shape != b.shape)
      throw ShapeError("mul: shape mismatch " + Tensor::shape_string(a.shape) + " vs " +
                       Tensor::shape_string(b.shape));
    Tensor out = a;
    out.node = -1;
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] *= b.data[i];
    check_finite(out, "mul");
    if (!will_track({a.node, b.node})) return out;
    return track(std::move(out), [an = a.node, bn = b.node, av = a, bv = b](Tape& t, const Tensor& g) {
      if (an >= 0) {
        Tensor da = g;
        da.node = -1;
        for (size_t i = 0; i < da.data.size(); ++i) da.data[i] *= bv.data[i];
        t.accum(an, da);
      }
      if (bn >= 0) {
        Tensor db = g;
        db.node = -1;
        for (size_t i = 0; i < db.data.size(); ++i) db.data[i] *= av.data[i];
        t.accum(bn, db);
      }
    });
  }

  Tensor scale(const Tensor& a, float s) {
    Tensor out = a;
    out.node = -1;
    for (auto& v : out.data) v *= s;
    check_finite(out, "scale");
    if (!will_track({a.node})) return out;
    return track(std::move(out), [an = a.node, s](Tape& t, const Tensor& g) {
      Tensor da = g;
      da.node = -1;
      for (auto& v : da.data) v *= s;
      t.accum(an, da);
    });
  }

  Tensor reshape(const Tensor& a, std::vector<int> new_shape) {
    if (Tensor::numel_of(new_shape) != a.numel())
      throw ShapeError("reshape: cannot view " + Tensor::shape_string(a.shape) + " as " +
                       Tensor::shape_string(new_shape));
    Tensor out(new_shape, a.data);
    if (!will_track({a.node})) return out;
    return track(std::move(out), [an = a.node, old_shape = a.shape](Tape& t, const Tensor& g) {
      t.accum(an, Tensor(old_shape, g.data));
    });
  }

  // Max-subtracted softmax along `axis` (negative axes count from the back).
  Tensor softmax(const Tensor& a, int axis) {
    int nd = a.ndim();
    if (axis < 0) axis += nd;
    if (axis < 0 || axis >= nd)
      throw ShapeError("softmax: axis out of range for " + Tensor::shape_string(a.shape));
    int64_t len = a.shape[axis];
    int64_t inner = 1, outer = 1;
    for (int i = axis + 1; i < nd; ++i) inner *= a.shape[i];
    for (int i = 0; i < axis; ++i) outer *= a.shape[i];
    Tensor out = Tensor::zeros(a.shape);
    for (int64_t o = 0; o < outer; ++o) {
      for (int64_t in = 0; in < inner; ++in) {
        const int64_t base = o * len * inner + in;
        double mx = a.data[base];
        for (int64_t l = 1; l < len; ++l) mx = std::max(mx, static_cast<double>(a.data[base + l * inner]));
        double sum = 0.0;
        for (int64_t l = 0; l < len; ++l) {
          double e = std::exp(static_cast<double>(a.data[base + l * inner]) - mx);
          out.data[base + l * inner] = static_cast<float>(e);
          sum += e;
        }
        for (int64_t l = 0; l < len; ++l)
          out.data[base + l * inner] = static_cast<float>(out.data[base + l * inner] / sum);
      }
    }
    check_finite(out, "softmax");
    if (!will_track({a.node})) return out;
    return track(std::move(out), [an = a.node, p = out, len, inner, outer](Tape& t, const Tensor& g) {
      Tensor da = Tensor::zeros(p.shape);
      for (int64_t o = 0; o < outer; ++o) {
        for (int64_t in = 0; in < inner; ++in) {
          const int64_t base = o * len * inner + in;
          double dot = 0.0;
          for (int64_t l = 0; l < len; ++l)
            dot += static_cast<double>(g.data[base + l * inner]) * p.data[base + l * inner];
          for (int64_t l = 0; l < len; ++l) {
            const int64_t idx = base + l * inner;
            da.data[idx] = static_cast<float>(p.data[idx] * (static_cast<double>(g.data[idx]) - dot));
          }
        }
      }
      t.accum(an, da);
    });
  }

  // Normalization over the last axis with population variance.
  Tensor layernorm(const Tensor& x, const Tensor& gamma, const Tensor& beta, float eps) {
    if (eps <= 0.0f) throw ParamError("layernorm: eps must be positive");
    int nd = x.ndim();
    int n = x.shape[nd - 1];
    if (gamma.numel() != n || beta.numel() != n)
      throw ShapeError("layernorm: gamma/beta length must equal last axis of " +
                       Tensor::shape_string(x.shape));
    int64_t rows = x.numel() / n;
    Tensor out = Tensor::zeros(x.shape);
    std::vector<float> xhat(x.data.size());
    std::vector<double> inv_std(static_cast<size_t>(rows));
    for (int64_t r = 0; r < rows; ++r) {
      const int64_t base = r * n;
      double mean = 0.0;
      for (int j = 0; j < n; ++j) mean += x.data[base + j];
      mean /= n;
      double var = 0.0;
      for (int j = 0; j < n; ++j) {
        double d = x.data[base + j] - mean;
        var += d * d;
      }
      var /= n;
      double inv = 1.0 / std::sqrt(var + eps);
      inv_std[static_cast<size_t>(r)] = inv;
      for (int j = 0; j < n; ++j) {
        double xh = (x.data[base + j] - mean) * inv;
        xhat[base + j] = static_cast<float>(xh);
        out.data[base + j] = static_cast<float>(xh * gamma.data[j] + beta.data[j]);
      }
    }
    check_finite(out, "layernorm");
    if (!will_track({x.node, gamma.node, beta.node})) return out;
    return track(std::move(out), [xn = x.node, gn = gamma.node, bn = beta.node, gv = gamma,
                                  gshape = gamma.shape, bshape = beta.shape, xh = std::move(xhat),
                                  inv = std::move(inv_std), rows, n](Tape& t, const Tensor& g) {
      if (xn >= 0) {
        Tensor dx = Tensor::zeros(g.shape);
        for (int64_t r = 0; r < rows; ++r) {
          const int64_t base = r * n;
          double m1 = 0.0, m2 = 0.0;
          for (int j = 0; j < n; ++j) {
            double gg = static_cast<double>(g.data[base + j]) * gv.data[j];
            m1 += gg;
            m2 += gg * xh[base + j];
          }
          m1 /= n;
          m2 /= n;
          for (int j = 0; j < n; ++j) {
            double gg = static_cast<double>(g.data[base + j]) * gv.data[j];
            dx.data[base + j] =
                static_cast<float>((gg - m1 - xh[base + j] * m2) * inv[static_cast<size_t>(r)]);
          }
        }
        t.accum(xn, dx);
      }
      if (gn >= 0) {
        Tensor dg = Tensor::zeros(gshape);
        for (int64_t r = 0; r < rows; ++r)
          for (int j = 0; j < n; ++j)
            dg.data[j] += static_cast<float>(static_cast<double>(g.data[r * n + j]) * xh[r * n + j]);
        t.accum(gn, dg);
      }
      if (bn >= 0) {
        Tensor db = Tensor::zeros(bshape);
        for (int64_t r = 0; r < rows; ++r)
          for (int j = 0; j < n; ++j) db.data[j] += g.data[r * n + j];
        t.accum(bn, db);
      }
    });
  }

  // tanh-approximation GELU.
  Tensor gelu(const Tensor& x) {
    Tensor out = Tensor::zeros(x.shape);
    for (size_t i = 0; i < x.data.size(); ++i) {
      double v = x.data[i];
      double u = detail::kGeluC * (v + detail::kGeluA * v * v * v);
      out.data[i] = static_cast<float>(0.5 * v * (1.0 + std::tanh(u)));
    }
    check_finite(out, "gelu");
    if (!will_track({x.node})) return out;
    return track(std::move(out), [xn = x.node, xv = x](Tape& t, const Tensor& g) {
      Tensor dx = Tensor::zeros(xv.shape);
      for (size_t i = 0; i < xv.data.size(); ++i) {
        double v = xv.data[i];
        double u = detail::kGeluC * (v + detail::kGeluA * v * v * v);
        double th = std::tanh(u);
        double du = detail::kGeluC * (1.0 + 3.0 * detail::kGeluA * v * v);
        double grad = 0.5 * (1.0 + th) + 0.5 * v * (1.0 - th * th) * du;
        dx.data[i] = static_cast<float>(grad * g.data[i]);
      }
      t.accum(xn, dx);
    });
  }

  Tensor concat_rows(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ShapeError("concat_rows: no parts");
    int n = parts[0].cols();
    int total = 0;
    bool tracked = false;
    for (const auto& p : parts) {
      if (p.cols() != n)
        throw ShapeError("concat_rows: column mismatch " + Tensor::shape_string(p.shape));
      total += p.rows();
      tracked |= (p.node >= 0);
    }
    Tensor out = Tensor::zeros({total, n});
    int r = 0;
    for (const auto& p : parts) {
      std::copy(p.data.begin(), p.data.end(), out.data.begin() + static_cast<size_t>(r) * n);
      r += p.rows();
    }
    if (!recording_ || !tracked) return out;
    std::vector<std::pair<int, int>> spans;  // (node, rows)
    spans.reserve(parts.size());
    for (const auto& p : parts) spans.emplace_back(p.node, p.rows());
    return track(std::move(out), [spans = std::move(spans), n](Tape& t, const Tensor& g) {
      int r = 0;
      for (const auto& [node, m] : spans) {
        if (node >= 0) {
          Tensor dp = Tensor::zeros({m, n});
          std::copy(g.data.begin() + static_cast<size_t>(r) * n,
                    g.data.begin() + static_cast<size_t>(r + m) * n, dp.data.begin());
          t.accum(node, dp);
        }
        r += m;
      }
    });
  }

  Tensor tile_rows(const Tensor& a, int repeats) {
    a.require_2d();
    if (repeats < 1) throw ParamError("tile_rows: repeats must be >= 1");
    int m = a.shape[0], n = a.shape[1];
    Tensor out = Tensor::zeros({repeats * m, n});
    for (int rep = 0; rep < repeats; ++rep)
      std::copy(a.data.begin(), a.data.end(),
                out.data.begin() + static_cast<size_t>(rep) * m * n);
    if (!will_track({a.node})) return out;
    return track(std::move(out), [an = a.node, m, n, repeats](Tape& t, const Tensor& g) {
      Tensor da = Tensor::zeros({m, n});
      for (int rep = 0; rep < repeats; ++rep)
        for (int64_t i = 0; i < static_cast<int64_t>(m) * n; ++i)
          da.data[i] += g.data[static_cast<size_t>(rep) * m * n + i];
      t.accum(an, da);
    });
  }

  Tensor gather_rows(const Tensor& a, const std::vector<int>& indices) {
    a.require_2d();
    int m = a.shape[0], n = a.shape[1];
    for (int idx : indices)
      if (idx < 0 || idx >= m)
        throw ShapeError("gather_rows: index " + std::to_string(idx) + " out of range for " +
                         Tensor::shape_string(a.shape));
    Tensor out = Tensor::zeros({static_cast<int>(indices.size()), n});
    for (size_t i = 0; i < indices.size(); ++i)
      std::copy(a.data.begin() + static_cast<size_t>(indices[i]) * n,
                a.data.begin() + static_cast<size_t>(indices[i] + 1) * n,
                out.data.begin() + i * n);
    if (!will_track({a.node})) return out;
    return track(std::move(out), [an = a.node, idx = indices, m, n](Tape& t, const Tensor& g) {
      Tensor da = Tensor::zeros({m, n});
      for (size_t i = 0; i < idx.size(); ++i)
        for (int j = 0; j < n; ++j)
          da.data[static_cast<size_t>(idx[i]) * n + j] += g.data[i * n + j];
      t.accum(an, da);
    });
  }

  // Rearranges one of Q/K/V (`which` = 0/1/2) out of a packed QKV matrix
  // [B·T × 3D] into head-major layout [B·H·T × D/H].
  Tensor split_heads(const Tensor& qkv, int batch, int tokens, int heads, int which) {
    qkv.require_2d();
    if (which < 0 || which > 2) throw ParamError("split_heads: which must be 0, 1 or 2");
    if (qkv.shape[0] != batch * tokens || qkv.shape[1] % 3 != 0)
      throw ShapeError("split_heads: bad qkv shape " + Tensor::shape_string(qkv.shape));
    int d = qkv.shape[1] / 3;
    if (d % heads != 0) throw ShapeError("split_heads: embed dim not divisible by heads");
    int dh = d / heads;
    Tensor out = Tensor::zeros({batch * heads * tokens, dh});
    const int cols = qkv.shape[1];
    for (int b = 0; b < batch; ++b)
      for (int h = 0; h < heads; ++h)
        for (int ti = 0; ti < tokens; ++ti) {
          const size_t src = (static_cast<size_t>(b) * tokens + ti) * cols + which * d + h * dh;
          const size_t dst = ((static_cast<size_t>(b) * heads + h) * tokens + ti) * dh;
          std::copy(qkv.data.begin() + src, qkv.data.begin() + src + dh, out.data.begin() + dst);
        }
    if (!will_track({qkv.node})) return out;
    return track(std::move(out), [qn = qkv.node, batch, tokens, heads, which, d, dh,
                                  cols](Tape& t, const Tensor& g) {
      Tensor dq = Tensor::zeros({batch * tokens, cols});
      for (int b = 0; b < batch; ++b)
        for (int h = 0; h < heads; ++h)
          for (int ti = 0; ti < tokens; ++ti) {
            const size_t dst = (static_cast<size_t>(b) * tokens + ti) * cols + which * d + h * dh;
            const size_t src = ((static_cast<size_t>(b) * heads + h) * tokens + ti) * dh;
            for (int j = 0; j < dh; ++j) dq.data[dst + j] += g.data[src + j];
          }
      t.accum(qn, dq);
    });
  }

  // Inverse of split_heads: [B·H·T × dh] -> [B·T × H·dh].
  Tensor merge_heads(const Tensor& x, int batch, int tokens, int heads) {
    x.require_2d();
    int dh = x.shape[1];
    if (x.shape[0] != batch * heads * tokens)
      throw ShapeError("merge_heads: bad shape " + Tensor::shape_string(x.shape));
    int d = heads * dh;
    Tensor out = Tensor::zeros({batch * tokens, d});
    for (int b = 0; b < batch; ++b)
      for (int h = 0; h < heads; ++h)
        for (int ti = 0; ti < tokens; ++ti) {
          const size_t src = ((static_cast<size_t>(b) * heads + h) * tokens + ti) * dh;
          const size_t dst = (static_cast<size_t>(b) * tokens + ti) * d + h * dh;
          std::copy(x.data.begin() + src, x.data.begin() + src + dh, out.data.begin() + dst);
        }
    if (!will_track({x.node})) return out;
    return track(std::move(out), [xn = x.node, batch, tokens, heads, dh, d](Tape& t, const Tensor& g) {
      Tensor dx = Tensor::zeros({batch * heads * tokens, dh});
      for (int b = 0; b < batch; ++b)
        for (int h = 0; h < heads; ++h)
          for (int ti = 0; ti < tokens; ++ti) {
            const size_t dst = ((static_cast<size_t>(b) * heads + h) * tokens + ti) * dh;
            const size_t src = (static_cast<size_t>(b) * tokens + ti) * d + h * dh;
            for (int j = 0; j < dh; ++j) dx.data[dst + j] += g.data[src + j];
          }
      t.accum(xn, dx);
    });
  }

  Tensor sum(const Tensor& a) {
    double acc = 0.0;
    for (float v : a.data) acc += v;
    Tensor out = Tensor::scalar(static_cast<float>(acc));
    check_finite(out, "sum");
    if (!will_track({a.node})) return out;
    return track(std::move(out), [an = a.node, shape = a.shape](Tape& t, const Tensor& g) {
      t.accum(an, Tensor::full(shape, g.data[0]));
    });
  }

  Tensor mean(const Tensor& a) {
    double acc = 0.0;
    for (float v : a.data) acc += v;
    Tensor out = Tensor::scalar(static_cast<float>(acc / static_cast<double>(a.numel())));
    check_finite(out, "mean");
    if (!will_track({a.node})) return out;
    int64_t n = a.numel();
    return track(std::move(out), [an = a.node, shape = a.shape, n](Tape& t, const Tensor& g) {
      t.accum(an, Tensor::full(shape, static_cast<float>(g.data[0] / static_cast<double>(n))));
    });
  }

  static void check_finite(const Tensor& out, const char* op) {
    if (checked_mode() && !out.all_finite())
      throw NumericError(std::string(op) + ": non-finite output");
  }

 private:
  struct Node {
    std::vector<int> shape;
    bool is_leaf;
  };
  struct Record {
    int out_node;
    BackFn back;
  };

  int new_node(const std::vector<int>& shape, bool is_leaf) {
    nodes_.push_back(Node{shape, is_leaf});
    return static_cast<int>(nodes_.size()) - 1;
  }

  void check_groups(const Tensor& a, const Tensor& b, int groups, bool b_transposed) const {
    a.require_2d();
    b.require_2d();
    if (groups < 1) throw ParamError("bmm: groups must be >= 1");
    if (a.shape[0] % groups != 0 || b.shape[0] % groups != 0)
      throw ShapeError("bmm: rows not divisible by group count " + std::to_string(groups) + ": " +
                       Tensor::shape_string(a.shape) + ", " + Tensor::shape_string(b.shape));
    int inner_b = b_transposed ? b.shape[1] : b.shape[0] / groups;
    if (a.shape[1] != inner_b)
      throw ShapeError("matmul: inner dimensions do not match: " + Tensor::shape_string(a.shape) +
                       " vs " + Tensor::shape_string(b.shape));
  }

  bool recording_;
  std::vector<Node> nodes_;
  std::vector<Record> records_;
  std::vector<Tensor> grads_;
};

}  // namespace icevit
