#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "catnet/rng.hpp"
#include "catnet/tensor.hpp"

// Differentiable primitives. Every op validates shapes, computes the forward
// value, checks the result for NaN/Inf, and (when the tape has gradients
// enabled and any input requires them) records a backward rule that
// accumulates into the inputs' grad buffers.

namespace catnet::ad {

namespace detail {

inline bool wants_grad(const Tape& tape, const Tensor& a) {
  return tape.grad_enabled() && a.requires_grad();
}

inline bool wants_grad(const Tape& tape, const Tensor& a, const Tensor& b) {
  return tape.grad_enabled() && (a.requires_grad() || b.requires_grad());
}

}  // namespace detail

inline Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b) {
  require(a.cols() == b.rows(), "matmul: inner dimensions disagree (" +
                                    std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) +
                                    ")");
  const int m = a.rows(), k = a.cols(), n = b.cols();
  const bool needs = detail::wants_grad(tape, a, b);
  Tensor out = Tensor::zeros(m, n, needs);

  {
    const double* A = a.data().data();
    const double* B = b.data().data();
    double* C = out.data().data();
    for (int i = 0; i < m; ++i) {
      const double* arow = A + static_cast<std::size_t>(i) * k;
      double* crow = C + static_cast<std::size_t>(i) * n;
      for (int p = 0; p < k; ++p) {
        const double apv = arow[p];
        if (apv == 0.0) continue;  // bag-of-words inputs are mostly zeros
        const double* brow = B + static_cast<std::size_t>(p) * n;
        for (int j = 0; j < n; ++j) crow[j] += apv * brow[j];
      }
    }
  }
  check_finite(out, "matmul");

  if (needs) {
    tape.record([a, b, out]() {
      const int m = a.rows(), k = a.cols(), n = b.cols();
      const double* G = out.grad().data();
      if (a.requires_grad()) {
        // dA = dC * B^T, computed as row-by-row dots so both operands stream.
        double* dA = a.grad().data();
        const double* B = b.data().data();
        for (int i = 0; i < m; ++i) {
          const double* grow = G + static_cast<std::size_t>(i) * n;
          double* darow = dA + static_cast<std::size_t>(i) * k;
          for (int p = 0; p < k; ++p) {
            const double* brow = B + static_cast<std::size_t>(p) * n;
            double acc = 0.0;
            for (int j = 0; j < n; ++j) acc += grow[j] * brow[j];
            darow[p] += acc;
          }
        }
      }
      if (b.requires_grad()) {
        // dB = A^T * dC with the same zero-skip as the forward kernel.
        double* dB = b.grad().data();
        const double* A = a.data().data();
        for (int i = 0; i < m; ++i) {
          const double* arow = A + static_cast<std::size_t>(i) * k;
          const double* grow = G + static_cast<std::size_t>(i) * n;
          for (int p = 0; p < k; ++p) {
            const double apv = arow[p];
            if (apv == 0.0) continue;
            double* dbrow = dB + static_cast<std::size_t>(p) * n;
            for (int j = 0; j < n; ++j) dbrow[j] += apv * grow[j];
          }
        }
      }
    });
  }
  return out;
}

namespace detail {

template <typename Fwd, typename Bwd>
Tensor binary_elementwise(Tape& tape, const Tensor& a, const Tensor& b, Fwd fwd, Bwd bwd,
                          const char* name) {
  require(a.rows() == b.rows() && a.cols() == b.cols(),
          std::string(name) + ": shape mismatch");
  const bool needs = wants_grad(tape, a, b);
  Tensor out = Tensor::zeros(a.rows(), a.cols(), needs);
  const std::size_t sz = a.size();
  for (std::size_t i = 0; i < sz; ++i) out.data()[i] = fwd(a.data()[i], b.data()[i]);
  check_finite(out, name);
  if (needs) {
    tape.record([a, b, out, bwd]() {
      const std::size_t sz = a.size();
      for (std::size_t i = 0; i < sz; ++i) {
        const double g = out.grad()[i];
        if (g == 0.0) continue;
        auto [da, db] = bwd(a.data()[i], b.data()[i], out.data()[i]);
        if (a.requires_grad()) a.grad()[i] += g * da;
        if (b.requires_grad()) b.grad()[i] += g * db;
      }
    });
  }
  return out;
}

template <typename Fwd, typename Bwd>
Tensor unary_elementwise(Tape& tape, const Tensor& a, Fwd fwd, Bwd bwd, const char* name) {
  const bool needs = wants_grad(tape, a);
  Tensor out = Tensor::zeros(a.rows(), a.cols(), needs);
  const std::size_t sz = a.size();
  for (std::size_t i = 0; i < sz; ++i) out.data()[i] = fwd(a.data()[i]);
  check_finite(out, name);
  if (needs) {
    tape.record([a, out, bwd]() {
      const std::size_t sz = a.size();
      for (std::size_t i = 0; i < sz; ++i) {
        a.grad()[i] += out.grad()[i] * bwd(a.data()[i], out.data()[i]);
      }
    });
  }
  return out;
}

}  // namespace detail

inline Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
  return detail::binary_elementwise(
      tape, a, b, [](double x, double y) { return x + y; },
      [](double, double, double) { return std::pair<double, double>{1.0, 1.0}; }, "add");
}

inline Tensor sub(Tape& tape, const Tensor& a, const Tensor& b) {
  return detail::binary_elementwise(
      tape, a, b, [](double x, double y) { return x - y; },
      [](double, double, double) { return std::pair<double, double>{1.0, -1.0}; }, "sub");
}

inline Tensor mul(Tape& tape, const Tensor& a, const Tensor& b) {
  return detail::binary_elementwise(
      tape, a, b, [](double x, double y) { return x * y; },
      [](double x, double y, double) { return std::pair<double, double>{y, x}; }, "mul");
}

inline Tensor div(Tape& tape, const Tensor& a, const Tensor& b) {
  return detail::binary_elementwise(
      tape, a, b, [](double x, double y) { return x / y; },
      [](double, double y, double o) { return std::pair<double, double>{1.0 / y, -o / y}; },
      "div");
}

inline Tensor scale(Tape& tape, const Tensor& a, double c) {
  return detail::unary_elementwise(
      tape, a, [c](double x) { return c * x; }, [c](double, double) { return c; }, "scale");
}

/// Multiply every entry by a learnable 1x1 scalar.
inline Tensor scale(Tape& tape, const Tensor& a, const Tensor& s) {
  require(s.rows() == 1 && s.cols() == 1, "scale: scalar operand must be 1x1");
  const bool needs = detail::wants_grad(tape, a, s);
  Tensor out = Tensor::zeros(a.rows(), a.cols(), needs);
  const double sv = s.data()[0];
  for (std::size_t i = 0; i < a.size(); ++i) out.data()[i] = sv * a.data()[i];
  check_finite(out, "scale");
  if (needs) {
    tape.record([a, s, out]() {
      const double sv = s.data()[0];
      double ds = 0.0;
      for (std::size_t i = 0; i < a.size(); ++i) {
        const double g = out.grad()[i];
        if (a.requires_grad()) a.grad()[i] += g * sv;
        ds += g * a.data()[i];
      }
      if (s.requires_grad()) s.grad()[0] += ds;
    });
  }
  return out;
}

inline Tensor exp(Tape& tape, const Tensor& a) {
  return detail::unary_elementwise(
      tape, a, [](double x) { return std::exp(x); }, [](double, double o) { return o; }, "exp");
}

inline Tensor sigmoid(Tape& tape, const Tensor& a) {
  return detail::unary_elementwise(
      tape, a,
      [](double x) { return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); },
      [](double, double o) { return o * (1.0 - o); }, "sigmoid");
}

/// max(x, slope*x). The subgradient at exactly 0 is the negative-slope
/// branch; finite-difference tests must keep an exclusion window around 0.
inline Tensor leaky_relu(Tape& tape, const Tensor& a, double slope) {
  require(slope >= 0.0, "leaky_relu: slope must be >= 0");
  return detail::unary_elementwise(
      tape, a, [slope](double x) { return x > 0.0 ? x : slope * x; },
      [slope](double x, double) { return x > 0.0 ? 1.0 : slope; }, "leaky_relu");
}

inline Tensor elu(Tape& tape, const Tensor& a) {
  return detail::unary_elementwise(
      tape, a, [](double x) { return x > 0.0 ? x : std::expm1(x); },
      [](double x, double o) { return x > 0.0 ? 1.0 : o + 1.0; }, "elu");
}

inline Tensor transpose(Tape& tape, const Tensor& a) {
  const bool needs = detail::wants_grad(tape, a);
  Tensor out = Tensor::zeros(a.cols(), a.rows(), needs);
  for (int r = 0; r < a.rows(); ++r)
    for (int c = 0; c < a.cols(); ++c) out.at(c, r) = a.at(r, c);
  if (needs) {
    tape.record([a, out]() {
      for (int r = 0; r < a.rows(); ++r)
        for (int c = 0; c < a.cols(); ++c)
          a.grad()[static_cast<std::size_t>(r) * a.cols() + c] +=
              out.grad()[static_cast<std::size_t>(c) * a.rows() + r];
    });
  }
  return out;
}

/// Rows [r0, r1) as a new tensor.
inline Tensor slice_rows(Tape& tape, const Tensor& a, int r0, int r1) {
  require(0 <= r0 && r0 < r1 && r1 <= a.rows(), "slice_rows: bad range");
  const int n = a.cols(), m = r1 - r0;
  const bool needs = detail::wants_grad(tape, a);
  Tensor out = Tensor::zeros(m, n, needs);
  std::copy(a.data().begin() + static_cast<std::size_t>(r0) * n,
            a.data().begin() + static_cast<std::size_t>(r1) * n, out.data().begin());
  if (needs) {
    tape.record([a, out, r0]() {
      const int n = a.cols();
      for (std::size_t i = 0; i < out.size(); ++i)
        a.grad()[static_cast<std::size_t>(r0) * n + i] += out.grad()[i];
    });
  }
  return out;
}

inline Tensor concat_cols(Tape& tape, const std::vector<Tensor>& parts) {
  require(!parts.empty(), "concat_cols: no inputs");
  const int m = parts[0].rows();
  int total = 0;
  bool needs = false;
  for (const Tensor& p : parts) {
    require(p.rows() == m, "concat_cols: row counts differ");
    total += p.cols();
    needs = needs || detail::wants_grad(tape, p);
  }
  Tensor out = Tensor::zeros(m, total, needs);
  int off = 0;
  for (const Tensor& p : parts) {
    for (int r = 0; r < m; ++r)
      std::copy(p.data().begin() + static_cast<std::size_t>(r) * p.cols(),
                p.data().begin() + static_cast<std::size_t>(r + 1) * p.cols(),
                out.data().begin() + static_cast<std::size_t>(r) * total + off);
    off += p.cols();
  }
  if (needs) {
    tape.record([parts, out, total]() {
      const int m = out.rows();
      int off = 0;
      for (const Tensor& p : parts) {
        if (p.requires_grad()) {
          for (int r = 0; r < m; ++r)
            for (int c = 0; c < p.cols(); ++c)
              p.grad()[static_cast<std::size_t>(r) * p.cols() + c] +=
                  out.grad()[static_cast<std::size_t>(r) * total + off + c];
        }
        off += p.cols();
      }
    });
  }
  return out;
}

/// out[e, :] = a[idx[e], :]
inline Tensor gather_rows(Tape& tape, const Tensor& a, const std::vector<int>& idx) {
  for (int i : idx) require(0 <= i && i < a.rows(), "gather_rows: index out of range");
  const int n = a.cols();
  const bool needs = detail::wants_grad(tape, a);
  Tensor out = Tensor::zeros(static_cast<int>(idx.size()), n, needs);
  for (std::size_t e = 0; e < idx.size(); ++e)
    std::copy(a.data().begin() + static_cast<std::size_t>(idx[e]) * n,
              a.data().begin() + static_cast<std::size_t>(idx[e] + 1) * n,
              out.data().begin() + e * n);
  if (needs) {
    tape.record([a, out, idx]() {
      const int n = a.cols();
      for (std::size_t e = 0; e < idx.size(); ++e)
        for (int c = 0; c < n; ++c)
          a.grad()[static_cast<std::size_t>(idx[e]) * n + c] += out.grad()[e * n + c];
    });
  }
  return out;
}

/// out[s, :] = sum over rows e with seg[e] == s. Segment ids must be
/// nondecreasing and within [0, n_segments).
inline Tensor segment_sum(Tape& tape, const Tensor& a, const std::vector<int>& seg,
                          int n_segments) {
  require(seg.size() == static_cast<std::size_t>(a.rows()), "segment_sum: one id per row");
  for (std::size_t e = 0; e < seg.size(); ++e) {
    require(0 <= seg[e] && seg[e] < n_segments, "segment_sum: segment id out of range");
    require(e == 0 || seg[e - 1] <= seg[e], "segment_sum: segment ids must be nondecreasing");
  }
  const int n = a.cols();
  const bool needs = detail::wants_grad(tape, a);
  Tensor out = Tensor::zeros(n_segments, n, needs);
  for (std::size_t e = 0; e < seg.size(); ++e) {
    const double* src = a.data().data() + e * n;
    double* dst = out.data().data() + static_cast<std::size_t>(seg[e]) * n;
    for (int c = 0; c < n; ++c) dst[c] += src[c];
  }
  check_finite(out, "segment_sum");
  if (needs) {
    tape.record([a, out, seg]() {
      const int n = a.cols();
      for (std::size_t e = 0; e < seg.size(); ++e) {
        const double* g = out.grad().data() + static_cast<std::size_t>(seg[e]) * n;
        double* da = a.grad().data() + e * n;
        for (int c = 0; c < n; ++c) da[c] += g[c];
      }
    });
  }
  return out;
}

/// out[e, 0] = sum of row e.
inline Tensor row_sum(Tape& tape, const Tensor& a) {
  const int n = a.cols();
  const bool needs = detail::wants_grad(tape, a);
  Tensor out = Tensor::zeros(a.rows(), 1, needs);
  for (int r = 0; r < a.rows(); ++r) {
    double acc = 0.0;
    const double* src = a.data().data() + static_cast<std::size_t>(r) * n;
    for (int c = 0; c < n; ++c) acc += src[c];
    out.data()[static_cast<std::size_t>(r)] = acc;
  }
  check_finite(out, "row_sum");
  if (needs) {
    tape.record([a, out]() {
      const int n = a.cols();
      for (int r = 0; r < a.rows(); ++r) {
        const double g = out.grad()[static_cast<std::size_t>(r)];
        if (g == 0.0) continue;
        double* da = a.grad().data() + static_cast<std::size_t>(r) * n;
        for (int c = 0; c < n; ++c) da[c] += g;
      }
    });
  }
  return out;
}

/// out[e, :] = a[e, :] * w[e] with w an (rows x 1) column.
inline Tensor rowscale(Tape& tape, const Tensor& a, const Tensor& w) {
  require(w.rows() == a.rows() && w.cols() == 1, "rowscale: weight must be rows x 1");
  const int n = a.cols();
  const bool needs = detail::wants_grad(tape, a, w);
  Tensor out = Tensor::zeros(a.rows(), n, needs);
  for (int r = 0; r < a.rows(); ++r) {
    const double wv = w.data()[static_cast<std::size_t>(r)];
    const double* src = a.data().data() + static_cast<std::size_t>(r) * n;
    double* dst = out.data().data() + static_cast<std::size_t>(r) * n;
    for (int c = 0; c < n; ++c) dst[c] = wv * src[c];
  }
  check_finite(out, "rowscale");
  if (needs) {
    tape.record([a, w, out]() {
      const int n = a.cols();
      for (int r = 0; r < a.rows(); ++r) {
        const double wv = w.data()[static_cast<std::size_t>(r)];
        const double* g = out.grad().data() + static_cast<std::size_t>(r) * n;
        const double* av = a.data().data() + static_cast<std::size_t>(r) * n;
        if (a.requires_grad()) {
          double* da = a.grad().data() + static_cast<std::size_t>(r) * n;
          for (int c = 0; c < n; ++c) da[c] += g[c] * wv;
        }
        if (w.requires_grad()) {
          double acc = 0.0;
          for (int c = 0; c < n; ++c) acc += g[c] * av[c];
          w.grad()[static_cast<std::size_t>(r)] += acc;
        }
      }
    });
  }
  return out;
}

/// out[e] = e_self[src[e]] + e_neigh[dst[e]]: the per-edge attention logit
/// assembled from the two node-level projections, fused so no gathered
/// intermediates are materialized.
inline Tensor edge_logit_sum(Tape& tape, const Tensor& e_self, const Tensor& e_neigh,
                             const std::vector<int>& src, const std::vector<int>& dst) {
  require(e_self.cols() == 1 && e_neigh.cols() == 1, "edge_logit_sum: node columns expected");
  require(e_self.rows() == e_neigh.rows(), "edge_logit_sum: row counts differ");
  require(src.size() == dst.size(), "edge_logit_sum: src/dst lengths differ");
  const int n = e_self.rows();
  const bool needs = detail::wants_grad(tape, e_self, e_neigh);
  Tensor out = Tensor::zeros(static_cast<int>(src.size()), 1, needs);
  for (std::size_t e = 0; e < src.size(); ++e) {
    require(0 <= src[e] && src[e] < n && 0 <= dst[e] && dst[e] < n,
            "edge_logit_sum: node id out of range");
    out.data()[e] = e_self.data()[static_cast<std::size_t>(src[e])] +
                    e_neigh.data()[static_cast<std::size_t>(dst[e])];
  }
  check_finite(out, "edge_logit_sum");
  if (needs) {
    tape.record([e_self, e_neigh, out, src, dst]() {
      for (std::size_t e = 0; e < src.size(); ++e) {
        const double g = out.grad()[e];
        if (e_self.requires_grad()) e_self.grad()[static_cast<std::size_t>(src[e])] += g;
        if (e_neigh.requires_grad()) e_neigh.grad()[static_cast<std::size_t>(dst[e])] += g;
      }
    });
  }
  return out;
}

/// out[src[e], :] += w[e] * values[dst[e], :] — the attention-weighted
/// neighborhood sum, fused so the gathered and row-scaled edge tensors are
/// never materialized. src must be nondecreasing (CSR slot order).
inline Tensor weighted_neighbor_sum(Tape& tape, const Tensor& values, const Tensor& w,
                                    const std::vector<int>& src, const std::vector<int>& dst,
                                    int n_segments) {
  require(w.cols() == 1 && w.rows() == static_cast<int>(src.size()),
          "weighted_neighbor_sum: one weight per edge slot");
  require(src.size() == dst.size(), "weighted_neighbor_sum: src/dst lengths differ");
  const int f = values.cols();
  const int n_rows = values.rows();
  const bool needs = detail::wants_grad(tape, values, w);
  Tensor out = Tensor::zeros(n_segments, f, needs);
  {
    const double* V = values.data().data();
    double* O = out.data().data();
    int prev = 0;
    for (std::size_t e = 0; e < src.size(); ++e) {
      require(prev <= src[e] && src[e] < n_segments && 0 <= dst[e] && dst[e] < n_rows,
              "weighted_neighbor_sum: bad edge slot");
      prev = src[e];
      const double we = w.data()[e];
      const double* vrow = V + static_cast<std::size_t>(dst[e]) * f;
      double* orow = O + static_cast<std::size_t>(src[e]) * f;
      for (int c = 0; c < f; ++c) orow[c] += we * vrow[c];
    }
  }
  check_finite(out, "weighted_neighbor_sum");
  if (needs) {
    tape.record([values, w, out, src, dst]() {
      const int f = values.cols();
      const double* G = out.grad().data();
      const double* V = values.data().data();
      for (std::size_t e = 0; e < src.size(); ++e) {
        const double* grow = G + static_cast<std::size_t>(src[e]) * f;
        const double* vrow = V + static_cast<std::size_t>(dst[e]) * f;
        if (values.requires_grad()) {
          const double we = w.data()[e];
          double* dvrow = values.grad().data() + static_cast<std::size_t>(dst[e]) * f;
          for (int c = 0; c < f; ++c) dvrow[c] += we * grow[c];
        }
        if (w.requires_grad()) {
          double acc = 0.0;
          for (int c = 0; c < f; ++c) acc += grow[c] * vrow[c];
          w.grad()[e] += acc;
        }
      }
    });
  }
  return out;
}

/// Softmax computed independently within each segment of an edge-aligned
/// column (rows x 1), stabilized by per-segment max subtraction. Every
/// segment in [0, n_segments) must own at least one row.
inline Tensor segment_softmax(Tape& tape, const Tensor& logits, const std::vector<int>& seg,
                              int n_segments) {
  require(logits.cols() == 1, "segment_softmax: logits must be a column");
  require(seg.size() == static_cast<std::size_t>(logits.rows()),
          "segment_softmax: one segment id per logit");
  // Nondecreasing ids stepping by at most one, starting at 0 and ending at
  // n_segments - 1, is exactly "every segment in [0, n) is nonempty".
  require(!seg.empty() || n_segments == 0, "segment_softmax: empty segment 0");
  if (!seg.empty()) {
    require(seg.front() == 0, "segment_softmax: empty segment before the first id");
    require(seg.back() == n_segments - 1, "segment_softmax: empty trailing segment");
    for (std::size_t e = 1; e < seg.size(); ++e)
      require(seg[e] == seg[e - 1] || seg[e] == seg[e - 1] + 1,
              "segment_softmax: ids must be nondecreasing with no empty segment");
  }
  for (double v : logits.data())
    require(std::isfinite(v), "segment_softmax: non-finite logit");

  const bool needs = detail::wants_grad(tape, logits);
  Tensor out = Tensor::zeros(logits.rows(), 1, needs);
  const std::vector<double>& x = logits.data();
  std::vector<double>& y = out.data();
  std::size_t lo = 0;
  while (lo < seg.size()) {
    std::size_t hi = lo;
    while (hi < seg.size() && seg[hi] == seg[lo]) ++hi;
    double mx = x[lo];
    for (std::size_t e = lo + 1; e < hi; ++e) mx = std::max(mx, x[e]);
    double z = 0.0;
    for (std::size_t e = lo; e < hi; ++e) {
      y[e] = std::exp(x[e] - mx);
      z += y[e];
    }
    for (std::size_t e = lo; e < hi; ++e) y[e] /= z;
    lo = hi;
  }
  check_finite(out, "segment_softmax");

  if (needs) {
    tape.record([logits, out, seg]() {
      // dx_e = y_e * (dy_e - sum_k dy_k * y_k) within the segment.
      const std::vector<double>& y = out.data();
      const std::vector<double>& dy = out.grad();
      std::vector<double>& dx = logits.grad();
      std::size_t lo = 0;
      while (lo < seg.size()) {
        std::size_t hi = lo;
        while (hi < seg.size() && seg[hi] == seg[lo]) ++hi;
        double t = 0.0;
        for (std::size_t e = lo; e < hi; ++e) t += dy[e] * y[e];
        for (std::size_t e = lo; e < hi; ++e) dx[e] += y[e] * (dy[e] - t);
        lo = hi;
      }
    });
  }
  return out;
}

/// Inverted dropout: surviving entries are scaled by 1/(1-p) at train time,
/// identity at eval time. The mask comes from the caller-owned RNG stream.
inline Tensor dropout(Tape& tape, const Tensor& a, double p, Rng& rng, bool train) {
  require(p >= 0.0 && p < 1.0, "dropout: rate must be in [0, 1)");
  if (!train || p == 0.0) return a;
  const bool needs = detail::wants_grad(tape, a);
  Tensor out = Tensor::zeros(a.rows(), a.cols(), needs);
  auto mask = std::make_shared<std::vector<double>>(a.size());
  const double keep_scale = 1.0 / (1.0 - p);
  for (std::size_t i = 0; i < a.size(); ++i) {
    (*mask)[i] = rng.uniform() >= p ? keep_scale : 0.0;
    out.data()[i] = a.data()[i] * (*mask)[i];
  }
  check_finite(out, "dropout");
  if (needs) {
    tape.record([a, out, mask]() {
      for (std::size_t i = 0; i < a.size(); ++i) a.grad()[i] += out.grad()[i] * (*mask)[i];
    });
  }
  return out;
}

/// Row-wise log softmax, stabilized.
inline Tensor log_softmax_rows(Tape& tape, const Tensor& a) {
  const int n = a.cols();
  require(n >= 1, "log_softmax_rows: empty rows");
  const bool needs = detail::wants_grad(tape, a);
  Tensor out = Tensor::zeros(a.rows(), n, needs);
  for (int r = 0; r < a.rows(); ++r) {
    const double* x = a.data().data() + static_cast<std::size_t>(r) * n;
    double* y = out.data().data() + static_cast<std::size_t>(r) * n;
    double mx = x[0];
    for (int c = 1; c < n; ++c) mx = std::max(mx, x[c]);
    double z = 0.0;
    for (int c = 0; c < n; ++c) z += std::exp(x[c] - mx);
    const double lz = std::log(z) + mx;
    for (int c = 0; c < n; ++c) y[c] = x[c] - lz;
  }
  check_finite(out, "log_softmax_rows");
  if (needs) {
    tape.record([a, out]() {
      const int n = a.cols();
      for (int r = 0; r < a.rows(); ++r) {
        const double* y = out.data().data() + static_cast<std::size_t>(r) * n;
        const double* dy = out.grad().data() + static_cast<std::size_t>(r) * n;
        double* dx = a.grad().data() + static_cast<std::size_t>(r) * n;
        double gsum = 0.0;
        for (int c = 0; c < n; ++c) gsum += dy[c];
        for (int c = 0; c < n; ++c) dx[c] += dy[c] - std::exp(y[c]) * gsum;
      }
    });
  }
  return out;
}

/// Mean negative log-likelihood over the masked rows.
inline Tensor nll_masked(Tape& tape, const Tensor& logp, const std::vector<int>& labels,
                         const std::vector<bool>& mask) {
  require(labels.size() == static_cast<std::size_t>(logp.rows()), "nll_masked: one label per row");
  require(mask.size() == static_cast<std::size_t>(logp.rows()), "nll_masked: one flag per row");
  int m = 0;
  double acc = 0.0;
  for (int r = 0; r < logp.rows(); ++r) {
    if (!mask[static_cast<std::size_t>(r)]) continue;
    const int lab = labels[static_cast<std::size_t>(r)];
    require(0 <= lab && lab < logp.cols(), "nll_masked: label out of range");
    acc -= logp.at(r, lab);
    ++m;
  }
  require(m > 0, "nll_masked: empty mask");
  const bool needs = detail::wants_grad(tape, logp);
  Tensor out = Tensor::scalar(acc / m, needs);
  check_finite(out, "nll_masked");
  if (needs) {
    tape.record([logp, out, labels, mask, m]() {
      const double g = out.grad()[0] / m;
      for (int r = 0; r < logp.rows(); ++r) {
        if (!mask[static_cast<std::size_t>(r)]) continue;
        logp.grad()[static_cast<std::size_t>(r) * logp.cols() + labels[static_cast<std::size_t>(r)]] -= g;
      }
    });
  }
  return out;
}

/// sum((pred - target)^2) against a constant target.
inline Tensor sq_err_sum(Tape& tape, const Tensor& pred, const std::vector<double>& target) {
  require(pred.size() == target.size(), "sq_err_sum: size mismatch");
  const bool needs = detail::wants_grad(tape, pred);
  double acc = 0.0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    const double d = pred.data()[i] - target[i];
    acc += d * d;
  }
  Tensor out = Tensor::scalar(acc, needs);
  check_finite(out, "sq_err_sum");
  if (needs) {
    tape.record([pred, out, target]() {
      const double g = out.grad()[0];
      for (std::size_t i = 0; i < target.size(); ++i)
        pred.grad()[i] += g * 2.0 * (pred.data()[i] - target[i]);
    });
  }
  return out;
}

inline Tensor sum_squares(Tape& tape, const Tensor& a) {
  const bool needs = detail::wants_grad(tape, a);
  double acc = 0.0;
  for (double v : a.data()) acc += v * v;
  Tensor out = Tensor::scalar(acc, needs);
  check_finite(out, "sum_squares");
  if (needs) {
    tape.record([a, out]() {
      const double g = out.grad()[0];
      for (std::size_t i = 0; i < a.size(); ++i) a.grad()[i] += g * 2.0 * a.data()[i];
    });
  }
  return out;
}

inline Tensor sum_all(Tape& tape, const Tensor& a) {
  const bool needs = detail::wants_grad(tape, a);
  double acc = 0.0;
  for (double v : a.data()) acc += v;
  Tensor out = Tensor::scalar(acc, needs);
  check_finite(out, "sum_all");
  if (needs) {
    tape.record([a, out]() {
      const double g = out.grad()[0];
      for (std::size_t i = 0; i < a.size(); ++i) a.grad()[i] += g;
    });
  }
  return out;
}

}  // namespace catnet::ad
