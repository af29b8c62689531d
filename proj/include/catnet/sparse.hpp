#pragma once

#include <memory>
#include <vector>

#include "catnet/ops.hpp"

namespace catnet::ad {

/// CSR view of a constant feature matrix. Bag-of-words inputs are ~99%
/// zeros; streaming the dense array through the first-layer matmuls
/// dominates the epoch time otherwise. Features never require gradients,
/// so only the nonzero values are carried.
struct SparseFeatures {
  int rows = 0;
  int cols = 0;
  std::vector<int> offsets;  // rows + 1
  std::vector<int> col_idx;
  std::vector<double> values;

  std::size_t nnz() const { return values.size(); }

  static SparseFeatures from_dense(const Tensor& dense) {
    SparseFeatures sp;
    sp.rows = dense.rows();
    sp.cols = dense.cols();
    sp.offsets.assign(static_cast<std::size_t>(sp.rows) + 1, 0);
    for (int r = 0; r < sp.rows; ++r) {
      for (int c = 0; c < sp.cols; ++c) {
        const double v = dense.at(r, c);
        if (v != 0.0) {
          sp.col_idx.push_back(c);
          sp.values.push_back(v);
        }
      }
      sp.offsets[static_cast<std::size_t>(r) + 1] = static_cast<int>(sp.values.size());
    }
    return sp;
  }

  double density() const {
    const std::size_t total = static_cast<std::size_t>(rows) * cols;
    return total == 0 ? 1.0 : static_cast<double>(nnz()) / static_cast<double>(total);
  }
};

/// Inverted dropout over the stored nonzeros (zeros stay zero either way).
/// Identity at eval time.
inline SparseFeatures sparse_dropout(const SparseFeatures& sp, double p, Rng& rng, bool train) {
  require(p >= 0.0 && p < 1.0, "sparse_dropout: rate must be in [0, 1)");
  if (!train || p == 0.0) return sp;
  SparseFeatures out = sp;
  const double keep_scale = 1.0 / (1.0 - p);
  for (double& v : out.values) v = rng.uniform() >= p ? v * keep_scale : 0.0;
  return out;
}

/// out = sp * w, with w a (sp.cols x F) dense matrix. Iterates only the
/// stored nonzeros; the backward rule accumulates into w alone.
inline Tensor sparse_matmul(Tape& tape, const std::shared_ptr<const SparseFeatures>& sp,
                            const Tensor& w) {
  require(sp != nullptr, "sparse_matmul: null operand");
  require(sp->cols == w.rows(), "sparse_matmul: inner dimensions disagree");
  const int f = w.cols();
  const bool needs = tape.grad_enabled() && w.requires_grad();
  Tensor out = Tensor::zeros(sp->rows, f, needs);
  {
    const double* W = w.data().data();
    double* O = out.data().data();
    for (int r = 0; r < sp->rows; ++r) {
      double* orow = O + static_cast<std::size_t>(r) * f;
      for (int k = sp->offsets[static_cast<std::size_t>(r)];
           k < sp->offsets[static_cast<std::size_t>(r) + 1]; ++k) {
        const double v = sp->values[static_cast<std::size_t>(k)];
        if (v == 0.0) continue;  // dropped by sparse_dropout
        const double* wrow =
            W + static_cast<std::size_t>(sp->col_idx[static_cast<std::size_t>(k)]) * f;
        for (int c = 0; c < f; ++c) orow[c] += v * wrow[c];
      }
    }
  }
  check_finite(out, "sparse_matmul");
  if (needs) {
    tape.record([sp, w, out]() {
      const int f = w.cols();
      const double* G = out.grad().data();
      double* dW = w.grad().data();
      for (int r = 0; r < sp->rows; ++r) {
        const double* grow = G + static_cast<std::size_t>(r) * f;
        for (int k = sp->offsets[static_cast<std::size_t>(r)];
             k < sp->offsets[static_cast<std::size_t>(r) + 1]; ++k) {
          const double v = sp->values[static_cast<std::size_t>(k)];
          if (v == 0.0) continue;
          double* dwrow =
              dW + static_cast<std::size_t>(sp->col_idx[static_cast<std::size_t>(k)]) * f;
          for (int c = 0; c < f; ++c) dwrow[c] += v * grow[c];
        }
      }
    });
  }
  return out;
}

}  // namespace catnet::ad
