#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "catnet/config.hpp"
#include "catnet/graph.hpp"
#include "catnet/ops.hpp"

namespace catnet {

/// Per-forward output of an intervention: one structural score per
/// edge slot (aligned with EdgeIndex) plus the differentiable loss that
/// trains the score generator.
struct InterventionScores {
  ad::Tensor edge_scores;  // E x 1
  ad::Tensor aux_loss;     // 1 x 1, constant zero for FS
};

/// Learnable pairwise structural scores over the observed edge slots.
///
/// MF: score(i,j) = <V_i, V_j>, trained to reconstruct adjacency over the
///     observed edges (target 1) plus an equal number of uniformly sampled
///     non-edges per epoch (target 0).
/// SC: score(i,j) = <V_i, V_j>, trained so each node's adjacency row is
///     self-expressed by its neighborhood: for every slot (i,j),
///     (A_ij - sum_{k in N_i} <V_i,V_k> A_ik)^2, with A = 1 on stored slots.
/// FS: cosine similarity of the raw input features, precomputed, constant.
class Intervention {
 public:
  InterventionKind kind = InterventionKind::MF;
  ad::Tensor V;  // N x c_dim, learnable (MF/SC only)

  static Intervention make(InterventionKind kind, const Graph& g, int c_dim, Rng& init_rng) {
    Intervention iv;
    iv.kind = kind;
    if (kind == InterventionKind::FS) {
      iv.fs_scores_ = cosine_edge_scores(g);
      return iv;
    }
    ad::require(c_dim >= 1, "Intervention: c_dim must be >= 1");
    iv.V = ad::Tensor::glorot(g.n_nodes, c_dim, init_rng);
    // Positive training pairs for MF: each undirected non-self edge once.
    for (std::size_t e = 0; e < g.edge_index.size(); ++e) {
      const int u = g.edge_index.src[e], v = g.edge_index.dst[e];
      if (u < v) {
        iv.pos_src_.push_back(u);
        iv.pos_dst_.push_back(v);
      }
    }
    return iv;
  }

  /// Structural score per edge slot; `with_aux` additionally builds the
  /// auxiliary loss (train passes only). MF resamples its negative pairs
  /// from `neg_rng` on every call with aux, i.e. once per epoch.
  InterventionScores compute(ad::Tape& tape, const Graph& g, Rng& neg_rng, bool with_aux) {
    InterventionScores out;
    if (kind == InterventionKind::FS) {
      out.edge_scores = ad::Tensor::from_data(static_cast<int>(fs_scores_.size()), 1, fs_scores_);
      out.aux_loss = ad::Tensor::scalar(0.0);
      return out;
    }

    ad::Tensor vs = ad::gather_rows(tape, V, g.edge_index.src);
    ad::Tensor vd = ad::gather_rows(tape, V, g.edge_index.dst);
    out.edge_scores = ad::row_sum(tape, ad::mul(tape, vs, vd));

    if (!with_aux) {
      out.aux_loss = ad::Tensor::scalar(0.0);
      return out;
    }

    if (kind == InterventionKind::MF) {
      ad::Tensor pos = pair_products(tape, pos_src_, pos_dst_);
      ad::Tensor loss =
          ad::sq_err_sum(tape, pos, std::vector<double>(pos_src_.size(), 1.0));
      std::vector<int> neg_src, neg_dst;
      sample_non_edges(g, neg_rng, static_cast<int>(pos_src_.size()), neg_src, neg_dst);
      if (!neg_src.empty()) {
        ad::Tensor neg = pair_products(tape, neg_src, neg_dst);
        ad::Tensor neg_loss = ad::sq_err_sum(tape, neg, std::vector<double>(neg_src.size(), 0.0));
        loss = ad::add(tape, loss, neg_loss);
      }
      out.aux_loss = loss;
    } else {  // SC
      // recon_i = sum_{k in N_i} <V_i, V_k>; every stored slot has A = 1,
      // so the inner sum collapses to a segment sum of the slot scores.
      ad::Tensor recon = ad::segment_sum(tape, out.edge_scores, g.edge_index.src, g.n_nodes);
      ad::Tensor per_slot = ad::gather_rows(tape, recon, g.edge_index.src);
      out.aux_loss =
          ad::sq_err_sum(tape, per_slot, std::vector<double>(g.edge_index.size(), 1.0));
    }
    return out;
  }

  bool learnable() const { return kind != InterventionKind::FS; }

 private:
  std::vector<int> pos_src_, pos_dst_;
  std::vector<double> fs_scores_;

  ad::Tensor pair_products(ad::Tape& tape, const std::vector<int>& a,
                           const std::vector<int>& b) {
    ad::Tensor va = ad::gather_rows(tape, V, a);
    ad::Tensor vb = ad::gather_rows(tape, V, b);
    return ad::row_sum(tape, ad::mul(tape, va, vb));
  }

  /// Uniform non-edge pairs (u != w, w not in N_u). Dense graphs may not
  /// have `count` of them; gives up after a bounded number of rejections.
  static void sample_non_edges(const Graph& g, Rng& rng, int count, std::vector<int>& src,
                               std::vector<int>& dst) {
    long long attempts = 0;
    const long long max_attempts = 100LL * count + 1000;
    while (static_cast<int>(src.size()) < count && attempts < max_attempts) {
      ++attempts;
      const int u = rng.uniform_int(g.n_nodes);
      const int w = rng.uniform_int(g.n_nodes);
      const auto begin = g.neighbors.begin() + g.offsets[u];
      const auto end = g.neighbors.begin() + g.offsets[u + 1];
      if (std::binary_search(begin, end, w)) continue;  // self-loops make u==w adjacent
      src.push_back(u);
      dst.push_back(w);
    }
  }

  static std::vector<double> cosine_edge_scores(const Graph& g) {
    const int d = g.feat_dim();
    std::vector<double> norms(static_cast<std::size_t>(g.n_nodes));
    for (int i = 0; i < g.n_nodes; ++i) {
      double acc = 0.0;
      for (int c = 0; c < d; ++c) acc += g.features.at(i, c) * g.features.at(i, c);
      norms[static_cast<std::size_t>(i)] = std::sqrt(acc);
    }
    std::vector<double> scores(g.edge_index.size(), 0.0);
    for (std::size_t e = 0; e < g.edge_index.size(); ++e) {
      const int u = g.edge_index.src[e], v = g.edge_index.dst[e];
      const double nu = norms[static_cast<std::size_t>(u)], nv = norms[static_cast<std::size_t>(v)];
      if (nu == 0.0 || nv == 0.0) continue;  // zero-norm rows score 0
      double dot = 0.0;
      for (int c = 0; c < d; ++c) dot += g.features.at(u, c) * g.features.at(v, c);
      scores[e] = dot / (nu * nv);
    }
    return scores;
  }
};

}  // namespace catnet
