#pragma once

#include <utility>
#include <vector>

#include "catnet/config.hpp"
#include "catnet/graph.hpp"
#include "catnet/ops.hpp"

namespace catnet {

/// Parameters of one conjoint-attention head.
struct CALayerParams {
  ad::Tensor W;        // d_out x d_in feature map
  ad::Tensor a;        // 2*d_out x 1 attention vector, [a_self; a_neigh]
  ad::Tensor g_f;      // 1x1 significance logit for feature scores (implicit)
  ad::Tensor g_s;      // 1x1 significance logit for structural scores (implicit)
  ad::Tensor eps_raw;  // 1x1; the self-loop bonus is eps = sigmoid(eps_raw) in (0,1)
  Strategy strategy = Strategy::Implicit;
  double leaky_slope = 0.2;
  bool use_eps = true;

  static CALayerParams make(int d_in, int d_out, Strategy strategy, double leaky_slope,
                            bool use_eps, Rng& init_rng) {
    CALayerParams p;
    p.W = ad::Tensor::glorot(d_out, d_in, init_rng);
    p.a = ad::Tensor::glorot(2 * d_out, 1, init_rng);
    p.g_f = ad::Tensor::scalar(0.0, true);  // r_f = r_s = 0.5 at init
    p.g_s = ad::Tensor::scalar(0.0, true);
    p.eps_raw = ad::Tensor::scalar(0.0, true);  // eps = 0.5 at init
    p.strategy = strategy;
    p.leaky_slope = leaky_slope;
    p.use_eps = use_eps;
    return p;
  }

  int d_out() const { return W.rows(); }
  int d_in() const { return W.cols(); }
};

/// Per-slot attention values, aligned with the graph's EdgeIndex. Undefined
/// members were not produced by the strategy that ran.
struct AttentionScores {
  ad::Tensor f;
  ad::Tensor s;
  ad::Tensor alpha;
};

/// Feature-based attention: per-neighborhood softmax over
/// LeakyReLU(a^T [W h_i || W h_j]), evaluated as the split
/// (a_self . W h_i) + (a_neigh . W h_j) so cost stays O(N d + E).
/// Returns the scores and the transformed features W h (reused downstream).
struct FeatureAttention {
  ad::Tensor f;   // E x 1
  ad::Tensor hw;  // N x d_out
};

inline ad::Tensor feature_attention_from_hw(ad::Tape& tape, const ad::Tensor& hw,
                                            const CALayerParams& params, const Graph& g) {
  ad::require(hw.rows() == g.n_nodes && hw.cols() == params.d_out(),
              "feature_attention: transformed features must be n_nodes x d_out");
  const int d = params.d_out();
  ad::Tensor a_self = ad::slice_rows(tape, params.a, 0, d);
  ad::Tensor a_neigh = ad::slice_rows(tape, params.a, d, 2 * d);
  ad::Tensor e_self = ad::matmul(tape, hw, a_self);    // N x 1
  ad::Tensor e_neigh = ad::matmul(tape, hw, a_neigh);  // N x 1
  ad::Tensor logits =
      ad::edge_logit_sum(tape, e_self, e_neigh, g.edge_index.src, g.edge_index.dst);
  logits = ad::leaky_relu(tape, logits, params.leaky_slope);
  return ad::segment_softmax(tape, logits, g.edge_index.src, g.n_nodes);
}

inline FeatureAttention feature_attention(ad::Tape& tape, const ad::Tensor& h,
                                          const CALayerParams& params, const Graph& g) {
  ad::require(h.rows() == g.n_nodes, "feature_attention: one feature row per node");
  ad::require(h.cols() == params.d_in(), "feature_attention: feature dim mismatch");
  ad::Tensor hw = ad::matmul(tape, h, ad::transpose(tape, params.W));
  return {feature_attention_from_hw(tape, hw, params, g), hw};
}

/// Per-neighborhood softmax of the structural scores C_ij.
inline ad::Tensor structural_softmax(ad::Tape& tape, const ad::Tensor& edge_scores,
                                     const Graph& g) {
  ad::require(edge_scores.rows() == static_cast<int>(g.edge_index.size()) &&
                  edge_scores.cols() == 1,
              "structural_softmax: one score per edge slot");
  return ad::segment_softmax(tape, edge_scores, g.edge_index.src, g.n_nodes);
}

/// Two-way softmax of the significance logits: r_f + r_s = 1, both in (0,1).
inline std::pair<ad::Tensor, ad::Tensor> relative_significance(ad::Tape& tape,
                                                               const ad::Tensor& g_f,
                                                               const ad::Tensor& g_s) {
  ad::Tensor r_f = ad::sigmoid(tape, ad::sub(tape, g_f, g_s));
  ad::Tensor r_s = ad::sigmoid(tape, ad::sub(tape, g_s, g_f));
  return {r_f, r_s};
}

/// alpha = r_f * f + r_s * s. A convex combination of per-neighborhood
/// normalized rows is itself normalized, so no renormalization happens.
inline ad::Tensor implicit_scores(ad::Tape& tape, const ad::Tensor& f, const ad::Tensor& s,
                                  const ad::Tensor& r_f, const ad::Tensor& r_s) {
  return ad::add(tape, ad::scale(tape, f, r_f), ad::scale(tape, s, r_s));
}

/// alpha = f * s renormalized per neighborhood.
inline ad::Tensor explicit_scores(ad::Tape& tape, const ad::Tensor& f, const ad::Tensor& s,
                                  const Graph& g) {
  ad::Tensor prod = ad::mul(tape, f, s);
  ad::Tensor denom = ad::segment_sum(tape, prod, g.edge_index.src, g.n_nodes);
  // Softmax outputs are strictly positive, so a vanishing denominator means
  // catastrophic underflow upstream; fail loudly instead of dividing.
  for (double v : denom.data()) {
    if (v < 1e-300)
      throw std::runtime_error("explicit_scores: attention product row underflowed");
  }
  return ad::div(tape, prod, ad::gather_rows(tape, denom, g.edge_index.src));
}

/// h'_i = (alpha_ii + eps/|N_i|) W h_i + sum_{j in N_i, j != i} alpha_ij W h_j,
/// with |N_i| counting the self-loop. The slot-wise weighted sum already
/// contributes alpha_ii W h_i, so the bonus term eps/|N_i| W h_i is added on
/// top when enabled.
inline ad::Tensor aggregate(ad::Tape& tape, const ad::Tensor& hw, const ad::Tensor& alpha,
                            const CALayerParams& params, const Graph& g) {
  ad::Tensor out =
      ad::weighted_neighbor_sum(tape, hw, alpha, g.edge_index.src, g.edge_index.dst, g.n_nodes);
  if (params.use_eps) {
    std::vector<double> inv_n(static_cast<std::size_t>(g.n_nodes));
    for (int i = 0; i < g.n_nodes; ++i)
      inv_n[static_cast<std::size_t>(i)] = 1.0 / static_cast<double>(g.degree(i));
    ad::Tensor inv = ad::Tensor::from_data(g.n_nodes, 1, std::move(inv_n));
    ad::Tensor eps = ad::sigmoid(tape, params.eps_raw);
    out = ad::add(tape, out, ad::scale(tape, ad::rowscale(tape, hw, inv), eps));
  }
  return out;
}

/// One full conjoint-attention head over the already-transformed features
/// hw = h W^T. `edge_scores` carries the structural intervention C_ij per
/// slot and may be null only for FeatureOnly. Attention dropout (train time)
/// applies to the alpha values, never to the eps/|N_i| bonus.
inline ad::Tensor ca_layer_from_hw(ad::Tape& tape, const Graph& g, const ad::Tensor& hw,
                                   const CALayerParams& params, const ad::Tensor* edge_scores,
                                   double attn_dropout, Rng* dropout_rng, bool train,
                                   AttentionScores* out_scores = nullptr) {
  AttentionScores sc;
  if (params.strategy != Strategy::StructureOnly)
    sc.f = feature_attention_from_hw(tape, hw, params, g);
  if (params.strategy != Strategy::FeatureOnly) {
    ad::require(edge_scores != nullptr && edge_scores->defined(),
                "ca_layer_forward: strategy needs structural edge scores");
    sc.s = structural_softmax(tape, *edge_scores, g);
  }

  switch (params.strategy) {
    case Strategy::Implicit: {
      auto [r_f, r_s] = relative_significance(tape, params.g_f, params.g_s);
      sc.alpha = implicit_scores(tape, sc.f, sc.s, r_f, r_s);
      break;
    }
    case Strategy::Explicit:
      sc.alpha = explicit_scores(tape, sc.f, sc.s, g);
      break;
    case Strategy::FeatureOnly:
      sc.alpha = sc.f;
      break;
    case Strategy::StructureOnly:
      sc.alpha = sc.s;
      break;
  }
  if (out_scores) *out_scores = sc;

  ad::Tensor alpha = sc.alpha;
  if (train && attn_dropout > 0.0) {
    ad::require(dropout_rng != nullptr, "ca_layer_forward: dropout needs an RNG");
    alpha = ad::dropout(tape, alpha, attn_dropout, *dropout_rng, true);
  }
  return aggregate(tape, hw, alpha, params, g);
}

inline ad::Tensor ca_layer_forward(ad::Tape& tape, const Graph& g, const ad::Tensor& h,
                                   const CALayerParams& params, const ad::Tensor* edge_scores,
                                   double attn_dropout, Rng* dropout_rng, bool train,
                                   AttentionScores* out_scores = nullptr) {
  ad::Tensor hw = ad::matmul(tape, h, ad::transpose(tape, params.W));
  return ca_layer_from_hw(tape, g, hw, params, edge_scores, attn_dropout, dropout_rng, train,
                          out_scores);
}

}  // namespace catnet
