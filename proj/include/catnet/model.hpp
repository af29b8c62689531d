#pragma once

#include <memory>
#include <vector>

#include "catnet/ca_layer.hpp"
#include "catnet/config.hpp"
#include "catnet/graph.hpp"
#include "catnet/intervention.hpp"
#include "catnet/sparse.hpp"

namespace catnet {

/// Two-layer multi-head conjoint-attention network. Hidden heads are
/// concatenated, output heads averaged, ELU between layers. All heads and
/// layers share one Intervention, matching the single auxiliary loss term.
struct CATModel {
  TrainConfig cfg;
  std::vector<std::vector<CALayerParams>> layers;  // [layer][head]
  Intervention intervention;                       // meaningful iff cfg.uses_structure()

  static CATModel build(const Graph& g, const TrainConfig& cfg, Rng& init_rng) {
    cfg.validate();
    ad::require(g.n_classes >= 1, "CATModel: graph has no classes");
    CATModel m;
    m.cfg = cfg;
    if (cfg.uses_structure()) {
      const int c_dim = cfg.c_dim > 0 ? cfg.c_dim : g.n_classes;
      m.intervention = Intervention::make(cfg.intervention, g, c_dim, init_rng);
    }
    m.layers.resize(2);
    for (int head = 0; head < cfg.heads_hidden; ++head)
      m.layers[0].push_back(CALayerParams::make(g.feat_dim(), cfg.hidden_dim, cfg.strategy,
                                                cfg.leaky_slope, cfg.use_eps, init_rng));
    const int concat_dim = cfg.heads_hidden * cfg.hidden_dim;
    for (int head = 0; head < cfg.heads_out; ++head)
      m.layers[1].push_back(CALayerParams::make(concat_dim, g.n_classes, cfg.strategy,
                                                cfg.leaky_slope, cfg.use_eps, init_rng));
    return m;
  }

  /// dropout(x) -> hidden heads, concat -> ELU -> dropout -> output heads,
  /// mean -> logits. Structural scores are computed once per pass and shared.
  /// The auxiliary loss is built only on train passes (`aux_out`).
  ad::Tensor forward(ad::Tape& tape, const Graph& g, bool train, Rng& dropout_rng, Rng& neg_rng,
                     ad::Tensor* aux_out = nullptr,
                     std::vector<AttentionScores>* scores_out = nullptr) {
    if (g.feat_dim() != layers[0][0].d_in())
      throw ConfigError("forward: graph feature dim does not match layer 0");

    ad::Tensor edge_scores;
    ad::Tensor aux = ad::Tensor::scalar(0.0);
    if (cfg.uses_structure()) {
      InterventionScores iv = intervention.compute(tape, g, neg_rng, train && aux_out != nullptr);
      edge_scores = iv.edge_scores;
      aux = iv.aux_loss;
    }
    const ad::Tensor* scores_ptr = edge_scores.defined() ? &edge_scores : nullptr;
    if (aux_out) *aux_out = aux;

    // Layer 0 consumes the raw features: mostly-zero inputs (bag-of-words)
    // go through the CSR fast path, everything else stays dense.
    std::vector<ad::Tensor> hidden;
    hidden.reserve(layers[0].size());
    if (input_is_sparse(g)) {
      auto x = std::make_shared<const ad::SparseFeatures>(
          ad::sparse_dropout(*sparse_input_, cfg.dropout, dropout_rng, train));
      for (const CALayerParams& head : layers[0]) {
        AttentionScores sc;
        ad::Tensor hw = ad::sparse_matmul(tape, x, ad::transpose(tape, head.W));
        hidden.push_back(ca_layer_from_hw(tape, g, hw, head, scores_ptr, cfg.dropout,
                                          &dropout_rng, train, scores_out ? &sc : nullptr));
        if (scores_out) scores_out->push_back(sc);
      }
    } else {
      ad::Tensor x = ad::dropout(tape, g.features, cfg.dropout, dropout_rng, train);
      for (const CALayerParams& head : layers[0]) {
        AttentionScores sc;
        hidden.push_back(ca_layer_forward(tape, g, x, head, scores_ptr, cfg.dropout,
                                          &dropout_rng, train, scores_out ? &sc : nullptr));
        if (scores_out) scores_out->push_back(sc);
      }
    }
    ad::Tensor h = hidden.size() == 1 ? hidden[0] : ad::concat_cols(tape, hidden);
    h = ad::elu(tape, h);
    h = ad::dropout(tape, h, cfg.dropout, dropout_rng, train);

    ad::Tensor logits;
    for (const CALayerParams& head : layers[1]) {
      AttentionScores sc;
      ad::Tensor o = ca_layer_forward(tape, g, h, head, scores_ptr, cfg.dropout, &dropout_rng,
                                      train, scores_out ? &sc : nullptr);
      if (scores_out) scores_out->push_back(sc);
      logits = logits.defined() ? ad::add(tape, logits, o) : o;
    }
    if (layers[1].size() > 1)
      logits = ad::scale(tape, logits, 1.0 / static_cast<double>(layers[1].size()));
    return logits;
  }

  std::vector<ad::Tensor> trainable_params() {
    std::vector<ad::Tensor> out;
    for (auto& layer : layers) {
      for (CALayerParams& head : layer) {
        out.push_back(head.W);
        out.push_back(head.a);
        if (head.strategy == Strategy::Implicit) {
          out.push_back(head.g_f);
          out.push_back(head.g_s);
        }
        if (head.use_eps) out.push_back(head.eps_raw);
      }
    }
    if (cfg.uses_structure() && intervention.learnable()) out.push_back(intervention.V);
    return out;
  }

  /// Weight decay applies to W and a only, never to the intervention V or
  /// the scalar attention parameters.
  std::vector<ad::Tensor> decay_params() {
    std::vector<ad::Tensor> out;
    for (auto& layer : layers)
      for (CALayerParams& head : layer) {
        out.push_back(head.W);
        out.push_back(head.a);
      }
    return out;
  }

  std::vector<std::vector<double>> snapshot_params() {
    std::vector<std::vector<double>> out;
    for (ad::Tensor& p : trainable_params()) out.push_back(p.data());
    return out;
  }

  void restore_params(const std::vector<std::vector<double>>& snap) {
    auto params = trainable_params();
    ad::require(snap.size() == params.size(), "restore_params: snapshot size mismatch");
    for (std::size_t i = 0; i < params.size(); ++i) params[i].data() = snap[i];
  }

 private:
  std::shared_ptr<const ad::SparseFeatures> sparse_input_;
  const void* sparse_input_key_ = nullptr;

  bool input_is_sparse(const Graph& g) {
    const void* key = static_cast<const void*>(g.features.data().data());
    if (key != sparse_input_key_) {
      auto sp = std::make_shared<ad::SparseFeatures>(ad::SparseFeatures::from_dense(g.features));
      sparse_input_ = sp->density() <= 0.25 ? std::move(sp) : nullptr;
      sparse_input_key_ = key;
    }
    return sparse_input_ != nullptr;
  }
};

/// mean cross-entropy over train-mask nodes + lambda * aux + wd * sum ||p||^2.
inline ad::Tensor model_loss(ad::Tape& tape, const ad::Tensor& logits, const Graph& g,
                             const ad::Tensor& aux_loss, double lambda, double weight_decay,
                             const std::vector<ad::Tensor>& decay_params) {
  int n_train = 0;
  for (bool b : g.train_mask) n_train += b ? 1 : 0;
  if (n_train == 0) throw ConfigError("loss: empty train mask");
  ad::Tensor logp = ad::log_softmax_rows(tape, logits);
  ad::Tensor total = ad::nll_masked(tape, logp, g.labels, g.train_mask);
  if (lambda != 0.0 && aux_loss.defined())
    total = ad::add(tape, total, ad::scale(tape, aux_loss, lambda));
  if (weight_decay != 0.0 && !decay_params.empty()) {
    ad::Tensor acc;
    for (const ad::Tensor& p : decay_params) {
      ad::Tensor ss = ad::sum_squares(tape, p);
      acc = acc.defined() ? ad::add(tape, acc, ss) : ss;
    }
    total = ad::add(tape, total, ad::scale(tape, acc, weight_decay));
  }
  return total;
}

/// argmax per row; ties resolve to the lowest class id.
inline std::vector<int> predict_classes(const ad::Tensor& logits) {
  std::vector<int> out(static_cast<std::size_t>(logits.rows()));
  for (int r = 0; r < logits.rows(); ++r) {
    int best = 0;
    for (int c = 1; c < logits.cols(); ++c)
      if (logits.at(r, c) > logits.at(r, best)) best = c;
    out[static_cast<std::size_t>(r)] = best;
  }
  return out;
}

inline double accuracy(const std::vector<int>& pred, const std::vector<int>& labels,
                       const std::vector<bool>* mask) {
  int hit = 0, tot = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (mask && !(*mask)[i]) continue;
    ++tot;
    hit += pred[i] == labels[i] ? 1 : 0;
  }
  return tot == 0 ? 0.0 : static_cast<double>(hit) / tot;
}

}  // namespace catnet
