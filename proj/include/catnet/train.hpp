#pragma once

#include <chrono>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "catnet/model.hpp"
#include "catnet/optim.hpp"

namespace catnet {

struct TrainDivergence : std::runtime_error {
  int epoch;
  TrainDivergence(int epoch_, const std::string& what)
      : std::runtime_error("training diverged at epoch " + std::to_string(epoch_) + ": " + what),
        epoch(epoch_) {}
};

struct EpochStats {
  int epoch = 0;
  double train_loss = 0.0;
  double train_acc = 0.0;
  double val_loss = 0.0;  // cross-entropy over the validation mask
  double val_acc = 0.0;
};

struct HeadStats {
  int layer = 0;
  int head = 0;
  double eps = 0.0;
  double r_f = 0.0;
  double r_s = 0.0;
};

struct TrainReport {
  TrainConfig config;
  std::vector<EpochStats> epochs;
  int epochs_run = 0;
  int best_epoch = 0;
  double test_acc = 0.0;       // classification: test-mask nodes
  double all_nodes_acc = 0.0;  // clustering: every node scored
  double result_acc = 0.0;     // the one selected by config.eval_task
  double wall_seconds = 0.0;
  std::vector<HeadStats> head_stats;
};

inline double evaluate(CATModel& model, const Graph& g, EvalTask task) {
  ad::Tape tape(false);
  Rng unused(0);
  ad::Tensor logits = model.forward(tape, g, false, unused, unused);
  const std::vector<int> pred = predict_classes(logits);
  return task == EvalTask::Classification ? accuracy(pred, g.labels, &g.test_mask)
                                          : accuracy(pred, g.labels, nullptr);
}

/// Full-batch Adam training with early stopping: patience epochs without a
/// validation-accuracy improvement (validation cross-entropy breaks ties)
/// stop the run and the best-validation parameters are restored before
/// scoring. Deterministic per seed. `model_out`, when given, receives the
/// trained model.
inline TrainReport train(const Graph& g, const TrainConfig& cfg, CATModel* model_out = nullptr) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();

  Rng root(cfg.seed);
  Rng init_rng = root.stream(0);
  Rng dropout_rng = root.stream(1);
  Rng neg_rng = root.stream(2);

  CATModel model = CATModel::build(g, cfg, init_rng);
  Adam adam(model.trainable_params(), cfg.lr);

  TrainReport report;
  report.config = cfg;

  double best_val_acc = -1.0;
  double best_val_ce = std::numeric_limits<double>::infinity();
  std::vector<std::vector<double>> best_snapshot = model.snapshot_params();
  int wait = 0;

  for (int epoch = 1; epoch <= cfg.epochs_max; ++epoch) {
    double train_loss = 0.0;
    try {
      ad::Tape tape;
      ad::Tensor aux;
      ad::Tensor logits = model.forward(tape, g, true, dropout_rng, neg_rng, &aux);
      ad::Tensor loss = model_loss(tape, logits, g, aux, cfg.lambda, cfg.weight_decay,
                                   model.decay_params());
      train_loss = loss.value();
      if (!std::isfinite(train_loss)) throw std::runtime_error("loss is not finite");
      tape.backward(loss);
      adam.step();
      adam.zero_grad();
    } catch (const ConfigError&) {
      throw;
    } catch (const std::runtime_error& e) {
      throw TrainDivergence(epoch, e.what());
    }

    ad::Tape etape(false);
    ad::Tensor elogits = model.forward(etape, g, false, dropout_rng, neg_rng);
    const std::vector<int> pred = predict_classes(elogits);
    EpochStats st;
    st.epoch = epoch;
    st.train_loss = train_loss;
    st.train_acc = accuracy(pred, g.labels, &g.train_mask);
    st.val_acc = accuracy(pred, g.labels, &g.val_mask);
    {
      ad::Tensor logp = ad::log_softmax_rows(etape, elogits);
      st.val_loss = ad::nll_masked(etape, logp, g.labels, g.val_mask).value();
    }
    report.epochs.push_back(st);
    report.epochs_run = epoch;

    const bool improved =
        st.val_acc > best_val_acc || (st.val_acc == best_val_acc && st.val_loss < best_val_ce);
    if (improved) {
      best_val_acc = st.val_acc;
      best_val_ce = st.val_loss;
      best_snapshot = model.snapshot_params();
      report.best_epoch = epoch;
      wait = 0;
    } else if (++wait >= cfg.patience) {
      break;
    }
  }

  model.restore_params(best_snapshot);
  report.test_acc = evaluate(model, g, EvalTask::Classification);
  report.all_nodes_acc = evaluate(model, g, EvalTask::Clustering);
  report.result_acc =
      cfg.eval_task == EvalTask::Classification ? report.test_acc : report.all_nodes_acc;

  for (std::size_t li = 0; li < model.layers.size(); ++li) {
    for (std::size_t hi = 0; hi < model.layers[li].size(); ++hi) {
      const CALayerParams& p = model.layers[li][hi];
      HeadStats hs;
      hs.layer = static_cast<int>(li);
      hs.head = static_cast<int>(hi);
      const double er = p.eps_raw.value();
      hs.eps = p.use_eps ? 1.0 / (1.0 + std::exp(-er)) : 0.0;
      if (p.strategy == Strategy::Implicit) {
        const double d = p.g_f.value() - p.g_s.value();
        hs.r_f = 1.0 / (1.0 + std::exp(-d));
        hs.r_s = 1.0 / (1.0 + std::exp(d));
      }
      report.head_stats.push_back(hs);
    }
  }

  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (model_out) *model_out = model;
  return report;
}

}  // namespace catnet
