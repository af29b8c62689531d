#pragma once

#include <charconv>
#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "catnet/model.hpp"
#include "catnet/train.hpp"

namespace catnet {

inline std::string fmt_double(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  return std::string(buf, p);
}

inline nlohmann::json config_to_json(const TrainConfig& c) {
  nlohmann::json j;
  j["lr"] = c.lr;
  j["weight_decay"] = c.weight_decay;
  j["dropout"] = c.dropout;
  j["epochs_max"] = c.epochs_max;
  j["patience"] = c.patience;
  j["heads_hidden"] = c.heads_hidden;
  j["heads_out"] = c.heads_out;
  j["hidden_dim"] = c.hidden_dim;
  j["strategy"] = to_string(c.strategy);
  j["intervention"] = to_string(c.intervention);
  j["lambda"] = c.lambda;
  j["leaky_slope"] = c.leaky_slope;
  j["seed"] = c.seed;
  j["eval_task"] = to_string(c.eval_task);
  j["c_dim"] = c.c_dim;
  j["use_eps"] = c.use_eps;
  return j;
}

/// Schema: config (all TrainConfig keys), epochs_run, best_epoch, test_acc,
/// all_nodes_acc, result_acc, head_stats[{layer,head,eps,r_f,r_s}],
/// epoch_columns + epochs (array rows), wall_seconds. Identical config+seed
/// reproduces identical bytes except the wall_seconds field.
inline nlohmann::json report_to_json(const TrainReport& r) {
  nlohmann::json j;
  j["config"] = config_to_json(r.config);
  j["epochs_run"] = r.epochs_run;
  j["best_epoch"] = r.best_epoch;
  j["test_acc"] = r.test_acc;
  j["all_nodes_acc"] = r.all_nodes_acc;
  j["result_acc"] = r.result_acc;
  j["wall_seconds"] = r.wall_seconds;
  j["epoch_columns"] = {"epoch", "train_loss", "train_acc", "val_loss", "val_acc"};
  nlohmann::json rows = nlohmann::json::array();
  for (const EpochStats& e : r.epochs)
    rows.push_back({e.epoch, e.train_loss, e.train_acc, e.val_loss, e.val_acc});
  j["epochs"] = rows;
  nlohmann::json heads = nlohmann::json::array();
  for (const HeadStats& h : r.head_stats)
    heads.push_back({{"layer", h.layer}, {"head", h.head}, {"eps", h.eps}, {"r_f", h.r_f},
                     {"r_s", h.r_s}});
  j["head_stats"] = heads;
  return j;
}

inline void save_report(const TrainReport& r, const std::filesystem::path& path) {
  std::ofstream out(path);
  out << report_to_json(r).dump(2) << '\n';
}

/// epoch, train_loss, val_acc rows for plotting.
inline void save_curves(const TrainReport& r, const std::filesystem::path& path) {
  std::ofstream out(path);
  out << "epoch\ttrain_loss\tval_acc\n";
  for (const EpochStats& e : r.epochs)
    out << e.epoch << '\t' << fmt_double(e.train_loss) << '\t' << fmt_double(e.val_acc) << '\n';
}

namespace detail {

inline void write_param(std::ofstream& out, const std::string& name, const ad::Tensor& t) {
  out << "param\t" << name << '\t' << t.rows() << '\t' << t.cols() << '\n';
  for (int r = 0; r < t.rows(); ++r) {
    for (int c = 0; c < t.cols(); ++c) {
      if (c) out << '\t';
      out << fmt_double(t.at(r, c));
    }
    out << '\n';
  }
}

}  // namespace detail

/// Versioned text checkpoint: a header line, then one shapes line and the
/// value rows per parameter. Values print in shortest round-trip form.
inline void save_checkpoint(CATModel& model, const std::filesystem::path& path) {
  std::ofstream out(path);
  out << "catnet-checkpoint\t1\n";
  for (std::size_t li = 0; li < model.layers.size(); ++li) {
    for (std::size_t hi = 0; hi < model.layers[li].size(); ++hi) {
      CALayerParams& p = model.layers[li][hi];
      const std::string base =
          "layers." + std::to_string(li) + ".heads." + std::to_string(hi) + ".";
      detail::write_param(out, base + "W", p.W);
      detail::write_param(out, base + "a", p.a);
      if (p.strategy == Strategy::Implicit) {
        detail::write_param(out, base + "g_f", p.g_f);
        detail::write_param(out, base + "g_s", p.g_s);
      }
      if (p.use_eps) detail::write_param(out, base + "eps_raw", p.eps_raw);
    }
  }
  if (model.cfg.uses_structure() && model.intervention.learnable())
    detail::write_param(out, "intervention.V", model.intervention.V);
}

/// The learned structural embedding alone, one node row per line.
inline void export_intervention_v(CATModel& model, const std::filesystem::path& path) {
  if (!(model.cfg.uses_structure() && model.intervention.learnable())) return;
  std::ofstream out(path);
  const ad::Tensor& v = model.intervention.V;
  for (int r = 0; r < v.rows(); ++r) {
    for (int c = 0; c < v.cols(); ++c) {
      if (c) out << '\t';
      out << fmt_double(v.at(r, c));
    }
    out << '\n';
  }
}

}  // namespace catnet
