#pragma once

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace catnet {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class Strategy { Implicit, Explicit, FeatureOnly, StructureOnly };
enum class InterventionKind { MF, SC, FS };
enum class EvalTask { Classification, Clustering };

inline std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::Implicit: return "implicit";
    case Strategy::Explicit: return "explicit";
    case Strategy::FeatureOnly: return "feature";
    case Strategy::StructureOnly: return "structure";
  }
  return "?";
}

inline std::string to_string(InterventionKind k) {
  switch (k) {
    case InterventionKind::MF: return "mf";
    case InterventionKind::SC: return "sc";
    case InterventionKind::FS: return "fs";
  }
  return "?";
}

inline std::string to_string(EvalTask t) {
  return t == EvalTask::Classification ? "classification" : "clustering";
}

/// All training hyperparameters. Defaults follow the reference GAT-style
/// configuration for citation graphs: lr 0.01, hidden 8, 8 hidden heads,
/// 1 output head, dropout 0.6, lambda 0.01, at most 1500 epochs.
struct TrainConfig {
  double lr = 0.01;
  double weight_decay = 5e-4;
  double dropout = 0.6;
  int epochs_max = 1500;
  int patience = 100;
  int heads_hidden = 8;
  int heads_out = 1;
  int hidden_dim = 8;
  Strategy strategy = Strategy::Implicit;
  InterventionKind intervention = InterventionKind::MF;
  double lambda = 0.01;
  double leaky_slope = 0.2;
  std::uint64_t seed = 0;
  EvalTask eval_task = EvalTask::Classification;
  int c_dim = 0;        // 0 = number of classes
  bool use_eps = true;  // learnable self-loop bonus term in the aggregator

  void validate() const {
    if (lambda < 0.0) throw ConfigError("lambda must be >= 0");
    if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("dropout must be in [0, 1)");
    if (epochs_max < 1) throw ConfigError("epochs_max must be >= 1");
    if (patience < 1) throw ConfigError("patience must be >= 1");
    if (heads_hidden < 1 || heads_out < 1) throw ConfigError("head counts must be >= 1");
    if (hidden_dim < 1) throw ConfigError("hidden_dim must be >= 1");
    if (lr <= 0.0) throw ConfigError("lr must be > 0");
    if (weight_decay < 0.0) throw ConfigError("weight_decay must be >= 0");
    if (leaky_slope < 0.0) throw ConfigError("leaky_slope must be >= 0");
    if (c_dim < 0) throw ConfigError("c_dim must be >= 0");
  }

  bool uses_structure() const { return strategy != Strategy::FeatureOnly; }
};

namespace detail {

inline double cfg_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size())
    throw ConfigError("bad numeric value for " + key + ": '" + v + "'");
  return out;
}

inline long long cfg_int(const std::string& key, const std::string& v) {
  long long out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size())
    throw ConfigError("bad integer value for " + key + ": '" + v + "'");
  return out;
}

inline bool cfg_bool(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true" || v == "yes") return true;
  if (v == "0" || v == "false" || v == "no") return false;
  throw ConfigError("bad boolean value for " + key + ": '" + v + "'");
}

}  // namespace detail

inline const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = {
      "lr",          "weight_decay", "dropout",  "epochs_max", "patience", "heads_hidden",
      "heads_out",   "hidden_dim",   "strategy", "intervention", "lambda", "leaky_slope",
      "seed",        "eval_task",    "c_dim",    "use_eps"};
  return keys;
}

inline void apply_kv(TrainConfig& cfg, const std::string& key, const std::string& value) {
  if (key == "lr")
    cfg.lr = detail::cfg_double(key, value);
  else if (key == "weight_decay")
    cfg.weight_decay = detail::cfg_double(key, value);
  else if (key == "dropout")
    cfg.dropout = detail::cfg_double(key, value);
  else if (key == "epochs_max")
    cfg.epochs_max = static_cast<int>(detail::cfg_int(key, value));
  else if (key == "patience")
    cfg.patience = static_cast<int>(detail::cfg_int(key, value));
  else if (key == "heads_hidden")
    cfg.heads_hidden = static_cast<int>(detail::cfg_int(key, value));
  else if (key == "heads_out")
    cfg.heads_out = static_cast<int>(detail::cfg_int(key, value));
  else if (key == "hidden_dim")
    cfg.hidden_dim = static_cast<int>(detail::cfg_int(key, value));
  else if (key == "strategy") {
    if (value == "implicit")
      cfg.strategy = Strategy::Implicit;
    else if (value == "explicit")
      cfg.strategy = Strategy::Explicit;
    else if (value == "feature")
      cfg.strategy = Strategy::FeatureOnly;
    else if (value == "structure")
      cfg.strategy = Strategy::StructureOnly;
    else
      throw ConfigError("unknown strategy '" + value +
                        "' (expected implicit|explicit|feature|structure)");
  } else if (key == "intervention") {
    if (value == "mf")
      cfg.intervention = InterventionKind::MF;
    else if (value == "sc")
      cfg.intervention = InterventionKind::SC;
    else if (value == "fs")
      cfg.intervention = InterventionKind::FS;
    else
      throw ConfigError("unknown intervention '" + value + "' (expected mf|sc|fs)");
  } else if (key == "lambda")
    cfg.lambda = detail::cfg_double(key, value);
  else if (key == "leaky_slope")
    cfg.leaky_slope = detail::cfg_double(key, value);
  else if (key == "seed")
    cfg.seed = static_cast<std::uint64_t>(detail::cfg_int(key, value));
  else if (key == "eval_task") {
    if (value == "classification")
      cfg.eval_task = EvalTask::Classification;
    else if (value == "clustering")
      cfg.eval_task = EvalTask::Clustering;
    else
      throw ConfigError("unknown eval_task '" + value + "'");
  } else if (key == "c_dim")
    cfg.c_dim = static_cast<int>(detail::cfg_int(key, value));
  else if (key == "use_eps")
    cfg.use_eps = detail::cfg_bool(key, value);
  else
    throw ConfigError("unknown config key '" + key + "'");
}

/// Flat key=value text, one pair per line; '#' starts a comment.
inline void load_config_file(TrainConfig& cfg, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    const auto last = line.find_last_not_of(" \t\r");
    line = line.substr(first, last - first + 1);
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": expected key=value");
    std::string key = line.substr(0, eq);
    std::string value = line.substr(eq + 1);
    auto strip = [](std::string& s) {
      const auto b = s.find_first_not_of(" \t");
      const auto e = s.find_last_not_of(" \t");
      s = b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    strip(key);
    strip(value);
    apply_kv(cfg, key, value);
  }
}

}  // namespace catnet
