#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "catnet/dataset_convert.hpp"
#include "catnet/graph.hpp"
#include "catnet/model.hpp"
#include "catnet/multiset_lab.hpp"
#include "catnet/report.hpp"
#include "catnet/train.hpp"

namespace fs = std::filesystem;
using catnet::TrainConfig;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitBadConfig = 2;
constexpr int kExitDivergence = 3;

// Relative dataset paths resolve against CAT_DATA_DIR when it is set.
fs::path resolve_data_dir(const std::string& data) {
  fs::path p(data);
  if (p.is_absolute()) return p;
  if (const char* root = std::getenv("CAT_DATA_DIR")) return fs::path(root) / p;
  return p;
}

struct ConfigFlags {
  std::string config_file;
  std::map<std::string, std::string> values;  // key -> raw value from --key flags

  void register_on(CLI::App* cmd) {
    cmd->add_option("--config", config_file, "key=value config file (flags override it)");
    for (const std::string& key : catnet::config_keys()) {
      values[key];  // stable storage
      cmd->add_option("--" + key, values[key], "override config key '" + key + "'");
    }
  }

  TrainConfig build() const {
    TrainConfig cfg;
    if (!config_file.empty()) catnet::load_config_file(cfg, config_file);
    for (const std::string& key : catnet::config_keys()) {
      const auto it = values.find(key);
      if (it != values.end() && !it->second.empty()) catnet::apply_kv(cfg, key, it->second);
    }
    cfg.validate();
    return cfg;
  }
};

int cmd_train(const std::string& data, const std::string& out_dir, const ConfigFlags& flags) {
  TrainConfig cfg = flags.build();
  catnet::Graph g = catnet::load_graph(resolve_data_dir(data));
  catnet::CATModel model;
  catnet::TrainReport report = catnet::train(g, cfg, &model);

  fs::create_directories(out_dir);
  catnet::save_report(report, fs::path(out_dir) / "report.json");
  catnet::save_checkpoint(model, fs::path(out_dir) / "checkpoint.tsv");
  catnet::save_curves(report, fs::path(out_dir) / "curves.tsv");
  catnet::export_intervention_v(model, fs::path(out_dir) / "v.tsv");

  std::cout << "epochs=" << report.epochs_run << " best_epoch=" << report.best_epoch
            << " test_acc=" << report.test_acc << " all_nodes_acc=" << report.all_nodes_acc
            << " wall_s=" << report.wall_seconds << "\n";
  return kExitOk;
}

struct AblateVariant {
  std::string name;
  catnet::Strategy strategy;
  catnet::InterventionKind intervention;
  bool use_eps;
};

const std::vector<AblateVariant>& ablate_grid() {
  using catnet::InterventionKind;
  using catnet::Strategy;
  static const std::vector<AblateVariant> grid = {
      {"F", Strategy::FeatureOnly, InterventionKind::MF, false},
      {"MF-only", Strategy::StructureOnly, InterventionKind::MF, false},
      {"SC-only", Strategy::StructureOnly, InterventionKind::SC, false},
      {"CAT-I-MF", Strategy::Implicit, InterventionKind::MF, true},
      {"CAT-I-SC", Strategy::Implicit, InterventionKind::SC, true},
      {"CAT-E-MF", Strategy::Explicit, InterventionKind::MF, true},
      {"CAT-E-SC", Strategy::Explicit, InterventionKind::SC, true},
  };
  return grid;
}

int cmd_ablate(const std::string& data, const std::string& out_dir, int n_seeds,
               const ConfigFlags& flags) {
  TrainConfig base = flags.build();
  catnet::Graph g = catnet::load_graph(resolve_data_dir(data));
  fs::create_directories(out_dir);
  std::ofstream table(fs::path(out_dir) / "ablation.tsv");
  table << "variant\tmean_acc\tstd_acc\tseeds\n";
  std::cout << "variant\tmean_acc\tstd_acc\n";
  for (const AblateVariant& v : ablate_grid()) {
    TrainConfig cfg = base;
    cfg.strategy = v.strategy;
    cfg.intervention = v.intervention;
    cfg.use_eps = v.use_eps;
    std::vector<double> accs;
    for (int s = 0; s < n_seeds; ++s) {
      cfg.seed = base.seed + static_cast<std::uint64_t>(s);
      accs.push_back(catnet::train(g, cfg).result_acc);
    }
    double mean = 0.0;
    for (double a : accs) mean += a;
    mean /= accs.empty() ? 1.0 : static_cast<double>(accs.size());
    double var = 0.0;
    for (double a : accs) var += (a - mean) * (a - mean);
    const double sd = accs.size() > 1 ? std::sqrt(var / (accs.size() - 1)) : 0.0;
    table << v.name << '\t' << catnet::fmt_double(mean) << '\t' << catnet::fmt_double(sd) << '\t'
          << n_seeds << '\n';
    std::cout << v.name << '\t' << mean << '\t' << sd << '\n';
  }
  return kExitOk;
}

int cmd_check_theorems(int max_n, bool no_eps_term) {
  const std::vector<double> sweep = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  catnet::lab::TheoremGridResult res =
      catnet::lab::run_theorem_grid(max_n, sweep, !no_eps_term);
  std::cout << res.table;
  std::cout << (res.all_passed ? "ALL PASS" : "FAILURES") << " (" << res.n_checked
            << " checks, " << res.n_failed << " failed)\n";
  return res.all_passed ? kExitOk : kExitFailure;
}

int cmd_gen_synth(const std::string& out_dir, int n_per_block, int n_blocks, double p_in,
                  double p_out, int feat_dim, double noise, std::uint64_t seed) {
  catnet::Graph g =
      catnet::generate_sbm(n_per_block, n_blocks, p_in, p_out, feat_dim, noise, seed);
  catnet::save_graph(g, out_dir);
  std::cout << "nodes=" << g.n_nodes << " undirected_edges=" << g.n_undirected_edges
            << " classes=" << g.n_classes << " feat_dim=" << g.feat_dim() << "\n";
  return kExitOk;
}

int cmd_convert(const std::string& content, const std::string& cites, const std::string& out_dir,
                int train_per_class, int n_val, int n_test) {
  catnet::ConvertStats st = catnet::convert_content_bundle(content, cites, out_dir,
                                                           train_per_class, n_val, n_test);
  std::cout << "nodes=" << st.n_nodes << " edge_lines=" << st.n_edge_lines
            << " skipped_refs=" << st.n_skipped_refs << " feat_dim=" << st.n_features
            << " classes=" << st.n_classes << " train=" << st.n_train << " val=" << st.n_val
            << " test=" << st.n_test << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"catnet: conjoint-attention graph networks"};
  app.require_subcommand(1);

  auto* train_cmd = app.add_subcommand("train", "train a model on a TSV dataset bundle");
  std::string train_data, train_out = "out";
  ConfigFlags train_flags;
  train_cmd->add_option("--data", train_data, "dataset bundle directory")->required();
  train_cmd->add_option("--out", train_out, "output directory");
  train_flags.register_on(train_cmd);

  auto* ablate_cmd = app.add_subcommand("ablate", "run the attention-variant grid");
  std::string ablate_data, ablate_out = "out";
  int ablate_seeds = 10;
  ConfigFlags ablate_flags;
  ablate_cmd->add_option("--data", ablate_data, "dataset bundle directory")->required();
  ablate_cmd->add_option("--out", ablate_out, "output directory");
  ablate_cmd->add_option("--seeds", ablate_seeds, "number of seeds per variant");
  ablate_flags.register_on(ablate_cmd);

  auto* check_cmd = app.add_subcommand("check-theorems",
                                       "collision/separation grid for the aggregator");
  int check_max_n = 6;
  bool check_no_eps = false;
  check_cmd->add_option("--max-n", check_max_n, "largest multiset size in the grid");
  check_cmd->add_flag("--no-eps-term", check_no_eps,
                      "drop the eps/|X| term (expected to fail: reports the collision)");

  auto* synth_cmd = app.add_subcommand("gen-synth", "write a planted-partition TSV bundle");
  std::string synth_out;
  int synth_npb = 50, synth_blocks = 2, synth_featdim = 8;
  double synth_pin = 0.1, synth_pout = 0.01, synth_noise = 0.0;
  std::uint64_t synth_seed = 0;
  synth_cmd->add_option("--out", synth_out, "output directory")->required();
  synth_cmd->add_option("--n-per-block", synth_npb, "nodes per block");
  synth_cmd->add_option("--n-blocks", synth_blocks, "number of blocks");
  synth_cmd->add_option("--p-in", synth_pin, "intra-block edge probability");
  synth_cmd->add_option("--p-out", synth_pout, "inter-block edge probability");
  synth_cmd->add_option("--feat-dim", synth_featdim, "feature dimension");
  synth_cmd->add_option("--noise", synth_noise, "feature noise stddev");
  synth_cmd->add_option("--seed", synth_seed, "generator seed");

  auto* conv_cmd = app.add_subcommand(
      "convert-cora", "convert a citation content/cites pair into the TSV bundle");
  std::string conv_content, conv_cites, conv_out;
  int conv_tpc = 20, conv_val = 500, conv_test = 1000;
  conv_cmd->add_option("--content", conv_content, "<id> <features...> <label> file")->required();
  conv_cmd->add_option("--cites", conv_cites, "<cited_id> <citing_id> file")->required();
  conv_cmd->add_option("--out", conv_out, "output directory")->required();
  conv_cmd->add_option("--train-per-class", conv_tpc, "training nodes per class");
  conv_cmd->add_option("--val", conv_val, "validation node count");
  conv_cmd->add_option("--test", conv_test, "test node count");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitBadConfig;
  }

  try {
    if (*train_cmd) return cmd_train(train_data, train_out, train_flags);
    if (*ablate_cmd) return cmd_ablate(ablate_data, ablate_out, ablate_seeds, ablate_flags);
    if (*check_cmd) return cmd_check_theorems(check_max_n, check_no_eps);
    if (*synth_cmd)
      return cmd_gen_synth(synth_out, synth_npb, synth_blocks, synth_pin, synth_pout,
                           synth_featdim, synth_noise, synth_seed);
    if (*conv_cmd)
      return cmd_convert(conv_content, conv_cites, conv_out, conv_tpc, conv_val, conv_test);
  } catch (const catnet::TrainDivergence& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitDivergence;
  } catch (const catnet::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitBadConfig;
  } catch (const catnet::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitBadConfig;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitBadConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitOk;
}
