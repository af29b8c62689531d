#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "catnet/graph.hpp"

namespace catnet {

struct ConvertStats {
  int n_nodes = 0;
  int n_features = 0;
  int n_classes = 0;
  int n_edge_lines = 0;
  int n_skipped_refs = 0;  // cite lines naming unknown papers
  int n_train = 0, n_val = 0, n_test = 0;
};

/// Converts the classic citation "content/cites" pair into the TSV bundle.
///
/// <content>: one line per paper: <paper_id> <f_1> ... <f_D> <class_label>.
/// <cites>:   one line per citation: <cited_id> <citing_id>.
///
/// Node order follows the content file; class ids are assigned to the sorted
/// label names; a paper_id -> node_index table is written to remap.tsv.
/// Split: the first `train_per_class` nodes of each class (file order) train,
/// the next `n_val` remaining nodes validate, the last `n_test` remaining
/// nodes test, everything else is unused.
inline ConvertStats convert_content_bundle(const std::filesystem::path& content_path,
                                           const std::filesystem::path& cites_path,
                                           const std::filesystem::path& out_dir,
                                           int train_per_class = 20, int n_val = 500,
                                           int n_test = 1000) {
  namespace fs = std::filesystem;
  ConvertStats stats;

  std::ifstream content(content_path);
  if (!content) throw ParseError("cannot open " + content_path.string());

  std::vector<std::string> ids;
  std::vector<std::string> label_names;
  std::vector<std::vector<double>> feats;
  std::map<std::string, int> id_to_index;
  std::string line;
  int lineno = 0;
  while (std::getline(content, line)) {
    ++lineno;
    auto toks = detail::split_ws(line);
    if (toks.empty()) continue;
    if (toks.size() < 3)
      throw ParseError(content_path.string() + ":" + std::to_string(lineno) +
                       ": expected <id> <features...> <label>");
    const std::string id = toks.front();
    if (id_to_index.count(id))
      throw ParseError(content_path.string() + ":" + std::to_string(lineno) +
                       ": duplicate paper id '" + id + "'");
    id_to_index[id] = static_cast<int>(ids.size());
    ids.push_back(id);
    label_names.push_back(toks.back());
    std::vector<double> row;
    row.reserve(toks.size() - 2);
    for (std::size_t i = 1; i + 1 < toks.size(); ++i)
      row.push_back(detail::parse_double_token(
          toks[i], content_path.string() + ":" + std::to_string(lineno)));
    if (!feats.empty() && feats.front().size() != row.size())
      throw ParseError(content_path.string() + ":" + std::to_string(lineno) +
                       ": inconsistent feature count");
    feats.push_back(std::move(row));
  }
  stats.n_nodes = static_cast<int>(ids.size());
  if (stats.n_nodes == 0) throw ParseError(content_path.string() + ": no rows");
  stats.n_features = static_cast<int>(feats.front().size());

  std::set<std::string> class_set(label_names.begin(), label_names.end());
  std::map<std::string, int> class_id;
  for (const std::string& c : class_set) class_id[c] = static_cast<int>(class_id.size());
  stats.n_classes = static_cast<int>(class_set.size());

  std::ifstream cites(cites_path);
  if (!cites) throw ParseError("cannot open " + cites_path.string());
  std::set<std::pair<int, int>> edges;
  lineno = 0;
  while (std::getline(cites, line)) {
    ++lineno;
    auto toks = detail::split_ws(line);
    if (toks.empty()) continue;
    if (toks.size() != 2)
      throw ParseError(cites_path.string() + ":" + std::to_string(lineno) +
                       ": expected two paper ids");
    ++stats.n_edge_lines;
    auto a = id_to_index.find(toks[0]);
    auto b = id_to_index.find(toks[1]);
    if (a == id_to_index.end() || b == id_to_index.end()) {
      ++stats.n_skipped_refs;
      continue;
    }
    if (a->second == b->second) continue;
    edges.emplace(std::min(a->second, b->second), std::max(a->second, b->second));
  }

  // Planetoid-style split over the content-file node order.
  std::vector<std::string> split(static_cast<std::size_t>(stats.n_nodes), "none");
  std::map<int, int> taken_per_class;
  for (int i = 0; i < stats.n_nodes; ++i) {
    const int c = class_id[label_names[static_cast<std::size_t>(i)]];
    if (taken_per_class[c] < train_per_class) {
      split[static_cast<std::size_t>(i)] = "train";
      ++taken_per_class[c];
      ++stats.n_train;
    }
  }
  for (int i = 0; i < stats.n_nodes && stats.n_val < n_val; ++i) {
    if (split[static_cast<std::size_t>(i)] == "none") {
      split[static_cast<std::size_t>(i)] = "val";
      ++stats.n_val;
    }
  }
  for (int i = stats.n_nodes - 1; i >= 0 && stats.n_test < n_test; --i) {
    if (split[static_cast<std::size_t>(i)] == "none") {
      split[static_cast<std::size_t>(i)] = "test";
      ++stats.n_test;
    }
  }

  fs::create_directories(out_dir);
  {
    std::ofstream out(out_dir / "features.tsv");
    char buf[64];
    for (const auto& row : feats) {
      for (std::size_t c = 0; c < row.size(); ++c) {
        auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), row[c]);
        (void)ec;
        if (c) out << '\t';
        out.write(buf, p - buf);
      }
      out << '\n';
    }
  }
  {
    std::ofstream out(out_dir / "labels.tsv");
    for (const std::string& name : label_names) out << class_id[name] << '\n';
  }
  {
    std::ofstream out(out_dir / "splits.tsv");
    for (const std::string& s : split) out << s << '\n';
  }
  {
    std::ofstream out(out_dir / "edges.tsv");
    for (const auto& [u, v] : edges) out << u << '\t' << v << '\n';
  }
  {
    std::ofstream out(out_dir / "remap.tsv");
    for (int i = 0; i < stats.n_nodes; ++i)
      out << ids[static_cast<std::size_t>(i)] << '\t' << i << '\n';
  }
  return stats;
}

}  // namespace catnet
