#pragma once

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "catnet/rng.hpp"
#include "catnet/tensor.hpp"

namespace catnet {

struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Per-slot (src, dst) arrays aligned with CSR storage order. src is
/// nondecreasing, so it doubles as the segment id stream for the
/// neighborhood-wise softmax and sum ops.
struct EdgeIndex {
  std::vector<int> src;
  std::vector<int> dst;
  std::size_t size() const { return src.size(); }
};

/// Immutable undirected graph with node features, labels and split masks.
/// Edges are stored symmetrically in CSR form with a self-loop materialized
/// for every node, so each node's neighborhood slice is {i} + neighbors(i)
/// and every attention slot (including the node's own) has an array entry.
struct Graph {
  int n_nodes = 0;
  int n_classes = 0;
  int n_undirected_edges = 0;  // deduplicated, self-loops not counted
  std::vector<int> offsets;    // CSR row offsets, size n_nodes + 1
  std::vector<int> neighbors;  // sorted per row, self included
  EdgeIndex edge_index;
  ad::Tensor features;  // n_nodes x feat_dim, constant
  std::vector<int> labels;
  std::vector<bool> train_mask, val_mask, test_mask;

  int feat_dim() const { return features.cols(); }
  int degree(int i) const { return offsets[i + 1] - offsets[i]; }  // self counted

  bool operator==(const Graph& other) const {
    if (features.defined() != other.features.defined()) return false;
    if (features.defined() &&
        (features.cols() != other.features.cols() || features.data() != other.features.data()))
      return false;
    return n_nodes == other.n_nodes && n_classes == other.n_classes &&
           n_undirected_edges == other.n_undirected_edges && offsets == other.offsets &&
           neighbors == other.neighbors && labels == other.labels &&
           train_mask == other.train_mask && val_mask == other.val_mask &&
           test_mask == other.test_mask;
  }
};

/// N_i as stored: the node itself plus its one-hop neighbors, CSR order.
inline std::vector<int> neighborhood(const Graph& g, int i) {
  ad::require(0 <= i && i < g.n_nodes, "neighborhood: node id out of range");
  return std::vector<int>(g.neighbors.begin() + g.offsets[i],
                          g.neighbors.begin() + g.offsets[i + 1]);
}

namespace detail {

/// Symmetrize, deduplicate, add self-loops, build CSR + edge index.
inline void build_adjacency(Graph& g, const std::set<std::pair<int, int>>& undirected) {
  const int n = g.n_nodes;
  g.n_undirected_edges = static_cast<int>(undirected.size());
  std::vector<std::vector<int>> adj(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) adj[static_cast<std::size_t>(i)].push_back(i);
  for (const auto& [u, v] : undirected) {
    adj[static_cast<std::size_t>(u)].push_back(v);
    adj[static_cast<std::size_t>(v)].push_back(u);
  }
  g.offsets.assign(static_cast<std::size_t>(n) + 1, 0);
  g.neighbors.clear();
  g.edge_index.src.clear();
  g.edge_index.dst.clear();
  for (int i = 0; i < n; ++i) {
    std::sort(adj[static_cast<std::size_t>(i)].begin(), adj[static_cast<std::size_t>(i)].end());
    for (int j : adj[static_cast<std::size_t>(i)]) {
      g.neighbors.push_back(j);
      g.edge_index.src.push_back(i);
      g.edge_index.dst.push_back(j);
    }
    g.offsets[static_cast<std::size_t>(i) + 1] = static_cast<int>(g.neighbors.size());
  }
}

inline int parse_int_token(const std::string& tok, const std::string& where) {
  int v = 0;
  auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || p != tok.data() + tok.size())
    throw ParseError(where + ": non-numeric token '" + tok + "'");
  return v;
}

inline double parse_double_token(const std::string& tok, const std::string& where) {
  double v = 0.0;
  auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || p != tok.data() + tok.size())
    throw ParseError(where + ": non-numeric token '" + tok + "'");
  return v;
}

inline std::vector<std::string> split_ws(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream ss(line);
  std::string tok;
  while (ss >> tok) out.push_back(tok);
  return out;
}

inline std::string loc(const std::string& file, int lineno) {
  return file + ":" + std::to_string(lineno);
}

}  // namespace detail

/// Loads the four-file TSV bundle:
///   features.tsv  one whitespace-separated float row per node
///   labels.tsv    one class id per node
///   splits.tsv    one of train/val/test/none per node
///   edges.tsv     two 0-based node ids per line, one undirected edge
/// Duplicate and reversed edge lines collapse to a single undirected edge;
/// self-loop lines are ignored (self-loops are always materialized).
inline Graph load_graph(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  Graph g;

  const fs::path feat_path = dir / "features.tsv";
  std::ifstream feat_in(feat_path);
  if (!feat_in) throw ParseError("cannot open " + feat_path.string());
  std::vector<double> feat_data;
  int feat_cols = -1;
  std::string line;
  int lineno = 0;
  while (std::getline(feat_in, line)) {
    ++lineno;
    auto toks = detail::split_ws(line);
    if (toks.empty()) continue;
    if (feat_cols < 0) feat_cols = static_cast<int>(toks.size());
    if (static_cast<int>(toks.size()) != feat_cols)
      throw ParseError(detail::loc("features.tsv", lineno) + ": expected " +
                       std::to_string(feat_cols) + " columns, got " +
                       std::to_string(toks.size()));
    for (const auto& t : toks)
      feat_data.push_back(detail::parse_double_token(t, detail::loc("features.tsv", lineno)));
    ++g.n_nodes;
  }
  if (g.n_nodes == 0) throw ParseError("features.tsv: no rows");
  g.features = ad::Tensor::from_data(g.n_nodes, feat_cols, std::move(feat_data));

  const fs::path lab_path = dir / "labels.tsv";
  std::ifstream lab_in(lab_path);
  if (!lab_in) throw ParseError("cannot open " + lab_path.string());
  lineno = 0;
  while (std::getline(lab_in, line)) {
    ++lineno;
    auto toks = detail::split_ws(line);
    if (toks.empty()) continue;
    if (toks.size() != 1)
      throw ParseError(detail::loc("labels.tsv", lineno) + ": expected one class id");
    const int lab = detail::parse_int_token(toks[0], detail::loc("labels.tsv", lineno));
    if (lab < 0) throw ParseError(detail::loc("labels.tsv", lineno) + ": negative class id");
    g.labels.push_back(lab);
    g.n_classes = std::max(g.n_classes, lab + 1);
  }
  if (static_cast<int>(g.labels.size()) != g.n_nodes)
    throw ParseError("labels.tsv: " + std::to_string(g.labels.size()) + " rows but features.tsv has " +
                     std::to_string(g.n_nodes));

  const fs::path split_path = dir / "splits.tsv";
  std::ifstream split_in(split_path);
  if (!split_in) throw ParseError("cannot open " + split_path.string());
  g.train_mask.assign(static_cast<std::size_t>(g.n_nodes), false);
  g.val_mask.assign(static_cast<std::size_t>(g.n_nodes), false);
  g.test_mask.assign(static_cast<std::size_t>(g.n_nodes), false);
  lineno = 0;
  int row = 0;
  while (std::getline(split_in, line)) {
    ++lineno;
    auto toks = detail::split_ws(line);
    if (toks.empty()) continue;
    if (row >= g.n_nodes)
      throw ParseError("splits.tsv: more rows than nodes (" + std::to_string(g.n_nodes) + ")");
    const std::string& s = toks[0];
    if (s == "train")
      g.train_mask[static_cast<std::size_t>(row)] = true;
    else if (s == "val")
      g.val_mask[static_cast<std::size_t>(row)] = true;
    else if (s == "test")
      g.test_mask[static_cast<std::size_t>(row)] = true;
    else if (s != "none")
      throw ParseError(detail::loc("splits.tsv", lineno) + ": unknown split '" + s + "'");
    ++row;
  }
  if (row != g.n_nodes)
    throw ParseError("splits.tsv: " + std::to_string(row) + " rows but features.tsv has " +
                     std::to_string(g.n_nodes));

  const fs::path edge_path = dir / "edges.tsv";
  std::ifstream edge_in(edge_path);
  if (!edge_in) throw ParseError("cannot open " + edge_path.string());
  std::set<std::pair<int, int>> undirected;
  lineno = 0;
  while (std::getline(edge_in, line)) {
    ++lineno;
    auto toks = detail::split_ws(line);
    if (toks.empty()) continue;
    if (toks.size() != 2)
      throw ParseError(detail::loc("edges.tsv", lineno) + ": expected two node ids");
    const int u = detail::parse_int_token(toks[0], detail::loc("edges.tsv", lineno));
    const int v = detail::parse_int_token(toks[1], detail::loc("edges.tsv", lineno));
    if (u < 0 || u >= g.n_nodes || v < 0 || v >= g.n_nodes)
      throw ParseError(detail::loc("edges.tsv", lineno) + ": node id out of range [0, " +
                       std::to_string(g.n_nodes) + ")");
    if (u == v) continue;
    undirected.emplace(std::min(u, v), std::max(u, v));
  }
  detail::build_adjacency(g, undirected);
  return g;
}

/// Writes the bundle in the exact shape load_graph reads. load -> save ->
/// load round-trips to an identical Graph.
inline void save_graph(const Graph& g, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  char buf[64];

  std::ofstream feat_out(dir / "features.tsv");
  for (int i = 0; i < g.n_nodes; ++i) {
    for (int c = 0; c < g.feat_dim(); ++c) {
      const double v = g.features.at(i, c);
      auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
      (void)ec;
      if (c) feat_out << '\t';
      feat_out.write(buf, p - buf);
    }
    feat_out << '\n';
  }

  std::ofstream lab_out(dir / "labels.tsv");
  for (int lab : g.labels) lab_out << lab << '\n';

  std::ofstream split_out(dir / "splits.tsv");
  for (int i = 0; i < g.n_nodes; ++i) {
    const auto idx = static_cast<std::size_t>(i);
    split_out << (g.train_mask[idx] ? "train" : g.val_mask[idx] ? "val" : g.test_mask[idx] ? "test" : "none")
              << '\n';
  }

  std::ofstream edge_out(dir / "edges.tsv");
  for (int i = 0; i < g.n_nodes; ++i) {
    for (int k = g.offsets[i]; k < g.offsets[i + 1]; ++k) {
      const int j = g.neighbors[static_cast<std::size_t>(k)];
      if (i < j) edge_out << i << '\t' << j << '\n';
    }
  }
}

/// Planted-partition generator. Block b's features are one_hot(b % feat_dim)
/// plus Gaussian(0, feat_noise) per entry; labels are block ids; the split is
/// stratified 10/10/80 per block in node order. Deterministic per seed.
inline Graph generate_sbm(int n_per_block, int n_blocks, double p_in, double p_out, int feat_dim,
                          double feat_noise, std::uint64_t seed) {
  ad::require(n_per_block >= 1 && n_blocks >= 1, "generate_sbm: empty blocks");
  ad::require(feat_dim >= 1, "generate_sbm: feat_dim must be >= 1");
  ad::require(0.0 <= p_out && p_out <= p_in && p_in <= 1.0,
              "generate_sbm: need 0 <= p_out <= p_in <= 1");
  Graph g;
  g.n_nodes = n_per_block * n_blocks;
  g.n_classes = n_blocks;

  Rng root(seed);
  Rng edge_rng = root.stream(0);
  Rng feat_rng = root.stream(1);

  g.labels.resize(static_cast<std::size_t>(g.n_nodes));
  for (int i = 0; i < g.n_nodes; ++i) g.labels[static_cast<std::size_t>(i)] = i / n_per_block;

  std::set<std::pair<int, int>> undirected;
  for (int i = 0; i < g.n_nodes; ++i) {
    for (int j = i + 1; j < g.n_nodes; ++j) {
      const double p = g.labels[static_cast<std::size_t>(i)] == g.labels[static_cast<std::size_t>(j)]
                           ? p_in
                           : p_out;
      if (edge_rng.bernoulli(p)) undirected.emplace(i, j);
    }
  }

  std::vector<double> feat(static_cast<std::size_t>(g.n_nodes) * feat_dim, 0.0);
  for (int i = 0; i < g.n_nodes; ++i) {
    const int hot = g.labels[static_cast<std::size_t>(i)] % feat_dim;
    for (int c = 0; c < feat_dim; ++c) {
      double v = (c == hot) ? 1.0 : 0.0;
      if (feat_noise > 0.0) v += feat_rng.normal(0.0, feat_noise);
      feat[static_cast<std::size_t>(i) * feat_dim + c] = v;
    }
  }
  g.features = ad::Tensor::from_data(g.n_nodes, feat_dim, std::move(feat));

  g.train_mask.assign(static_cast<std::size_t>(g.n_nodes), false);
  g.val_mask.assign(static_cast<std::size_t>(g.n_nodes), false);
  g.test_mask.assign(static_cast<std::size_t>(g.n_nodes), false);
  const int n_tr = std::max(1, n_per_block / 10);
  const int n_val = std::max(1, n_per_block / 10);
  for (int b = 0; b < n_blocks; ++b) {
    const int base = b * n_per_block;
    for (int k = 0; k < n_per_block; ++k) {
      const auto idx = static_cast<std::size_t>(base + k);
      if (k < n_tr)
        g.train_mask[idx] = true;
      else if (k < n_tr + n_val)
        g.val_mask[idx] = true;
      else
        g.test_mask[idx] = true;
    }
  }

  detail::build_adjacency(g, undirected);
  return g;
}

}  // namespace catnet
