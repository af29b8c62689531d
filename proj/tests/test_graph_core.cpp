#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "catnet/graph.hpp"

using namespace catnet;
namespace fs = std::filesystem;

namespace {

std::string fmt_double_for_test(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  return std::string(buf, p);
}

fs::path fresh_dir(const std::string& tag) {
  static int counter = 0;
  fs::path p = fs::temp_directory_path() / ("catnet_graph_" + tag + "_" + std::to_string(counter++));
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

void write_file(const fs::path& p, const std::string& content) {
  std::ofstream out(p);
  out << content;
}

fs::path write_bundle(const std::string& tag, const std::string& edges,
                      const std::string& features, const std::string& labels,
                      const std::string& splits) {
  fs::path dir = fresh_dir(tag);
  write_file(dir / "edges.tsv", edges);
  write_file(dir / "features.tsv", features);
  write_file(dir / "labels.tsv", labels);
  write_file(dir / "splits.tsv", splits);
  return dir;
}

}  // namespace

TEST_CASE("two-node bundle loads with symmetric self-looped neighborhoods") {
  fs::path dir = write_bundle("two", "0\t1\n", "1 0\n0 1\n", "0\n1\n", "train\ntest\n");
  Graph g = load_graph(dir);
  CHECK(g.n_nodes == 2);
  CHECK(g.n_classes == 2);
  CHECK(g.n_undirected_edges == 1);
  CHECK(neighborhood(g, 0) == std::vector<int>{0, 1});
  CHECK(neighborhood(g, 1) == std::vector<int>{0, 1});
  // One slot per (i, j in N_i) pair, self-loops included.
  CHECK(g.edge_index.size() == 4);
}

TEST_CASE("duplicate and reversed edge lines collapse to one undirected edge") {
  fs::path dir = write_bundle("dup", "0\t1\n1\t0\n0\t1\n", "1\n2\n", "0\n0\n", "none\nnone\n");
  Graph g = load_graph(dir);
  CHECK(g.n_undirected_edges == 1);
  CHECK(g.degree(0) == 2);
}

TEST_CASE("parse errors carry file and line information") {
  SUBCASE("non-numeric feature") {
    fs::path dir = write_bundle("badf", "0\t1\n", "1 0\nx 1\n", "0\n1\n", "none\nnone\n");
    CHECK_THROWS_WITH_AS(load_graph(dir), doctest::Contains("features.tsv:2"), ParseError);
  }
  SUBCASE("node id out of range") {
    fs::path dir = write_bundle("badid", "0\t5\n", "1\n2\n", "0\n1\n", "none\nnone\n");
    CHECK_THROWS_WITH_AS(load_graph(dir), doctest::Contains("edges.tsv:1"), ParseError);
  }
  SUBCASE("row count mismatch") {
    fs::path dir = write_bundle("rows", "0\t1\n", "1\n2\n", "0\n", "none\nnone\n");
    CHECK_THROWS_AS(load_graph(dir), ParseError);
  }
  SUBCASE("unknown split token") {
    fs::path dir = write_bundle("split", "0\t1\n", "1\n2\n", "0\n1\n", "none\nvalidation\n");
    CHECK_THROWS_WITH_AS(load_graph(dir), doctest::Contains("splits.tsv:2"), ParseError);
  }
  SUBCASE("missing file") {
    fs::path dir = fresh_dir("missing");
    CHECK_THROWS_AS(load_graph(dir), ParseError);
  }
}

TEST_CASE("neighborhoods: isolated node and star center") {
  // Node 3 is isolated; node 0 is the center of K_{1,3}.
  fs::path dir = write_bundle("star", "0\t1\n0\t2\n0\t4\n", "1\n1\n1\n1\n1\n",
                              "0\n0\n0\n0\n0\n", "none\nnone\nnone\nnone\nnone\n");
  Graph g = load_graph(dir);
  CHECK(neighborhood(g, 3) == std::vector<int>{3});
  CHECK(neighborhood(g, 0).size() == 4);
  CHECK_THROWS_AS(neighborhood(g, 5), std::invalid_argument);
}

TEST_CASE("sbm: disjoint cliques at p_in=1, p_out=0") {
  Graph g = generate_sbm(3, 2, 1.0, 0.0, 4, 0.0, 42);
  CHECK(g.n_nodes == 6);
  CHECK(g.n_undirected_edges == 6);  // two triangles
  for (int i = 0; i < 3; ++i) CHECK(neighborhood(g, i) == std::vector<int>{0, 1, 2});
  for (int i = 3; i < 6; ++i) CHECK(neighborhood(g, i) == std::vector<int>{3, 4, 5});
  // Clean features are exact one-hots of the block id.
  CHECK(g.features.at(0, 0) == 1.0);
  CHECK(g.features.at(3, 1) == 1.0);
  CHECK(g.features.at(3, 0) == 0.0);
}

TEST_CASE("sbm: identical seeds give identical graphs") {
  Graph a = generate_sbm(20, 3, 0.4, 0.05, 5, 0.3, 7);
  Graph b = generate_sbm(20, 3, 0.4, 0.05, 5, 0.3, 7);
  CHECK(a == b);
  Graph c = generate_sbm(20, 3, 0.4, 0.05, 5, 0.3, 8);
  CHECK_FALSE(a == c);
}

TEST_CASE("sbm: invalid probabilities rejected") {
  CHECK_THROWS_AS(generate_sbm(5, 2, 0.2, 0.5, 2, 0.0, 0), std::invalid_argument);
  CHECK_THROWS_AS(generate_sbm(5, 2, 1.2, 0.1, 2, 0.0, 0), std::invalid_argument);
}

TEST_CASE("sbm: intra-block edges dominate for p_in=0.5, p_out=0.05 across seeds 0-99") {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Graph g = generate_sbm(50, 2, 0.5, 0.05, 4, 0.0, seed);
    int intra = 0, inter = 0;
    for (std::size_t e = 0; e < g.edge_index.size(); ++e) {
      const int u = g.edge_index.src[e], v = g.edge_index.dst[e];
      if (u >= v) continue;  // count each undirected edge once, skip self-loops
      (g.labels[static_cast<std::size_t>(u)] == g.labels[static_cast<std::size_t>(v)] ? intra
                                                                                      : inter)++;
    }
    CHECK(intra > inter);
  }
}

TEST_CASE("sbm: stratified 10/10/80 split") {
  Graph g = generate_sbm(30, 2, 0.3, 0.05, 4, 0.0, 3);
  int tr = 0, va = 0, te = 0;
  for (int i = 0; i < g.n_nodes; ++i) {
    tr += g.train_mask[static_cast<std::size_t>(i)];
    va += g.val_mask[static_cast<std::size_t>(i)];
    te += g.test_mask[static_cast<std::size_t>(i)];
    const int total = g.train_mask[static_cast<std::size_t>(i)] +
                      g.val_mask[static_cast<std::size_t>(i)] +
                      g.test_mask[static_cast<std::size_t>(i)];
    CHECK(total == 1);  // masks pairwise disjoint, every node assigned
  }
  CHECK(tr == 6);
  CHECK(va == 6);
  CHECK(te == 48);
}

TEST_CASE("load -> save -> load round-trips to an identical graph") {
  Graph g = generate_sbm(15, 3, 0.4, 0.1, 6, 0.25, 11);
  fs::path dir = fresh_dir("round");
  save_graph(g, dir);
  Graph g2 = load_graph(dir);
  CHECK(g == g2);
  fs::path dir2 = fresh_dir("round2");
  save_graph(g2, dir2);
  Graph g3 = load_graph(dir2);
  CHECK(g2 == g3);
}

TEST_CASE("degree recount oracle on a generated graph") {
  Graph g = generate_sbm(25, 2, 0.3, 0.08, 4, 0.1, 17);
  // Independent recount from the undirected edge list.
  std::vector<int> deg(static_cast<std::size_t>(g.n_nodes), 1);  // self-loop
  for (std::size_t e = 0; e < g.edge_index.size(); ++e) {
    const int u = g.edge_index.src[e], v = g.edge_index.dst[e];
    if (u < v) {
      ++deg[static_cast<std::size_t>(u)];
      ++deg[static_cast<std::size_t>(v)];
    }
  }
  for (int i = 0; i < g.n_nodes; ++i) {
    CHECK(g.degree(i) == deg[static_cast<std::size_t>(i)]);
    CHECK(static_cast<int>(neighborhood(g, i).size()) == deg[static_cast<std::size_t>(i)]);
  }
}

// Runs only when a converted Cora bundle is available (see README: Datasets).
TEST_CASE("cora bundle characteristics" * doctest::skip(false)) {
  fs::path dir;
  if (const char* env = std::getenv("CAT_DATA_DIR")) {
    if (fs::exists(fs::path(env) / "cora" / "edges.tsv")) dir = fs::path(env) / "cora";
  }
  if (dir.empty() && fs::exists("data/cora/edges.tsv")) dir = "data/cora";
  if (dir.empty() && fs::exists("../../data/cora/edges.tsv")) dir = "../../data/cora";
  if (dir.empty()) {
    MESSAGE("cora bundle not present; skipping dataset characteristic checks");
    return;
  }
  Graph g = load_graph(dir);
  CHECK(g.n_nodes == 2708);
  CHECK(g.feat_dim() == 1433);
  CHECK(g.n_classes == 7);
  int tr = 0;
  for (bool b : g.train_mask) tr += b ? 1 : 0;
  CHECK(tr == 140);
  // Degree histogram against an independent recount.
  std::vector<int> deg(static_cast<std::size_t>(g.n_nodes), 1);
  for (std::size_t e = 0; e < g.edge_index.size(); ++e) {
    const int u = g.edge_index.src[e], v = g.edge_index.dst[e];
    if (u < v) {
      ++deg[static_cast<std::size_t>(u)];
      ++deg[static_cast<std::size_t>(v)];
    }
  }
  for (int i = 0; i < g.n_nodes; ++i) CHECK(g.degree(i) == deg[static_cast<std::size_t>(i)]);
}

TEST_CASE("relabeling nodes by a permutation yields the isomorphic graph") {
  Graph g = generate_sbm(12, 2, 0.5, 0.1, 4, 0.2, 5);
  const int n = g.n_nodes;
  Rng rng(99);
  std::vector<int> perm(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) perm[static_cast<std::size_t>(i)] = i;
  rng.shuffle(perm);  // perm[old] = new id

  fs::path dir = fresh_dir("perm");
  {
    std::ofstream edges(dir / "edges.tsv");
    for (std::size_t e = 0; e < g.edge_index.size(); ++e) {
      const int u = g.edge_index.src[e], v = g.edge_index.dst[e];
      if (u < v)
        edges << perm[static_cast<std::size_t>(u)] << '\t' << perm[static_cast<std::size_t>(v)]
              << '\n';
    }
    std::vector<int> inv(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) inv[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])] = i;
    std::ofstream feats(dir / "features.tsv");
    std::ofstream labels(dir / "labels.tsv");
    std::ofstream splits(dir / "splits.tsv");
    for (int newid = 0; newid < n; ++newid) {
      const int old = inv[static_cast<std::size_t>(newid)];
      for (int c = 0; c < g.feat_dim(); ++c)
        feats << (c ? "\t" : "") << fmt_double_for_test(g.features.at(old, c));
      feats << '\n';
      labels << g.labels[static_cast<std::size_t>(old)] << '\n';
      splits << (g.train_mask[static_cast<std::size_t>(old)]
                     ? "train"
                     : g.val_mask[static_cast<std::size_t>(old)] ? "val" : "test")
             << '\n';
    }
  }
  Graph p = load_graph(dir);
  REQUIRE(p.n_nodes == n);
  for (int i = 0; i < n; ++i) {
    const int j = perm[static_cast<std::size_t>(i)];
    CHECK(p.degree(j) == g.degree(i));
    CHECK(p.labels[static_cast<std::size_t>(j)] == g.labels[static_cast<std::size_t>(i)]);
    for (int c = 0; c < g.feat_dim(); ++c) CHECK(p.features.at(j, c) == g.features.at(i, c));
    // Neighborhoods map through the permutation.
    std::set<int> mapped;
    for (int nb : neighborhood(g, i)) mapped.insert(perm[static_cast<std::size_t>(nb)]);
    const std::vector<int> nb_p = neighborhood(p, j);
    const std::set<int> actual(nb_p.begin(), nb_p.end());
    CHECK(mapped == actual);
  }
}
