#include "spamtree/oracle.hpp"
#include "spamtree/treegraph.hpp"

#include <doctest.h>

#include <algorithm>
#include <array>
#include <set>
#include <sstream>

using namespace spamtree;

namespace {

LocationSet uniform_points(int n, int q, std::uint64_t seed) {
  RngStream rng(seed);
  LocationSet locs(2);
  for (int i = 0; i < n; ++i) {
    const std::array<double, 2> c{rng.uniform(), rng.uniform()};
    locs.push_back(c, i % q);
  }
  return locs;
}

std::vector<std::uint8_t> all_observed(int n) { return std::vector<std::uint8_t>(n, 1); }

std::vector<int> branch_children(const TreedDag& dag, int j) {
  std::vector<int> out;
  for (int c : dag.node(j).children)
    if (!dag.node(c).is_leaf() && dag.node(c).tree_parent == j) out.push_back(c);
  return out;
}

void check_partition(const TreedDag& dag, int n) {
  std::vector<int> count(n, 0);
  int total = 0;
  for (const auto& nd : dag.nodes()) {
    total += nd.size();
    for (int l : nd.locs) count[l]++;
  }
  CHECK(total == n);
  for (int l = 0; l < n; ++l) CHECK(count[l] == 1);
}

void check_parent_rule(const TreedDag& dag) {
  const int base = dag.chain_base();
  for (int j = 0; j < dag.size(); ++j) {
    const Node& nd = dag.node(j);
    for (int p : nd.parents) CHECK(dag.node(p).id.level < nd.id.level);
    if (nd.is_leaf()) {
      REQUIRE(!nd.parents.empty());
      CHECK(nd.parents.back() == nd.tree_parent);
      CHECK(dag.is_terminal(nd.tree_parent));
      for (std::size_t k = 1; k < nd.parents.size(); ++k)
        CHECK(dag.node(nd.parents[k]).tree_parent == nd.parents[k - 1]);
      continue;
    }
    const int i = nd.id.level;
    if (i == 0) {
      CHECK(nd.parents.empty());
    } else if (i > base) {
      CHECK(static_cast<int>(nd.parents.size()) == i - base);
      for (std::size_t k = 0; k < nd.parents.size(); ++k)
        CHECK(dag.node(nd.parents[k]).id.level == base + static_cast<int>(k));
    } else {
      CHECK(nd.parents.size() == 1);
      CHECK(dag.node(nd.parents[0]).id.level == i - 1);
    }
  }
}

}  // namespace

TEST_CASE("100 uniform points, two levels, subsets of four: partition audit") {
  const auto locs = uniform_points(100, 1, 11);
  TreeParams p;
  p.levels = 2;
  p.depth = 2;
  p.children_per_axis = 2;
  p.subset_size = 4;
  const TreedDag dag = build_tree(locs, all_observed(100), p);
  check_partition(dag, 100);
  CHECK(dag.height() == 2);
  for (int j = 0; j < dag.level_size(0); ++j) CHECK(dag.node(j).size() == 4);
  for (int k = 0; k < dag.level_size(1); ++k)
    CHECK(dag.node(dag.level_begin(1) + k).size() <= 4);
  int leaf_locs = 0;
  for (const auto& nd : dag.nodes())
    if (nd.is_leaf()) leaf_locs += nd.size();
  CHECK(leaf_locs == 100 - 4 - 4 * dag.level_size(1));
}

TEST_CASE("two-dimensional split with two children per axis gives four children") {
  const auto locs = uniform_points(2000, 1, 3);
  TreeParams p;
  p.levels = 3;
  p.depth = 3;
  p.subset_size = 8;
  const TreedDag dag = build_tree(locs, all_observed(2000), p);
  REQUIRE(dag.height() == 3);
  for (int j = 0; j < dag.size(); ++j)
    if (!dag.node(j).is_leaf() && dag.node(j).id.level < 2) CHECK(branch_children(dag, j).size() == 4);
}

TEST_CASE("single level with every location in the root") {
  const auto locs = uniform_points(30, 2, 5);
  TreeParams p;
  p.levels = 1;
  p.depth = 1;
  p.subset_size = 30;
  const TreedDag dag = build_tree(locs, all_observed(30), p);
  CHECK(dag.size() == 1);
  CHECK(dag.num_edges() == 0);
  CHECK(dag.node(0).size() == 30);
}

TEST_CASE("parent sets follow the depth rule and edges point downward") {
  for (int depth = 1; depth <= 3; ++depth) {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      const auto locs = uniform_points(400, 2, seed);
      std::vector<std::uint8_t> obs(400, 1);
      for (int i = 0; i < 400; i += 3) obs[i] = 0;
      TreeParams p;
      p.levels = 3;
      p.depth = depth;
      p.subset_size = 6;
      p.root_cells_per_axis = 1 + static_cast<int>(seed % 2);
      p.seed = seed;
      const TreedDag dag = build_tree(locs, obs, p);
      check_partition(dag, 400);
      check_parent_rule(dag);
      for (int l = 0; l < 400; ++l)
        if (!obs[l]) CHECK_FALSE(dag.is_reference(l));
    }
  }
}

TEST_CASE("full depth parent sets are nested") {
  const auto locs = uniform_points(500, 2, 9);
  TreeParams p;
  p.levels = 3;
  p.depth = 3;
  p.subset_size = 5;
  const TreedDag dag = build_tree(locs, all_observed(500), p);
  for (int j = 0; j < dag.size(); ++j) {
    const auto& pj = dag.node(j).parents;
    const std::set<int> sj(pj.begin(), pj.end());
    for (int i : pj)
      for (int g : dag.node(i).parents) CHECK(sj.count(g) == 1);
  }
}

TEST_CASE("early stop when too few candidates remain") {
  const auto locs = uniform_points(20, 1, 2);
  TreeParams p;
  p.levels = 4;
  p.depth = 4;
  p.subset_size = 10;
  const TreedDag dag = build_tree(locs, all_observed(20), p);
  CHECK(dag.height() < 4);
  CHECK(dag.depth() <= dag.height());
  check_partition(dag, 20);
  check_parent_rule(dag);
}

TEST_CASE("cherry picking matches a brute-force same-outcome search") {
  const int n = 2000;
  const auto locs = uniform_points(n, 2, 17);
  std::vector<std::uint8_t> obs(n, 1);
  RngStream rng(4);
  for (int i = 0; i < n; ++i)
    if (rng.uniform() < 0.5) obs[i] = 0;
  TreeParams p;
  p.levels = 3;
  p.depth = 1;
  p.subset_size = 10;
  const TreedDag dag = build_tree(locs, obs, p);
  const auto terminals = dag.terminal_branches();
  for (int u = 0; u < n; ++u) {
    if (dag.is_reference(u)) continue;
    double best = 1e300;
    std::array<int, 3> best_key{};
    for (int t : terminals)
      for (int l : dag.node(t).locs) {
        if (locs.var(l) != locs.var(u)) continue;
        const double dd = locs.dist(u, l);
        const std::array<int, 3> key{dag.node(t).id.level, dag.node(t).id.index, l};
        if (dd < best || (dd == best && key < best_key)) {
          best = dd;
          best_key = key;
        }
      }
    const Node& leaf = dag.node(dag.node_of(u));
    const Node& term = dag.node(leaf.tree_parent);
    CHECK(term.id.level == best_key[0]);
    CHECK(term.id.index == best_key[1]);
    CHECK(leaf.var == locs.var(u));
  }
  CHECK(dag.fallback_count() == 0);
}

TEST_CASE("misaligned outcome is sent to a terminal holding that outcome") {
  // outcome 1 only exists in the east half
  LocationSet locs(2);
  RngStream rng(8);
  for (int i = 0; i < 400; ++i) {
    const std::array<double, 2> c{rng.uniform(), rng.uniform()};
    locs.push_back(c, 0);
    if (c[0] > 0.5) locs.push_back(c, 1);
  }
  std::vector<std::uint8_t> obs(locs.size(), 1);
  TreeParams p;
  p.levels = 2;
  p.depth = 1;
  p.subset_size = 6;
  const TreedDag dag = build_tree(locs, obs, p);
  const TerminalIndex index(dag, locs);
  const double west[2] = {0.05, 0.5};
  const auto pick = cherry_pick(dag, index, west, 1);
  REQUIRE(pick.terminal >= 0);
  CHECK_FALSE(pick.fallback);
  bool holds_outcome = false;
  for (int l : dag.node(pick.terminal).locs) holds_outcome = holds_outcome || locs.var(l) == 1;
  CHECK(holds_outcome);
  // brute force: nearest outcome-1 reference among terminals
  double best = 1e300;
  int best_t = -1;
  for (int t : dag.terminal_branches())
    for (int l : dag.node(t).locs)
      if (locs.var(l) == 1 && locs.dist(l, west) < best) {
        best = locs.dist(l, west);
        best_t = t;
      }
  CHECK(pick.terminal == best_t);
}

TEST_CASE("equidistant terminals resolve to the lowest node") {
  LocationSet locs(2);
  for (auto c : {std::array<double, 2>{1, 0}, {0, 0}, {2, 0}, {1, 1}}) locs.push_back(c, 0);
  std::vector<Node> nodes(3);
  nodes[0].id = {0, 0};
  nodes[0].locs = {0};
  nodes[1].id = {1, 0};
  nodes[1].tree_parent = 0;
  nodes[1].locs = {2};  // (2, 0)
  nodes[2].id = {1, 1};
  nodes[2].tree_parent = 0;
  nodes[2].locs = {1};  // (0, 0)
  Node leaf;
  leaf.id = {2, 0};
  leaf.role = NodeRole::leaf;
  leaf.tree_parent = 1;
  leaf.var = 0;
  leaf.locs = {3};
  nodes.push_back(leaf);
  const TreedDag dag = TreedDag::from_nodes(2, 2, 4, nodes);
  const TerminalIndex index(dag, locs);
  const double mid[2] = {1, 0};
  CHECK(cherry_pick(dag, index, mid, 0).terminal == 1);
  const double at[2] = {0, 0};
  CHECK(cherry_pick(dag, index, at, 0).terminal == 2);
}

TEST_CASE("common descendants") {
  const auto locs = uniform_points(300, 1, 21);
  TreeParams p;
  p.levels = 3;
  p.depth = 1;
  p.subset_size = 5;
  p.root_cells_per_axis = 2;
  const TreedDag dag = build_tree(locs, all_observed(300), p);
  for (int v = 0; v < dag.size(); ++v) {
    auto self = dag.node(v).children;
    self.push_back(v);
    std::sort(self.begin(), self.end());
    CHECK(common_descendants(dag, v, v) == self);
    for (int pa : dag.node(v).parents) CHECK(common_descendants(dag, v, pa) == std::vector<int>{v});
  }
  REQUIRE(dag.level_size(0) >= 2);
  CHECK(common_descendants(dag, 0, 1).empty());
}

TEST_CASE("concestor and shortest paths") {
  const auto locs = uniform_points(600, 1, 23);
  TreeParams p;
  p.levels = 3;
  p.depth = 1;
  p.subset_size = 5;
  const TreedDag dag = build_tree(locs, all_observed(600), p);
  const auto self = concestor_and_paths(dag, 5, 5);
  CHECK(self.concestor == 5);
  CHECK(self.path_a == std::vector<int>{5});
  // two grandchildren of the same level-1 node
  const int a = dag.level_begin(1);
  const auto kids = branch_children(dag, a);
  REQUIRE(kids.size() >= 2);
  const auto cp = concestor_and_paths(dag, kids[0], kids[1]);
  CHECK(cp.concestor == a);
  CHECK(cp.path_a == std::vector<int>{a, kids[0]});
  CHECK(cp.path_b == std::vector<int>{a, kids[1]});

  TreeParams full = p;
  full.depth = 3;
  const TreedDag fd = build_tree(locs, all_observed(600), full);
  for (int i = fd.level_begin(2); i < fd.level_begin(3); ++i)
    for (int j = i + 1; j < fd.level_begin(3); ++j) {
      const auto& pi = fd.node(i).parents;
      const auto& pj = fd.node(j).parents;
      std::vector<int> shared;
      std::set_intersection(pi.begin(), pi.end(), pj.begin(), pj.end(), std::back_inserter(shared));
      REQUIRE_FALSE(shared.empty());
      const auto c = concestor_and_paths(fd, i, j);
      CHECK(c.concestor == shared.back());
      // a direct edge from the concestor is a single hop
      CHECK(c.path_a.size() == 2);
    }

  TreeParams two = p;
  two.root_cells_per_axis = 2;
  const TreedDag td = build_tree(locs, all_observed(600), two);
  CHECK(concestor_and_paths(td, 0, 1).concestor == -1);
}

TEST_CASE("level coloring") {
  const auto locs = uniform_points(3000, 1, 29);
  TreeParams p;
  p.levels = 4;
  p.subset_size = 4;
  for (int depth : {4, 1, 2, 3}) {
    p.depth = depth;
    const TreedDag dag = build_tree(locs, all_observed(3000), p);
    REQUIRE(dag.height() == 4);
    const auto colors = color_nodes(dag);
    const std::set<int> distinct(colors.begin(), colors.end());
    if (depth == 4) CHECK(distinct.size() == 5);
    if (depth == 1) CHECK(distinct.size() == 2);
    CHECK(coloring_is_valid(dag, colors));
  }
  TreeParams one;
  one.levels = 1;
  one.depth = 1;
  one.subset_size = 10;
  const TreedDag single = build_tree(uniform_points(10, 1, 1), all_observed(10), one);
  const auto c1 = color_nodes(single);
  CHECK(std::set<int>(c1.begin(), c1.end()).size() == 1);
}

TEST_CASE("coloring stays valid on random trees with missing data") {
  for (std::uint64_t s = 1; s <= 30; ++s) {
    const auto inst = random_instance(s, 1 + s % 3, 150 + 10 * (s % 7), static_cast<int>(s % 4));
    const TreedDag dag = build_tree(inst.locs, inst.observed, inst.params);
    CHECK(coloring_is_valid(dag, color_nodes(dag)));
  }
}

TEST_CASE("dag text round trip") {
  const auto inst = random_instance(77, 2, 200, 2);
  const TreedDag dag = build_tree(inst.locs, inst.observed, inst.params);
  std::stringstream ss;
  write_dag(ss, dag);
  const TreedDag back = read_dag(ss);
  REQUIRE(back.size() == dag.size());
  CHECK(back.height() == dag.height());
  CHECK(back.depth() == dag.depth());
  CHECK(back.fallback_count() == dag.fallback_count());
  for (int j = 0; j < dag.size(); ++j) {
    CHECK(back.node(j).locs == dag.node(j).locs);
    CHECK(back.node(j).parents == dag.node(j).parents);
    CHECK(back.node(j).role == dag.node(j).role);
  }
}

TEST_CASE("construction errors") {
  TreeParams p;
  CHECK_THROWS_AS(build_tree(LocationSet(2), {}, p), Error);
  const auto locs = uniform_points(10, 1, 1);
  p.subset_size = 11;
  CHECK_THROWS_AS(build_tree(locs, all_observed(10), p), Error);
  p.subset_size = 2;
  p.bias_weights = {0.0};
  CHECK_THROWS_AS(build_tree(locs, all_observed(10), p), Error);
  p.bias_weights = {};
  p.depth = 5;
  CHECK_THROWS_AS(build_tree(locs, all_observed(10), p), Error);
}

TEST_CASE("bias weights pull the rare outcome toward the root") {
  LocationSet locs(2);
  RngStream rng(31);
  for (int i = 0; i < 1000; ++i) {
    const std::array<double, 2> c{rng.uniform(), rng.uniform()};
    locs.push_back(c, i % 20 == 0 ? 1 : 0);
  }
  TreeParams p;
  p.levels = 2;
  p.depth = 2;
  p.subset_size = 16;
  auto root_share = [&](std::vector<double> w) {
    p.bias_weights = std::move(w);
    const TreedDag dag = build_tree(locs, all_observed(1000), p);
    int rare = 0;
    for (int l : dag.node(0).locs) rare += locs.var(l);
    return rare;
  };
  CHECK(root_share({1.0, 50.0}) > root_share({1.0, 1.0}));
}
