#include "spamtree/treegraph.hpp"

#include "spamtree/rng.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

namespace spamtree {

namespace {

std::string node_name(const Node& n) {
  return "node (level " + std::to_string(n.id.level) + ", index " + std::to_string(n.id.index) +
         ")";
}

int ipow(int b, int e) {
  int r = 1;
  for (int i = 0; i < e; ++i) r *= b;
  return r;
}

// Index of the sub-cell along each axis, flattened with axis 0 fastest.
int subcell_index(const double* x, const std::vector<double>& lo, const std::vector<double>& hi,
                  int k) {
  int idx = 0, stride = 1;
  for (std::size_t a = 0; a < lo.size(); ++a) {
    const double w = hi[a] - lo[a];
    int i = 0;
    if (w > 0.0) i = static_cast<int>(std::floor((x[a] - lo[a]) / w * k));
    i = std::clamp(i, 0, k - 1);
    idx += i * stride;
    stride *= k;
  }
  return idx;
}

void subcell_bounds(int idx, int k, const std::vector<double>& lo, const std::vector<double>& hi,
                    std::vector<double>& out_lo, std::vector<double>& out_hi) {
  const std::size_t d = lo.size();
  out_lo.resize(d);
  out_hi.resize(d);
  for (std::size_t a = 0; a < d; ++a) {
    const int i = idx % k;
    idx /= k;
    const double w = (hi[a] - lo[a]) / k;
    out_lo[a] = lo[a] + i * w;
    out_hi[a] = (i == k - 1) ? hi[a] : lo[a] + (i + 1) * w;
  }
}

struct Cell {
  std::vector<double> lo, hi;
  int parent = -1;
  std::vector<int> members;
};

// One pick per non-empty sub-cell of a k^d grid, visited in random order, up
// to `target` picks. Within a sub-cell the pick is weighted by outcome.
std::vector<int> select_reference(const Cell& cell, const LocationSet& locs, int target,
                                  const std::vector<double>& weights, RngStream& rng) {
  if (static_cast<int>(cell.members.size()) <= target) return cell.members;
  const int d = locs.dim();
  int k = 1;
  while (ipow(k, d) < target) ++k;
  const int ncell = ipow(k, d);
  std::vector<std::vector<int>> groups(ncell);
  for (int m : cell.members) groups[subcell_index(locs.coords(m), cell.lo, cell.hi, k)].push_back(m);
  std::vector<int> order(ncell);
  for (int i = 0; i < ncell; ++i) order[i] = i;
  std::shuffle(order.begin(), order.end(), rng.engine());

  std::vector<int> picks;
  for (int s : order) {
    const auto& g = groups[s];
    if (g.empty()) continue;
    double total = 0.0;
    for (int m : g) total += weights[locs.var(m)];
    double u = rng.uniform() * total;
    int chosen = g.back();
    for (int m : g) {
      u -= weights[locs.var(m)];
      if (u < 0.0) {
        chosen = m;
        break;
      }
    }
    picks.push_back(chosen);
    if (static_cast<int>(picks.size()) == target) break;
  }
  std::sort(picks.begin(), picks.end());
  return picks;
}

std::vector<int> branch_tree_children(const std::vector<Node>& nodes, int flat) {
  std::vector<int> out;
  for (std::size_t i = 0; i < nodes.size(); ++i)
    if (nodes[i].tree_parent == flat && !nodes[i].is_leaf()) out.push_back(static_cast<int>(i));
  return out;
}

}  // namespace

TreedDag TreedDag::from_nodes(int height, int depth, int num_locations, std::vector<Node> nodes) {
  if (height < 1) throw Error("tree height must be at least 1");
  if (depth < 1 || depth > height) throw Error("depth must lie in [1, height]");
  TreedDag dag;
  dag.height_ = height;
  dag.depth_ = depth;
  dag.nodes_ = std::move(nodes);
  dag.loc_node_.assign(num_locations, -1);
  dag.loc_pos_.assign(num_locations, -1);
  dag.finalize();
  return dag;
}

void TreedDag::finalize() {
  const int n = size();
  level_start_.assign(height_ + 2, 0);
  for (int i = 0; i < n; ++i) {
    const Node& nd = nodes_[i];
    if (nd.id.level < 0 || nd.id.level > height_) throw Error(node_name(nd) + " has invalid level");
    if (nd.is_leaf() != (nd.id.level == height_))
      throw Error(node_name(nd) + ": leaves and only leaves sit at the bottom level");
    if (i > 0 && !(nodes_[i - 1].id < nd.id)) throw Error("nodes are not sorted by (level, index)");
    level_start_[nd.id.level + 1]++;
  }
  for (int r = 0; r <= height_; ++r) level_start_[r + 1] += level_start_[r];
  for (int i = 0; i < n; ++i) {
    const Node& nd = nodes_[i];
    if (nd.id.index != i - level_start_[nd.id.level])
      throw Error(node_name(nd) + " has a non-contiguous index");
  }

  const int base = chain_base();
  for (int i = 0; i < n; ++i) {
    Node& nd = nodes_[i];
    nd.parents.clear();
    nd.children.clear();
    if (nd.tree_parent < 0) {
      if (nd.id.level != 0) throw Error(node_name(nd) + " has no parent but is not a root");
      continue;
    }
    if (nd.tree_parent >= i) throw Error(node_name(nd) + " has a parent that is not above it");
    const Node& tp = nodes_[nd.tree_parent];
    if (tp.is_leaf()) throw Error(node_name(nd) + " hangs below a leaf");
    if (!nd.is_leaf() && tp.id.level != nd.id.level - 1)
      throw Error(node_name(nd) + " skips a level");
    if (tp.id.level > base) nd.parents = tp.parents;
    nd.parents.push_back(nd.tree_parent);
  }
  for (int i = 0; i < n; ++i)
    for (int p : nodes_[i].parents) nodes_[p].children.push_back(i);

  for (int i = 0; i < n; ++i) {
    Node& nd = nodes_[i];
    if (nd.locs.empty()) throw Error(node_name(nd) + " holds no locations");
    std::sort(nd.locs.begin(), nd.locs.end());
    for (int k = 0; k < nd.size(); ++k) {
      const int l = nd.locs[k];
      if (l < 0 || l >= num_locations()) throw Error(node_name(nd) + " holds an unknown location");
      if (loc_node_[l] >= 0)
        throw Error("location " + std::to_string(l) + " is assigned to two nodes");
      loc_node_[l] = i;
      loc_pos_[l] = k;
    }
    nd.parent_locs.clear();
    nd.parent_offsets.clear();
    for (int p : nd.parents) {
      nd.parent_offsets.push_back(nd.parent_size());
      nd.parent_locs.insert(nd.parent_locs.end(), nodes_[p].locs.begin(), nodes_[p].locs.end());
    }
  }
  for (int l = 0; l < num_locations(); ++l)
    if (loc_node_[l] < 0) throw Error("location " + std::to_string(l) + " is not assigned");
}

bool TreedDag::is_terminal(int flat) const {
  const Node& nd = nodes_[flat];
  if (nd.is_leaf()) return false;
  for (int c : nd.children)
    if (nodes_[c].tree_parent == flat && !nodes_[c].is_leaf()) return false;
  return true;
}

std::vector<int> TreedDag::terminal_branches() const {
  std::vector<int> out;
  for (int i = 0; i < size(); ++i)
    if (is_terminal(i)) out.push_back(i);
  return out;
}

std::vector<int> TreedDag::ancestors(int flat) const {
  std::vector<int> out;
  for (int p = nodes_[flat].tree_parent; p >= 0; p = nodes_[p].tree_parent) out.push_back(p);
  std::reverse(out.begin(), out.end());
  return out;
}

std::vector<int> TreedDag::child_parent_set(int branch) const {
  const Node& nd = nodes_[branch];
  std::vector<int> out;
  if (nd.id.level > chain_base()) out = nd.parents;
  out.push_back(branch);
  return out;
}

std::int64_t TreedDag::num_edges() const {
  std::int64_t e = 0;
  for (const auto& nd : nodes_) e += static_cast<std::int64_t>(nd.parents.size());
  return e;
}

TerminalIndex::TerminalIndex(const TreedDag& dag, const LocationSet& locs)
    : TerminalIndex(dag.nodes(), locs) {}

TerminalIndex::TerminalIndex(const std::vector<Node>& nodes, const LocationSet& locs)
    : any_(locs.dim()) {
  by_var_.assign(locs.num_vars(), KdTree(locs.dim()));
  for (std::size_t t = 0; t < nodes.size(); ++t) {
    const Node& nd = nodes[t];
    if (nd.is_leaf() || !branch_tree_children(nodes, static_cast<int>(t)).empty()) continue;
    for (int l : nd.locs) {
      const KdTree::Key key{nd.id.level, nd.id.index, l};
      by_var_[locs.var(l)].add(locs.coords(l), key, static_cast<int>(t));
      any_.add(locs.coords(l), key, static_cast<int>(t));
    }
  }
  for (auto& k : by_var_) k.build();
  any_.build();
}

TerminalIndex::Pick TerminalIndex::pick(const double* coords, int var) const {
  Pick p;
  if (var >= 0 && var < static_cast<int>(by_var_.size()) && !by_var_[var].empty()) {
    p.terminal = by_var_[var].nearest(coords).payload;
    return p;
  }
  p.terminal = any_.nearest(coords).payload;
  p.fallback = true;
  return p;
}

CherryPick cherry_pick(const TreedDag& dag, const TerminalIndex& index, const double* coords,
                       int var) {
  const auto p = index.pick(coords, var);
  CherryPick out;
  out.terminal = p.terminal;
  out.fallback = p.fallback;
  if (p.terminal < 0) return out;
  for (int c : dag.node(p.terminal).children) {
    const Node& nd = dag.node(c);
    if (nd.is_leaf() && nd.tree_parent == p.terminal && nd.var == var) {
      out.leaf = c;
      break;
    }
  }
  return out;
}

TreedDag build_tree(const LocationSet& locs, const std::vector<std::uint8_t>& observed,
                    const TreeParams& params) {
  const int n = locs.size();
  if (n == 0) throw Error("cannot build a tree over an empty location set");
  if (static_cast<int>(observed.size()) != n) throw Error("observed mask has the wrong length");
  if (params.levels < 1) throw Error("levels must be at least 1");
  if (params.depth < 1 || params.depth > params.levels)
    throw Error("depth must lie in [1, levels]");
  if (params.children_per_axis < 1) throw Error("children per axis must be at least 1");
  if (params.root_cells_per_axis < 1) throw Error("root cells per axis must be at least 1");
  if (params.subset_size < 1) throw Error("subset size must be at least 1");
  if (params.subset_size > n) throw Error("subset size exceeds the number of locations");
  const int q = locs.num_vars();
  std::vector<double> weights = params.bias_weights;
  if (weights.empty()) weights.assign(q, 1.0);
  if (static_cast<int>(weights.size()) < q) throw Error("bias weights missing for some outcome");
  for (double w : weights)
    if (!(w > 0.0) || !std::isfinite(w)) throw Error("bias weights must be positive");

  const int d = locs.dim();
  std::vector<double> lo(d, std::numeric_limits<double>::infinity()),
      hi(d, -std::numeric_limits<double>::infinity());
  for (int i = 0; i < n; ++i)
    for (int a = 0; a < d; ++a) {
      lo[a] = std::min(lo[a], locs.coords(i)[a]);
      hi[a] = std::max(hi[a], locs.coords(i)[a]);
    }

  std::vector<int> non_reference;
  std::vector<int> candidates;
  for (int i = 0; i < n; ++i) (observed[i] ? candidates : non_reference).push_back(i);
  if (candidates.empty()) throw Error("no observed locations to form a reference set");

  const int rc = params.root_cells_per_axis;
  std::vector<Cell> cells(ipow(rc, d));
  for (int c = 0; c < static_cast<int>(cells.size()); ++c)
    subcell_bounds(c, rc, lo, hi, cells[c].lo, cells[c].hi);
  for (int m : candidates) cells[subcell_index(locs.coords(m), lo, hi, rc)].members.push_back(m);

  std::vector<Node> nodes;
  int remaining = static_cast<int>(candidates.size());
  int height = 0;
  const int c = params.children_per_axis;
  for (int r = 0; r < params.levels && !cells.empty(); ++r) {
    if (r > 0 && remaining < params.subset_size) break;
    RngStream rng(params.seed, 0x5ee1, static_cast<std::uint64_t>(r));
    std::vector<Cell> next;
    int index = 0;
    for (Cell& cell : cells) {
      if (cell.members.empty()) continue;
      Node nd;
      nd.id = {r, index++};
      nd.role = NodeRole::branch;
      nd.tree_parent = cell.parent;
      nd.locs = select_reference(cell, locs, params.subset_size, weights, rng);
      const int flat = static_cast<int>(nodes.size());
      remaining -= nd.size();
      std::vector<int> rest;
      std::set_difference(cell.members.begin(), cell.members.end(), nd.locs.begin(),
                          nd.locs.end(), std::back_inserter(rest));
      nodes.push_back(std::move(nd));
      if (r + 1 < params.levels) {
        std::vector<Cell> kids(ipow(c, d));
        for (int k = 0; k < static_cast<int>(kids.size()); ++k) {
          subcell_bounds(k, c, cell.lo, cell.hi, kids[k].lo, kids[k].hi);
          kids[k].parent = flat;
        }
        for (int m : rest) kids[subcell_index(locs.coords(m), cell.lo, cell.hi, c)].members.push_back(m);
        for (auto& kc : kids)
          if (!kc.members.empty()) next.push_back(std::move(kc));
      } else {
        non_reference.insert(non_reference.end(), rest.begin(), rest.end());
      }
    }
    height = r + 1;
    cells = std::move(next);
  }
  for (const Cell& cell : cells)
    non_reference.insert(non_reference.end(), cell.members.begin(), cell.members.end());
  std::sort(non_reference.begin(), non_reference.end());

  const TerminalIndex index(nodes, locs);
  std::map<std::pair<int, int>, std::vector<int>> groups;
  int fallback = 0;
  for (int u : non_reference) {
    const auto p = index.pick(locs.coords(u), locs.var(u));
    if (p.fallback) ++fallback;
    groups[{p.terminal, locs.var(u)}].push_back(u);
  }
  int leaf_index = 0;
  for (auto& [key, members] : groups) {
    Node nd;
    nd.id = {height, leaf_index++};
    nd.role = NodeRole::leaf;
    nd.tree_parent = key.first;
    nd.var = key.second;
    nd.locs = std::move(members);
    nodes.push_back(std::move(nd));
  }

  TreedDag dag = TreedDag::from_nodes(height, std::min(params.depth, height), n, std::move(nodes));
  dag.fallback_count_ = fallback;
  return dag;
}

std::vector<int> common_descendants(const TreedDag& dag, int a, int b) {
  std::vector<int> sa = dag.node(a).children, sb = dag.node(b).children;
  sa.push_back(a);
  sb.push_back(b);
  std::sort(sa.begin(), sa.end());
  std::sort(sb.begin(), sb.end());
  std::vector<int> out;
  std::set_intersection(sa.begin(), sa.end(), sb.begin(), sb.end(), std::back_inserter(out));
  return out;
}

namespace {

// Shortest path from `from` up to `to` following parent edges, returned
// top-down (to .. from); empty when `to` is not reachable.
std::vector<int> upward_path(const TreedDag& dag, int from, int to) {
  std::map<int, int> prev;
  std::deque<int> queue{from};
  prev[from] = -1;
  while (!queue.empty()) {
    const int v = queue.front();
    queue.pop_front();
    if (v == to) break;
    for (int p : dag.node(v).parents)
      if (!prev.count(p)) {
        prev[p] = v;
        queue.push_back(p);
      }
  }
  if (!prev.count(to)) return {};
  std::vector<int> path;
  for (int v = to; v >= 0; v = prev[v]) path.push_back(v);
  return path;
}

std::set<int> ancestors_or_self(const TreedDag& dag, int v) {
  std::set<int> out{v};
  std::deque<int> queue{v};
  while (!queue.empty()) {
    const int x = queue.front();
    queue.pop_front();
    for (int p : dag.node(x).parents)
      if (out.insert(p).second) queue.push_back(p);
  }
  return out;
}

}  // namespace

ConcestorPaths concestor_and_paths(const TreedDag& dag, int a, int b) {
  ConcestorPaths out;
  const auto sa = ancestors_or_self(dag, a);
  const auto sb = ancestors_or_self(dag, b);
  int best = -1;
  for (int v : sa)
    if (sb.count(v) && (best < 0 || dag.node(v).id.level > dag.node(best).id.level)) best = v;
  if (best < 0) return out;
  out.concestor = best;
  out.path_a = upward_path(dag, a, best);
  out.path_b = upward_path(dag, b, best);
  return out;
}

std::vector<int> color_nodes(const TreedDag& dag) {
  const int h = dag.height(), base = dag.chain_base();
  std::vector<int> colors(dag.size());
  for (int i = 0; i < dag.size(); ++i) {
    const Node& nd = dag.node(i);
    const int level = nd.id.level;
    const int eff = nd.is_leaf() ? dag.node(nd.tree_parent).id.level + 1 : level;
    if (dag.depth() == h) {
      colors[i] = level;
    } else if (dag.depth() == 1) {
      colors[i] = eff % 2;
    } else {
      const int anchor = nd.is_leaf() ? eff - 1 : level;
      const bool chained = nd.is_leaf() ? anchor >= base : level >= base;
      colors[i] = chained ? level : eff % 2;
    }
  }
  return colors;
}

std::vector<int> color_order(const TreedDag& dag) {
  const auto colors = color_nodes(dag);
  std::set<int> distinct(colors.begin(), colors.end());
  std::vector<int> out(distinct.begin(), distinct.end());
  if (dag.depth() != 1 || dag.depth() == dag.height()) std::reverse(out.begin(), out.end());
  return out;
}

bool coloring_is_valid(const TreedDag& dag, const std::vector<int>& colors) {
  for (int i = 0; i < dag.size(); ++i) {
    const Node& nd = dag.node(i);
    std::set<int> blanket(nd.parents.begin(), nd.parents.end());
    for (int c : nd.children) {
      blanket.insert(c);
      for (int p : dag.node(c).parents) blanket.insert(p);
    }
    blanket.erase(i);
    for (int b : blanket)
      if (colors[b] == colors[i]) return false;
  }
  return true;
}

void write_dag(std::ostream& os, const TreedDag& dag) {
  os << "spamtree-dag 1\n";
  os << "height " << dag.height() << " depth " << dag.depth() << " locations "
     << dag.num_locations() << " nodes " << dag.size() << " fallback " << dag.fallback_count()
     << "\n";
  for (int i = 0; i < dag.size(); ++i) {
    const Node& nd = dag.node(i);
    os << "node " << i << ' ' << nd.id.level << ' ' << nd.id.index << ' '
       << (nd.is_leaf() ? "leaf" : "branch") << ' ' << nd.tree_parent << ' ' << nd.var
       << " parents " << nd.parents.size();
    for (int p : nd.parents) os << ' ' << p;
    os << " locs " << nd.locs.size();
    for (int l : nd.locs) os << ' ' << l;
    os << '\n';
  }
}

TreedDag read_dag(std::istream& is) {
  std::string line, word;
  if (!std::getline(is, line) || line != "spamtree-dag 1") throw Error("not a dag file");
  int height = 0, depth = 0, nloc = 0, nnodes = 0, fallback = 0;
  {
    if (!std::getline(is, line)) throw Error("dag file truncated");
    std::istringstream ss(line);
    std::string k1, k2, k3, k4, k5;
    if (!(ss >> k1 >> height >> k2 >> depth >> k3 >> nloc >> k4 >> nnodes >> k5 >> fallback) ||
        k1 != "height" || k2 != "depth" || k3 != "locations" || k4 != "nodes" || k5 != "fallback")
      throw Error("malformed dag header");
  }
  std::vector<Node> nodes;
  std::vector<std::vector<int>> listed_parents;
  for (int i = 0; i < nnodes; ++i) {
    if (!std::getline(is, line)) throw Error("dag file truncated at node " + std::to_string(i));
    std::istringstream ss(line);
    Node nd;
    int flat = 0;
    std::string role, kp, kl;
    std::size_t np = 0, nl = 0;
    if (!(ss >> word >> flat >> nd.id.level >> nd.id.index >> role >> nd.tree_parent >> nd.var >>
          kp >> np) ||
        word != "node" || flat != i || kp != "parents")
      throw Error("malformed dag line " + std::to_string(i + 3));
    nd.role = role == "leaf" ? NodeRole::leaf : NodeRole::branch;
    std::vector<int> ps(np);
    for (auto& p : ps) ss >> p;
    if (!(ss >> kl >> nl) || kl != "locs") throw Error("malformed dag line " + std::to_string(i + 3));
    nd.locs.resize(nl);
    for (auto& l : nd.locs) ss >> l;
    if (!ss) throw Error("malformed dag line " + std::to_string(i + 3));
    nodes.push_back(std::move(nd));
    listed_parents.push_back(std::move(ps));
  }
  TreedDag dag = TreedDag::from_nodes(height, depth, nloc, std::move(nodes));
  for (int i = 0; i < nnodes; ++i)
    if (dag.node(i).parents != listed_parents[i])
      throw Error("dag file parents disagree with the depth rule at node " + std::to_string(i));
  // fallback count is informational only
  (void)fallback;
  return dag;
}

}  // namespace spamtree
