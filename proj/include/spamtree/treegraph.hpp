#pragma once

#include "spamtree/common.hpp"
#include "spamtree/kdtree.hpp"

#include <compare>
#include <iosfwd>
#include <vector>

namespace spamtree {

enum class NodeRole { branch, leaf };

struct NodeId {
  int level = 0;
  int index = 0;
  auto operator<=>(const NodeId&) const = default;
};

struct Node {
  NodeId id;
  NodeRole role = NodeRole::branch;
  int tree_parent = -1;        // containing cell's node; terminal branch for leaves
  int var = -1;                // leaves: the outcome they serve
  std::vector<int> parents;    // flat ids, ascending level
  std::vector<int> children;   // flat ids of nodes listing this one as a parent
  std::vector<int> locs;       // location ordinals, ascending
  std::vector<int> parent_locs;     // concatenation of the parents' locs
  std::vector<int> parent_offsets;  // start of each parent inside parent_locs

  int size() const { return static_cast<int>(locs.size()); }
  int parent_size() const { return static_cast<int>(parent_locs.size()); }
  bool is_leaf() const { return role == NodeRole::leaf; }
};

struct TreeParams {
  int levels = 3;              // number of branch levels; leaves sit one level below
  int depth = 3;               // 1 <= depth <= levels; depth == levels nests every ancestor
  int children_per_axis = 2;   // each branch cell splits into children_per_axis^d cells
  int root_cells_per_axis = 1;
  int subset_size = 25;        // target reference locations per branch node
  std::vector<double> bias_weights;  // per outcome sampling weight; empty means uniform
  std::uint64_t seed = 1;
};

class TreedDag {
 public:
  TreedDag() = default;

  /// Assembles a graph from explicit nodes. Nodes must be sorted by
  /// (level, index); parents, children and parent location lists are
  /// recomputed from tree_parent and the depth rule.
  static TreedDag from_nodes(int height, int depth, int num_locations, std::vector<Node> nodes);

  int height() const { return height_; }
  int depth() const { return depth_; }
  /// First level whose descendants condition on a nested chain of ancestors.
  int chain_base() const { return height_ - depth_; }

  int size() const { return static_cast<int>(nodes_.size()); }
  const Node& node(int flat) const { return nodes_[flat]; }
  const std::vector<Node>& nodes() const { return nodes_; }
  int flat(NodeId id) const { return level_start_[id.level] + id.index; }
  int num_levels() const { return static_cast<int>(level_start_.size()) - 1; }
  int level_size(int r) const { return level_start_[r + 1] - level_start_[r]; }
  int level_begin(int r) const { return level_start_[r]; }

  int num_locations() const { return static_cast<int>(loc_node_.size()); }
  int node_of(int loc) const { return loc_node_[loc]; }
  bool is_reference(int loc) const { return !nodes_[loc_node_[loc]].is_leaf(); }
  int position_in_node(int loc) const { return loc_pos_[loc]; }

  bool is_terminal(int flat) const;
  std::vector<int> terminal_branches() const;
  /// Tree path root..tree_parent(flat); element r sits at level r for branches.
  std::vector<int> ancestors(int flat) const;
  /// parent list a child of `flat` would get under the depth rule.
  std::vector<int> child_parent_set(int branch) const;

  std::int64_t num_edges() const;
  /// Non-reference locations that were placed without a same-outcome reference.
  int fallback_count() const { return fallback_count_; }

 private:
  friend TreedDag build_tree(const LocationSet&, const std::vector<std::uint8_t>&,
                             const TreeParams&);
  void finalize();

  int fallback_count_ = 0;
  int height_ = 0;
  int depth_ = 0;
  std::vector<Node> nodes_;
  std::vector<int> level_start_;
  std::vector<int> loc_node_;
  std::vector<int> loc_pos_;
};

/// Nearest-reference lookup over the terminal branches of a graph.
class TerminalIndex {
 public:
  TerminalIndex(const TreedDag& dag, const LocationSet& locs);
  /// Terminal branches are nodes of role branch with no branch tree-children.
  TerminalIndex(const std::vector<Node>& nodes, const LocationSet& locs);

  struct Pick {
    int terminal = -1;
    bool fallback = false;  // no terminal holds a reference of the requested outcome
  };
  Pick pick(const double* coords, int var) const;

 private:
  std::vector<KdTree> by_var_;
  KdTree any_;
};

TreedDag build_tree(const LocationSet& locs, const std::vector<std::uint8_t>& observed,
                    const TreeParams& params);

struct CherryPick {
  int terminal = -1;
  int leaf = -1;  // existing leaf for (terminal, var), or -1
  bool fallback = false;
};
CherryPick cherry_pick(const TreedDag& dag, const TerminalIndex& index, const double* coords,
                       int var);

/// ({a} ∪ ch(a)) ∩ ({b} ∪ ch(b)), ascending.
std::vector<int> common_descendants(const TreedDag& dag, int a, int b);

struct ConcestorPaths {
  int concestor = -1;   // -1 when the nodes share no ancestor
  std::vector<int> path_a;  // concestor .. a along graph edges
  std::vector<int> path_b;
};
ConcestorPaths concestor_and_paths(const TreedDag& dag, int a, int b);

/// Color per node such that no node has a same-colored node in its Markov
/// blanket. Colors are listed in sampling order by `color_order`.
std::vector<int> color_nodes(const TreedDag& dag);
std::vector<int> color_order(const TreedDag& dag);
bool coloring_is_valid(const TreedDag& dag, const std::vector<int>& colors);

void write_dag(std::ostream& os, const TreedDag& dag);
TreedDag read_dag(std::istream& is);

}  // namespace spamtree
