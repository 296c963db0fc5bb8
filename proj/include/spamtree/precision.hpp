#pragma once

#include "spamtree/covariance.hpp"
#include "spamtree/model.hpp"
#include "spamtree/treegraph.hpp"

#include <cstdint>
#include <vector>

namespace spamtree {

/// Symmetric matrix over the graph's locations with one dense block per node
/// and one per (node, parent) edge. Leaf diagonal blocks are diagonal and
/// stored as a single column.
class BlockSparseMatrix {
 public:
  BlockSparseMatrix() = default;
  explicit BlockSparseMatrix(const TreedDag& dag);

  const TreedDag& dag() const { return *dag_; }
  Matrix& diag(int j) { return diag_[j]; }
  const Matrix& diag(int j) const { return diag_[j]; }
  /// Block (j, parents(j)[h]), n_j x n_p.
  Matrix& lower(int j, int h) { return lower_[j][h]; }
  const Matrix& lower(int j, int h) const { return lower_[j][h]; }
  bool diag_is_vector(int j) const { return dag_->node(j).is_leaf(); }

  /// Scalars held in stored blocks, counting the upper triangle by symmetry.
  std::int64_t structural_nonzeros() const;
  /// Dense matrix in location-ordinal order.
  Matrix to_dense() const;

 private:
  const TreedDag* dag_ = nullptr;
  std::vector<Matrix> diag_;
  std::vector<std::vector<Matrix>> lower_;
};

/// Precision of the tree-induced Gaussian, gathered per target node in parallel.
BlockSparseMatrix assemble_precision(const ModelFactors& mf, const TreedDag& dag);
/// Serial reference: scatters each node's contribution over its parent pairs.
BlockSparseMatrix assemble_precision_serial(const ModelFactors& mf, const TreedDag& dag);

/// Closed-form nonzero count: sum_i 2 n_i J_i + n_i^2 [branch] + n_i [leaf].
std::int64_t count_nnz(const TreedDag& dag);

/// Lambda = (I - L)^T D (I - L) with L following the parent pattern.
struct BlockLDL {
  const TreedDag* dag = nullptr;
  std::vector<Matrix> D;                // leaf blocks as a column
  std::vector<Matrix> D_inv;            // same shapes as D
  std::vector<std::vector<Matrix>> L;   // L[j][h]: block (j, parents(j)[h])
  double log_det = 0.0;                 // log |Lambda|

  Matrix unit_lower_dense() const;      // I - L, location-ordinal order
  Matrix d_dense() const;
};

BlockLDL block_ldl(BlockSparseMatrix lambda);
BlockLDL block_ldl_serial(BlockSparseMatrix lambda);

/// (I - L)^{-1}; block (j, ancestors(j)[r]) for every tree ancestor, plus identity.
struct UnitLowerInverse {
  const TreedDag* dag = nullptr;
  std::vector<std::vector<Matrix>> blocks;
  Matrix to_dense() const;
};
UnitLowerInverse block_forward_inverse(const BlockLDL& ldl);

/// Lambda^{-1} v using the factorization; v in location-ordinal order.
Vector ldl_solve(const BlockLDL& ldl, const Vector& v);

/// log N(y_obs | X beta, C~_obs + diag(tau2)) with the latent process
/// integrated out, via Sherman-Morrison-Woodbury on the tree precision.
double integrated_loglik(const ModelFactors& mf, const TreedDag& dag, const ModelData& data,
                         const Vector& beta, const Vector& tau2);

}  // namespace spamtree
