#pragma once

#include "spamtree/common.hpp"
#include "spamtree/linalg.hpp"
#include "spamtree/treegraph.hpp"

#include <memory>
#include <string>
#include <vector>

namespace spamtree {

/// Parameters of the multivariate cross-covariance
///   C_ii(h) = sigma1_i^2 C(h, 0) + sigma2_i^2 exp(-phi_margin_i h)
///   C_ij(h) = sigma1_i sigma1_j C(h, latent_dist_ij),  i != j
///   C(h, D) = exp(-phi h / (1 + alpha D)^(beta / 2)) / (1 + alpha D)^beta
struct ThetaParams {
  Vector sigma1;        // signed shared-component amplitudes
  Vector sigma2;        // outcome-specific amplitudes, >= 0
  Vector phi_margin;    // outcome-specific decays, > 0
  Matrix latent_dist;   // symmetric, zero diagonal, off-diagonal > 0
  double alpha = 1.0;
  double beta = 1.0;
  double phi = 1.0;

  int q() const { return static_cast<int>(sigma1.size()); }
  void validate() const;
  static ThetaParams defaults(int q);
};

double base_cov(double h, double latent_dist, double alpha, double beta, double phi);
double cross_cov(const ThetaParams& th, const double* a, int va, const double* b, int vb, int dim);
double cross_cov(const ThetaParams& th, const ExpandedLocation& a, const ExpandedLocation& b);

Matrix cov_matrix(const ThetaParams& th, const LocationSet& locs, std::span<const int> rows,
                  std::span<const int> cols);
Matrix cov_matrix(const ThetaParams& th, const LocationSet& locs, std::span<const int> idx);

/// Conditional factors of one node given its parents:
///   w_j | w_[j] ~ N(H w_[j], R).
/// Leaf nodes keep only the diagonal of R: their locations are conditionally
/// independent given the parents.
struct NodeFactors {
  Matrix H;          // n_j x J_j
  Matrix R;          // branch: n_j x n_j; leaf: n_j x 1
  Matrix R_inv;      // same shape as R
  Matrix R_chol;     // branch: lower Cholesky factor; leaf: sqrt of R
  double R_logdet = 0.0;
  double jitter = 0.0;
  std::shared_ptr<const Matrix> parent_cov_inv;  // C_[j]^{-1}, J_j x J_j
};

enum class FactorScope { all_nodes, without_child_info, branches_only };

struct ModelFactors {
  ThetaParams theta;
  std::vector<NodeFactors> node;
  /// Per branch: inverse covariance of the parent set its children use.
  std::vector<std::shared_ptr<const Matrix>> child_cov_inv;
  /// Per branch: sum over children of H_{i->j}^T R_j^{-1} H_{i->j}.
  std::vector<Matrix> child_info;
};

/// Level-by-level factor computation, nodes of a level in parallel. Parent
/// inverses are built recursively from the parent's own factors.
ModelFactors compute_factors(const ThetaParams& th, const TreedDag& dag, const LocationSet& locs,
                             FactorScope scope = FactorScope::all_nodes);

/// Fills ModelFactors::child_info from the node factors.
void compute_child_info(ModelFactors& mf, const TreedDag& dag);

/// Serial reference: every parent-set covariance is inverted directly.
ModelFactors compute_factors_serial(const ThetaParams& th, const TreedDag& dag,
                                    const LocationSet& locs);

/// Factors of a single node given the inverse covariance of its parent set
/// (null for roots).
NodeFactors node_factors(const ThetaParams& th, const TreedDag& dag, const LocationSet& locs,
                         int node, std::shared_ptr<const Matrix> parent_cov_inv);

/// Inverse of [[A, B], [B^T, D]] given A^{-1} and the factors of D given A.
Matrix nested_inverse(const Matrix& a_inv, const Matrix& h, const Matrix& r_inv);

/// Covariance between two locations implied by the tree, computed from the
/// base covariance along shared ancestors or through the common ancestor.
double induced_cov(const ThetaParams& th, const TreedDag& dag, const LocationSet& locs, int a,
                   int b);

/// Number of entries of the unconstrained parameter vector for q outcomes.
int theta_size(int q);

}  // namespace spamtree
