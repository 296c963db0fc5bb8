#include "spamtree/precision.hpp"

#include "spamtree/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace spamtree {

namespace {

std::string node_name(const TreedDag& dag, int j) {
  const auto& id = dag.node(j).id;
  return "node (level " + std::to_string(id.level) + ", index " + std::to_string(id.index) + ")";
}

int parent_position(const Node& child, int parent) {
  const auto it = std::find(child.parents.begin(), child.parents.end(), parent);
  if (it == child.parents.end()) return -1;
  return static_cast<int>(it - child.parents.begin());
}

// H_{p->k}: the columns of node k's H acting on parent p.
auto parent_cols(const TreedDag& dag, const ModelFactors& mf, int k, int h) {
  const Node& nd = dag.node(k);
  return mf.node[k].H.middleCols(nd.parent_offsets[h], dag.node(nd.parents[h]).size());
}

// A^T R^{-1} B for node k, with R^{-1} diagonal on leaves.
template <class A, class B>
Matrix weighted_cross(const TreedDag& dag, const ModelFactors& mf, int k, const A& a, const B& b) {
  if (dag.node(k).is_leaf()) return a.transpose() * mf.node[k].R_inv.col(0).asDiagonal() * b;
  return a.transpose() * mf.node[k].R_inv * b;
}

}  // namespace

BlockSparseMatrix::BlockSparseMatrix(const TreedDag& dag) : dag_(&dag) {
  diag_.resize(dag.size());
  lower_.resize(dag.size());
  for (int j = 0; j < dag.size(); ++j) {
    const Node& nd = dag.node(j);
    diag_[j] = nd.is_leaf() ? Matrix::Zero(nd.size(), 1) : Matrix::Zero(nd.size(), nd.size());
    for (int p : nd.parents) lower_[j].push_back(Matrix::Zero(nd.size(), dag.node(p).size()));
  }
}

std::int64_t BlockSparseMatrix::structural_nonzeros() const {
  std::int64_t s = 0;
  for (int j = 0; j < dag_->size(); ++j) {
    s += diag_[j].size();
    for (const auto& b : lower_[j]) s += 2 * b.size();
  }
  return s;
}

Matrix BlockSparseMatrix::to_dense() const {
  const int n = dag_->num_locations();
  Matrix out = Matrix::Zero(n, n);
  for (int j = 0; j < dag_->size(); ++j) {
    const Node& nd = dag_->node(j);
    for (int a = 0; a < nd.size(); ++a) {
      if (diag_is_vector(j)) {
        out(nd.locs[a], nd.locs[a]) = diag_[j](a, 0);
      } else {
        for (int b = 0; b < nd.size(); ++b) out(nd.locs[a], nd.locs[b]) = diag_[j](a, b);
      }
    }
    for (std::size_t h = 0; h < nd.parents.size(); ++h) {
      const auto& pl = dag_->node(nd.parents[h]).locs;
      for (int a = 0; a < nd.size(); ++a)
        for (std::size_t b = 0; b < pl.size(); ++b) {
          out(nd.locs[a], pl[b]) = lower_[j][h](a, b);
          out(pl[b], nd.locs[a]) = lower_[j][h](a, b);
        }
    }
  }
  return out;
}

std::int64_t count_nnz(const TreedDag& dag) {
  std::int64_t s = 0;
  for (const auto& nd : dag.nodes()) {
    const std::int64_t n = nd.size(), J = nd.parent_size();
    s += 2 * n * J + (nd.is_leaf() ? n : n * n);
  }
  return s;
}

BlockSparseMatrix assemble_precision(const ModelFactors& mf, const TreedDag& dag) {
  BlockSparseMatrix out(dag);
  parallel_for(dag.size(), [&](int p) {
    const Node& np = dag.node(p);
    const auto& fp = mf.node[p];
    Matrix& dp = out.diag(p);
    if (np.is_leaf()) {
      dp = fp.R_inv;
    } else {
      dp = fp.R_inv;
      for (int k : np.children) {
        const auto hk = parent_cols(dag, mf, k, parent_position(dag.node(k), p));
        dp.noalias() += weighted_cross(dag, mf, k, hk, hk);
      }
    }
    for (std::size_t h = 0; h < np.parents.size(); ++h) {
      const int g = np.parents[h];
      Matrix& blk = out.lower(p, static_cast<int>(h));
      const auto hg = parent_cols(dag, mf, p, static_cast<int>(h));
      if (np.is_leaf())
        blk = -(fp.R_inv.col(0).asDiagonal() * hg);
      else
        blk = -(fp.R_inv * hg);
      for (int k : np.children) {
        const Node& nk = dag.node(k);
        const int kg = parent_position(nk, g);
        if (kg < 0) continue;
        const auto hkp = parent_cols(dag, mf, k, parent_position(nk, p));
        const auto hkg = parent_cols(dag, mf, k, kg);
        blk.noalias() += weighted_cross(dag, mf, k, hkp, hkg);
      }
    }
  });
  return out;
}

BlockSparseMatrix assemble_precision_serial(const ModelFactors& mf, const TreedDag& dag) {
  BlockSparseMatrix out(dag);
  for (int k = 0; k < dag.size(); ++k) {
    const Node& nk = dag.node(k);
    const auto& fk = mf.node[k];
    out.diag(k) += fk.R_inv;
    const int np = static_cast<int>(nk.parents.size());
    for (int a = 0; a < np; ++a) {
      const auto ha = parent_cols(dag, mf, k, a);
      if (nk.is_leaf())
        out.lower(k, a) -= fk.R_inv.col(0).asDiagonal() * ha;
      else
        out.lower(k, a) -= fk.R_inv * ha;
      for (int b = 0; b <= a; ++b) {
        const auto hb = parent_cols(dag, mf, k, b);
        const Matrix c = weighted_cross(dag, mf, k, ha, hb);
        const int pa = nk.parents[a], pb = nk.parents[b];
        if (a == b)
          out.diag(pa) += c;
        else
          out.lower(pa, parent_position(dag.node(pa), pb)) += c;
      }
    }
  }
  return out;
}

namespace {

void factor_pivot(const TreedDag& dag, const Matrix& lambda_jj, int j, BlockLDL& out,
                  std::vector<double>& logdets) {
  if (dag.node(j).is_leaf()) {
    if ((lambda_jj.array() <= 0.0).any())
      throw Error("LDL pivot is not positive definite at " + node_name(dag, j));
    out.D[j] = lambda_jj;
    out.D_inv[j] = lambda_jj.cwiseInverse();
    logdets[j] = lambda_jj.array().log().sum();
    return;
  }
  Eigen::LLT<Matrix> llt(lambda_jj);
  if (llt.info() != Eigen::Success)
    throw Error("LDL pivot is not positive definite at " + node_name(dag, j));
  out.D[j] = lambda_jj;
  out.D_inv[j] = llt.solve(Matrix::Identity(lambda_jj.rows(), lambda_jj.cols()));
  logdets[j] = log_det(llt);
}

void eliminate_row(const TreedDag& dag, const BlockSparseMatrix& lambda, int j, BlockLDL& out) {
  const Node& nd = dag.node(j);
  out.L[j].resize(nd.parents.size());
  for (std::size_t h = 0; h < nd.parents.size(); ++h) {
    if (nd.is_leaf())
      out.L[j][h] = -(out.D_inv[j].col(0).asDiagonal() * lambda.lower(j, static_cast<int>(h)));
    else
      out.L[j][h] = -(out.D_inv[j] * lambda.lower(j, static_cast<int>(h)));
  }
}

BlockLDL init_ldl(const TreedDag& dag) {
  BlockLDL out;
  out.dag = &dag;
  out.D.resize(dag.size());
  out.D_inv.resize(dag.size());
  out.L.resize(dag.size());
  return out;
}

}  // namespace

// Schur updates use Lambda_pg <- Lambda_pg + Lambda_jp^T L_jg, i.e.
// Lambda_pg - Lambda_pj D_j^{-1} Lambda_jg.
BlockLDL block_ldl(BlockSparseMatrix lambda) {
  const TreedDag& dag = lambda.dag();
  BlockLDL out = init_ldl(dag);
  std::vector<double> logdets(dag.size(), 0.0);
  for (int r = dag.height(); r >= 0; --r) {
    const int begin = dag.level_begin(r), count = dag.level_size(r);
    parallel_for(count, [&](int k) {
      const int j = begin + k;
      factor_pivot(dag, lambda.diag(j), j, out, logdets);
      eliminate_row(dag, lambda, j, out);
    });
    if (r == 0) break;
    // Each target p gathers the updates of its children at level r in index order.
    std::vector<int> targets;
    for (int p = 0; p < dag.level_begin(r); ++p) {
      for (int c : dag.node(p).children)
        if (dag.node(c).id.level == r) {
          targets.push_back(p);
          break;
        }
    }
    parallel_for(static_cast<int>(targets.size()), [&](int t) {
      const int p = targets[t];
      const Node& np = dag.node(p);
      for (int j : np.children) {
        const Node& nj = dag.node(j);
        if (nj.id.level != r) continue;
        const int hp = parent_position(nj, p);
        const Matrix& ljp = lambda.lower(j, hp);
        for (int hg = 0; hg <= hp; ++hg) {
          const Matrix upd = ljp.transpose() * out.L[j][hg];
          if (hg == hp)
            lambda.diag(p) += upd;
          else
            lambda.lower(p, parent_position(np, nj.parents[hg])) += upd;
        }
      }
    });
  }
  out.log_det = 0.0;
  for (double v : logdets) out.log_det += v;
  return out;
}

BlockLDL block_ldl_serial(BlockSparseMatrix lambda) {
  const TreedDag& dag = lambda.dag();
  BlockLDL out = init_ldl(dag);
  std::vector<double> logdets(dag.size(), 0.0);
  for (int r = dag.height(); r >= 0; --r) {
    for (int j = dag.level_begin(r); j < dag.level_begin(r) + dag.level_size(r); ++j) {
      factor_pivot(dag, lambda.diag(j), j, out, logdets);
      eliminate_row(dag, lambda, j, out);
      const Node& nj = dag.node(j);
      const int np = static_cast<int>(nj.parents.size());
      for (int hp = 0; hp < np; ++hp) {
        const int p = nj.parents[hp];
        for (int hg = 0; hg < np; ++hg) {
          const int g = nj.parents[hg];
          const Matrix upd = lambda.lower(j, hp).transpose() * out.L[j][hg];
          // Only the lower triangle is stored; (g, p) is the transpose of (p, g).
          if (hg == hp)
            lambda.diag(p) += upd;
          else if (hg < hp)
            lambda.lower(p, parent_position(dag.node(p), g)) += upd;
        }
      }
    }
  }
  out.log_det = 0.0;
  for (double v : logdets) out.log_det += v;
  return out;
}

Matrix BlockLDL::unit_lower_dense() const {
  const int n = dag->num_locations();
  Matrix out = Matrix::Identity(n, n);
  for (int j = 0; j < dag->size(); ++j) {
    const Node& nd = dag->node(j);
    for (std::size_t h = 0; h < nd.parents.size(); ++h) {
      const auto& pl = dag->node(nd.parents[h]).locs;
      for (int a = 0; a < nd.size(); ++a)
        for (std::size_t b = 0; b < pl.size(); ++b) out(nd.locs[a], pl[b]) = -L[j][h](a, b);
    }
  }
  return out;
}

Matrix BlockLDL::d_dense() const {
  const int n = dag->num_locations();
  Matrix out = Matrix::Zero(n, n);
  for (int j = 0; j < dag->size(); ++j) {
    const Node& nd = dag->node(j);
    for (int a = 0; a < nd.size(); ++a) {
      if (nd.is_leaf()) {
        out(nd.locs[a], nd.locs[a]) = D[j](a, 0);
      } else {
        for (int b = 0; b < nd.size(); ++b) out(nd.locs[a], nd.locs[b]) = D[j](a, b);
      }
    }
  }
  return out;
}

UnitLowerInverse block_forward_inverse(const BlockLDL& ldl) {
  const TreedDag& dag = *ldl.dag;
  UnitLowerInverse out;
  out.dag = &dag;
  out.blocks.resize(dag.size());
  for (int r = 0; r <= dag.height(); ++r) {
    const int begin = dag.level_begin(r);
    parallel_for(dag.level_size(r), [&](int k) {
      const int j = begin + k;
      const Node& nj = dag.node(j);
      const auto anc = dag.ancestors(j);
      auto& row = out.blocks[j];
      row.assign(anc.size(), Matrix());
      for (std::size_t a = 0; a < anc.size(); ++a) {
        const int p = anc[a];
        Matrix acc = Matrix::Zero(nj.size(), dag.node(p).size());
        // Sum over parents g of j that descend from (or equal) p.
        for (std::size_t h = 0; h < nj.parents.size(); ++h) {
          const int g = nj.parents[h];
          if (g == p) {
            acc += ldl.L[j][h];
            continue;
          }
          const auto anc_g = dag.ancestors(g);
          const int lp = dag.node(p).id.level;
          if (lp < static_cast<int>(anc_g.size()) && anc_g[lp] == p)
            acc += ldl.L[j][h] * out.blocks[g][lp];
        }
        row[a] = std::move(acc);
      }
    });
  }
  return out;
}

Matrix UnitLowerInverse::to_dense() const {
  const int n = dag->num_locations();
  Matrix out = Matrix::Identity(n, n);
  for (int j = 0; j < dag->size(); ++j) {
    const Node& nd = dag->node(j);
    const auto anc = dag->ancestors(j);
    for (std::size_t a = 0; a < anc.size(); ++a) {
      const auto& pl = dag->node(anc[a]).locs;
      for (int x = 0; x < nd.size(); ++x)
        for (std::size_t y = 0; y < pl.size(); ++y) out(nd.locs[x], pl[y]) = blocks[j][a](x, y);
    }
  }
  return out;
}

Vector ldl_solve(const BlockLDL& ldl, const Vector& v) {
  const TreedDag& dag = *ldl.dag;
  const int nn = dag.size();
  std::vector<Vector> x(nn);
  for (int j = 0; j < nn; ++j) {
    const Node& nd = dag.node(j);
    x[j].resize(nd.size());
    for (int a = 0; a < nd.size(); ++a) x[j](a) = v(nd.locs[a]);
  }
  // (I - L)^T x = v, deepest nodes first: x_p = v_p + sum_j L_jp^T x_j.
  for (int r = dag.height(); r >= 0; --r) {
    for (int j = dag.level_begin(r); j < dag.level_begin(r) + dag.level_size(r); ++j) {
      const Node& nd = dag.node(j);
      for (std::size_t h = 0; h < nd.parents.size(); ++h)
        x[nd.parents[h]].noalias() += ldl.L[j][h].transpose() * x[j];
    }
  }
  for (int j = 0; j < nn; ++j) {
    if (dag.node(j).is_leaf())
      x[j] = x[j].cwiseProduct(ldl.D_inv[j].col(0));
    else
      x[j] = ldl.D_inv[j] * x[j];
  }
  // (I - L) s = z, roots first: s_j = z_j + sum_p L_jp s_p.
  for (int j = 0; j < nn; ++j) {
    const Node& nd = dag.node(j);
    for (std::size_t h = 0; h < nd.parents.size(); ++h)
      x[j].noalias() += ldl.L[j][h] * x[nd.parents[h]];
  }
  Vector out(v.size());
  for (int j = 0; j < nn; ++j) {
    const Node& nd = dag.node(j);
    for (int a = 0; a < nd.size(); ++a) out(nd.locs[a]) = x[j](a);
  }
  return out;
}

double integrated_loglik(const ModelFactors& mf, const TreedDag& dag, const ModelData& data,
                         const Vector& beta, const Vector& tau2) {
  if (data.n() != dag.num_locations()) throw Error("data and graph disagree on locations");
  BlockSparseMatrix lambda = assemble_precision(mf, dag);
  const Vector mean = data.linear_predictor(beta);
  Vector u = Vector::Zero(data.n());
  double quad = 0.0, logdet_d = 0.0;
  int nobs = 0;
  for (int i = 0; i < data.n(); ++i) {
    if (!data.observed[i]) continue;
    const double t2 = tau2(data.locations.var(i));
    const double r = data.y(i) - mean(i);
    u(i) = r / t2;
    quad += r * r / t2;
    logdet_d += std::log(t2);
    ++nobs;
    const int j = dag.node_of(i), a = dag.position_in_node(i);
    if (dag.node(j).is_leaf())
      lambda.diag(j)(a, 0) += 1.0 / t2;
    else
      lambda.diag(j)(a, a) += 1.0 / t2;
  }
  const BlockLDL ldl = block_ldl(std::move(lambda));
  quad -= u.dot(ldl_solve(ldl, u));
  double logdet_c = 0.0;
  for (const auto& f : mf.node) logdet_c += f.R_logdet;
  const double logdet = logdet_d + logdet_c + ldl.log_det;
  return -0.5 * (nobs * std::log(2.0 * std::numbers::pi) + logdet + quad);
}

}  // namespace spamtree
