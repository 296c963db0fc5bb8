#include "spamtree/covariance.hpp"

#include "spamtree/parallel.hpp"

#include <algorithm>
#include <cmath>

namespace spamtree {

namespace {

std::string node_name(const TreedDag& dag, int j) {
  const auto& id = dag.node(j).id;
  return "node (level " + std::to_string(id.level) + ", index " + std::to_string(id.index) + ")";
}

}  // namespace

int theta_size(int q) { return 3 * q + q * (q - 1) / 2 + 3; }

void ThetaParams::validate() const {
  const int n = q();
  if (n < 1) throw Error("theta needs at least one outcome");
  if (sigma2.size() != n || phi_margin.size() != n || latent_dist.rows() != n ||
      latent_dist.cols() != n)
    throw Error("theta components disagree on the number of outcomes");
  for (int i = 0; i < n; ++i) {
    if (!std::isfinite(sigma1(i))) throw Error("sigma1 must be finite");
    if (!(sigma2(i) >= 0.0) || !std::isfinite(sigma2(i))) throw Error("sigma2 must be >= 0");
    if (!(phi_margin(i) > 0.0) || !std::isfinite(phi_margin(i)))
      throw Error("outcome decays must be > 0");
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      if (!(latent_dist(i, j) > 0.0) || !std::isfinite(latent_dist(i, j)))
        throw Error("latent distances must be > 0");
      if (latent_dist(i, j) != latent_dist(j, i)) throw Error("latent distances must be symmetric");
    }
  }
  if (!(alpha > 0.0) || !std::isfinite(alpha)) throw Error("alpha must be > 0");
  if (!(beta > 0.0) || !(beta <= 1.0)) throw Error("beta must lie in (0, 1]");
  if (!(phi > 0.0) || !std::isfinite(phi)) throw Error("phi must be > 0");
}

ThetaParams ThetaParams::defaults(int q) {
  ThetaParams th;
  th.sigma1 = Vector::Ones(q);
  th.sigma2 = Vector::Ones(q);
  th.phi_margin = Vector::Ones(q);
  th.latent_dist = Matrix::Ones(q, q);
  th.latent_dist.diagonal().setZero();
  return th;
}

double base_cov(double h, double latent_dist, double alpha, double beta, double phi) {
  const double s = 1.0 + alpha * latent_dist;
  return std::exp(-phi * h / std::pow(s, beta / 2.0)) / std::pow(s, beta);
}

double cross_cov(const ThetaParams& th, const double* a, int va, const double* b, int vb, int dim) {
  const double h = euclidean(a, b, dim);
  if (va == vb) {
    const double s1 = th.sigma1(va), s2 = th.sigma2(va);
    return s1 * s1 * std::exp(-th.phi * h) + s2 * s2 * std::exp(-th.phi_margin(va) * h);
  }
  return th.sigma1(va) * th.sigma1(vb) *
         base_cov(h, th.latent_dist(va, vb), th.alpha, th.beta, th.phi);
}

double cross_cov(const ThetaParams& th, const ExpandedLocation& a, const ExpandedLocation& b) {
  if (a.coords.size() != b.coords.size()) throw Error("locations differ in dimension");
  return cross_cov(th, a.coords.data(), a.var, b.coords.data(), b.var,
                   static_cast<int>(a.coords.size()));
}

Matrix cov_matrix(const ThetaParams& th, const LocationSet& locs, std::span<const int> rows,
                  std::span<const int> cols) {
  Matrix c(rows.size(), cols.size());
  const int d = locs.dim();
  for (std::size_t j = 0; j < cols.size(); ++j)
    for (std::size_t i = 0; i < rows.size(); ++i)
      c(i, j) = cross_cov(th, locs.coords(rows[i]), locs.var(rows[i]), locs.coords(cols[j]),
                          locs.var(cols[j]), d);
  return c;
}

Matrix cov_matrix(const ThetaParams& th, const LocationSet& locs, std::span<const int> idx) {
  const auto n = static_cast<Eigen::Index>(idx.size());
  Matrix c(n, n);
  const int d = locs.dim();
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index i = j; i < n; ++i) {
      c(i, j) = cross_cov(th, locs.coords(idx[i]), locs.var(idx[i]), locs.coords(idx[j]),
                          locs.var(idx[j]), d);
      c(j, i) = c(i, j);
    }
  }
  return c;
}

Matrix nested_inverse(const Matrix& a_inv, const Matrix& h, const Matrix& r_inv) {
  const auto na = a_inv.rows(), nd = r_inv.rows();
  Matrix out(na + nd, na + nd);
  const Matrix rh = r_inv * h;  // nd x na
  out.topLeftCorner(na, na) = a_inv + h.transpose() * rh;
  out.topRightCorner(na, nd) = -rh.transpose();
  out.bottomLeftCorner(nd, na) = -rh;
  out.bottomRightCorner(nd, nd) = r_inv;
  return out;
}

NodeFactors node_factors(const ThetaParams& th, const TreedDag& dag, const LocationSet& locs,
                         int j, std::shared_ptr<const Matrix> parent_cov_inv) {
  const Node& nd = dag.node(j);
  NodeFactors f;
  f.parent_cov_inv = parent_cov_inv;
  const int n = nd.size(), J = nd.parent_size();
  if (J > 0 && !parent_cov_inv) throw Error("missing parent inverse for " + node_name(dag, j));

  if (nd.is_leaf()) {
    const Matrix cjp = cov_matrix(th, locs, nd.locs, nd.parent_locs);
    f.H = cjp * (*parent_cov_inv);
    f.R.resize(n, 1);
    for (int k = 0; k < n; ++k) {
      const int u = nd.locs[k];
      const double cuu = cross_cov(th, locs.coords(u), locs.var(u), locs.coords(u), locs.var(u),
                                   locs.dim());
      double r = cuu - f.H.row(k).dot(cjp.row(k));
      if (!(r > 0.0)) {
        double rel = 1e-9;
        while (rel <= 1e-5 * 1.0000001 && !(r + rel * cuu > 0.0)) rel *= 10.0;
        if (!(r + rel * cuu > 0.0))
          throw Error("conditional variance is not positive at " + node_name(dag, j));
        f.jitter = std::max(f.jitter, rel * cuu);
        r += rel * cuu;
      }
      f.R(k, 0) = r;
    }
    f.R_inv = f.R.cwiseInverse();
    f.R_chol = f.R.cwiseSqrt();
    f.R_logdet = f.R.array().log().sum();
    return f;
  }

  const Matrix cj = cov_matrix(th, locs, nd.locs);
  if (J == 0) {
    f.H.resize(n, 0);
    f.R = cj;
  } else {
    const Matrix cjp = cov_matrix(th, locs, nd.locs, nd.parent_locs);
    f.H = cjp * (*parent_cov_inv);
    f.R = cj - f.H * cjp.transpose();
    f.R = 0.5 * (f.R + f.R.transpose()).eval();
  }
  const SpdFactor sf = spd_factor(f.R, node_name(dag, j));
  f.jitter = sf.jitter;
  if (sf.jitter > 0.0) f.R.diagonal().array() += sf.jitter;
  f.R_chol = sf.llt.matrixL();
  f.R_inv = spd_inverse(sf);
  f.R_logdet = sf.log_det;
  return f;
}

namespace {

// Inverse covariance of the parent set shared by the children of branch j.
std::shared_ptr<const Matrix> child_inverse(const ThetaParams& th, const TreedDag& dag,
                                            const LocationSet& locs, int j,
                                            const NodeFactors& f) {
  const Node& nd = dag.node(j);
  if (nd.parents.empty()) return std::make_shared<const Matrix>(f.R_inv);
  if (nd.id.level > dag.chain_base())
    return std::make_shared<const Matrix>(nested_inverse(*f.parent_cov_inv, f.H, f.R_inv));
  const SpdFactor sf = spd_factor(cov_matrix(th, locs, nd.locs), node_name(dag, j));
  return std::make_shared<const Matrix>(spd_inverse(sf));
}

int parent_position(const Node& child, int parent) {
  const auto it = std::find(child.parents.begin(), child.parents.end(), parent);
  return static_cast<int>(it - child.parents.begin());
}

Matrix child_information(const TreedDag& dag, const ModelFactors& mf, int i) {
  const Node& nd = dag.node(i);
  Matrix info = Matrix::Zero(nd.size(), nd.size());
  for (int c : nd.children) {
    const Node& ch = dag.node(c);
    const int off = ch.parent_offsets[parent_position(ch, i)];
    const auto& fc = mf.node[c];
    const auto hic = fc.H.middleCols(off, nd.size());
    if (ch.is_leaf())
      info.noalias() += hic.transpose() * fc.R_inv.col(0).asDiagonal() * hic;
    else
      info.noalias() += hic.transpose() * fc.R_inv * hic;
  }
  return info;
}

}  // namespace

ModelFactors compute_factors(const ThetaParams& th, const TreedDag& dag, const LocationSet& locs,
                             FactorScope scope) {
  th.validate();
  ModelFactors mf;
  mf.theta = th;
  mf.node.resize(dag.size());
  mf.child_cov_inv.resize(dag.size());
  const int last = scope == FactorScope::branches_only ? dag.height() - 1 : dag.height();
  for (int r = 0; r <= last; ++r) {
    const int begin = dag.level_begin(r);
    parallel_for(dag.level_size(r), [&](int k) {
      const int j = begin + k;
      const Node& nd = dag.node(j);
      auto pinv = nd.tree_parent < 0 ? nullptr : mf.child_cov_inv[nd.tree_parent];
      mf.node[j] = node_factors(th, dag, locs, j, pinv);
      if (!nd.is_leaf()) mf.child_cov_inv[j] = child_inverse(th, dag, locs, j, mf.node[j]);
    });
  }
  if (scope == FactorScope::all_nodes) compute_child_info(mf, dag);
  return mf;
}

void compute_child_info(ModelFactors& mf, const TreedDag& dag) {
  mf.child_info.assign(dag.size(), Matrix());
  parallel_for(dag.level_begin(dag.height()),
               [&](int i) { mf.child_info[i] = child_information(dag, mf, i); });
}

ModelFactors compute_factors_serial(const ThetaParams& th, const TreedDag& dag,
                                    const LocationSet& locs) {
  th.validate();
  ModelFactors mf;
  mf.theta = th;
  mf.node.resize(dag.size());
  mf.child_cov_inv.resize(dag.size());
  for (int j = 0; j < dag.size(); ++j) {
    const Node& nd = dag.node(j);
    std::shared_ptr<const Matrix> pinv;
    if (!nd.parents.empty()) {
      const SpdFactor sf = spd_factor(cov_matrix(th, locs, nd.parent_locs), node_name(dag, j));
      pinv = std::make_shared<const Matrix>(spd_inverse(sf));
    }
    mf.node[j] = node_factors(th, dag, locs, j, pinv);
    if (!nd.is_leaf()) {
      std::vector<int> cl;
      for (int p : dag.child_parent_set(j))
        cl.insert(cl.end(), dag.node(p).locs.begin(), dag.node(p).locs.end());
      const SpdFactor sf = spd_factor(cov_matrix(th, locs, cl), node_name(dag, j));
      mf.child_cov_inv[j] = std::make_shared<const Matrix>(spd_inverse(sf));
    }
  }
  mf.child_info.resize(dag.size());
  for (int i = 0; i < dag.level_begin(dag.height()); ++i)
    mf.child_info[i] = child_information(dag, mf, i);
  return mf;
}

namespace {

// Nodes whose joint with node v is exact: its parents and, for branches, v.
std::vector<int> exact_chain(const TreedDag& dag, int v) {
  std::vector<int> out = dag.node(v).parents;
  if (!dag.node(v).is_leaf()) out.push_back(v);
  return out;
}

// Cov(w_u, w_v) for branch nodes whose parent sets are single nodes, by
// pushing the covariance of their last common ancestor down both paths.
Matrix single_parent_cov(const ThetaParams& th, const TreedDag& dag, const LocationSet& locs,
                         int u, int v) {
  std::vector<int> pu = dag.ancestors(u), pv = dag.ancestors(v);
  pu.push_back(u);
  pv.push_back(v);
  int z = -1;
  std::size_t k = 0;
  while (k < pu.size() && k < pv.size() && pu[k] == pv[k]) z = pu[k++];
  if (z < 0) return Matrix::Zero(dag.node(u).size(), dag.node(v).size());
  auto transfer = [&](const std::vector<int>& path) {
    Matrix f = Matrix::Identity(dag.node(z).size(), dag.node(z).size());
    for (std::size_t m = k; m < path.size(); ++m) {
      const auto& child = dag.node(path[m]).locs;
      const auto& parent = dag.node(path[m - 1]).locs;
      const SpdFactor sf = spd_factor(cov_matrix(th, locs, parent), "path covariance");
      const Matrix h = sf.llt.solve(cov_matrix(th, locs, parent, child)).transpose();
      f = (h * f).eval();
    }
    return f;
  };
  const Matrix fu = transfer(pu), fv = transfer(pv);
  return fu * cov_matrix(th, locs, dag.node(z).locs) * fv.transpose();
}

// Top of the exact chain of the node holding `a`, with the regression row
// of w(a) on that node's values.
std::pair<int, Matrix> anchor(const ThetaParams& th, const TreedDag& dag, const LocationSet& locs,
                              int a) {
  const int i = dag.node_of(a);
  const Node& nd = dag.node(i);
  const int base = dag.chain_base();
  if (!nd.is_leaf() && nd.id.level <= base) {
    Matrix e = Matrix::Zero(1, nd.size());
    e(0, dag.position_in_node(a)) = 1.0;
    return {i, e};
  }
  const int x = nd.parents.front();
  const auto& xl = dag.node(x).locs;
  const int al[1] = {a};
  const SpdFactor sf = spd_factor(cov_matrix(th, locs, xl), "anchor covariance");
  Matrix coef = sf.llt.solve(cov_matrix(th, locs, xl, al)).transpose();
  return {x, coef};
}

}  // namespace

double induced_cov(const ThetaParams& th, const TreedDag& dag, const LocationSet& locs, int a,
                   int b) {
  const int i = dag.node_of(a), j = dag.node_of(b);
  const auto ci = exact_chain(dag, i), cj = exact_chain(dag, j);
  std::vector<int> shared;
  for (int s : ci)
    if (std::find(cj.begin(), cj.end(), s) != cj.end()) shared.push_back(s);

  const int al[1] = {a}, bl[1] = {b};
  if (!shared.empty()) {
    // Sum over the shared chain of K_s(a,s) K_s(s,s)^{-1} K_s(s,b), where K_s
    // is the covariance conditional on the shared nodes above s.
    std::vector<int> prev;
    double total = 0.0;
    auto conditional = [&](std::span<const int> r, std::span<const int> c) {
      Matrix k = cov_matrix(th, locs, r, c);
      if (!prev.empty()) {
        const SpdFactor sf = spd_factor(cov_matrix(th, locs, prev), "shared chain");
        k -= cov_matrix(th, locs, r, prev) * sf.llt.solve(cov_matrix(th, locs, prev, c));
      }
      return k;
    };
    for (int s : shared) {
      const auto& sl = dag.node(s).locs;
      const Matrix kas = conditional(al, sl), kss = conditional(sl, sl), ksb = conditional(sl, bl);
      const SpdFactor sf = spd_factor(kss, "shared chain");
      total += (kas * sf.llt.solve(ksb))(0, 0);
      prev.insert(prev.end(), sl.begin(), sl.end());
    }
    if (i == j && dag.node(i).is_leaf() && a == b) total += conditional(al, bl)(0, 0);
    return total;
  }

  const auto [xa, ca] = anchor(th, dag, locs, a);
  const auto [xb, cb] = anchor(th, dag, locs, b);
  return (ca * single_parent_cov(th, dag, locs, xa, xb) * cb.transpose())(0, 0);
}

}  // namespace spamtree
