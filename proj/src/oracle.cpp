#include "spamtree/oracle.hpp"

#include "spamtree/linalg.hpp"
#include "spamtree/rng.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <numeric>

namespace spamtree {

DenseGaussian::DenseGaussian(Vector mean, Matrix cov) : mean_(std::move(mean)), cov_(std::move(cov)) {
  if (cov_.rows() != mean_.size() || cov_.cols() != mean_.size())
    throw Error("mean and covariance sizes differ");
  const SpdFactor f = spd_factor(cov_, "dense gaussian");
  if (f.jitter > 0.0) cov_.diagonal().array() += f.jitter;
  llt_ = f.llt;
  log_det_ = f.log_det;
}

double DenseGaussian::log_density(const Vector& x) const {
  const Vector z = llt_.matrixL().solve(x - mean_);
  return -0.5 * (dim() * std::log(2.0 * std::numbers::pi) + log_det_ + z.squaredNorm());
}

double gaussian_kl(const DenseGaussian& p, const DenseGaussian& q) {
  if (p.dim() != q.dim()) throw Error("KL needs Gaussians of equal dimension");
  const Matrix qinv_p = q.llt().solve(p.cov());
  const Vector dm = q.mean() - p.mean();
  const double quad = dm.dot(q.llt().solve(dm));
  return 0.5 * (qinv_p.trace() + quad - p.dim() + q.log_det() - p.log_det());
}

Matrix dense_base_cov(const ThetaParams& th, const LocationSet& locs) {
  if (locs.size() > kOracleMaxLocations) throw Error("oracle is capped at 1000 locations");
  std::vector<int> idx(locs.size());
  std::iota(idx.begin(), idx.end(), 0);
  return cov_matrix(th, locs, idx);
}

namespace {

// (I - H)^{-1} R (I - H)^{-T} where rows are listed in a topological order so
// that I - H is unit lower triangular; returned in ordinal order via `order`.
Matrix triangular_joint(const Matrix& h, const Matrix& r, const std::vector<int>& order) {
  const auto n = static_cast<Eigen::Index>(order.size());
  Matrix a = Matrix::Identity(n, n) - h;
  Matrix x = a.triangularView<Eigen::UnitLower>().solve(r);
  Matrix c = a.triangularView<Eigen::UnitLower>().solve(x.transpose());
  c = 0.5 * (c + c.transpose()).eval();
  Matrix out(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) out(order[i], order[j]) = c(i, j);
  return out;
}

}  // namespace

Matrix dense_spamtree_cov(const TreedDag& dag, const ModelFactors& mf) {
  const int n = dag.num_locations();
  if (n > kOracleMaxLocations) throw Error("oracle is capped at 1000 locations");
  std::vector<int> order, pos(n);
  for (int j = 0; j < dag.size(); ++j)
    for (int l : dag.node(j).locs) {
      pos[l] = static_cast<int>(order.size());
      order.push_back(l);
    }
  Matrix h = Matrix::Zero(n, n), r = Matrix::Zero(n, n);
  for (int j = 0; j < dag.size(); ++j) {
    const Node& nd = dag.node(j);
    const auto& f = mf.node[j];
    for (int a = 0; a < nd.size(); ++a) {
      for (int b = 0; b < nd.parent_size(); ++b) h(pos[nd.locs[a]], pos[nd.parent_locs[b]]) = f.H(a, b);
      if (nd.is_leaf()) {
        r(pos[nd.locs[a]], pos[nd.locs[a]]) = f.R(a, 0);
      } else {
        for (int b = 0; b < nd.size(); ++b) r(pos[nd.locs[a]], pos[nd.locs[b]]) = f.R(a, b);
      }
    }
  }
  return triangular_joint(h, r, order);
}

Matrix dense_dag_cov(const ThetaParams& th, const LocationSet& locs,
                     const std::vector<std::vector<int>>& groups,
                     const std::vector<std::vector<int>>& parent_groups) {
  if (groups.size() != parent_groups.size()) throw Error("one parent list per group is required");
  std::vector<int> order;
  for (const auto& g : groups) order.insert(order.end(), g.begin(), g.end());
  const int n = static_cast<int>(order.size());
  if (n > kOracleMaxLocations) throw Error("oracle is capped at 1000 locations");
  if (n != locs.size()) throw Error("groups must partition the locations");
  std::vector<int> pos(n, -1);
  for (int k = 0; k < n; ++k) {
    if (order[k] < 0 || order[k] >= n || pos[order[k]] >= 0)
      throw Error("groups must partition the locations");
    pos[order[k]] = k;
  }
  Matrix h = Matrix::Zero(n, n), r = Matrix::Zero(n, n);
  for (std::size_t g = 0; g < groups.size(); ++g) {
    const auto& idx = groups[g];
    std::vector<int> pa;
    for (int pg : parent_groups[g]) {
      if (pg < 0 || pg >= static_cast<int>(g)) throw Error("parent groups must come first");
      pa.insert(pa.end(), groups[pg].begin(), groups[pg].end());
    }
    Matrix rg = cov_matrix(th, locs, idx);
    Matrix hg(idx.size(), pa.size());
    if (!pa.empty()) {
      const Matrix cgp = cov_matrix(th, locs, idx, pa);
      const SpdFactor f = spd_factor(cov_matrix(th, locs, pa), "parent covariance");
      hg = f.llt.solve(cgp.transpose()).transpose();
      rg -= hg * cgp.transpose();
    }
    for (std::size_t a = 0; a < idx.size(); ++a) {
      for (std::size_t b = 0; b < pa.size(); ++b) h(pos[idx[a]], pos[pa[b]]) = hg(a, b);
      for (std::size_t b = 0; b < idx.size(); ++b) r(pos[idx[a]], pos[idx[b]]) = rg(a, b);
    }
  }
  return triangular_joint(h, r, order);
}

// ------------------------------------------------------------ propositions

namespace {

double conditional_entropy(const ThetaParams& th, const LocationSet& locs, int target,
                           const std::vector<int>& given) {
  const std::vector<int> t{target};
  double var = cov_matrix(th, locs, t)(0, 0);
  if (!given.empty()) {
    const Matrix c = cov_matrix(th, locs, t, given);
    const SpdFactor f = spd_factor(cov_matrix(th, locs, given), "conditioning set");
    var -= (c * f.llt.solve(c.transpose()))(0, 0);
  }
  return 0.5 * std::log(2.0 * std::numbers::pi * std::numbers::e * var);
}

std::vector<int> with(std::vector<int> v, int extra) {
  v.push_back(extra);
  return v;
}

std::vector<int> join(std::vector<int> a, const std::vector<int>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

}  // namespace

PropositionResult check_propositions(const ThetaParams& th, const PropositionScenario& sc) {
  if (sc.s0.empty() || sc.s11.empty() || sc.s12.empty() || sc.extra < 0)
    throw Error("scenario needs non-empty S0, S11, S12 and an extra location");
  // Ordinal order of the dense matrices: s0, s11, s12, extra relabelled 0..n-1.
  LocationSet locs(sc.locs.dim());
  std::vector<int> s0, s11, s12;
  auto take = [&](const std::vector<int>& src, std::vector<int>& dst) {
    for (int i : src) {
      dst.push_back(locs.size());
      locs.push_back(sc.locs.at(i));
    }
  };
  take(sc.s0, s0);
  take(sc.s11, s11);
  take(sc.s12, s12);
  const int star = locs.size();
  locs.push_back(sc.locs.at(sc.extra));

  const std::vector<std::vector<int>> tree{{}, {0}, {0}};
  const DenseGaussian p(Vector::Zero(locs.size()), dense_base_cov(th, locs));
  const Vector zero = Vector::Zero(locs.size());
  const DenseGaussian p0(zero, dense_dag_cov(th, locs, {with(s0, star), s11, s12}, tree));
  const DenseGaussian p1(zero, dense_dag_cov(th, locs, {s0, with(s11, star), s12}, tree));
  const DenseGaussian p2(zero, dense_dag_cov(th, locs, {s0, s11, with(s12, star)}, tree));

  PropositionResult res;
  res.kl_p0 = gaussian_kl(p, p0);
  res.kl_p1 = gaussian_kl(p, p1);
  res.kl_p2 = gaussian_kl(p, p2);
  res.entropy_given_1 = conditional_entropy(th, locs, star, join(s0, s11));
  res.entropy_given_2 = conditional_entropy(th, locs, star, join(s0, s12));
  res.root_placement_better = res.kl_p1 - res.kl_p0 >= -1e-10;
  res.entropy_condition = res.entropy_given_2 < res.entropy_given_1;
  res.kl_ordering = res.kl_p2 < res.kl_p1;
  res.condition_evaluated = std::abs(res.entropy_given_1 - res.entropy_given_2) > 1e-8;
  res.inequalities_hold = res.root_placement_better &&
                          (!res.condition_evaluated || res.entropy_condition == res.kl_ordering);
  return res;
}

PropositionScenario random_proposition_scenario(std::uint64_t seed, int q, int max_per_set) {
  RngStream rng(seed, 0x70726f70ULL, 0);
  PropositionScenario sc;
  sc.locs = LocationSet(2);
  auto add = [&](std::vector<int>& dst, int count) {
    for (int k = 0; k < count; ++k) {
      const double c[2] = {rng.uniform(), rng.uniform()};
      const int v = static_cast<int>(rng.uniform() * q) % q;
      dst.push_back(sc.locs.size());
      sc.locs.push_back(std::span<const double>(c, 2), v);
    }
  };
  auto size = [&] { return 1 + static_cast<int>(rng.uniform() * max_per_set) % max_per_set; };
  add(sc.s0, size());
  add(sc.s11, size());
  add(sc.s12, size());
  std::vector<int> star;
  add(star, 1);
  sc.extra = star[0];
  return sc;
}

// -------------------------------------------------------------- kolmogorov

namespace {

struct LeafAssignment {
  int loc, terminal, var;
};

// Keeps the branch nodes of `branches` and groups non-reference locations
// into one leaf per (terminal, outcome).
TreedDag assemble(std::vector<Node> branches, int height, int depth, int nloc,
                  std::vector<LeafAssignment> assign) {
  std::sort(assign.begin(), assign.end(), [](const auto& a, const auto& b) {
    return std::tie(a.terminal, a.var, a.loc) < std::tie(b.terminal, b.var, b.loc);
  });
  int index = 0;
  for (std::size_t k = 0; k < assign.size();) {
    Node leaf;
    leaf.role = NodeRole::leaf;
    leaf.id = {height, index++};
    leaf.tree_parent = assign[k].terminal;
    leaf.var = assign[k].var;
    std::size_t e = k;
    while (e < assign.size() && assign[e].terminal == assign[k].terminal &&
           assign[e].var == assign[k].var)
      leaf.locs.push_back(assign[e++].loc);
    branches.push_back(std::move(leaf));
    k = e;
  }
  return TreedDag::from_nodes(height, depth, nloc, std::move(branches));
}

std::vector<Node> branch_nodes(const TreedDag& dag) {
  std::vector<Node> out;
  for (const auto& nd : dag.nodes())
    if (!nd.is_leaf()) out.push_back(nd);
  return out;
}

}  // namespace

TreedDag extend_graph(const TreedDag& dag, const LocationSet& locs, const LocationSet& extra,
                      LocationSet& combined) {
  if (extra.size() > 0 && extra.dim() != locs.dim()) throw Error("extra locations differ in dimension");
  combined = locs;
  std::vector<LeafAssignment> assign;
  for (const auto& nd : dag.nodes())
    if (nd.is_leaf())
      for (int l : nd.locs) assign.push_back({l, nd.tree_parent, nd.var});
  const TerminalIndex index(dag, locs);
  for (int k = 0; k < extra.size(); ++k) {
    const int t = index.pick(extra.coords(k), extra.var(k)).terminal;
    assign.push_back({combined.size(), t, extra.var(k)});
    combined.push_back(extra.at(k));
  }
  return assemble(branch_nodes(dag), dag.height(), dag.depth(), combined.size(), std::move(assign));
}

TreedDag permute_graph(const TreedDag& dag, const LocationSet& locs, const std::vector<int>& perm,
                       LocationSet& permuted) {
  const int n = locs.size();
  if (static_cast<int>(perm.size()) != n) throw Error("permutation has the wrong length");
  std::vector<int> inv(n, -1);
  permuted = LocationSet(locs.dim());
  for (int k = 0; k < n; ++k) {
    inv[perm[k]] = k;
    permuted.push_back(locs.at(perm[k]));
  }
  std::vector<Node> branches = branch_nodes(dag);
  for (auto& nd : branches)
    for (int& l : nd.locs) l = inv[l];
  const TerminalIndex index(branches, permuted);
  std::vector<LeafAssignment> assign;
  for (int k = 0; k < n; ++k) {
    if (dag.is_reference(perm[k])) continue;
    const int t = index.pick(permuted.coords(k), permuted.var(k)).terminal;
    assign.push_back({k, t, permuted.var(k)});
  }
  return assemble(std::move(branches), dag.height(), dag.depth(), n, std::move(assign));
}

ThetaParams random_theta(RngStream& rng, int q) {
  auto unif = [&](double lo, double hi) { return lo + (hi - lo) * rng.uniform(); };
  ThetaParams th = ThetaParams::defaults(q);
  for (int i = 0; i < q; ++i) {
    th.sigma1(i) = (rng.uniform() < 0.5 ? -1.0 : 1.0) * unif(0.5, 2.0);
    th.sigma2(i) = unif(0.0, 1.5);
    th.phi_margin(i) = unif(1.0, 10.0);
  }
  std::vector<std::array<double, 2>> latent(q);
  for (auto& z : latent) z = {unif(0.0, 2.0), unif(0.0, 2.0)};
  for (int i = 0; i < q; ++i)
    for (int j = 0; j < q; ++j)
      if (i != j)
        th.latent_dist(i, j) = std::max(1e-3, std::hypot(latent[i][0] - latent[j][0],
                                                         latent[i][1] - latent[j][1]));
  for (int i = 0; i < q; ++i)
    for (int j = 0; j < i; ++j) th.latent_dist(j, i) = th.latent_dist(i, j);
  th.alpha = unif(0.5, 2.0);
  th.beta = unif(0.2, 1.0);
  th.phi = unif(1.0, 10.0);
  return th;
}

OracleInstance random_instance(std::uint64_t seed, int q, int n, int depth) {
  RngStream rng(seed, 0x696e7374ULL, 0);
  OracleInstance inst;
  inst.locs = LocationSet(2);
  for (int i = 0; i < n; ++i) {
    const double c[2] = {rng.uniform(), rng.uniform()};
    inst.locs.push_back(std::span<const double>(c, 2), i % q);
    inst.observed.push_back(rng.uniform() < 0.7 ? 1 : 0);
  }
  auto pick = [&](int lo, int hi) { return lo + static_cast<int>(rng.uniform() * (hi - lo + 1)) % (hi - lo + 1); };
  inst.params.levels = pick(2, 3);
  inst.params.depth = depth == 0 ? inst.params.levels : std::min(depth, inst.params.levels);
  inst.params.children_per_axis = 2;
  inst.params.root_cells_per_axis = pick(1, 2);
  inst.params.subset_size = pick(4, 12);
  inst.params.seed = seed;
  inst.theta = random_theta(rng, q);
  return inst;
}

bool KolmogorovResult::passed(double tol) const {
  return permutation_cov_error <= tol && permutation_logdens_error <= tol &&
         marginal_cov_error <= tol && reference_cov_error <= tol;
}

KolmogorovResult kolmogorov_checks(const ThetaParams& th, const LocationSet& locs,
                                   const TreeParams& params, std::uint64_t seed) {
  if (locs.size() > 50) throw Error("consistency checks are limited to 50 locations");
  const int n = locs.size();
  const TreedDag dag = build_tree(locs, std::vector<std::uint8_t>(n, 1), params);
  const Matrix c = dense_spamtree_cov(dag, compute_factors(th, dag, locs));
  RngStream rng(seed, 0x6b6f6c6dULL, 0);
  KolmogorovResult res;

  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng.engine());
  LocationSet permuted;
  const TreedDag pdag = permute_graph(dag, locs, perm, permuted);
  const Matrix cp = dense_spamtree_cov(pdag, compute_factors(th, pdag, permuted));
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b)
      res.permutation_cov_error =
          std::max(res.permutation_cov_error, std::abs(cp(a, b) - c(perm[a], perm[b])));
  Vector w(n), wp(n);
  for (int a = 0; a < n; ++a) w(a) = rng.normal();
  for (int a = 0; a < n; ++a) wp(a) = w(perm[a]);
  const double ld = DenseGaussian(Vector::Zero(n), c).log_density(w);
  const double ldp = DenseGaussian(Vector::Zero(n), cp).log_density(wp);
  res.permutation_logdens_error = std::abs(ld - ldp) / std::max(1.0, std::abs(ld));

  // A new location inside the bounding box, with a random outcome.
  std::vector<double> lo(locs.dim(), 1e300), hi(locs.dim(), -1e300);
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < locs.dim(); ++k) {
      lo[k] = std::min(lo[k], locs.coords(i)[k]);
      hi[k] = std::max(hi[k], locs.coords(i)[k]);
    }
  LocationSet extra(locs.dim());
  std::vector<double> x(locs.dim());
  for (int k = 0; k < locs.dim(); ++k) x[k] = lo[k] + rng.uniform() * (hi[k] - lo[k]);
  const int q = std::max(1, locs.num_vars());
  extra.push_back(x, static_cast<int>(rng.uniform() * q) % q);
  LocationSet combined;
  const TreedDag edag = extend_graph(dag, locs, extra, combined);
  const Matrix ce = dense_spamtree_cov(edag, compute_factors(th, edag, combined));
  res.marginal_cov_error = (ce.topLeftCorner(n, n) - c).cwiseAbs().maxCoeff();

  const TreedDag rdag = TreedDag::from_nodes(dag.height(), dag.depth(), n, dag.nodes());
  const Matrix cr = dense_spamtree_cov(rdag, compute_factors(th, rdag, locs));
  res.reference_cov_error = (cr - c).cwiseAbs().maxCoeff();
  return res;
}

}  // namespace spamtree
