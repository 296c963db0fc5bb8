#include "spamtree/mcmc.hpp"
#include "spamtree/oracle.hpp"
#include "spamtree/parallel.hpp"
#include "spamtree/precision.hpp"
#include "spamtree/synthgen.hpp"

#include <doctest.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <numeric>

using namespace spamtree;

namespace {

struct Problem {
  OracleInstance inst;
  TreedDag dag;
  ModelFactors mf;
  ModelData data;
};

Problem make(std::uint64_t seed, int q, int n, int depth) {
  Problem p;
  p.inst = random_instance(seed, q, n, depth);
  p.dag = build_tree(p.inst.locs, p.inst.observed, p.inst.params);
  p.mf = compute_factors(p.inst.theta, p.dag, p.inst.locs);
  p.data.q = q;
  p.data.locations = p.inst.locs;
  p.data.observed = p.inst.observed;
  p.data.X = Matrix::Ones(n, 1);
  RngStream rng(seed, 99);
  p.data.y = Vector::Zero(n);
  for (int i = 0; i < n; ++i)
    if (p.data.observed[i]) p.data.y(i) = rng.normal();
  return p;
}

ChainConfig fixed_config(const Problem& p, std::uint64_t seed) {
  ChainConfig cc;
  cc.seed = seed;
  cc.theta_init = p.inst.theta;
  cc.tau2_init = Vector::Constant(p.data.q, 0.3);
  return cc;
}

// Direct sums over children of H_{i->j}^T R_j^{-1} H_{i->j} and the matching message.
void direct_child_terms(const TreedDag& dag, const ModelFactors& mf, const Vector& w, int i,
                        Matrix& info, Vector& msg) {
  const Node& nd = dag.node(i);
  info = Matrix::Zero(nd.size(), nd.size());
  msg = Vector::Zero(nd.size());
  for (int j : nd.children) {
    const Node& nj = dag.node(j);
    Matrix rinv = nj.is_leaf() ? Matrix(mf.node[j].R.col(0).cwiseInverse().asDiagonal())
                               : Matrix(mf.node[j].R.inverse());
    Vector rest(nj.size());
    for (int a = 0; a < nj.size(); ++a) rest(a) = w(nj.locs[a]);
    Matrix hij;
    for (std::size_t h = 0; h < nj.parents.size(); ++h) {
      const int g = nj.parents[h];
      const Node& ng = dag.node(g);
      const Matrix hg = mf.node[j].H.middleCols(nj.parent_offsets[h], ng.size());
      if (g == i) {
        hij = hg;
        continue;
      }
      Vector wg(ng.size());
      for (int a = 0; a < ng.size(); ++a) wg(a) = w(ng.locs[a]);
      rest -= hg * wg;
    }
    info += hij.transpose() * rinv * hij;
    msg += hij.transpose() * rinv * rest;
  }
}

// Energy-distance two-sample permutation test; returns the p-value.
double energy_test(const std::vector<Vector>& a, const std::vector<Vector>& b, int perms,
                   RngStream& rng) {
  const int na = static_cast<int>(a.size()), n = na + static_cast<int>(b.size());
  std::vector<const Vector*> all;
  for (const auto& v : a) all.push_back(&v);
  for (const auto& v : b) all.push_back(&v);
  Matrix d(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) d(i, j) = (*all[i] - *all[j]).norm();
  auto stat = [&](const std::vector<int>& lab) {
    double ab = 0, aa = 0, bb = 0;
    long cab = 0, caa = 0, cbb = 0;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        if (lab[i] != lab[j]) {
          ab += d(i, j);
          ++cab;
        } else if (lab[i] == 0) {
          aa += d(i, j);
          ++caa;
        } else {
          bb += d(i, j);
          ++cbb;
        }
      }
    return 2 * ab / cab - aa / caa - bb / cbb;
  };
  std::vector<int> lab(n, 1);
  std::fill(lab.begin(), lab.begin() + na, 0);
  const double obs = stat(lab);
  int above = 0;
  for (int k = 0; k < perms; ++k) {
    std::shuffle(lab.begin(), lab.end(), rng.engine());
    if (stat(lab) >= obs) ++above;
  }
  return (above + 1.0) / (perms + 1.0);
}

// Batch-means standard error of the mean.
double batch_se(const std::vector<double>& x, int batches) {
  const int m = static_cast<int>(x.size()) / batches;
  std::vector<double> means(batches, 0.0);
  for (int b = 0; b < batches; ++b) {
    for (int k = 0; k < m; ++k) means[b] += x[b * m + k];
    means[b] /= m;
  }
  const double mu = std::accumulate(means.begin(), means.end(), 0.0) / batches;
  double s = 0.0;
  for (double v : means) s += (v - mu) * (v - mu);
  return std::sqrt(s / (batches - 1) / batches);
}

}  // namespace

TEST_CASE("prior density of a single root") {
  LocationSet locs(2);
  for (int i = 0; i < 6; ++i) locs.push_back(std::array<double, 2>{0.15 * i, 0.3}, i % 2);
  std::vector<Node> one(1);
  one[0].id = {0, 0};
  one[0].locs = {0, 1, 2, 3, 4, 5};
  const TreedDag dag = TreedDag::from_nodes(1, 1, 6, one);
  const ThetaParams th = ThetaParams::defaults(2);
  const ModelFactors mf = compute_factors(th, dag, locs);
  const Matrix c = cov_matrix(th, locs, one[0].locs);
  const double logdet = 2.0 * Matrix(c.llt().matrixL()).diagonal().array().log().sum();
  CHECK(log_prior_w(Vector::Zero(6), dag, mf) ==
        doctest::Approx(-0.5 * (6 * std::log(2.0 * std::numbers::pi) + logdet)).epsilon(1e-12));
}

TEST_CASE("prior density equals the dense Gaussian density") {
  for (int depth : {1, 2, 0}) {
    for (std::uint64_t s = 1; s <= 6; ++s) {
      const Problem p = make(10 * depth + s, 1 + s % 3, 90 + 30 * (s % 6), depth);
      const int n = p.data.n();
      const DenseGaussian g(Vector::Zero(n), dense_spamtree_cov(p.dag, p.mf));
      RngStream rng(s);
      Vector w(n);
      for (int i = 0; i < n; ++i) w(i) = rng.normal();
      CHECK(std::abs(log_prior_w(w, p.dag, p.mf) - g.log_density(w)) <= 1e-6);
    }
  }
}

TEST_CASE("scaling every conditional shifts the density by the log scale") {
  const Problem p = make(5, 2, 150, 0);
  const double c = 1.7;
  ModelFactors scaled = p.mf;
  double shift = 0.0;
  for (int j = 0; j < p.dag.size(); ++j) {
    auto& f = scaled.node[j];
    const int n = p.dag.node(j).size();
    f.R *= c * c;
    f.R_inv /= c * c;
    f.R_chol *= c;
    f.R_logdet += 2.0 * n * std::log(c);
    shift -= n * std::log(c);
  }
  RngStream rng(1);
  Vector w(p.data.n());
  for (int i = 0; i < w.size(); ++i) w(i) = rng.normal();
  CHECK(log_prior_w(c * w, p.dag, scaled) ==
        doctest::Approx(log_prior_w(w, p.dag, p.mf) + shift).epsilon(1e-12));
}

TEST_CASE("child messages equal direct sums after a sweep") {
  for (int depth : {1, 2, 0}) {
    const Problem p = make(20 + depth, 2, 200, depth);
    ChainState st = init_chain(p.data, p.dag, fixed_config(p, 3));
    gibbs_w(st, p.dag, p.mf, p.data);
    for (int i = 0; i < p.dag.size(); ++i) {
      if (p.dag.node(i).is_leaf()) continue;
      Matrix info;
      Vector msg;
      direct_child_terms(p.dag, p.mf, st.w, i, info, msg);
      CHECK((p.mf.child_info[i] - info).cwiseAbs().maxCoeff() <= 1e-8 * (1.0 + info.cwiseAbs().maxCoeff()));
      CHECK((child_message(p.dag, p.mf, st.w, i) - msg).cwiseAbs().maxCoeff() <=
            1e-8 * (1.0 + msg.cwiseAbs().maxCoeff()));
    }
  }
}

TEST_CASE("colored parallel sweep matches the serial reference") {
  for (int depth : {1, 2, 0}) {
    const Problem p = make(40 + depth, 2, 250, depth);
    ChainState a = init_chain(p.data, p.dag, fixed_config(p, 9));
    ChainState b = init_chain(p.data, p.dag, fixed_config(p, 9));
    for (int k = 0; k < 3; ++k) {
      gibbs_w(a, p.dag, p.mf, p.data);
      gibbs_w_serial(b, p.dag, p.mf, p.data);
    }
    CHECK((a.w - b.w).cwiseAbs().maxCoeff() <= 1e-8);
  }
}

TEST_CASE("sweeps are identical across thread counts") {
  const Problem p = make(61, 3, 250, 0);
  std::vector<Vector> out;
  for (int threads : {1, 4}) {
    set_threads(threads);
    ChainState st = init_chain(p.data, p.dag, fixed_config(p, 2));
    for (int k = 0; k < 3; ++k) gibbs_w(st, p.dag, p.mf, p.data);
    out.push_back(st.w);
  }
  set_threads(0);
  CHECK(out[0] == out[1]);
}

TEST_CASE("latent draws follow the exact conditional") {
  for (std::uint64_t s : {3, 4}) {
    const Problem p = make(700 + s, 1 + s % 2, 20, 0);
    const int n = p.data.n();
    const ChainConfig cc = fixed_config(p, s);
    ChainState st = init_chain(p.data, p.dag, cc);
    Matrix prec = assemble_precision(p.mf, p.dag).to_dense();
    Vector b = Vector::Zero(n);
    for (int i = 0; i < n; ++i)
      if (p.data.observed[i]) {
        prec(i, i) += 1.0 / st.tau2(p.data.locations.var(i));
        b(i) = p.data.y(i) / st.tau2(p.data.locations.var(i));
      }
    const Matrix cov = prec.inverse();
    const Vector mean = cov * b;

    const int sweeps = 20000, thin = 25;
    std::vector<std::vector<double>> trace(n);
    std::vector<Vector> chain;
    for (int k = 1; k <= sweeps; ++k) {
      gibbs_w(st, p.dag, p.mf, p.data);
      for (int i = 0; i < n; ++i) trace[i].push_back(st.w(i));
      if (k > 1000 && k % thin == 0) chain.push_back(st.w);
    }
    int outside = 0;
    for (int i = 0; i < n; ++i) {
      const double m = std::accumulate(trace[i].begin(), trace[i].end(), 0.0) / sweeps;
      if (std::abs(m - mean(i)) > 3.0 * batch_se(trace[i], 40)) ++outside;
    }
    CHECK(outside <= 2);

    const Eigen::LLT<Matrix> llt(cov);
    RngStream rng(s, 5);
    std::vector<Vector> direct;
    for (std::size_t k = 0; k < chain.size(); ++k) {
      Vector z(n);
      for (int i = 0; i < n; ++i) z(i) = rng.normal();
      direct.push_back(mean + Matrix(llt.matrixL()) * z);
    }
    CHECK(energy_test(chain, direct, 199, rng) > 0.01);
  }
}

TEST_CASE("without data the latent chain keeps the prior moments") {
  Problem p = make(808, 2, 40, 0);
  std::fill(p.data.observed.begin(), p.data.observed.end(), 0);
  const int n = p.data.n();
  const Matrix cov = dense_spamtree_cov(p.dag, p.mf);
  ChainState st = init_chain(p.data, p.dag, fixed_config(p, 4));
  const int sweeps = 20000;
  std::vector<std::vector<double>> trace(n), sq(n);
  for (int k = 0; k < sweeps; ++k) {
    gibbs_w(st, p.dag, p.mf, p.data);
    for (int i = 0; i < n; ++i) {
      trace[i].push_back(st.w(i));
      sq[i].push_back(st.w(i) * st.w(i));
    }
  }
  int outside = 0;
  for (int i = 0; i < n; ++i) {
    const double m = std::accumulate(trace[i].begin(), trace[i].end(), 0.0) / sweeps;
    const double v = std::accumulate(sq[i].begin(), sq[i].end(), 0.0) / sweeps;
    if (std::abs(m) > 3.0 * batch_se(trace[i], 40)) ++outside;
    if (std::abs(v - cov(i, i)) > 3.0 * batch_se(sq[i], 40)) ++outside;
  }
  CHECK(outside <= 4);
}

TEST_CASE("coefficient updates") {
  Problem p = make(9, 1, 60, 0);
  Priors pr;
  SUBCASE("no observations draw from the prior") {
    std::fill(p.data.observed.begin(), p.data.observed.end(), 0);
    ChainState st = init_chain(p.data, p.dag, fixed_config(p, 1));
    pr.beta_var = 4.0;
    double s = 0, s2 = 0;
    const int m = 20000;
    for (int k = 0; k < m; ++k) {
      gibbs_beta(st, p.data, pr);
      s += st.beta(0);
      s2 += st.beta(0) * st.beta(0);
    }
    CHECK(std::abs(s / m) < 4 * std::sqrt(4.0 / m));
    CHECK(s2 / m == doctest::Approx(4.0).epsilon(0.05));
  }
  SUBCASE("diffuse prior centers on the least-squares fit") {
    ChainState st = init_chain(p.data, p.dag, fixed_config(p, 1));
    RngStream rng(2);
    for (int i = 0; i < st.w.size(); ++i) st.w(i) = rng.normal();
    pr.beta_var = 1e12;
    double ls = 0;
    int cnt = 0;
    for (int i = 0; i < p.data.n(); ++i)
      if (p.data.observed[i]) {
        ls += p.data.y(i) - st.w(i);
        ++cnt;
      }
    ls /= cnt;
    double s = 0;
    const int m = 20000;
    for (int k = 0; k < m; ++k) {
      gibbs_beta(st, p.data, pr);
      s += st.beta(0);
    }
    CHECK(std::abs(s / m - ls) < 4 * std::sqrt(st.tau2(0) / cnt / m));
  }
}

TEST_CASE("nugget update uses the conjugate shape and rate") {
  // ten observations with zero residual: 1 / tau2 ~ Gamma(2 + 10 / 2, rate b)
  LocationSet locs(1);
  for (int i = 0; i < 12; ++i) locs.push_back(std::array<double, 1>{double(i)}, 0);
  ModelData data;
  data.q = 1;
  data.locations = locs;
  data.X = Matrix::Ones(12, 1);
  data.y = Vector::Constant(12, 0.5);
  data.observed.assign(12, 1);
  data.observed[3] = data.observed[7] = 0;
  ChainState st;
  st.w = Vector::Zero(12);
  st.beta = Vector::Constant(1, 0.5);
  st.tau2 = Vector::Ones(1);
  st.chain_rng = RngStream(4);
  Priors pr;
  pr.tau_shape = 2.0;
  pr.tau_rate = 3.0;
  double s = 0, s2 = 0;
  const int m = 40000;
  for (int k = 0; k < m; ++k) {
    gibbs_tau2(st, data, pr);
    s += 1.0 / st.tau2(0);
    s2 += 1.0 / (st.tau2(0) * st.tau2(0));
  }
  const double mean = s / m, var = s2 / m - mean * mean;
  CHECK(mean == doctest::Approx(7.0 / 3.0).epsilon(0.02));
  CHECK(var == doctest::Approx(7.0 / 9.0).epsilon(0.05));
}

TEST_CASE("parameter layout round trips") {
  RngStream rng(8);
  for (int q : {1, 2, 3}) {
    for (bool ab : {false, true}) {
      const ThetaLayout layout(q, ab);
      CHECK(static_cast<int>(layout.names().size()) == layout.size());
      for (int k = 0; k < 20; ++k) {
        const ThetaParams th = random_theta(rng, q);
        const ThetaParams back = layout.from_unconstrained(layout.to_unconstrained(th));
        CHECK((layout.natural(back) - layout.natural(th)).cwiseAbs().maxCoeff() <= 1e-12);
        const ThetaParams nat = layout.from_natural(layout.natural(th));
        CHECK((layout.natural(nat) - layout.natural(th)).cwiseAbs().maxCoeff() == 0.0);
      }
    }
    CHECK(static_cast<int>(ThetaLayout(q, false).free().size()) ==
          3 * q + (q > 1 ? q * (q - 1) / 2 : 0) + 1);
  }
}

TEST_CASE("robust adaptive Metropolis") {
  SUBCASE("zero proposal scale always accepts") {
    RobustAdaptiveMetropolis ram(3, 0.0);
    Vector u = Vector::Ones(3);
    double cur = -1.0;
    RngStream rng(1);
    for (int k = 0; k < 50; ++k) CHECK(ram.step(u, cur, [](const Vector&) { return -1.0; }, rng, false));
  }
  SUBCASE("adaptation reaches the target acceptance") {
    RobustAdaptiveMetropolis ram(2, 5.0);
    Matrix a(2, 2);
    a << 4.0, 1.8, 1.8, 1.0;
    const Matrix prec = a.inverse();
    auto target = [&](const Vector& x) { return -0.5 * x.dot(prec * x); };
    Vector u = Vector::Zero(2);
    double cur = target(u);
    RngStream rng(2);
    for (int k = 0; k < 20000; ++k) ram.step(u, cur, target, rng, true);
    const long p0 = ram.proposals(), a0 = ram.accepted();
    for (int k = 0; k < 20000; ++k) ram.step(u, cur, target, rng, false);
    const double rate = double(ram.accepted() - a0) / double(ram.proposals() - p0);
    CHECK(rate == doctest::Approx(0.234).epsilon(0.25));
    const Matrix l = ram.scale();
    CHECK(l(0, 1) == 0.0);
    CHECK(l(0, 0) > 0.0);
    CHECK(l(1, 1) > 0.0);
  }
  SUBCASE("invalid proposals are rejected") {
    RobustAdaptiveMetropolis ram(1, 1.0);
    Vector u = Vector::Zero(1);
    double cur = 0.0;
    RngStream rng(3);
    auto target = [](const Vector& x) {
      return x(0) > 0 ? -std::numeric_limits<double>::infinity() : -0.5 * x(0) * x(0);
    };
    for (int k = 0; k < 500; ++k) {
      ram.step(u, cur, target, rng, true);
      CHECK(u(0) <= 0.0);
    }
  }
}

TEST_CASE("chains") {
  SynthConfig sc;
  sc.grid_side = 10;
  sc.seed = 3;
  const SynthData sd = generate(sc);
  TreeParams tp;
  tp.levels = 2;
  tp.depth = 2;
  tp.subset_size = 12;
  const TreedDag dag = build_tree(sd.data.locations, sd.data.observed, tp);
  ChainConfig cc;
  cc.seed = 11;

  SUBCASE("zero iterations give no draws") {
    cc.iterations = 0;
    cc.burn_in = 0;
    const ChainResult r = run_chain(sd.data, dag, cc);
    CHECK(r.draws.empty());
  }
  SUBCASE("same seed gives identical draws across thread counts") {
    cc.iterations = 30;
    cc.burn_in = 10;
    cc.thin = 2;
    set_threads(1);
    const ChainResult a = run_chain(sd.data, dag, cc);
    set_threads(3);
    const ChainResult b = run_chain(sd.data, dag, cc);
    set_threads(0);
    REQUIRE(a.draws.size() == 10);
    REQUIRE(b.draws.size() == 10);
    for (std::size_t k = 0; k < a.draws.size(); ++k) {
      CHECK(a.draws[k].w == b.draws[k].w);
      CHECK(a.draws[k].beta == b.draws[k].beta);
      CHECK(a.draws[k].tau2 == b.draws[k].tau2);
      CHECK(a.draws[k].theta == b.draws[k].theta);
    }
  }
  SUBCASE("integrated target runs and stays finite") {
    cc.iterations = 20;
    cc.burn_in = 10;
    cc.target = ThetaTarget::integrated;
    const ChainResult r = run_chain(sd.data, dag, cc);
    CHECK(r.draws.size() == 10);
    CHECK(r.draws.back().theta.allFinite());
  }
  SUBCASE("out of range shape parameters count as invalid proposals") {
    cc.iterations = 200;
    cc.burn_in = 100;
    cc.estimate_alpha_beta = true;
    cc.ram_initial_scale = 2.0;
    const ChainResult r = run_chain(sd.data, dag, cc);
    CHECK(r.diag.invalid_proposals > 0);
    CHECK(r.diag.theta_proposals == 200);
  }
  SUBCASE("inconsistent settings are rejected") {
    cc.iterations = 10;
    cc.burn_in = 20;
    CHECK_THROWS_AS(run_chain(sd.data, dag, cc), Error);
  }
}

TEST_CASE("coefficient intervals cover the truth at fixed covariance parameters") {
  int covered = 0;
  const int reps = 20;
  for (int r = 0; r < reps; ++r) {
    SynthConfig sc;
    sc.grid_side = 16;
    sc.missing_rate = 0.3;
    sc.patch_count = 0;
    sc.beta = Vector(2);
    sc.beta << 1.0, -0.5;
    sc.seed = 100 + r;
    const SynthData sd = generate(sc);
    TreeParams tp;
    tp.levels = 3;
    tp.depth = 3;
    tp.subset_size = 16;
    tp.seed = sc.seed;
    const TreedDag dag = build_tree(sd.data.locations, sd.data.observed, tp);
    ChainConfig cc;
    cc.seed = sc.seed;
    cc.iterations = 5000;
    cc.burn_in = 500;
    cc.update_theta = false;
    cc.theta_init = sd.truth.theta;
    const ChainResult res = run_chain(sd.data, dag, cc);
    for (int v = 0; v < 2; ++v) {
      std::vector<double> b;
      for (const auto& d : res.draws) b.push_back(d.beta(v));
      std::sort(b.begin(), b.end());
      const double lo = b[static_cast<std::size_t>(0.025 * (b.size() - 1))];
      const double hi = b[static_cast<std::size_t>(0.975 * (b.size() - 1))];
      if (lo <= sc.beta(v) && sc.beta(v) <= hi) ++covered;
    }
  }
  MESSAGE("intervals covering the truth: " << covered << " of " << 2 * reps);
  CHECK(covered >= 36);
}
