#include "spamtree/mcmc.hpp"

#include "spamtree/linalg.hpp"
#include "spamtree/parallel.hpp"
#include "spamtree/precision.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numbers>

namespace spamtree {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Vector gather(const Vector& w, const std::vector<int>& idx) {
  Vector out(idx.size());
  for (std::size_t k = 0; k < idx.size(); ++k) out(k) = w(idx[k]);
  return out;
}

void scatter(Vector& w, const std::vector<int>& idx, const Vector& v) {
  for (std::size_t k = 0; k < idx.size(); ++k) w(idx[k]) = v(k);
}

int parent_position(const Node& child, int parent) {
  const auto it = std::find(child.parents.begin(), child.parents.end(), parent);
  return static_cast<int>(it - child.parents.begin());
}

// w_j - H_j w_[j]
Vector node_residual(const TreedDag& dag, const ModelFactors& mf, const Vector& w, int j) {
  const Node& nd = dag.node(j);
  Vector e = gather(w, nd.locs);
  if (nd.parent_size() > 0) e.noalias() -= mf.node[j].H * gather(w, nd.parent_locs);
  return e;
}

Vector apply_r_inv(const TreedDag& dag, const ModelFactors& mf, int j, const Vector& v) {
  if (dag.node(j).is_leaf()) return mf.node[j].R_inv.col(0).cwiseProduct(v);
  return mf.node[j].R_inv * v;
}

struct NodeData {
  Vector ytilde;     // y - X beta, zero where missing
  Vector precision;  // 1/tau2 where observed, zero elsewhere
};

NodeData node_data(const ChainState& st, const ModelData& data, const Vector& resid,
                   const Node& nd) {
  NodeData out;
  out.ytilde = Vector::Zero(nd.size());
  out.precision = Vector::Zero(nd.size());
  for (int a = 0; a < nd.size(); ++a) {
    const int l = nd.locs[a];
    if (!data.observed[l]) continue;
    out.precision(a) = 1.0 / st.tau2(data.locations.var(l));
    out.ytilde(a) = resid(l);
  }
  return out;
}

// Draws w_i from its full conditional given the message from its children.
void draw_node(ChainState& st, const TreedDag& dag, const ModelFactors& mf, const ModelData& data,
               const Vector& resid, int i, const Matrix& child_info, const Vector& message) {
  const Node& nd = dag.node(i);
  const auto& f = mf.node[i];
  const NodeData nd_data = node_data(st, data, resid, nd);
  RngStream& rng = st.node_rng[i];
  const int n = nd.size();
  Vector prior_mean = Vector::Zero(n);
  if (nd.parent_size() > 0) prior_mean = f.H * gather(st.w, nd.parent_locs);

  if (nd.is_leaf()) {
    Vector out(n);
    for (int a = 0; a < n; ++a) {
      const double prec = f.R_inv(a, 0) + nd_data.precision(a);
      const double b = f.R_inv(a, 0) * prior_mean(a) + nd_data.precision(a) * nd_data.ytilde(a);
      out(a) = b / prec + rng.normal() / std::sqrt(prec);
    }
    scatter(st.w, nd.locs, out);
    return;
  }
  Matrix q = f.R_inv + child_info;
  q.diagonal() += nd_data.precision;
  Vector b = f.R_inv * prior_mean + message;
  b += nd_data.precision.cwiseProduct(nd_data.ytilde);
  Eigen::LLT<Matrix> llt(q);
  if (llt.info() != Eigen::Success) {
    const SpdFactor sf = spd_factor(q, "full conditional precision");
    llt = sf.llt;
  }
  const Vector mu = llt.solve(b);
  Vector z(n);
  for (int a = 0; a < n; ++a) z(a) = rng.normal();
  scatter(st.w, nd.locs, sample_from_precision(llt, mu, z));
}

std::vector<std::vector<int>> color_groups(const std::vector<int>& colors) {
  int mx = 0;
  for (int c : colors) mx = std::max(mx, c);
  std::vector<std::vector<int>> g(mx + 1);
  for (std::size_t i = 0; i < colors.size(); ++i) g[colors[i]].push_back(static_cast<int>(i));
  return g;
}

Vector data_residual(const ChainState& st, const ModelData& data) {
  Vector r = data.y - data.linear_predictor(st.beta);
  for (int i = 0; i < data.n(); ++i)
    if (!data.observed[i]) r(i) = 0.0;
  return r;
}

}  // namespace

// ---------------------------------------------------------------- layout

ThetaLayout::ThetaLayout(int q, bool estimate_alpha_beta) : q_(q) {
  if (q < 1) throw Error("theta layout needs at least one outcome");
  const int nd = q * (q - 1) / 2;
  for (int k = 0; k < 3 * q; ++k) free_.push_back(k);
  if (q > 1) {
    for (int k = 0; k < nd; ++k) free_.push_back(3 * q + k);
    if (estimate_alpha_beta) {
      free_.push_back(3 * q + nd);
      free_.push_back(3 * q + nd + 1);
    }
  }
  free_.push_back(3 * q + nd + 2);
}

Vector ThetaLayout::natural(const ThetaParams& th) const {
  const int q = q_;
  Vector v(size());
  int k = 0;
  for (int i = 0; i < q; ++i) v(k++) = th.sigma1(i);
  for (int i = 0; i < q; ++i) v(k++) = th.sigma2(i);
  for (int i = 0; i < q; ++i) v(k++) = th.phi_margin(i);
  for (int i = 1; i < q; ++i)
    for (int j = 0; j < i; ++j) v(k++) = th.latent_dist(i, j);
  v(k++) = th.alpha;
  v(k++) = th.beta;
  v(k++) = th.phi;
  return v;
}

ThetaParams ThetaLayout::from_natural(const Vector& v) const {
  const int q = q_;
  if (v.size() != size()) throw Error("theta vector has the wrong length");
  ThetaParams th = ThetaParams::defaults(q);
  int k = 0;
  for (int i = 0; i < q; ++i) th.sigma1(i) = v(k++);
  for (int i = 0; i < q; ++i) th.sigma2(i) = v(k++);
  for (int i = 0; i < q; ++i) th.phi_margin(i) = v(k++);
  for (int i = 1; i < q; ++i)
    for (int j = 0; j < i; ++j) {
      th.latent_dist(i, j) = v(k);
      th.latent_dist(j, i) = v(k++);
    }
  th.alpha = v(k++);
  th.beta = v(k++);
  th.phi = v(k++);
  return th;
}

Vector ThetaLayout::to_unconstrained(const ThetaParams& th) const {
  Vector v = natural(th);
  for (int k = q_; k < size(); ++k) v(k) = std::log(v(k));
  return v;
}

ThetaParams ThetaLayout::from_unconstrained(const Vector& u) const {
  Vector v = u;
  for (int k = q_; k < size(); ++k) v(k) = std::exp(u(k));
  return from_natural(v);
}

std::vector<std::string> ThetaLayout::names() const {
  std::vector<std::string> out;
  for (int i = 0; i < q_; ++i) out.push_back("sigma1_" + std::to_string(i));
  for (int i = 0; i < q_; ++i) out.push_back("sigma2_" + std::to_string(i));
  for (int i = 0; i < q_; ++i) out.push_back("phi_margin_" + std::to_string(i));
  for (int i = 1; i < q_; ++i)
    for (int j = 0; j < i; ++j)
      out.push_back("latent_dist_" + std::to_string(i) + "_" + std::to_string(j));
  out.push_back("alpha");
  out.push_back("beta");
  out.push_back("phi");
  return out;
}

// ------------------------------------------------------------------- RAM

RobustAdaptiveMetropolis::RobustAdaptiveMetropolis(int dim, double initial_scale, double target,
                                                   double decay)
    : scale_(Matrix::Identity(dim, dim) * initial_scale), target_(target), decay_(decay) {}

bool RobustAdaptiveMetropolis::step(Vector& u, double& current,
                                    const std::function<double(const Vector&)>& log_target,
                                    RngStream& rng, bool adapt) {
  const int d = static_cast<int>(scale_.rows());
  Vector eps(d);
  for (int k = 0; k < d; ++k) eps(k) = rng.normal();
  const Vector prop = u + scale_ * eps;
  const double lp = log_target(prop);
  double accept_prob = 0.0;
  if (std::isfinite(lp)) accept_prob = std::min(1.0, std::exp(lp - current));
  const bool accepted = rng.uniform() < accept_prob;
  ++proposals_;
  if (accepted) {
    ++accepted_;
    u = prop;
    current = lp;
  }
  const double norm2 = eps.squaredNorm();
  if (adapt && d > 0 && norm2 > 0.0) {
    ++adapt_steps_;
    const double eta = std::min(1.0, d * std::pow(static_cast<double>(adapt_steps_), -decay_));
    const Vector se = scale_ * eps;
    Matrix m = scale_ * scale_.transpose();
    m.noalias() += (eta * (accept_prob - target_) / norm2) * se * se.transpose();
    Eigen::LLT<Matrix> llt(m);
    if (llt.info() == Eigen::Success) scale_ = llt.matrixL();
  }
  return accepted;
}

// ---------------------------------------------------------------- density

double log_prior_w(const Vector& w, const TreedDag& dag, const ModelFactors& mf) {
  std::vector<double> parts(dag.size(), 0.0);
  parallel_for(dag.size(), [&](int j) {
    const Vector e = node_residual(dag, mf, w, j);
    const double quad = e.dot(apply_r_inv(dag, mf, j, e));
    parts[j] = -0.5 * (e.size() * std::log(2.0 * std::numbers::pi) + mf.node[j].R_logdet + quad);
  });
  double s = 0.0;
  for (double p : parts) s += p;
  return s;
}

Vector child_message(const TreedDag& dag, const ModelFactors& mf, const Vector& w, int i) {
  const Node& nd = dag.node(i);
  const Vector wi = gather(w, nd.locs);
  Vector m = Vector::Zero(nd.size());
  for (int j : nd.children) {
    const Node& nj = dag.node(j);
    const auto hij = mf.node[j].H.middleCols(nj.parent_offsets[parent_position(nj, i)], nd.size());
    Vector e = node_residual(dag, mf, w, j);
    e.noalias() += hij * wi;
    m.noalias() += hij.transpose() * apply_r_inv(dag, mf, j, e);
  }
  return m;
}

// ------------------------------------------------------------------ gibbs

void gibbs_w_color(ChainState& st, const TreedDag& dag, const ModelFactors& mf,
                   const ModelData& data, const std::vector<int>& colors, int color) {
  std::vector<int> group;
  for (int i = 0; i < dag.size(); ++i)
    if (colors[i] == color) group.push_back(i);
  const Vector resid = data_residual(st, data);
  parallel_for(static_cast<int>(group.size()), [&](int k) {
    const int i = group[k];
    if (dag.node(i).is_leaf()) {
      draw_node(st, dag, mf, data, resid, i, Matrix(), Vector());
    } else {
      const Vector msg = child_message(dag, mf, st.w, i);
      draw_node(st, dag, mf, data, resid, i, mf.child_info[i], msg);
    }
  });
}

void gibbs_w(ChainState& st, const TreedDag& dag, const ModelFactors& mf, const ModelData& data) {
  const auto colors = color_nodes(dag);
  for (int c : color_order(dag)) gibbs_w_color(st, dag, mf, data, colors, c);
}

void gibbs_w_serial(ChainState& st, const TreedDag& dag, const ModelFactors& mf,
                    const ModelData& data) {
  const auto groups = color_groups(color_nodes(dag));
  const Vector resid = data_residual(st, data);
  for (int c : color_order(dag)) {
    for (int i : groups[c]) {
      const Node& nd = dag.node(i);
      if (nd.is_leaf()) {
        draw_node(st, dag, mf, data, resid, i, Matrix(), Vector());
        continue;
      }
      Matrix info = Matrix::Zero(nd.size(), nd.size());
      Vector msg = Vector::Zero(nd.size());
      for (int j : nd.children) {
        const Node& nj = dag.node(j);
        Vector wt = gather(st.w, nj.locs);
        Matrix hij;
        for (std::size_t h = 0; h < nj.parents.size(); ++h) {
          const int g = nj.parents[h];
          const auto hg = mf.node[j].H.middleCols(nj.parent_offsets[h], dag.node(g).size());
          if (g == i)
            hij = hg;
          else
            wt -= hg * gather(st.w, dag.node(g).locs);
        }
        if (nj.is_leaf()) {
          info += hij.transpose() * mf.node[j].R_inv.col(0).asDiagonal() * hij;
          msg += hij.transpose() * mf.node[j].R_inv.col(0).cwiseProduct(wt);
        } else {
          info += hij.transpose() * mf.node[j].R_inv * hij;
          msg += hij.transpose() * (mf.node[j].R_inv * wt);
        }
      }
      draw_node(st, dag, mf, data, resid, i, info, msg);
    }
  }
}

void gibbs_beta(ChainState& st, const ModelData& data, const Priors& priors) {
  const int p = data.p();
  if (p == 0) return;
  for (int v = 0; v < data.q; ++v) {
    Matrix prec = Matrix::Identity(p, p) / priors.beta_var;
    Vector rhs = Vector::Zero(p);
    const double inv_t2 = 1.0 / st.tau2(v);
    for (int i = 0; i < data.n(); ++i) {
      if (!data.observed[i] || data.locations.var(i) != v) continue;
      const auto x = data.X.row(i).transpose();
      prec.noalias() += inv_t2 * x * x.transpose();
      rhs.noalias() += inv_t2 * (data.y(i) - st.w(i)) * x;
    }
    Eigen::LLT<Matrix> llt(prec);
    const Vector mu = llt.solve(rhs);
    Vector z(p);
    for (int k = 0; k < p; ++k) z(k) = st.chain_rng.normal();
    st.beta.segment(v * p, p) = sample_from_precision(llt, mu, z);
  }
}

void gibbs_tau2(ChainState& st, const ModelData& data, const Priors& priors) {
  const Vector mean = data.linear_predictor(st.beta);
  std::vector<double> sse(data.q, 0.0);
  std::vector<int> count(data.q, 0);
  for (int i = 0; i < data.n(); ++i) {
    if (!data.observed[i]) continue;
    const int v = data.locations.var(i);
    const double e = data.y(i) - mean(i) - st.w(i);
    sse[v] += e * e;
    count[v]++;
  }
  for (int v = 0; v < data.q; ++v) {
    const double shape = priors.tau_shape + 0.5 * count[v];
    const double rate = priors.tau_rate + 0.5 * sse[v];
    st.tau2(v) = 1.0 / st.chain_rng.gamma(shape, 1.0 / rate);
  }
}

// ------------------------------------------------------------------ theta

double log_theta_prior(const Vector& u, const ThetaLayout& layout, const Priors& priors) {
  double s = 0.0;
  for (int k : layout.free()) {
    const double m = priors.theta_mean.size() == layout.size() ? priors.theta_mean(k) : 0.0;
    const double z = (u(k) - m) / priors.theta_sd;
    s -= 0.5 * z * z;
  }
  return s;
}

MetropolisOutcome metropolis_theta(ChainState& st, ModelFactors& mf, const TreedDag& dag,
                                   const ModelData& data, const ThetaLayout& layout,
                                   const Priors& priors, ThetaTarget target, bool adapt) {
  const Vector u0 = layout.to_unconstrained(st.theta);
  const auto& free = layout.free();
  auto full = [&](const Vector& sub) {
    Vector u = u0;
    for (std::size_t k = 0; k < free.size(); ++k) u(free[k]) = sub(k);
    return u;
  };
  auto evaluate = [&](const ModelFactors& f) {
    return target == ThetaTarget::latent ? log_prior_w(st.w, dag, f)
                                         : integrated_loglik(f, dag, data, st.beta, st.tau2);
  };

  MetropolisOutcome out;
  ModelFactors proposal;
  auto log_target = [&](const Vector& sub) {
    const Vector u = full(sub);
    try {
      const ThetaParams th = layout.from_unconstrained(u);
      proposal = compute_factors(th, dag, data.locations, FactorScope::without_child_info);
    } catch (const Error&) {
      out.invalid_proposal = true;
      return kNegInf;
    }
    const double v = evaluate(proposal) + log_theta_prior(u, layout, priors);
    return std::isfinite(v) ? v : kNegInf;
  };

  Vector sub(free.size());
  for (std::size_t k = 0; k < free.size(); ++k) sub(k) = u0(free[k]);
  double current = evaluate(mf) + log_theta_prior(u0, layout, priors);
  out.accepted = st.ram.step(sub, current, log_target, st.chain_rng, adapt);
  if (out.accepted) {
    compute_child_info(proposal, dag);
    mf = std::move(proposal);
    st.theta = mf.theta;
  }
  return out;
}

// ------------------------------------------------------------------ chain

ChainState init_chain(const ModelData& data, const TreedDag& dag, const ChainConfig& cfg) {
  data.validate();
  if (dag.num_locations() != data.n()) throw Error("graph and data disagree on locations");
  ChainState st;
  st.w = Vector::Zero(data.n());
  st.beta = Vector::Zero(data.num_coef());
  st.theta = cfg.theta_init.q() == 0 ? ThetaParams::defaults(data.q) : cfg.theta_init;
  st.theta.validate();
  if (st.theta.q() != data.q) throw Error("initial theta has the wrong number of outcomes");
  if (cfg.tau2_init.size() == data.q) {
    st.tau2 = cfg.tau2_init;
  } else {
    st.tau2 = Vector::Ones(data.q);
    for (int v = 0; v < data.q; ++v) {
      double s = 0.0, s2 = 0.0;
      int c = 0;
      for (int i = 0; i < data.n(); ++i)
        if (data.observed[i] && data.locations.var(i) == v) {
          s += data.y(i);
          s2 += data.y(i) * data.y(i);
          ++c;
        }
      if (c > 1) st.tau2(v) = std::max(0.1 * (s2 / c - (s / c) * (s / c)), 1e-3);
    }
  }
  const ThetaLayout layout(data.q, cfg.estimate_alpha_beta);
  st.ram = RobustAdaptiveMetropolis(static_cast<int>(layout.free().size()), cfg.ram_initial_scale,
                                    cfg.ram_target);
  st.node_rng.reserve(dag.size());
  for (int i = 0; i < dag.size(); ++i)
    st.node_rng.emplace_back(cfg.seed, 0x6e6f6465ULL, static_cast<std::uint64_t>(i));
  st.chain_rng = RngStream(cfg.seed, 0x636861696eULL, 0);
  return st;
}

ChainResult run_chain(const ModelData& data, const TreedDag& dag, const ChainConfig& cfg) {
  using clock = std::chrono::steady_clock;
  if (cfg.iterations < 0 || cfg.burn_in < 0 || cfg.burn_in > cfg.iterations || cfg.thin < 1)
    throw Error("iterations, burn-in and thinning are inconsistent");
  if (cfg.target == ThetaTarget::integrated && data.n() > cfg.integrated_max_locations)
    throw Error("integrated likelihood is limited to " +
                std::to_string(cfg.integrated_max_locations) + " locations");
  const auto t_start = clock::now();
  ChainResult res;
  res.layout = ThetaLayout(data.q, cfg.estimate_alpha_beta);
  ChainState st = init_chain(data, dag, cfg);
  ModelFactors mf = compute_factors(st.theta, dag, data.locations);
  auto& diag = res.diag;
  for (int it = 1; it <= cfg.iterations; ++it) {
    st.iteration = it;
    auto t0 = clock::now();
    gibbs_w(st, dag, mf, data);
    diag.seconds_w += seconds_since(t0);
    t0 = clock::now();
    gibbs_beta(st, data, cfg.priors);
    diag.seconds_beta += seconds_since(t0);
    t0 = clock::now();
    gibbs_tau2(st, data, cfg.priors);
    diag.seconds_tau2 += seconds_since(t0);
    if (cfg.update_theta) {
      t0 = clock::now();
      const auto mh = metropolis_theta(st, mf, dag, data, res.layout, cfg.priors, cfg.target,
                                       it <= cfg.burn_in);
      diag.seconds_theta += seconds_since(t0);
      diag.theta_proposals++;
      if (mh.accepted) diag.theta_accepted++;
      if (mh.invalid_proposal) diag.invalid_proposals++;
    }
    diag.acceptance_trace.push_back(
        diag.theta_proposals ? static_cast<double>(diag.theta_accepted) / diag.theta_proposals
                             : 0.0);
    if (it > cfg.burn_in && (it - cfg.burn_in) % cfg.thin == 0)
      res.draws.push_back(Draw{st.w, st.beta, st.tau2, res.layout.natural(st.theta)});
  }
  diag.seconds_total = seconds_since(t_start);
  res.final_state = std::move(st);
  return res;
}

}  // namespace spamtree
