#include "spamtree/predict.hpp"

#include "spamtree/covariance.hpp"
#include "spamtree/parallel.hpp"
#include "spamtree/rng.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace spamtree {

namespace {

using LocKey = std::pair<std::vector<double>, int>;

LocKey key_of(const LocationSet& locs, int i) {
  return {std::vector<double>(locs.coords(i), locs.coords(i) + locs.dim()), locs.var(i)};
}

}  // namespace

PredictionDraws predict(const std::vector<Draw>& draws, const ThetaLayout& layout,
                        const TreedDag& dag, const ModelData& data, const PredictionRequest& req,
                        std::uint64_t seed) {
  const int m = req.locations.size();
  const int nd = static_cast<int>(draws.size());
  const int p = data.p();
  if (m > 0 && req.locations.dim() != data.locations.dim())
    throw Error("prediction locations have the wrong dimension");
  if (req.X.rows() != m || req.X.cols() != p)
    throw Error("prediction covariates must be " + std::to_string(m) + " x " + std::to_string(p));
  for (int i = 0; i < m; ++i)
    if (req.locations.var(i) < 0 || req.locations.var(i) >= data.q)
      throw Error("prediction variable index " + std::to_string(req.locations.var(i)) +
                  " is not below q = " + std::to_string(data.q));

  std::map<LocKey, int> known;
  for (int i = 0; i < data.n(); ++i) known.emplace(key_of(data.locations, i), i);

  PredictionDraws out;
  out.w.resize(m, nd);
  out.y.resize(m, nd);
  out.in_model.assign(m, 0);
  std::vector<int> model_row(m, -1);
  std::vector<int> terminal(m, -1);
  std::vector<std::vector<int>> pa_locs(m);
  bool any_new = false;
  const TerminalIndex index(dag, data.locations);
  for (int i = 0; i < m; ++i) {
    const auto it = known.find(key_of(req.locations, i));
    if (it != known.end()) {
      model_row[i] = it->second;
      out.in_model[i] = 1;
      continue;
    }
    any_new = true;
    terminal[i] = cherry_pick(dag, index, req.locations.coords(i), req.locations.var(i)).terminal;
    for (int g : dag.child_parent_set(terminal[i]))
      pa_locs[i].insert(pa_locs[i].end(), dag.node(g).locs.begin(), dag.node(g).locs.end());
  }

  for (int k = 0; k < nd; ++k) {
    const Draw& dr = draws[k];
    ModelFactors mf;
    if (any_new)
      mf = compute_factors(layout.from_natural(dr.theta), dag, data.locations,
                           FactorScope::branches_only);
    parallel_for(m, [&](int i) {
      RngStream rng(seed, static_cast<std::uint64_t>(k), static_cast<std::uint64_t>(i));
      const int v = req.locations.var(i);
      double w;
      if (model_row[i] >= 0) {
        w = dr.w(model_row[i]);
      } else {
        const Matrix& cinv = *mf.child_cov_inv[terminal[i]];
        const auto& pl = pa_locs[i];
        Vector c(pl.size()), wp(pl.size());
        for (std::size_t a = 0; a < pl.size(); ++a) {
          c(a) = cross_cov(mf.theta, req.locations.coords(i), v, data.locations.coords(pl[a]),
                           data.locations.var(pl[a]), data.locations.dim());
          wp(a) = dr.w(pl[a]);
        }
        const Vector h = cinv * c;
        const double cll = cross_cov(mf.theta, req.locations.coords(i), v,
                                     req.locations.coords(i), v, data.locations.dim());
        const double r = std::max(cll - h.dot(c), 0.0);
        w = h.dot(wp) + std::sqrt(r) * rng.normal();
      }
      double mean = w;
      if (p > 0) mean += req.X.row(i).dot(dr.beta.segment(v * p, p));
      out.w(i, k) = w;
      out.y(i, k) = mean + std::sqrt(dr.tau2(v)) * rng.normal();
    });
  }
  return out;
}

double quantile(std::vector<double> values, double prob) {
  if (values.empty()) return std::nan("");
  std::sort(values.begin(), values.end());
  const double pos = prob * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

PredictionSummary summarize(const Matrix& draws) {
  const auto m = draws.rows();
  PredictionSummary s;
  s.mean.resize(m);
  s.lower.resize(m);
  s.upper.resize(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    std::vector<double> v(draws.cols());
    for (Eigen::Index k = 0; k < draws.cols(); ++k) v[k] = draws(i, k);
    s.mean(i) = draws.cols() ? draws.row(i).mean() : std::nan("");
    s.lower(i) = quantile(v, 0.025);
    s.upper(i) = quantile(v, 0.975);
  }
  return s;
}

std::vector<Score> score(const PredictionSummary& pred, const Vector& truth,
                         const std::vector<int>& vars, int q) {
  if (truth.size() != pred.mean.size() || static_cast<Eigen::Index>(vars.size()) != truth.size())
    throw Error("truth and predictions are not aligned");
  std::vector<Score> out(q);
  std::vector<double> se(q, 0.0), ae(q, 0.0);
  std::vector<int> covered(q, 0);
  for (Eigen::Index i = 0; i < truth.size(); ++i) {
    if (std::isnan(truth(i))) continue;
    const int v = vars[i];
    if (v < 0 || v >= q) throw Error("variable index out of range in score");
    const double e = pred.mean(i) - truth(i);
    se[v] += e * e;
    ae[v] += std::abs(e);
    if (pred.lower(i) <= truth(i) && truth(i) <= pred.upper(i)) covered[v]++;
    out[v].count++;
  }
  for (int v = 0; v < q; ++v) {
    const int c = out[v].count;
    if (c == 0) {
      out[v].coverage95 = out[v].rmse = out[v].mae = std::nan("");
      continue;
    }
    out[v].coverage95 = static_cast<double>(covered[v]) / c;
    out[v].rmse = std::sqrt(se[v] / c);
    out[v].mae = ae[v] / c;
  }
  return out;
}

}  // namespace spamtree
