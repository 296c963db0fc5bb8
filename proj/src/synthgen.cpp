#include "spamtree/synthgen.hpp"

#include "spamtree/linalg.hpp"
#include "spamtree/rng.hpp"

#include <array>
#include <cmath>
#include <numeric>

namespace spamtree {

ThetaParams synth_default_theta(int q) {
  ThetaParams th = ThetaParams::defaults(q);
  th.phi_margin = Vector::Constant(q, 10.0);
  th.phi = 10.0;
  return th;
}

Matrix synth_cov_factor(const ThetaParams& th, const LocationSet& locs) {
  std::vector<int> idx(locs.size());
  std::iota(idx.begin(), idx.end(), 0);
  const SpdFactor f = spd_factor(cov_matrix(th, locs, idx), "synthetic covariance");
  return f.llt.matrixL();
}

LocationSet synth_grid(int side, int q) {
  LocationSet locs(2);
  const double step = 1.0 / (side - 1);
  for (int a = 0; a < side; ++a)
    for (int b = 0; b < side; ++b) {
      const std::array<double, 2> c{a * step, b * step};
      for (int v = 0; v < q; ++v) locs.push_back(c, v);
    }
  return locs;
}

SynthData generate(const SynthConfig& cfg) {
  if (cfg.grid_side < 2) throw Error("grid side must be at least 2");
  if (cfg.q < 1) throw Error("need at least one outcome");
  for (double r : {cfg.missing_rate, cfg.patch_missing_rate})
    if (!(r >= 0.0 && r <= 1.0)) throw Error("missing rates must lie in [0, 1]");
  if (cfg.patch_count < 0 || !(cfg.patch_radius >= 0.0)) throw Error("invalid patch settings");
  const long n = static_cast<long>(cfg.grid_side) * cfg.grid_side * cfg.q;
  if (n > kSynthMaxScalars)
    throw Error("dense generation is capped at " + std::to_string(kSynthMaxScalars) +
                " locations; requested " + std::to_string(n));

  SynthData out;
  SynthTruth& truth = out.truth;
  truth.theta = cfg.theta.q() == 0 ? synth_default_theta(cfg.q) : cfg.theta;
  truth.theta.validate();
  if (truth.theta.q() != cfg.q) throw Error("truth theta has the wrong number of outcomes");
  if (cfg.tau2.size() == 0) {
    truth.tau2 = Vector::Constant(cfg.q, 0.1);
    truth.tau2(0) = 0.01;
  } else {
    truth.tau2 = cfg.tau2;
  }
  truth.beta = cfg.beta.size() == 0 ? Vector::Zero(cfg.q) : cfg.beta;
  if (truth.tau2.size() != cfg.q || truth.beta.size() != cfg.q)
    throw Error("tau2 and beta need one entry per outcome");
  for (int v = 0; v < cfg.q; ++v)
    if (!(truth.tau2(v) > 0.0)) throw Error("tau2 must be > 0");

  ModelData& data = out.data;
  data.q = cfg.q;
  data.locations = synth_grid(cfg.grid_side, cfg.q);

  RngStream rng(cfg.seed, 0x73796e7468ULL, 0);
  const Matrix l = synth_cov_factor(truth.theta, data.locations);
  Vector z(n);
  for (long i = 0; i < n; ++i) z(i) = rng.normal();
  truth.w = l * z;

  data.X = Matrix::Ones(n, 1);
  truth.y_full.resize(n);
  for (long i = 0; i < n; ++i) {
    const int v = data.locations.var(i);
    truth.y_full(i) = truth.beta(v) + truth.w(i) + std::sqrt(truth.tau2(v)) * rng.normal();
  }

  for (int k = 0; k < cfg.patch_count; ++k) {
    const double cx = rng.uniform();
    const double cy = rng.uniform();
    truth.patch_centers.push_back({cx, cy});
  }
  data.y = truth.y_full;
  data.observed.assign(n, 1);
  for (long i = 0; i < n; ++i) {
    const double* c = data.locations.coords(i);
    bool in_patch = false;
    for (const auto& pc : truth.patch_centers)
      if (std::hypot(c[0] - pc[0], c[1] - pc[1]) <= cfg.patch_radius) in_patch = true;
    const double u = rng.uniform();
    const double rate = in_patch ? std::max(cfg.missing_rate, cfg.patch_missing_rate)
                                 : cfg.missing_rate;
    if (u < rate) data.observed[i] = 0;
  }
  for (long i = 0; i < n; ++i)
    if (!data.observed[i]) data.y(i) = std::nan("");
  return out;
}

}  // namespace spamtree
