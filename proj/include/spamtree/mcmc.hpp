#pragma once

#include "spamtree/covariance.hpp"
#include "spamtree/model.hpp"
#include "spamtree/rng.hpp"
#include "spamtree/treegraph.hpp"

#include <functional>
#include <string>
#include <vector>

namespace spamtree {

enum class ThetaTarget { latent, integrated };

struct Priors {
  double beta_var = 100.0;  // beta ~ N(0, beta_var I)
  double tau_shape = 2.0;   // tau2_j ~ IG(tau_shape, tau_rate)
  double tau_rate = 1.0;
  double theta_sd = 1.0;    // unconstrained theta_k ~ N(theta_mean_k, theta_sd^2)
  Vector theta_mean;        // empty means zero
};

/// Map between ThetaParams and an unconstrained vector. sigma1 stays on its
/// natural signed scale; every positive component is log-transformed.
/// Order: sigma1 (q), log sigma2 (q), log phi_margin (q), log latent
/// distances (i > j, row-wise), log alpha, log beta, log phi.
class ThetaLayout {
 public:
  ThetaLayout() = default;
  ThetaLayout(int q, bool estimate_alpha_beta);

  int q() const { return q_; }
  int size() const { return theta_size(q_); }
  Vector to_unconstrained(const ThetaParams& th) const;
  ThetaParams from_unconstrained(const Vector& u) const;
  /// Natural-scale values in the same order as the unconstrained vector.
  Vector natural(const ThetaParams& th) const;
  ThetaParams from_natural(const Vector& v) const;
  const std::vector<int>& free() const { return free_; }
  std::vector<std::string> names() const;

 private:
  int q_ = 0;
  std::vector<int> free_;
};

/// Robust adaptive Metropolis with a lower-triangular proposal scale that is
/// adapted toward a target acceptance rate with step size n^(-decay).
class RobustAdaptiveMetropolis {
 public:
  RobustAdaptiveMetropolis() = default;
  RobustAdaptiveMetropolis(int dim, double initial_scale, double target = 0.234,
                           double decay = 2.0 / 3.0);

  /// One proposal from u. `log_target` returns -inf for invalid points.
  /// Returns true on acceptance, updating u and current.
  bool step(Vector& u, double& current, const std::function<double(const Vector&)>& log_target,
            RngStream& rng, bool adapt);

  const Matrix& scale() const { return scale_; }
  long proposals() const { return proposals_; }
  long accepted() const { return accepted_; }
  double target() const { return target_; }

 private:
  Matrix scale_;
  double target_ = 0.234;
  double decay_ = 2.0 / 3.0;
  long proposals_ = 0;
  long accepted_ = 0;
  long adapt_steps_ = 0;
};

struct ChainState {
  Vector w;      // latent values, location-ordinal order
  Vector beta;   // q blocks of p coefficients
  Vector tau2;   // per outcome
  ThetaParams theta;
  RobustAdaptiveMetropolis ram;
  std::vector<RngStream> node_rng;  // one stream per graph node
  RngStream chain_rng;
  long iteration = 0;
};

/// log N(w | 0, C~) as a product of per-node conditionals.
double log_prior_w(const Vector& w, const TreedDag& dag, const ModelFactors& mf);

/// sum over children j of H_{i->j}^T R_j^{-1} (w_j - H_{\i->j} w_{[\i->j]}).
Vector child_message(const TreedDag& dag, const ModelFactors& mf, const Vector& w, int i);

/// Gibbs update of all latent nodes, color by color; nodes sharing a color
/// are sampled in parallel.
void gibbs_w(ChainState& st, const TreedDag& dag, const ModelFactors& mf, const ModelData& data);
/// Updates only the nodes of one color.
void gibbs_w_color(ChainState& st, const TreedDag& dag, const ModelFactors& mf,
                   const ModelData& data, const std::vector<int>& colors, int color);
/// Serial reference computing every message directly from its definition.
void gibbs_w_serial(ChainState& st, const TreedDag& dag, const ModelFactors& mf,
                    const ModelData& data);

void gibbs_beta(ChainState& st, const ModelData& data, const Priors& priors);
void gibbs_tau2(ChainState& st, const ModelData& data, const Priors& priors);

struct MetropolisOutcome {
  bool accepted = false;
  bool invalid_proposal = false;
};

/// One RAM step for theta. On acceptance `mf` holds the new factors.
MetropolisOutcome metropolis_theta(ChainState& st, ModelFactors& mf, const TreedDag& dag,
                                   const ModelData& data, const ThetaLayout& layout,
                                   const Priors& priors, ThetaTarget target, bool adapt);

double log_theta_prior(const Vector& u, const ThetaLayout& layout, const Priors& priors);

struct ChainConfig {
  int iterations = 1000;
  int burn_in = 500;
  int thin = 1;
  std::uint64_t seed = 1;
  ThetaTarget target = ThetaTarget::latent;
  int integrated_max_locations = 3000;
  bool update_theta = true;
  bool estimate_alpha_beta = false;
  double ram_target = 0.234;
  double ram_initial_scale = 0.1;
  Priors priors;
  ThetaParams theta_init;  // q() == 0 means defaults
  Vector tau2_init;        // empty means a tenth of each outcome's variance
};

struct Draw {
  Vector w, beta, tau2, theta;  // theta on the natural scale, ThetaLayout order
};

struct ChainDiagnostics {
  long theta_proposals = 0;
  long theta_accepted = 0;
  long invalid_proposals = 0;
  std::vector<double> acceptance_trace;  // running theta acceptance rate per sweep
  double seconds_w = 0, seconds_beta = 0, seconds_tau2 = 0, seconds_theta = 0, seconds_total = 0;
};

struct ChainResult {
  ThetaLayout layout;
  std::vector<Draw> draws;
  ChainDiagnostics diag;
  ChainState final_state;
};

ChainState init_chain(const ModelData& data, const TreedDag& dag, const ChainConfig& cfg);
ChainResult run_chain(const ModelData& data, const TreedDag& dag, const ChainConfig& cfg);

}  // namespace spamtree
