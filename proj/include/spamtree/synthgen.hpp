#pragma once

#include "spamtree/covariance.hpp"
#include "spamtree/model.hpp"

#include <array>
#include <cstdint>
#include <vector>

namespace spamtree {

struct SynthConfig {
  int grid_side = 30;
  int q = 2;
  ThetaParams theta;             // q() == 0 means synth_default_theta(q)
  Vector tau2;                   // empty means 0.01, 0.1, 0.1, ...
  Vector beta;                   // per outcome intercepts; empty means zero
  double missing_rate = 0.8;     // independent per (location, outcome)
  int patch_count = 3;
  double patch_radius = 0.1;
  double patch_missing_rate = 0.99;
  std::uint64_t seed = 1;
};

struct SynthTruth {
  ThetaParams theta;
  Vector tau2;
  Vector beta;
  Vector w;       // latent values at every expanded location
  Vector y_full;  // outcomes before masking
  std::vector<std::array<double, 2>> patch_centers;
};

struct SynthData {
  ModelData data;
  SynthTruth truth;
};

/// Largest number of expanded locations the dense generator accepts.
inline constexpr int kSynthMaxScalars = 10000;

/// sigma1 = sigma2 = 1, outcome decays and phi = 10, unit latent distance,
/// alpha = beta = 1.
ThetaParams synth_default_theta(int q);

/// Grid point major, outcome minor.
LocationSet synth_grid(int side, int q);

/// Regular grid i / (side - 1) on the unit square, each point carrying all q
/// outcomes (grid point major, outcome minor). Latent values are an exact
/// draw from the dense base process; the design is a single intercept column.
SynthData generate(const SynthConfig& cfg);

/// Lower Cholesky factor of the dense covariance used by `generate`.
Matrix synth_cov_factor(const ThetaParams& th, const LocationSet& locs);

}  // namespace spamtree
