#pragma once

#include "spamtree/mcmc.hpp"
#include "spamtree/model.hpp"
#include "spamtree/treegraph.hpp"

#include <cstdint>
#include <vector>

namespace spamtree {

struct PredictionRequest {
  LocationSet locations;  // may include points outside the fitted graph
  Matrix X;               // one covariate row per location
};

/// Per-location predictive draws; column k belongs to retained draw k.
struct PredictionDraws {
  Matrix w;
  Matrix y;
  std::vector<std::uint8_t> in_model;  // 1 where the location is part of the fitted graph
};

/// Draws y at each requested location for every retained posterior draw.
/// Locations present in the data reuse the sampled latent value; others are
/// cherry-picked to a terminal branch and drawn from their conditional given
/// that leaf's parent set under the draw's theta.
PredictionDraws predict(const std::vector<Draw>& draws, const ThetaLayout& layout,
                        const TreedDag& dag, const ModelData& data, const PredictionRequest& req,
                        std::uint64_t seed);

struct PredictionSummary {
  Vector mean, lower, upper;  // equal-tailed 95% interval
};

/// Row-wise mean and empirical 2.5% / 97.5% quantiles.
PredictionSummary summarize(const Matrix& draws);

struct Score {
  double coverage95 = 0.0;
  double rmse = 0.0;
  double mae = 0.0;
  int count = 0;
};

/// Metrics per outcome; NaN truth entries are skipped.
std::vector<Score> score(const PredictionSummary& pred, const Vector& truth,
                         const std::vector<int>& vars, int q);

/// Linearly interpolated empirical quantile of unsorted values.
double quantile(std::vector<double> values, double prob);

}  // namespace spamtree
