#pragma once

#include "spamtree/common.hpp"

#include <cstdint>
#include <vector>

namespace spamtree {

/// Observed data over expanded locations. Each row observes the latent
/// process of its own outcome directly; regression coefficients are
/// outcome-specific, so beta holds q blocks of p entries.
struct ModelData {
  LocationSet locations;
  Vector y;                            // meaningful only where observed
  std::vector<std::uint8_t> observed;  // 1 where the outcome is recorded
  Matrix X;                            // n x p covariates
  int q = 1;

  int n() const { return locations.size(); }
  int p() const { return static_cast<int>(X.cols()); }
  int num_coef() const { return q * p(); }
  std::vector<int> observed_count() const;
  Vector linear_predictor(const Vector& beta) const;
  void validate() const;
};

}  // namespace spamtree
