#pragma once

#include "spamtree/common.hpp"

#include <string>

namespace spamtree {

struct SpdFactor {
  Eigen::LLT<Matrix> llt;
  double jitter = 0.0;  // absolute amount added to the diagonal
  double log_det = 0.0;
};

/// Cholesky factor of a symmetric positive definite matrix. When the plain
/// factorization fails, a diagonal jitter of 1e-9 times the mean diagonal is
/// added and escalated by x10 up to 1e-5; past that an Error naming
/// `context` is thrown.
SpdFactor spd_factor(const Matrix& a, const std::string& context);

Matrix spd_inverse(const SpdFactor& f);

double log_det(const Eigen::LLT<Matrix>& llt);

/// x = mu + L^{-T} z where Q = L L^T is a precision matrix.
Vector sample_from_precision(const Eigen::LLT<Matrix>& q_llt, const Vector& mu, const Vector& z);

}  // namespace spamtree
