#include "spamtree/linalg.hpp"

#include <cmath>

namespace spamtree {

double log_det(const Eigen::LLT<Matrix>& llt) {
  const auto& l = llt.matrixLLT();
  double s = 0.0;
  for (Eigen::Index i = 0; i < l.rows(); ++i) s += std::log(l(i, i));
  return 2.0 * s;
}

SpdFactor spd_factor(const Matrix& a, const std::string& context) {
  SpdFactor f;
  if (a.rows() == 0) return f;
  f.llt.compute(a);
  if (f.llt.info() == Eigen::Success) {
    f.log_det = log_det(f.llt);
    if (std::isfinite(f.log_det)) return f;
  }
  const double mean_diag = std::max(a.diagonal().mean(), 1e-300);
  for (double rel = 1e-9; rel <= 1e-5 * 1.0000001; rel *= 10.0) {
    Matrix b = a;
    b.diagonal().array() += rel * mean_diag;
    f.llt.compute(b);
    if (f.llt.info() == Eigen::Success) {
      f.jitter = rel * mean_diag;
      f.log_det = log_det(f.llt);
      if (std::isfinite(f.log_det)) return f;
    }
  }
  throw Error("matrix is not positive definite after maximal jitter: " + context);
}

Matrix spd_inverse(const SpdFactor& f) {
  const auto n = f.llt.matrixLLT().rows();
  return f.llt.solve(Matrix::Identity(n, n));
}

Vector sample_from_precision(const Eigen::LLT<Matrix>& q_llt, const Vector& mu, const Vector& z) {
  Vector x = q_llt.matrixU().solve(z);
  return mu + x;
}

}  // namespace spamtree
