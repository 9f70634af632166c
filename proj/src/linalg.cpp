#include "dguide/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace dguide {

double log_sum_exp(std::span<const double> values) {
  if (values.empty()) return -std::numeric_limits<double>::infinity();
  const double m = *std::max_element(values.begin(), values.end());
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double v : values) s += std::exp(v - m);
  return m + std::log(s);
}

Eigen::LLT<Matrix> checked_cholesky(const Matrix& m, const std::string& what) {
  if (m.rows() != m.cols()) throw ConfigError(what + ": matrix is not square");
  Eigen::LLT<Matrix> llt(m);
  if (llt.info() != Eigen::Success) {
    throw NumericalError(what + ": matrix is not symmetric positive definite");
  }
  const Vector diag = llt.matrixLLT().diagonal();
  const double lo = diag.minCoeff();
  const double hi = diag.maxCoeff();
  // cond(M) >= (max L_ii / min L_ii)^2; cheap lower estimate.
  if (!(lo > 0.0) || (hi / lo) * (hi / lo) > kConditionLimit) {
    throw NumericalError(what + ": matrix is ill-conditioned (condition number > 1e12)");
  }
  return llt;
}

Matrix spd_inverse(const Matrix& m, const std::string& what) {
  const auto llt = checked_cholesky(m, what);
  return llt.solve(Matrix::Identity(m.rows(), m.cols()));
}

double log_normal_density(const Vector& x, const Vector& mean,
                          const Eigen::LLT<Matrix>& cov_chol) {
  const Vector r = x - mean;
  const Vector z = cov_chol.matrixL().solve(r);
  const auto l = cov_chol.matrixLLT();
  double log_det = 0.0;
  for (Eigen::Index i = 0; i < l.rows(); ++i) log_det += 2.0 * std::log(l(i, i));
  return -0.5 * (z.squaredNorm() + log_det +
                 static_cast<double>(x.size()) * std::log(2.0 * std::numbers::pi));
}

double spectral_norm(const Matrix& a, double tol, int max_iter) {
  if (a.size() == 0) return 0.0;
  const Matrix gram = a.transpose() * a;
  Vector v = Vector::Ones(gram.cols()) / std::sqrt(static_cast<double>(gram.cols()));
  // Perturb away from any exact eigen-degeneracy of the all-ones start.
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) += 1e-3 * static_cast<double>(i % 7);
  v.normalize();
  double lambda = 0.0;
  for (int it = 0; it < max_iter; ++it) {
    Vector w = gram * v;
    const double next = v.dot(w);
    const double n = w.norm();
    if (n == 0.0) return 0.0;
    v = w / n;
    if (std::abs(next - lambda) <= tol * std::max(1.0, std::abs(next))) {
      lambda = next;
      break;
    }
    lambda = next;
  }
  // Rayleigh quotient at the converged vector.
  lambda = v.dot(gram * v);
  return std::sqrt(std::max(lambda, 0.0));
}

}  // namespace dguide
