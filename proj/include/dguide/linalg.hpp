#pragma once

#include <Eigen/Dense>

#include <span>
#include <stdexcept>
#include <string>

namespace dguide {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Invalid configuration, shapes, or arguments supplied by the caller.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A computation that is well posed in exact arithmetic but failed numerically
/// (non-SPD matrix, ill-conditioning, non-finite state).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr double kConditionLimit = 1e12;

double log_sum_exp(std::span<const double> values);

/// Cholesky factor of a symmetric positive-definite matrix. Throws
/// NumericalError naming `what` if the factorization fails or the matrix is
/// worse conditioned than kConditionLimit.
Eigen::LLT<Matrix> checked_cholesky(const Matrix& m, const std::string& what);

/// Inverse of an SPD matrix via its Cholesky factor.
Matrix spd_inverse(const Matrix& m, const std::string& what);

/// log N(x; mean, cov) given the Cholesky factor of cov.
double log_normal_density(const Vector& x, const Vector& mean,
                          const Eigen::LLT<Matrix>& cov_chol);

/// Largest singular value by power iteration on AᵀA, relative tolerance `tol`.
double spectral_norm(const Matrix& a, double tol = 1e-10, int max_iter = 10000);

}  // namespace dguide
