#pragma once

// Analytic Gaussian-mixture prior with a linear Gaussian observation model.
// Everything here is exact: densities, smoothed scores, posteriors and
// posterior means serve as ground truth for the learned components.

#include "dguide/linalg.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace dguide {

inline constexpr int kMaxBlocks = 3;

class GaussianMixture {
 public:
  GaussianMixture(std::vector<double> weights, std::vector<Vector> means,
                  std::vector<Matrix> covariances);

  int dim() const { return dim_; }
  int size() const { return static_cast<int>(weights_.size()); }
  double weight(int k) const { return weights_[k]; }
  const std::vector<double>& weights() const { return weights_; }
  const Vector& mean(int k) const { return means_[k]; }
  const Matrix& covariance(int k) const { return covariances_[k]; }

  double log_density(const Vector& x) const;
  double density(const Vector& x) const;

  /// Responsibilities γ_k(x), computed with log-sum-exp.
  Vector responsibilities(const Vector& x) const;

  /// ∇ log p(x).
  Vector score(const Vector& x) const;

  /// ∇² log p(x) (symmetric).
  Matrix hessian_log_density(const Vector& x) const;

  /// Law of X0 + t·ε: every covariance grows by t²·I.
  GaussianMixture smoothed(double t) const;

  Vector mixture_mean() const;
  /// E‖X − E X‖² = Σ_k w_k (tr Σ_k + ‖m_k − m̄‖²).
  double total_variance() const;

  std::vector<Vector> sample(int n, std::uint64_t seed) const;
  Matrix sample_matrix(int n, std::uint64_t seed) const;

 private:
  std::vector<double> weights_;
  std::vector<Vector> means_;
  std::vector<Matrix> covariances_;
  std::vector<Eigen::LLT<Matrix>> chol_;
  std::vector<Matrix> precision_;
  int dim_ = 0;
};

struct ConditionBlock {
  std::string name;
  std::vector<int> rows;
  /// Per-block noise std; unset means the model's shared std.
  std::optional<double> noise_std;
};

/// C = A·X0 + noise, with the output coordinates partitioned into blocks.
class LinearObservationModel {
 public:
  LinearObservationModel(Matrix a, double noise_std,
                         std::vector<ConditionBlock> blocks);

  const Matrix& matrix() const { return a_; }
  double noise_std() const { return noise_std_; }
  int input_dim() const { return static_cast<int>(a_.cols()); }
  int output_dim() const { return static_cast<int>(a_.rows()); }
  int block_count() const { return static_cast<int>(blocks_.size()); }
  const ConditionBlock& block(int b) const;
  int block_dim(int b) const { return static_cast<int>(block(b).rows.size()); }
  double block_noise(int b) const;

  /// Rows of A belonging to block b.
  Matrix block_matrix(int b) const;
  Vector block_slice(const Vector& y, int b) const;

  /// A·x0 + σ·η (per-block σ). `noiseless` returns A·x0.
  Vector observe(const Vector& x0, std::uint64_t seed, bool noiseless = false) const;
  Vector observe_block(const Vector& x0, int b, std::uint64_t seed,
                       bool noiseless = false) const;

 private:
  Matrix a_;
  double noise_std_;
  std::vector<ConditionBlock> blocks_;
};

/// Optional value per condition block (block ids 0..2 = C1, C2, C3).
struct Conditions {
  std::array<std::optional<Vector>, kMaxBlocks> values;

  bool has(int b) const { return values[b].has_value(); }
  const Vector& at(int b) const;
  Conditions& set(int b, Vector v);
  Conditions only(std::initializer_list<int> blocks) const;
  bool empty() const;
};

/// Mixture posterior of X0 together with the evidence it was conditioned on.
struct PosteriorMixture {
  GaussianMixture mixture;
  Conditions evidence;
  /// Observed noisy state (x_t, t) if the posterior also conditions on X_t.
  std::optional<Vector> state;
  double state_time = 0.0;

  /// E‖X0 − E[X0|evidence]‖².
  double conditional_variance() const { return mixture.total_variance(); }
  Vector mean() const { return mixture.mixture_mean(); }
};

/// Posterior of X0 under prior `gm` given linear evidence y = H·X0 + noise,
/// noise ~ N(0, diag(noise_var)). Weights use the exact marginal likelihood
/// N(y; H m_k, H Σ_k Hᵀ + R), evaluated in log space.
GaussianMixture condition_on_linear(const GaussianMixture& gm, const Matrix& h,
                                    const Vector& y, const Vector& noise_var);

// --- Oracle operations ---------------------------------------------------

std::vector<Vector> sample_prior(const GaussianMixture& gm, int n, std::uint64_t seed);

Vector observe(const LinearObservationModel& model, const Vector& x0,
               std::uint64_t seed, bool noiseless = false);

/// Posterior of X0 given the observed blocks. Uses only the rows of A and the
/// noise std belonging to those blocks.
PosteriorMixture exact_posterior(const GaussianMixture& gm,
                                 const LinearObservationModel& model,
                                 const Conditions& observed);

/// Posterior of X0 given X_t = x (X_t = X0 + tε) and optionally some blocks.
PosteriorMixture state_posterior(const GaussianMixture& gm,
                                 const LinearObservationModel& model,
                                 const Vector& x, double t,
                                 const Conditions& observed = {});

/// ∇_x log p_t(x | conditioning). With no conditioning this is the score of
/// the t-smoothed prior.
Vector score_t(const GaussianMixture& gm, const LinearObservationModel& model,
               const Vector& x, double t, const Conditions& conditioning = {});

/// E[X0 | X_t = x, conditioning] = x + t²·score_t.
Vector posterior_mean_t(const GaussianMixture& gm, const LinearObservationModel& model,
                        const Vector& x, double t, const Conditions& conditioning = {});

/// Exact density of block `block` at `value` given X_t = x and optionally
/// further observed blocks. The posterior of X0 is pushed through the block's
/// rows of A and widened by its noise variance.
double conditional_density(const GaussianMixture& gm, const LinearObservationModel& model,
                           int block, const Vector& value, const Vector& x, double t,
                           const Conditions& observed = {});

/// Density of the mixture X0 ~ `posterior` pushed through rows `rows` with
/// noise variance `noise_var`, at `value`.
double pushforward_density(const GaussianMixture& posterior, const Matrix& rows,
                           double noise_var, const Vector& value);

/// Spherical surrogate N(value; predicted_mean, 1/(2λ)·I) used by guidance.
double surrogate_density(const Vector& value, const Vector& predicted_mean, double lambda);

/// Isotropic normal density with variance `var` per coordinate.
double isotropic_normal_density(const Vector& value, const Vector& mean, double var);

}  // namespace dguide
