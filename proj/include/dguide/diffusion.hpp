#pragma once

// Denoiser nnθ(x_t, t, C) trained on X0 prediction, its score estimate, and
// the analytic Gaussian-mixture denoiser that stands in for it in oracle runs.

#include "dguide/dataset.hpp"
#include "dguide/gm_oracle.hpp"
#include "dguide/mlp.hpp"
#include "dguide/rng.hpp"

#include <functional>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

namespace dguide {

/// Training times t = exp(N(log_mean, s²)). The spread 1.2 is read as the
/// log-std s by default; `spread_is_variance` reads it as s² instead.
struct TimeDistribution {
  double log_mean = -1.2;
  double spread = 1.2;
  bool spread_is_variance = false;

  double log_std() const;
};

struct DenoiserConfig {
  /// Probability of masking the maskable blocks of a row that carries them.
  double p_non = 0.25;
  TimeDistribution time;
  int time_embedding_dim = 16;
  /// Condition blocks fed to the network, ascending (0 = C1, 1 = C2, 2 = C3).
  std::vector<int> blocks = {0};
  /// Blocks dropped together with probability p_non. Consumed blocks missing
  /// from a row are always dropped.
  std::vector<int> maskable = {0};
  int hidden_layers = 3;
  int hidden_width = 128;
  Activation activation = Activation::SiLU;

  void validate() const;
  bool consumes(int block) const;

  /// 0.5·n1/(n1 + n2): rows carrying C1 are masked at this rate.
  static double aggregated_p_non(int n1, int n2);
};

double sample_time(const DenoiserConfig& config, Engine& engine);
double sample_time(const DenoiserConfig& config, std::uint64_t seed);

/// Sinusoidal features of ¼·ln t, frequencies geometric from 1 down to 1/1000.
Vector time_embedding(double t, int dim);

/// Input layout and the affine normalization fitted on the training data.
/// Network input: x_t normalized ‖ time embedding ‖ per consumed block
/// (normalized value ‖ presence flag). Output o maps to X0 = μ + s·o.
struct DenoiserLayout {
  int dim = 0;
  std::vector<int> block_dims;  // parallel to DenoiserConfig::blocks
  Vector x_mean;
  double x_scale = 1.0;
  std::vector<Vector> c_mean;
  std::vector<Vector> c_scale;

  int input_width(int embedding_dim) const;
};

/// What the samplers need from a denoiser: batched X0 estimates and
/// vector-Jacobian products with respect to x_t. All columns share (t, C).
class DenoiserModel {
 public:
  virtual ~DenoiserModel() = default;
  virtual int dim() const = 0;
  virtual bool consumes(int block) const = 0;
  virtual Matrix denoise(const Matrix& x, double t, const Conditions& c) const = 0;
  virtual Matrix denoise_vjp(const Matrix& x, double t, const Conditions& c,
                             const Matrix& cotangents) const = 0;

  Vector denoise(const Vector& x, double t, const Conditions& c) const {
    return denoise(Matrix(x), t, c).col(0);
  }
};

using DenoiserPtr = std::shared_ptr<const DenoiserModel>;

/// (denoise − x_t)/t².
Matrix score_estimate(const DenoiserModel& model, const Matrix& x, double t,
                      const Conditions& c);
Vector score_estimate(const DenoiserModel& model, const Vector& x, double t,
                      const Conditions& c);

class Denoiser final : public DenoiserModel {
 public:
  Denoiser(Mlp net, DenoiserConfig config, DenoiserLayout layout);

  int dim() const override { return layout_.dim; }
  bool consumes(int block) const override { return config_.consumes(block); }
  Matrix denoise(const Matrix& x, double t, const Conditions& c) const override;
  Matrix denoise_vjp(const Matrix& x, double t, const Conditions& c,
                     const Matrix& cotangents) const override;

  Vector encode_input(const Vector& x, double t, const Conditions& c) const;
  Matrix encode_batch(const Matrix& x, double t, const Conditions& c) const;

  const Mlp& network() const { return net_; }
  const DenoiserConfig& config() const { return config_; }
  const DenoiserLayout& layout() const { return layout_; }

  void save(std::ostream& out) const;
  static Denoiser load(std::istream& in);
  void save(const std::string& path) const;
  static Denoiser load(const std::string& path);

 private:
  void check(const Matrix& x, double t, const Conditions& c) const;
  void encode_conditions(const Conditions& c, Eigen::Ref<Matrix> rows, Eigen::Index col) const;

  Mlp net_;
  DenoiserConfig config_;
  DenoiserLayout layout_;
};

struct DenoiserFit {
  Denoiser model;
  int best_epoch = 0;
  double best_validation_loss = 0.0;
  double test_loss = 0.0;
  std::vector<double> validation_curve;
};

using EpochCallback = std::function<void(int epoch, double train_loss, double validation_loss)>;

/// Minimizes E‖X0 − nnθ(X0 + tε, t, C)‖² with t from the configured time law,
/// masking per DenoiserConfig, and keeps the epoch with the lowest validation
/// loss. Validation draws (t, ε, mask) are fixed once per row so epochs are
/// compared on the same problem. Throws NumericalError if the loss goes
/// non-finite.
DenoiserFit train_denoiser(const BlockwiseDataset& data, const DenoiserConfig& config,
                           const TrainOptions& options, std::uint64_t seed,
                           const EpochCallback& on_epoch = {});

/// Exact E[X0 | X_t = x, C] under a Gaussian mixture with linear observations.
/// Its Jacobian is I + t²∇² log p_t(x | C), which is symmetric.
class AnalyticDenoiser final : public DenoiserModel {
 public:
  AnalyticDenoiser(GaussianMixture gm, LinearObservationModel model);

  int dim() const override { return gm_.dim(); }
  bool consumes(int block) const override { return block >= 0 && block < model_.block_count(); }
  Matrix denoise(const Matrix& x, double t, const Conditions& c) const override;
  Matrix denoise_vjp(const Matrix& x, double t, const Conditions& c,
                     const Matrix& cotangents) const override;

  const GaussianMixture& mixture() const { return gm_; }
  const LinearObservationModel& observation() const { return model_; }

 private:
  GaussianMixture smoothed_prior(double t, const Conditions& c) const;

  GaussianMixture gm_;
  LinearObservationModel model_;
};

}  // namespace dguide
