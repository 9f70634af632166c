#pragma once

// Feed-forward networks with exact reverse-mode gradients with respect to
// parameters and inputs, Adam, and a checkpoint format.

#include "dguide/linalg.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace dguide {

enum class Activation : std::uint8_t { ReLU = 0, SiLU = 1 };

const char* to_string(Activation a);
Activation parse_activation(const std::string& s);

struct MlpSpec {
  /// Input width, hidden widths..., output width. Zero hidden layers is a
  /// plain affine map.
  std::vector<int> widths;
  Activation activation = Activation::SiLU;

  int layer_count() const { return static_cast<int>(widths.size()) - 1; }
  int input_width() const { return widths.front(); }
  int output_width() const { return widths.back(); }
  void validate() const;

  /// `hidden` layers of width `width` between `in` and `out`.
  static MlpSpec uniform(int in, int out, int hidden, int width, Activation act);
};

struct MlpParams {
  std::vector<Matrix> weights;  // weights[l] is widths[l+1] × widths[l]
  std::vector<Vector> biases;

  static MlpParams zeros(const MlpSpec& spec);
  std::size_t count() const;
  bool matches(const MlpSpec& spec) const;
  /// Flat views for finite-difference checks and optimizers.
  double& coefficient(std::size_t i);
  double coefficient(std::size_t i) const;
};

class Mlp {
 public:
  Mlp(MlpSpec spec, MlpParams params);

  /// He-uniform (ReLU) or LeCun-uniform (SiLU) weights, zero biases.
  static Mlp initialize(MlpSpec spec, std::uint64_t seed);

  const MlpSpec& spec() const { return spec_; }
  const MlpParams& params() const { return params_; }
  MlpParams& mutable_params() { return params_; }

  Vector forward(const Vector& input) const;
  /// Column-wise forward pass, inputs are input_width × n.
  Matrix forward(const Matrix& inputs) const;

  struct LossGradient {
    MlpParams gradient;
    double loss = 0.0;
  };
  /// Gradient of mean_j ‖f(x_j) − y_j‖² over the batch columns.
  LossGradient grad_params(const Matrix& inputs, const Matrix& targets) const;

  /// Jᵀ·v at `input`, where J is the input Jacobian.
  Vector grad_input(const Vector& input, const Vector& cotangent) const;
  /// Column-wise Jᵀ·v.
  Matrix grad_input(const Matrix& inputs, const Matrix& cotangents) const;

  /// M^L, M = max_l ‖W_l‖₂, L = number of weight layers. ReLU networks only:
  /// it bounds ‖J(z)‖₂ for every input z.
  double weight_norm_bound() const;

 private:
  struct Tape {
    std::vector<Matrix> pre;   // pre-activations of hidden layers
    std::vector<Matrix> post;  // post[0] = inputs, post[l] = activation of layer l
    Matrix output;
  };
  Tape record(const Matrix& inputs) const;
  void check_input(Eigen::Index rows) const;

  MlpSpec spec_;
  MlpParams params_;
};

struct AdamState {
  MlpParams first;
  MlpParams second;
  long step = 0;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  static AdamState for_params(const MlpParams& params, double learning_rate = 1e-3);
};

/// One bias-corrected Adam update of `params` in place.
void adam_step(AdamState& state, MlpParams& params, const MlpParams& gradient);

// --- Checkpoints ---------------------------------------------------------
//
// "DGNN" magic, u32 version, u32 kind, optional kind-specific section, then
// the network: u32 layer count, u32 widths, u8 activation id, and parameters
// as little-endian f64, per layer weights row-major followed by biases.

inline constexpr std::uint32_t kCheckpointVersion = 1;
enum class CheckpointKind : std::uint32_t { Network = 0, Denoiser = 1 };

namespace io {
void write_u32(std::ostream& out, std::uint32_t v);
void write_f64(std::ostream& out, double v);
std::uint32_t read_u32(std::istream& in);
double read_f64(std::istream& in);
void write_header(std::ostream& out, CheckpointKind kind);
CheckpointKind read_header(std::istream& in);
}  // namespace io

void write_network(std::ostream& out, const Mlp& net);
Mlp read_network(std::istream& in);

void save_mlp(const std::string& path, const Mlp& net);
Mlp load_mlp(const std::string& path);

// --- Supervised fitting ---------------------------------------------------

struct TrainOptions {
  int epochs = 50;
  int batch_size = 256;
  double learning_rate = 1e-3;
  double train_fraction = 0.87;
  double validation_fraction = 0.09;
  /// Train on per-coordinate standardized inputs and targets, then fold the
  /// affine maps into the first and last layers so the result is a plain MLP.
  bool standardize = true;
};

struct DataSplit {
  std::vector<int> train;
  std::vector<int> validation;
  std::vector<int> test;
};

/// Seeded shuffle into train / validation / test index sets. Every set gets at
/// least one index when n >= 3.
DataSplit split_indices(int n, double train_fraction, double validation_fraction,
                        std::uint64_t seed);

struct FitResult {
  Mlp model;
  int best_epoch = 0;
  double best_validation_loss = 0.0;
  double test_loss = 0.0;
  std::vector<double> validation_curve;
};

/// Fits a regressor x ↦ y (columns are samples) by mini-batch Adam on squared
/// error, reshuffling each epoch and keeping the epoch with the lowest
/// validation loss.
FitResult fit_regressor(const Matrix& x, const Matrix& y, const MlpSpec& spec,
                        const TrainOptions& options, std::uint64_t seed);

}  // namespace dguide
