#include "dguide/mlp.hpp"

#include "dguide/rng.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <limits>
#include <istream>
#include <numeric>
#include <ostream>

namespace dguide {

const char* to_string(Activation a) { return a == Activation::ReLU ? "relu" : "silu"; }

Activation parse_activation(const std::string& s) {
  if (s == "relu") return Activation::ReLU;
  if (s == "silu") return Activation::SiLU;
  throw ConfigError("unknown activation '" + s + "'");
}

void MlpSpec::validate() const {
  if (widths.size() < 2) throw ConfigError("MlpSpec: need at least input and output widths");
  for (int w : widths)
    if (w < 1) throw ConfigError("MlpSpec: layer widths must be >= 1");
}

MlpSpec MlpSpec::uniform(int in, int out, int hidden, int width, Activation act) {
  MlpSpec s;
  s.widths.push_back(in);
  for (int i = 0; i < hidden; ++i) s.widths.push_back(width);
  s.widths.push_back(out);
  s.activation = act;
  s.validate();
  return s;
}

MlpParams MlpParams::zeros(const MlpSpec& spec) {
  MlpParams p;
  for (int l = 0; l < spec.layer_count(); ++l) {
    p.weights.push_back(Matrix::Zero(spec.widths[l + 1], spec.widths[l]));
    p.biases.push_back(Vector::Zero(spec.widths[l + 1]));
  }
  return p;
}

std::size_t MlpParams::count() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l < weights.size(); ++l) n += weights[l].size() + biases[l].size();
  return n;
}

bool MlpParams::matches(const MlpSpec& spec) const {
  if (static_cast<int>(weights.size()) != spec.layer_count() || biases.size() != weights.size()) {
    return false;
  }
  for (int l = 0; l < spec.layer_count(); ++l) {
    if (weights[l].rows() != spec.widths[l + 1] || weights[l].cols() != spec.widths[l]) return false;
    if (biases[l].size() != spec.widths[l + 1]) return false;
  }
  return true;
}

double& MlpParams::coefficient(std::size_t i) {
  for (std::size_t l = 0; l < weights.size(); ++l) {
    const auto nw = static_cast<std::size_t>(weights[l].size());
    if (i < nw) return weights[l].data()[i];
    i -= nw;
    const auto nb = static_cast<std::size_t>(biases[l].size());
    if (i < nb) return biases[l](static_cast<Eigen::Index>(i));
    i -= nb;
  }
  throw ConfigError("MlpParams: coefficient index out of range");
}

double MlpParams::coefficient(std::size_t i) const {
  return const_cast<MlpParams*>(this)->coefficient(i);
}

// --- Mlp -----------------------------------------------------------------

namespace {

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

void activate(Activation act, const Matrix& pre, Matrix& post) {
  if (act == Activation::ReLU) {
    post = pre.cwiseMax(0.0);
  } else {
    post = pre.unaryExpr([](double z) { return z * sigmoid(z); });
  }
}

// Multiplies `delta` in place by the activation derivative at `pre`.
void backprop_activation(Activation act, const Matrix& pre, Matrix& delta) {
  if (act == Activation::ReLU) {
    delta = delta.cwiseProduct(pre.unaryExpr([](double z) { return z > 0.0 ? 1.0 : 0.0; }));
  } else {
    delta = delta.cwiseProduct(pre.unaryExpr([](double z) {
      const double s = sigmoid(z);
      return s * (1.0 + z * (1.0 - s));
    }));
  }
}

}  // namespace

Mlp::Mlp(MlpSpec spec, MlpParams params) : spec_(std::move(spec)), params_(std::move(params)) {
  spec_.validate();
  if (!params_.matches(spec_)) throw ConfigError("Mlp: parameter shapes do not match the spec");
}

Mlp Mlp::initialize(MlpSpec spec, std::uint64_t seed) {
  spec.validate();
  MlpParams p = MlpParams::zeros(spec);
  Engine engine = make_engine(seed);
  for (int l = 0; l < spec.layer_count(); ++l) {
    const double fan_in = spec.widths[l];
    const double limit = spec.activation == Activation::ReLU ? std::sqrt(6.0 / fan_in)
                                                             : std::sqrt(3.0 / fan_in);
    std::uniform_real_distribution<double> u(-limit, limit);
    for (Eigen::Index j = 0; j < p.weights[l].cols(); ++j)
      for (Eigen::Index i = 0; i < p.weights[l].rows(); ++i) p.weights[l](i, j) = u(engine);
  }
  return Mlp(std::move(spec), std::move(p));
}

void Mlp::check_input(Eigen::Index rows) const {
  if (rows != spec_.input_width()) {
    throw ConfigError("Mlp: input width " + std::to_string(rows) + " but network expects " +
                      std::to_string(spec_.input_width()));
  }
}

Mlp::Tape Mlp::record(const Matrix& inputs) const {
  check_input(inputs.rows());
  Tape tape;
  const int layers = spec_.layer_count();
  tape.post.reserve(layers);
  tape.pre.reserve(layers - 1);
  tape.post.push_back(inputs);
  for (int l = 0; l < layers; ++l) {
    Matrix z = params_.weights[l] * tape.post.back();
    z.colwise() += params_.biases[l];
    if (l + 1 == layers) {
      tape.output = std::move(z);
    } else {
      Matrix a;
      activate(spec_.activation, z, a);
      tape.pre.push_back(std::move(z));
      tape.post.push_back(std::move(a));
    }
  }
  return tape;
}

Matrix Mlp::forward(const Matrix& inputs) const {
  check_input(inputs.rows());
  Matrix h = inputs;
  const int layers = spec_.layer_count();
  for (int l = 0; l < layers; ++l) {
    Matrix z = params_.weights[l] * h;
    z.colwise() += params_.biases[l];
    if (l + 1 == layers) return z;
    activate(spec_.activation, z, h);
  }
  return h;
}

Vector Mlp::forward(const Vector& input) const {
  return forward(Matrix(input)).col(0);
}

Mlp::LossGradient Mlp::grad_params(const Matrix& inputs, const Matrix& targets) const {
  if (inputs.cols() == 0) throw ConfigError("grad_params: empty batch");
  if (targets.rows() != spec_.output_width() || targets.cols() != inputs.cols()) {
    throw ConfigError("grad_params: target shape does not match network output");
  }
  const Tape tape = record(inputs);
  const double n = static_cast<double>(inputs.cols());
  const Matrix residual = tape.output - targets;
  LossGradient out{MlpParams::zeros(spec_), residual.squaredNorm() / n};
  Matrix delta = (2.0 / n) * residual;
  for (int l = spec_.layer_count() - 1; l >= 0; --l) {
    out.gradient.weights[l].noalias() = delta * tape.post[l].transpose();
    out.gradient.biases[l] = delta.rowwise().sum();
    if (l > 0) {
      Matrix back = params_.weights[l].transpose() * delta;
      backprop_activation(spec_.activation, tape.pre[l - 1], back);
      delta = std::move(back);
    }
  }
  return out;
}

Matrix Mlp::grad_input(const Matrix& inputs, const Matrix& cotangents) const {
  if (cotangents.rows() != spec_.output_width() || cotangents.cols() != inputs.cols()) {
    throw ConfigError("grad_input: cotangent shape does not match network output");
  }
  const Tape tape = record(inputs);
  Matrix delta = cotangents;
  for (int l = spec_.layer_count() - 1; l >= 0; --l) {
    Matrix back = params_.weights[l].transpose() * delta;
    if (l > 0) backprop_activation(spec_.activation, tape.pre[l - 1], back);
    delta = std::move(back);
  }
  return delta;
}

Vector Mlp::grad_input(const Vector& input, const Vector& cotangent) const {
  return grad_input(Matrix(input), Matrix(cotangent)).col(0);
}

double Mlp::weight_norm_bound() const {
  if (spec_.activation != Activation::ReLU) {
    throw ConfigError(
        "weight_norm_bound: the M^L gradient bound needs ReLU activations, whose derivative is "
        "bounded by 1; this network uses SiLU, whose derivative exceeds 1");
  }
  double m = 0.0;
  for (const auto& w : params_.weights) m = std::max(m, spectral_norm(w, 1e-12));
  return std::pow(m, spec_.layer_count());
}

// --- Adam ----------------------------------------------------------------

AdamState AdamState::for_params(const MlpParams& params, double learning_rate) {
  AdamState s;
  s.first.weights.reserve(params.weights.size());
  for (std::size_t l = 0; l < params.weights.size(); ++l) {
    s.first.weights.push_back(Matrix::Zero(params.weights[l].rows(), params.weights[l].cols()));
    s.first.biases.push_back(Vector::Zero(params.biases[l].size()));
  }
  s.second = s.first;
  s.learning_rate = learning_rate;
  return s;
}

namespace {

template <typename T>
void adam_update(T& param, T& m, T& v, const T& g, double b1, double b2, double step_size,
                 double eps_hat) {
  m = b1 * m + (1.0 - b1) * g;
  v = b2 * v + (1.0 - b2) * g.cwiseAbs2();
  param.array() -= step_size * m.array() / (v.array().sqrt() + eps_hat);
}

}  // namespace

void adam_step(AdamState& state, MlpParams& params, const MlpParams& gradient) {
  if (gradient.weights.size() != params.weights.size() ||
      state.first.weights.size() != params.weights.size()) {
    throw ConfigError("adam_step: parameter, gradient and state shapes differ");
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  // Bias-corrected form: lr·m̂/(√v̂ + ε) = (lr·√c2/c1)·m/(√v + ε·√c2).
  const double step_size = state.learning_rate * std::sqrt(c2) / c1;
  const double eps_hat = state.epsilon * std::sqrt(c2);
  for (std::size_t l = 0; l < params.weights.size(); ++l) {
    adam_update(params.weights[l], state.first.weights[l], state.second.weights[l],
                gradient.weights[l], state.beta1, state.beta2, step_size, eps_hat);
    adam_update(params.biases[l], state.first.biases[l], state.second.biases[l],
                gradient.biases[l], state.beta1, state.beta2, step_size, eps_hat);
  }
}

// --- Checkpoints ---------------------------------------------------------

namespace io {

void write_u32(std::ostream& out, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(b, 4);
}

void write_f64(std::ostream& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((bits >> (8 * i)) & 0xff);
  out.write(b, 8);
}

std::uint32_t read_u32(std::istream& in) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) throw ConfigError("checkpoint: truncated file");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

double read_f64(std::istream& in) {
  unsigned char b[8];
  if (!in.read(reinterpret_cast<char*>(b), 8)) throw ConfigError("checkpoint: truncated file");
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return std::bit_cast<double>(bits);
}

void write_header(std::ostream& out, CheckpointKind kind) {
  out.write("DGNN", 4);
  write_u32(out, kCheckpointVersion);
  write_u32(out, static_cast<std::uint32_t>(kind));
}

CheckpointKind read_header(std::istream& in) {
  char magic[4];
  if (!in.read(magic, 4) || std::string(magic, 4) != "DGNN") {
    throw ConfigError("checkpoint: bad magic bytes (expected DGNN)");
  }
  const auto version = read_u32(in);
  if (version != kCheckpointVersion) {
    throw ConfigError("checkpoint: unsupported format version " + std::to_string(version));
  }
  const auto kind = read_u32(in);
  if (kind > 1) throw ConfigError("checkpoint: unknown kind " + std::to_string(kind));
  return static_cast<CheckpointKind>(kind);
}

}  // namespace io

void write_network(std::ostream& out, const Mlp& net) {
  const auto& spec = net.spec();
  io::write_u32(out, static_cast<std::uint32_t>(spec.widths.size()));
  for (int w : spec.widths) io::write_u32(out, static_cast<std::uint32_t>(w));
  const char act = static_cast<char>(spec.activation);
  out.write(&act, 1);
  for (int l = 0; l < spec.layer_count(); ++l) {
    const Matrix& w = net.params().weights[l];
    for (Eigen::Index i = 0; i < w.rows(); ++i)
      for (Eigen::Index j = 0; j < w.cols(); ++j) io::write_f64(out, w(i, j));
    const Vector& b = net.params().biases[l];
    for (Eigen::Index i = 0; i < b.size(); ++i) io::write_f64(out, b(i));
  }
}

Mlp read_network(std::istream& in) {
  MlpSpec spec;
  const auto count = io::read_u32(in);
  if (count < 2 || count > 1024) throw ConfigError("checkpoint: implausible layer count");
  for (std::uint32_t i = 0; i < count; ++i) spec.widths.push_back(static_cast<int>(io::read_u32(in)));
  char act = 0;
  if (!in.read(&act, 1)) throw ConfigError("checkpoint: truncated file");
  if (act != 0 && act != 1) throw ConfigError("checkpoint: unknown activation id");
  spec.activation = static_cast<Activation>(act);
  spec.validate();
  MlpParams p = MlpParams::zeros(spec);
  for (int l = 0; l < spec.layer_count(); ++l) {
    for (Eigen::Index i = 0; i < p.weights[l].rows(); ++i)
      for (Eigen::Index j = 0; j < p.weights[l].cols(); ++j) p.weights[l](i, j) = io::read_f64(in);
    for (Eigen::Index i = 0; i < p.biases[l].size(); ++i) p.biases[l](i) = io::read_f64(in);
  }
  return Mlp(std::move(spec), std::move(p));
}

void save_mlp(const std::string& path, const Mlp& net) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write checkpoint " + path);
  io::write_header(out, CheckpointKind::Network);
  write_network(out, net);
}

Mlp load_mlp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read checkpoint " + path);
  if (io::read_header(in) != CheckpointKind::Network) {
    throw ConfigError(path + " is not a plain network checkpoint");
  }
  return read_network(in);
}

// --- Fitting -------------------------------------------------------------

DataSplit split_indices(int n, double train_fraction, double validation_fraction,
                        std::uint64_t seed) {
  if (n < 1) throw ConfigError("split_indices: empty data");
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  Engine engine = make_engine(seed);
  std::shuffle(idx.begin(), idx.end(), engine);
  int n_train = static_cast<int>(std::round(train_fraction * n));
  int n_val = static_cast<int>(std::round(validation_fraction * n));
  if (n >= 3) {
    n_train = std::clamp(n_train, 1, n - 2);
    n_val = std::clamp(n_val, 1, n - n_train - 1);
  } else {
    n_train = n;
    n_val = 0;
  }
  DataSplit s;
  s.train.assign(idx.begin(), idx.begin() + n_train);
  s.validation.assign(idx.begin() + n_train, idx.begin() + n_train + n_val);
  s.test.assign(idx.begin() + n_train + n_val, idx.end());
  return s;
}

namespace {

Matrix gather(const Matrix& m, const std::vector<int>& idx, std::size_t from, std::size_t to) {
  Matrix out(m.rows(), static_cast<Eigen::Index>(to - from));
  for (std::size_t j = from; j < to; ++j) out.col(static_cast<Eigen::Index>(j - from)) = m.col(idx[j]);
  return out;
}

struct Affine {
  Vector shift;
  Vector scale;
};

Affine column_moments(const Matrix& m) {
  Affine a;
  a.shift = m.rowwise().mean();
  a.scale = ((m.colwise() - a.shift).cwiseAbs2().rowwise().mean()).cwiseSqrt();
  for (Eigen::Index i = 0; i < a.scale.size(); ++i)
    if (!(a.scale(i) > 1e-12)) a.scale(i) = 1.0;
  return a;
}

Matrix apply(const Affine& a, const Matrix& m) {
  return (m.colwise() - a.shift).array().colwise() / a.scale.array();
}

// Net on standardized data → net on raw data: f(x) = μy + sy ∘ g((x − μx) / sx).
Mlp fold(const Mlp& net, const Affine& in, const Affine& out) {
  MlpParams p = net.params();
  Matrix& w0 = p.weights.front();
  w0 = w0 * in.scale.cwiseInverse().asDiagonal();
  p.biases.front() -= w0 * in.shift;
  Matrix& wl = p.weights.back();
  wl = out.scale.asDiagonal() * wl;
  p.biases.back() = out.scale.cwiseProduct(p.biases.back()) + out.shift;
  return Mlp(net.spec(), std::move(p));
}

double mean_loss(const Mlp& net, const Matrix& x, const Matrix& y) {
  if (x.cols() == 0) return 0.0;
  return (net.forward(x) - y).squaredNorm() / static_cast<double>(x.cols());
}

}  // namespace

FitResult fit_regressor(const Matrix& x, const Matrix& y, const MlpSpec& spec,
                        const TrainOptions& options, std::uint64_t seed) {
  if (x.cols() != y.cols() || x.cols() == 0) throw ConfigError("fit_regressor: bad data shapes");
  if (x.rows() != spec.input_width() || y.rows() != spec.output_width()) {
    throw ConfigError("fit_regressor: data widths do not match the network");
  }
  const DataSplit split = split_indices(static_cast<int>(x.cols()), options.train_fraction,
                                        options.validation_fraction,
                                        derive_seed(seed, stream::kTraining, 0));
  if (options.standardize) {
    const Matrix x_train = gather(x, split.train, 0, split.train.size());
    const Matrix y_train = gather(y, split.train, 0, split.train.size());
    const Affine in = column_moments(x_train);
    const Affine out = column_moments(y_train);
    TrainOptions inner = options;
    inner.standardize = false;
    FitResult r = fit_regressor(apply(in, x), apply(out, y), spec, inner, seed);
    r.model = fold(r.model, in, out);
    r.test_loss = mean_loss(r.model, gather(x, split.test, 0, split.test.size()),
                            gather(y, split.test, 0, split.test.size()));
    return r;
  }
  const Matrix x_val = gather(x, split.validation, 0, split.validation.size());
  const Matrix y_val = gather(y, split.validation, 0, split.validation.size());
  const Matrix x_test = gather(x, split.test, 0, split.test.size());
  const Matrix y_test = gather(y, split.test, 0, split.test.size());

  Mlp net = Mlp::initialize(spec, derive_seed(seed, stream::kTraining, 1));
  AdamState adam = AdamState::for_params(net.params(), options.learning_rate);
  Engine shuffle = make_engine(derive_seed(seed, stream::kTraining, 2));
  std::vector<int> order = split.train;

  FitResult result{net, 0, std::numeric_limits<double>::infinity(), 0.0, {}};
  const bool has_val = !split.validation.empty();
  for (int epoch = 1; epoch <= options.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle);
    for (std::size_t start = 0; start < order.size(); start += options.batch_size) {
      const std::size_t stop = std::min(order.size(), start + options.batch_size);
      const auto g = net.grad_params(gather(x, order, start, stop), gather(y, order, start, stop));
      if (!std::isfinite(g.loss)) {
        throw NumericalError("fit_regressor: loss became non-finite at epoch " +
                             std::to_string(epoch));
      }
      adam_step(adam, net.mutable_params(), g.gradient);
    }
    const double val = has_val ? mean_loss(net, x_val, y_val) : mean_loss(net, x, y);
    result.validation_curve.push_back(val);
    if (val < result.best_validation_loss) {
      result.best_validation_loss = val;
      result.best_epoch = epoch;
      result.model = net;
    }
  }
  result.test_loss = mean_loss(result.model, x_test, y_test);
  return result;
}

}  // namespace dguide
