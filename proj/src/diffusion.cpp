#include "dguide/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <numeric>
#include <sstream>

namespace dguide {

double TimeDistribution::log_std() const { return spread_is_variance ? std::sqrt(spread) : spread; }

void DenoiserConfig::validate() const {
  if (!(p_non >= 0.0 && p_non <= 1.0)) throw ConfigError("denoiser: p_non must lie in [0, 1]");
  if (time_embedding_dim < 2 || time_embedding_dim % 2 != 0) {
    throw ConfigError("denoiser: time_embedding_dim must be even and >= 2");
  }
  if (!(time.spread > 0.0) || !std::isfinite(time.log_mean)) {
    throw ConfigError("denoiser: time distribution needs a finite log-mean and positive spread");
  }
  if (!std::is_sorted(blocks.begin(), blocks.end()) ||
      std::adjacent_find(blocks.begin(), blocks.end()) != blocks.end()) {
    throw ConfigError("denoiser: consumed blocks must be ascending and distinct");
  }
  for (int b : blocks)
    if (b < 0 || b >= kMaxBlocks) throw ConfigError("denoiser: block id out of range");
  for (int b : maskable)
    if (!consumes(b)) throw ConfigError("denoiser: maskable block " + std::to_string(b) +
                                        " is not consumed");
  if (hidden_layers < 1 || hidden_width < 1) {
    throw ConfigError("denoiser: needs at least one hidden layer of positive width");
  }
}

bool DenoiserConfig::consumes(int block) const {
  return std::find(blocks.begin(), blocks.end(), block) != blocks.end();
}

double DenoiserConfig::aggregated_p_non(int n1, int n2) {
  if (n1 < 0 || n2 < 0 || n1 + n2 == 0) throw ConfigError("aggregated_p_non: bad sizes");
  return 0.5 * static_cast<double>(n1) / static_cast<double>(n1 + n2);
}

double sample_time(const DenoiserConfig& config, Engine& engine) {
  std::normal_distribution<double> n(config.time.log_mean, config.time.log_std());
  return std::exp(n(engine));
}

double sample_time(const DenoiserConfig& config, std::uint64_t seed) {
  Engine engine = make_engine(seed);
  return sample_time(config, engine);
}

Vector time_embedding(double t, int dim) {
  if (!(t > 0.0)) throw ConfigError("time_embedding: t must be > 0");
  const int half = dim / 2;
  const double lt = 0.25 * std::log(t);
  Vector e(dim);
  for (int j = 0; j < half; ++j) {
    const double freq = half == 1 ? 1.0 : std::pow(1000.0, -static_cast<double>(j) / (half - 1));
    e(j) = std::sin(freq * lt);
    e(half + j) = std::cos(freq * lt);
  }
  return e;
}

int DenoiserLayout::input_width(int embedding_dim) const {
  int w = dim + embedding_dim;
  for (int m : block_dims) w += m + 1;
  return w;
}

Matrix score_estimate(const DenoiserModel& model, const Matrix& x, double t,
                      const Conditions& c) {
  return (model.denoise(x, t, c) - x) / (t * t);
}

Vector score_estimate(const DenoiserModel& model, const Vector& x, double t,
                      const Conditions& c) {
  return score_estimate(model, Matrix(x), t, c).col(0);
}

// --- Denoiser -------------------------------------------------------------

Denoiser::Denoiser(Mlp net, DenoiserConfig config, DenoiserLayout layout)
    : net_(std::move(net)), config_(std::move(config)), layout_(std::move(layout)) {
  config_.validate();
  if (layout_.block_dims.size() != config_.blocks.size() ||
      layout_.c_mean.size() != config_.blocks.size() ||
      layout_.c_scale.size() != config_.blocks.size()) {
    throw ConfigError("denoiser: layout does not list every consumed block");
  }
  if (layout_.x_mean.size() != layout_.dim || !(layout_.x_scale >= 0.0 && std::isfinite(layout_.x_scale))) {
    throw ConfigError("denoiser: bad state normalization");
  }
  if (net_.spec().input_width() != layout_.input_width(config_.time_embedding_dim) ||
      net_.spec().output_width() != layout_.dim) {
    throw ConfigError("denoiser: network widths do not match the input layout");
  }
}

void Denoiser::check(const Matrix& x, double t, const Conditions& c) const {
  if (!(t > 0.0)) throw ConfigError("denoise: t must be > 0");
  if (x.rows() != layout_.dim) throw ConfigError("denoise: state has the wrong dimension");
  for (int b = 0; b < kMaxBlocks; ++b) {
    if (!c.has(b)) continue;
    const auto it = std::find(config_.blocks.begin(), config_.blocks.end(), b);
    if (it == config_.blocks.end()) {
      throw ConfigError("denoise: condition block " + std::to_string(b + 1) +
                        " is not an input of this denoiser");
    }
    const auto slot = static_cast<std::size_t>(it - config_.blocks.begin());
    if (c.at(b).size() != layout_.block_dims[slot]) {
      throw ConfigError("denoise: condition block " + std::to_string(b + 1) +
                        " has the wrong dimension");
    }
  }
}

void Denoiser::encode_conditions(const Conditions& c, Eigen::Ref<Matrix> rows,
                                 Eigen::Index col) const {
  Eigen::Index r = 0;
  for (std::size_t i = 0; i < config_.blocks.size(); ++i) {
    const int b = config_.blocks[i];
    const int m = layout_.block_dims[i];
    if (c.has(b)) {
      rows.col(col).segment(r, m) =
          (c.at(b) - layout_.c_mean[i]).cwiseQuotient(layout_.c_scale[i]);
      rows(r + m, col) = 1.0;
    } else {
      rows.col(col).segment(r, m).setZero();
      rows(r + m, col) = 0.0;
    }
    r += m + 1;
  }
}

Matrix Denoiser::encode_batch(const Matrix& x, double t, const Conditions& c) const {
  check(x, t, c);
  const int d = layout_.dim;
  const int e = config_.time_embedding_dim;
  Matrix in(layout_.input_width(e), x.cols());
  const double scale = 1.0 / std::sqrt(t * t + layout_.x_scale * layout_.x_scale);
  in.topRows(d) = (x.colwise() - layout_.x_mean) * scale;
  in.middleRows(d, e).colwise() = time_embedding(t, e);
  const Eigen::Index tail = in.rows() - d - e;
  if (tail > 0) {
    Matrix cond(tail, 1);
    encode_conditions(c, cond, 0);
    in.bottomRows(tail).colwise() = cond.col(0);
  }
  return in;
}

Vector Denoiser::encode_input(const Vector& x, double t, const Conditions& c) const {
  return encode_batch(Matrix(x), t, c).col(0);
}

Matrix Denoiser::denoise(const Matrix& x, double t, const Conditions& c) const {
  Matrix out = net_.forward(encode_batch(x, t, c)) * layout_.x_scale;
  out.colwise() += layout_.x_mean;
  return out;
}

Matrix Denoiser::denoise_vjp(const Matrix& x, double t, const Conditions& c,
                             const Matrix& cotangents) const {
  if (cotangents.rows() != layout_.dim || cotangents.cols() != x.cols()) {
    throw ConfigError("denoise_vjp: cotangent shape does not match the state");
  }
  const Matrix g = net_.grad_input(encode_batch(x, t, c), cotangents);
  const double scale = layout_.x_scale / std::sqrt(t * t + layout_.x_scale * layout_.x_scale);
  return g.topRows(layout_.dim) * scale;
}

namespace {

void write_vector(std::ostream& out, const Vector& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) io::write_f64(out, v(i));
}

Vector read_vector(std::istream& in, int n) {
  Vector v(n);
  for (int i = 0; i < n; ++i) v(i) = io::read_f64(in);
  return v;
}

void write_ids(std::ostream& out, const std::vector<int>& ids) {
  io::write_u32(out, static_cast<std::uint32_t>(ids.size()));
  for (int b : ids) io::write_u32(out, static_cast<std::uint32_t>(b));
}

std::vector<int> read_ids(std::istream& in) {
  const auto n = io::read_u32(in);
  if (n > static_cast<std::uint32_t>(kMaxBlocks)) throw ConfigError("checkpoint: too many blocks");
  std::vector<int> ids;
  for (std::uint32_t i = 0; i < n; ++i) ids.push_back(static_cast<int>(io::read_u32(in)));
  return ids;
}

}  // namespace

void Denoiser::save(std::ostream& out) const {
  io::write_header(out, CheckpointKind::Denoiser);
  io::write_f64(out, config_.p_non);
  io::write_f64(out, config_.time.log_mean);
  io::write_f64(out, config_.time.spread);
  io::write_u32(out, config_.time.spread_is_variance ? 1u : 0u);
  io::write_u32(out, static_cast<std::uint32_t>(config_.time_embedding_dim));
  write_ids(out, config_.blocks);
  write_ids(out, config_.maskable);
  io::write_u32(out, static_cast<std::uint32_t>(layout_.dim));
  write_vector(out, layout_.x_mean);
  io::write_f64(out, layout_.x_scale);
  for (std::size_t i = 0; i < config_.blocks.size(); ++i) {
    io::write_u32(out, static_cast<std::uint32_t>(layout_.block_dims[i]));
    write_vector(out, layout_.c_mean[i]);
    write_vector(out, layout_.c_scale[i]);
  }
  write_network(out, net_);
}

Denoiser Denoiser::load(std::istream& in) {
  if (io::read_header(in) != CheckpointKind::Denoiser) {
    throw ConfigError("checkpoint: not a denoiser checkpoint");
  }
  DenoiserConfig config;
  config.p_non = io::read_f64(in);
  config.time.log_mean = io::read_f64(in);
  config.time.spread = io::read_f64(in);
  config.time.spread_is_variance = io::read_u32(in) != 0;
  config.time_embedding_dim = static_cast<int>(io::read_u32(in));
  config.blocks = read_ids(in);
  config.maskable = read_ids(in);
  DenoiserLayout layout;
  layout.dim = static_cast<int>(io::read_u32(in));
  if (layout.dim < 1 || layout.dim > 1 << 20) throw ConfigError("checkpoint: implausible dimension");
  layout.x_mean = read_vector(in, layout.dim);
  layout.x_scale = io::read_f64(in);
  for (std::size_t i = 0; i < config.blocks.size(); ++i) {
    const int m = static_cast<int>(io::read_u32(in));
    if (m < 1 || m > 1 << 20) throw ConfigError("checkpoint: implausible block dimension");
    layout.block_dims.push_back(m);
    layout.c_mean.push_back(read_vector(in, m));
    layout.c_scale.push_back(read_vector(in, m));
  }
  Mlp net = read_network(in);
  config.hidden_layers = net.spec().layer_count() - 1;
  config.hidden_width = config.hidden_layers > 0 ? net.spec().widths[1] : 0;
  config.activation = net.spec().activation;
  return Denoiser(std::move(net), std::move(config), std::move(layout));
}

void Denoiser::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write checkpoint " + path);
  save(out);
}

Denoiser Denoiser::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read checkpoint " + path);
  return load(in);
}

// --- Training -------------------------------------------------------------

namespace {

struct TrainingTable {
  Matrix x0;                              // d × n
  std::vector<Matrix> values;             // per consumed block, normalized, m × n
  std::vector<std::vector<char>> present; // per consumed block
};

DenoiserLayout fit_layout(const BlockwiseDataset& data, const DenoiserConfig& config,
                          const std::vector<int>& rows) {
  DenoiserLayout layout;
  layout.dim = data.dim();
  Matrix x(layout.dim, static_cast<Eigen::Index>(rows.size()));
  for (std::size_t j = 0; j < rows.size(); ++j) x.col(static_cast<Eigen::Index>(j)) = data.row(rows[j]).x0;
  layout.x_mean = x.rowwise().mean();
  layout.x_scale = std::sqrt((x.colwise() - layout.x_mean).squaredNorm() /
                             static_cast<double>(x.size()));
  if (!(layout.x_scale > 1e-12)) layout.x_scale = 0.0;

  for (int b : config.blocks) {
    int m = 0;
    std::vector<Vector> vals;
    for (int r : rows) {
      const auto& c = data.row(r).conditions;
      if (!c.has(b)) continue;
      m = static_cast<int>(c.at(b).size());
      vals.push_back(c.at(b));
    }
    if (vals.empty()) {
      throw ConfigError("train_denoiser: no training row carries consumed block " +
                        std::to_string(b + 1));
    }
    Vector mean = Vector::Zero(m);
    for (const auto& v : vals) mean += v;
    mean /= static_cast<double>(vals.size());
    Vector var = Vector::Zero(m);
    for (const auto& v : vals) var += (v - mean).cwiseAbs2();
    var /= static_cast<double>(vals.size());
    Vector scale = var.cwiseSqrt();
    for (int i = 0; i < m; ++i)
      if (!(scale(i) > 1e-12)) scale(i) = 1.0;
    layout.block_dims.push_back(m);
    layout.c_mean.push_back(mean);
    layout.c_scale.push_back(scale);
  }
  return layout;
}

TrainingTable tabulate(const BlockwiseDataset& data, const DenoiserConfig& config,
                       const DenoiserLayout& layout) {
  const auto n = static_cast<Eigen::Index>(data.size());
  TrainingTable t;
  t.x0.resize(layout.dim, n);
  for (Eigen::Index j = 0; j < n; ++j) t.x0.col(j) = data.row(static_cast<int>(j)).x0;
  for (std::size_t i = 0; i < config.blocks.size(); ++i) {
    const int b = config.blocks[i];
    Matrix v = Matrix::Zero(layout.block_dims[i], n);
    std::vector<char> has(static_cast<std::size_t>(n), 0);
    for (Eigen::Index j = 0; j < n; ++j) {
      const auto& c = data.row(static_cast<int>(j)).conditions;
      if (!c.has(b)) continue;
      if (c.at(b).size() != layout.block_dims[i]) {
        throw ConfigError("train_denoiser: inconsistent dimension for block " + std::to_string(b + 1));
      }
      v.col(j) = (c.at(b) - layout.c_mean[i]).cwiseQuotient(layout.c_scale[i]);
      has[static_cast<std::size_t>(j)] = 1;
    }
    t.values.push_back(std::move(v));
    t.present.push_back(std::move(has));
  }
  return t;
}

// One training example: noisy state, time and which consumed blocks are kept.
struct Draw {
  double t = 1.0;
  Vector eps;
  bool drop_maskable = false;
};

Draw draw_example(const DenoiserConfig& config, int dim, Engine& engine) {
  Draw d;
  d.t = sample_time(config, engine);
  d.eps = standard_normal(engine, dim);
  std::bernoulli_distribution mask(config.p_non);
  d.drop_maskable = mask(engine);
  return d;
}

void fill_column(const TrainingTable& table, const DenoiserConfig& config,
                 const DenoiserLayout& layout, int row, const Draw& draw, Matrix& in,
                 Matrix& target, Eigen::Index col) {
  const int d = layout.dim;
  const int e = config.time_embedding_dim;
  const double t = draw.t;
  const double s = layout.x_scale;
  in.col(col).head(d) = (table.x0.col(row) + t * draw.eps - layout.x_mean) / std::sqrt(t * t + s * s);
  in.col(col).segment(d, e) = time_embedding(t, e);
  Eigen::Index r = d + e;
  for (std::size_t i = 0; i < config.blocks.size(); ++i) {
    const int m = layout.block_dims[i];
    const bool maskable = std::find(config.maskable.begin(), config.maskable.end(),
                                    config.blocks[i]) != config.maskable.end();
    const bool keep = table.present[i][static_cast<std::size_t>(row)] &&
                      !(maskable && draw.drop_maskable);
    if (keep) {
      in.col(col).segment(r, m) = table.values[i].col(row);
      in(r + m, col) = 1.0;
    } else {
      in.col(col).segment(r, m).setZero();
      in(r + m, col) = 0.0;
    }
    r += m + 1;
  }
  if (s > 0.0) {
    target.col(col) = (table.x0.col(row) - layout.x_mean) / s;
  } else {
    target.col(col).setZero();
  }
}

}  // namespace

DenoiserFit train_denoiser(const BlockwiseDataset& data, const DenoiserConfig& config,
                           const TrainOptions& options, std::uint64_t seed,
                           const EpochCallback& on_epoch) {
  config.validate();
  if (data.size() == 0) throw ConfigError("train_denoiser: empty dataset");
  if (options.epochs < 1 || options.batch_size < 1) {
    throw ConfigError("train_denoiser: epochs and batch size must be >= 1");
  }
  const DataSplit split = split_indices(data.size(), options.train_fraction,
                                        options.validation_fraction,
                                        derive_seed(seed, stream::kTraining, 0));
  const DenoiserLayout layout = fit_layout(data, config, split.train);
  const TrainingTable table = tabulate(data, config, layout);
  const int d = layout.dim;
  const int width = layout.input_width(config.time_embedding_dim);
  const MlpSpec spec = MlpSpec::uniform(width, d, config.hidden_layers, config.hidden_width,
                                        config.activation);
  const double s2 = layout.x_scale * layout.x_scale;

  // Fixed evaluation problems for validation and test rows.
  auto fixed_batch = [&](const std::vector<int>& rows, std::uint64_t index) {
    Engine engine = make_engine(derive_seed(seed, stream::kTraining, index));
    Matrix in(width, static_cast<Eigen::Index>(rows.size()));
    Matrix target(d, static_cast<Eigen::Index>(rows.size()));
    for (std::size_t j = 0; j < rows.size(); ++j) {
      fill_column(table, config, layout, rows[j], draw_example(config, d, engine), in, target,
                  static_cast<Eigen::Index>(j));
    }
    return std::pair{in, target};
  };
  const auto [val_in, val_target] = fixed_batch(split.validation, 3);
  const auto [test_in, test_target] = fixed_batch(split.test, 4);
  auto loss_on = [&](const Mlp& net, const Matrix& in, const Matrix& target) {
    if (in.cols() == 0) return 0.0;
    return s2 * (net.forward(in) - target).squaredNorm() / static_cast<double>(in.cols());
  };

  Mlp net = Mlp::initialize(spec, derive_seed(seed, stream::kTraining, 1));
  AdamState adam = AdamState::for_params(net.params(), options.learning_rate);
  Engine shuffle = make_engine(derive_seed(seed, stream::kTraining, 2));
  Engine noise = make_engine(derive_seed(seed, stream::kTraining, 5));
  std::vector<int> order = split.train;

  Mlp best = net;
  double best_val = std::numeric_limits<double>::infinity();
  int best_epoch = 0;
  std::vector<double> curve;
  const auto batch = static_cast<std::size_t>(options.batch_size);
  for (int epoch = 1; epoch <= options.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle);
    double epoch_loss = 0.0;
    std::size_t seen = 0;
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t stop = std::min(order.size(), start + batch);
      Matrix in(width, static_cast<Eigen::Index>(stop - start));
      Matrix target(d, static_cast<Eigen::Index>(stop - start));
      for (std::size_t j = start; j < stop; ++j) {
        fill_column(table, config, layout, order[j], draw_example(config, d, noise), in, target,
                    static_cast<Eigen::Index>(j - start));
      }
      const auto g = net.grad_params(in, target);
      if (!std::isfinite(g.loss)) {
        std::ostringstream msg;
        msg << "train_denoiser: loss became non-finite at epoch " << epoch << ", batch "
            << start / batch << " (lr " << options.learning_rate << ", last epoch mean loss "
            << (seen ? epoch_loss / static_cast<double>(seen) : 0.0) << ")";
        throw NumericalError(msg.str());
      }
      epoch_loss += g.loss * s2 * static_cast<double>(stop - start);
      seen += stop - start;
      adam_step(adam, net.mutable_params(), g.gradient);
    }
    const double train_loss = epoch_loss / static_cast<double>(std::max<std::size_t>(seen, 1));
    const double val = val_in.cols() > 0 ? loss_on(net, val_in, val_target) : train_loss;
    if (!std::isfinite(val)) {
      throw NumericalError("train_denoiser: validation loss became non-finite at epoch " +
                           std::to_string(epoch));
    }
    curve.push_back(val);
    if (val < best_val) {
      best_val = val;
      best_epoch = epoch;
      best = net;
    }
    if (on_epoch) on_epoch(epoch, train_loss, val);
  }
  const double test = loss_on(best, test_in, test_target);
  return DenoiserFit{Denoiser(std::move(best), config, layout), best_epoch, best_val, test,
                     std::move(curve)};
}

// --- Analytic denoiser ----------------------------------------------------

AnalyticDenoiser::AnalyticDenoiser(GaussianMixture gm, LinearObservationModel model)
    : gm_(std::move(gm)), model_(std::move(model)) {
  if (model_.input_dim() != gm_.dim()) {
    throw ConfigError("AnalyticDenoiser: observation model and prior disagree on d");
  }
}

GaussianMixture AnalyticDenoiser::smoothed_prior(double t, const Conditions& c) const {
  if (!(t > 0.0)) throw ConfigError("denoise: t must be > 0");
  for (int b = 0; b < kMaxBlocks; ++b)
    if (c.has(b) && !consumes(b)) throw ConfigError("denoise: unknown condition block");
  if (c.empty()) return gm_.smoothed(t);
  return exact_posterior(gm_, model_, c).mixture.smoothed(t);
}

Matrix AnalyticDenoiser::denoise(const Matrix& x, double t, const Conditions& c) const {
  if (x.rows() != gm_.dim()) throw ConfigError("denoise: state has the wrong dimension");
  const GaussianMixture p = smoothed_prior(t, c);
  Matrix out(x.rows(), x.cols());
  for (Eigen::Index j = 0; j < x.cols(); ++j) out.col(j) = x.col(j) + (t * t) * p.score(x.col(j));
  return out;
}

Matrix AnalyticDenoiser::denoise_vjp(const Matrix& x, double t, const Conditions& c,
                                     const Matrix& cotangents) const {
  if (x.rows() != gm_.dim() || cotangents.rows() != x.rows() || cotangents.cols() != x.cols()) {
    throw ConfigError("denoise_vjp: shape mismatch");
  }
  const GaussianMixture p = smoothed_prior(t, c);
  Matrix out(x.rows(), x.cols());
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    out.col(j) = cotangents.col(j) + (t * t) * (p.hessian_log_density(x.col(j)) * cotangents.col(j));
  }
  return out;
}

}  // namespace dguide
