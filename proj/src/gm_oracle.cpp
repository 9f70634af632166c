#include "dguide/gm_oracle.hpp"

#include "dguide/rng.hpp"

#include <cmath>
#include <numbers>
#include <numeric>
#include <set>

namespace dguide {

namespace {

std::string component_label(int k) { return "mixture component " + std::to_string(k); }

}  // namespace

GaussianMixture::GaussianMixture(std::vector<double> weights, std::vector<Vector> means,
                                 std::vector<Matrix> covariances)
    : weights_(std::move(weights)), means_(std::move(means)), covariances_(std::move(covariances)) {
  if (weights_.empty()) throw ConfigError("GaussianMixture: no components");
  if (means_.size() != weights_.size() || covariances_.size() != weights_.size()) {
    throw ConfigError("GaussianMixture: weights, means and covariances differ in count");
  }
  dim_ = static_cast<int>(means_.front().size());
  if (dim_ < 1) throw ConfigError("GaussianMixture: dimension must be >= 1");
  double total = 0.0;
  for (double w : weights_) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw ConfigError("GaussianMixture: negative weight");
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-12) {
    throw ConfigError("GaussianMixture: weights sum to " + std::to_string(total) + ", not 1");
  }
  chol_.reserve(weights_.size());
  precision_.reserve(weights_.size());
  for (int k = 0; k < size(); ++k) {
    if (means_[k].size() != dim_) throw ConfigError("GaussianMixture: mean dimension mismatch");
    if (covariances_[k].rows() != dim_ || covariances_[k].cols() != dim_) {
      throw ConfigError("GaussianMixture: covariance shape mismatch");
    }
    if (!covariances_[k].isApprox(covariances_[k].transpose(), 1e-12)) {
      throw ConfigError("GaussianMixture: covariance of " + component_label(k) +
                        " is not symmetric");
    }
    chol_.push_back(checked_cholesky(covariances_[k], "GaussianMixture: covariance of " +
                                                          component_label(k)));
    precision_.push_back(chol_.back().solve(Matrix::Identity(dim_, dim_)));
  }
}

double GaussianMixture::log_density(const Vector& x) const {
  std::vector<double> terms(weights_.size());
  for (int k = 0; k < size(); ++k) {
    terms[k] = std::log(weights_[k]) + log_normal_density(x, means_[k], chol_[k]);
  }
  return log_sum_exp(terms);
}

double GaussianMixture::density(const Vector& x) const { return std::exp(log_density(x)); }

Vector GaussianMixture::responsibilities(const Vector& x) const {
  std::vector<double> terms(weights_.size());
  for (int k = 0; k < size(); ++k) {
    terms[k] = std::log(weights_[k]) + log_normal_density(x, means_[k], chol_[k]);
  }
  const double norm = log_sum_exp(terms);
  Vector g(size());
  for (int k = 0; k < size(); ++k) g(k) = std::exp(terms[k] - norm);
  return g / g.sum();
}

Vector GaussianMixture::score(const Vector& x) const {
  const Vector gamma = responsibilities(x);
  Vector s = Vector::Zero(dim_);
  for (int k = 0; k < size(); ++k) {
    if (gamma(k) == 0.0) continue;
    s += gamma(k) * (precision_[k] * (means_[k] - x));
  }
  return s;
}

Matrix GaussianMixture::hessian_log_density(const Vector& x) const {
  const Vector gamma = responsibilities(x);
  Matrix h = Matrix::Zero(dim_, dim_);
  Vector g = Vector::Zero(dim_);
  for (int k = 0; k < size(); ++k) {
    if (gamma(k) == 0.0) continue;
    const Vector gk = precision_[k] * (means_[k] - x);
    h += gamma(k) * (gk * gk.transpose() - precision_[k]);
    g += gamma(k) * gk;
  }
  h -= g * g.transpose();
  return 0.5 * (h + h.transpose());
}

GaussianMixture GaussianMixture::smoothed(double t) const {
  std::vector<Matrix> covs = covariances_;
  const Matrix add = (t * t) * Matrix::Identity(dim_, dim_);
  for (auto& c : covs) c += add;
  return GaussianMixture(weights_, means_, std::move(covs));
}

Vector GaussianMixture::mixture_mean() const {
  Vector m = Vector::Zero(dim_);
  for (int k = 0; k < size(); ++k) m += weights_[k] * means_[k];
  return m;
}

double GaussianMixture::total_variance() const {
  const Vector m = mixture_mean();
  double v = 0.0;
  for (int k = 0; k < size(); ++k) {
    v += weights_[k] * (covariances_[k].trace() + (means_[k] - m).squaredNorm());
  }
  return v;
}

Matrix GaussianMixture::sample_matrix(int n, std::uint64_t seed) const {
  if (n < 1) throw ConfigError("sample_prior: n must be >= 1");
  Engine engine = make_engine(seed);
  std::discrete_distribution<int> pick(weights_.begin(), weights_.end());
  Matrix out(dim_, n);
  for (int i = 0; i < n; ++i) {
    const int k = pick(engine);
    out.col(i) = means_[k] + chol_[k].matrixL() * standard_normal(engine, dim_);
  }
  return out;
}

std::vector<Vector> GaussianMixture::sample(int n, std::uint64_t seed) const {
  const Matrix m = sample_matrix(n, seed);
  std::vector<Vector> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i) out.emplace_back(m.col(i));
  return out;
}

// --- LinearObservationModel ----------------------------------------------

LinearObservationModel::LinearObservationModel(Matrix a, double noise_std,
                                               std::vector<ConditionBlock> blocks)
    : a_(std::move(a)), noise_std_(noise_std), blocks_(std::move(blocks)) {
  if (!(noise_std_ > 0.0)) throw ConfigError("LinearObservationModel: noise_std must be > 0");
  if (blocks_.empty() || static_cast<int>(blocks_.size()) > kMaxBlocks) {
    throw ConfigError("LinearObservationModel: need 1 to 3 condition blocks");
  }
  std::set<int> seen;
  for (const auto& b : blocks_) {
    if (b.rows.empty()) throw ConfigError("LinearObservationModel: empty block " + b.name);
    if (b.noise_std && !(*b.noise_std > 0.0)) {
      throw ConfigError("LinearObservationModel: block noise std must be > 0");
    }
    for (int r : b.rows) {
      if (r < 0 || r >= a_.rows()) throw ConfigError("LinearObservationModel: row out of range");
      if (!seen.insert(r).second) {
        throw ConfigError("LinearObservationModel: blocks overlap at row " + std::to_string(r));
      }
    }
  }
  if (static_cast<Eigen::Index>(seen.size()) != a_.rows()) {
    throw ConfigError("LinearObservationModel: blocks do not cover every output row");
  }
}

const ConditionBlock& LinearObservationModel::block(int b) const {
  if (b < 0 || b >= block_count()) {
    throw ConfigError("LinearObservationModel: no block " + std::to_string(b));
  }
  return blocks_[b];
}

double LinearObservationModel::block_noise(int b) const {
  return block(b).noise_std.value_or(noise_std_);
}

Matrix LinearObservationModel::block_matrix(int b) const {
  const auto& rows = block(b).rows;
  Matrix m(rows.size(), a_.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) m.row(i) = a_.row(rows[i]);
  return m;
}

Vector LinearObservationModel::block_slice(const Vector& y, int b) const {
  if (y.size() != a_.rows()) throw ConfigError("block_slice: observation has wrong length");
  const auto& rows = block(b).rows;
  Vector v(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) v(i) = y(rows[i]);
  return v;
}

Vector LinearObservationModel::observe(const Vector& x0, std::uint64_t seed,
                                       bool noiseless) const {
  if (x0.size() != a_.cols()) {
    throw ConfigError("observe: x0 has dimension " + std::to_string(x0.size()) + ", A expects " +
                      std::to_string(a_.cols()));
  }
  Vector y = a_ * x0;
  if (noiseless) return y;
  Engine engine = make_engine(seed);
  const Vector eta = standard_normal(engine, static_cast<int>(a_.rows()));
  for (int b = 0; b < block_count(); ++b) {
    const double s = block_noise(b);
    for (int r : blocks_[b].rows) y(r) += s * eta(r);
  }
  return y;
}

Vector LinearObservationModel::observe_block(const Vector& x0, int b, std::uint64_t seed,
                                             bool noiseless) const {
  return block_slice(observe(x0, seed, noiseless), b);
}

// --- Conditions ----------------------------------------------------------

const Vector& Conditions::at(int b) const {
  if (b < 0 || b >= kMaxBlocks || !values[b]) {
    throw ConfigError("Conditions: block C" + std::to_string(b + 1) + " has no value");
  }
  return *values[b];
}

Conditions& Conditions::set(int b, Vector v) {
  if (b < 0 || b >= kMaxBlocks) throw ConfigError("Conditions: block index out of range");
  values[b] = std::move(v);
  return *this;
}

Conditions Conditions::only(std::initializer_list<int> blocks) const {
  Conditions c;
  for (int b : blocks) c.values[b] = values[b];
  return c;
}

bool Conditions::empty() const {
  for (const auto& v : values)
    if (v) return false;
  return true;
}

// --- Oracle operations ---------------------------------------------------

GaussianMixture condition_on_linear(const GaussianMixture& gm, const Matrix& h,
                                    const Vector& y, const Vector& noise_var) {
  const int d = gm.dim();
  if (h.cols() != d || h.rows() != y.size() || noise_var.size() != y.size()) {
    throw ConfigError("condition_on_linear: evidence shapes do not match");
  }
  const Vector inv_r = noise_var.cwiseInverse();
  const Matrix ht_rinv = h.transpose() * inv_r.asDiagonal();
  const Matrix info = ht_rinv * h;
  const Vector info_y = ht_rinv * y;

  std::vector<double> log_w(gm.size());
  std::vector<Vector> means;
  std::vector<Matrix> covs;
  for (int k = 0; k < gm.size(); ++k) {
    const Matrix prior_prec =
        spd_inverse(gm.covariance(k), "exact_posterior: " + component_label(k));
    const Matrix post_prec = info + prior_prec;
    const auto llt =
        checked_cholesky(post_prec, "exact_posterior: posterior precision of " + component_label(k));
    Matrix cov = llt.solve(Matrix::Identity(d, d));
    cov = 0.5 * (cov + cov.transpose());
    means.push_back(llt.solve(info_y + prior_prec * gm.mean(k)));
    covs.push_back(std::move(cov));

    Matrix marg = h * gm.covariance(k) * h.transpose();
    marg.diagonal() += noise_var;
    const auto marg_llt = checked_cholesky(
        marg, "exact_posterior: evidence covariance of " + component_label(k));
    log_w[k] = std::log(gm.weight(k)) + log_normal_density(y, h * gm.mean(k), marg_llt);
  }
  const double norm = log_sum_exp(log_w);
  std::vector<double> w(gm.size());
  double total = 0.0;
  for (int k = 0; k < gm.size(); ++k) {
    w[k] = std::exp(log_w[k] - norm);
    total += w[k];
  }
  for (auto& v : w) v /= total;
  // Renormalize once more so the sum is 1 to rounding.
  const double residual = std::accumulate(w.begin(), w.end(), 0.0);
  for (auto& v : w) v /= residual;
  return GaussianMixture(std::move(w), std::move(means), std::move(covs));
}

namespace {

struct Evidence {
  Matrix h;
  Vector y;
  Vector var;
};

Evidence collect(const LinearObservationModel& model, const Conditions& observed, int d,
                 const Vector* state, double t) {
  std::vector<int> blocks;
  int rows = state ? d : 0;
  for (int b = 0; b < kMaxBlocks; ++b) {
    if (!observed.has(b)) continue;
    if (b >= model.block_count()) {
      throw ConfigError("exact_posterior: model has no block C" + std::to_string(b + 1));
    }
    if (observed.at(b).size() != model.block_dim(b)) {
      throw ConfigError("exact_posterior: value for block C" + std::to_string(b + 1) +
                        " has wrong length");
    }
    blocks.push_back(b);
    rows += model.block_dim(b);
  }
  Evidence e{Matrix(rows, d), Vector(rows), Vector(rows)};
  int r = 0;
  if (state) {
    if (state->size() != d) throw ConfigError("state_posterior: state has wrong dimension");
    e.h.topRows(d).setIdentity();
    e.y.head(d) = *state;
    e.var.head(d).setConstant(t * t);
    r = d;
  }
  for (int b : blocks) {
    const int m = model.block_dim(b);
    e.h.middleRows(r, m) = model.block_matrix(b);
    e.y.segment(r, m) = observed.at(b);
    const double s = model.block_noise(b);
    e.var.segment(r, m).setConstant(s * s);
    r += m;
  }
  return e;
}

}  // namespace

std::vector<Vector> sample_prior(const GaussianMixture& gm, int n, std::uint64_t seed) {
  return gm.sample(n, seed);
}

Vector observe(const LinearObservationModel& model, const Vector& x0, std::uint64_t seed,
               bool noiseless) {
  return model.observe(x0, seed, noiseless);
}

PosteriorMixture exact_posterior(const GaussianMixture& gm, const LinearObservationModel& model,
                                 const Conditions& observed) {
  if (observed.empty()) throw ConfigError("exact_posterior: at least one block must be observed");
  if (model.input_dim() != gm.dim()) throw ConfigError("exact_posterior: A and prior disagree on d");
  const Evidence e = collect(model, observed, gm.dim(), nullptr, 0.0);
  return PosteriorMixture{condition_on_linear(gm, e.h, e.y, e.var), observed, std::nullopt, 0.0};
}

PosteriorMixture state_posterior(const GaussianMixture& gm, const LinearObservationModel& model,
                                 const Vector& x, double t, const Conditions& observed) {
  if (!(t > 0.0)) throw ConfigError("state_posterior: t must be > 0");
  const Evidence e = collect(model, observed, gm.dim(), &x, t);
  return PosteriorMixture{condition_on_linear(gm, e.h, e.y, e.var), observed, x, t};
}

Vector score_t(const GaussianMixture& gm, const LinearObservationModel& model, const Vector& x,
               double t, const Conditions& conditioning) {
  if (!(t > 0.0)) throw ConfigError("score_t: t must be > 0");
  if (conditioning.empty()) return gm.smoothed(t).score(x);
  return exact_posterior(gm, model, conditioning).mixture.smoothed(t).score(x);
}

Vector posterior_mean_t(const GaussianMixture& gm, const LinearObservationModel& model,
                        const Vector& x, double t, const Conditions& conditioning) {
  return x + (t * t) * score_t(gm, model, x, t, conditioning);
}

double pushforward_density(const GaussianMixture& posterior, const Matrix& rows,
                           double noise_var, const Vector& value) {
  std::vector<double> terms(posterior.size());
  for (int k = 0; k < posterior.size(); ++k) {
    Matrix cov = rows * posterior.covariance(k) * rows.transpose();
    cov.diagonal().array() += noise_var;
    const auto llt = checked_cholesky(cov, "conditional_density: pushed covariance");
    terms[k] = std::log(posterior.weight(k)) +
               log_normal_density(value, rows * posterior.mean(k), llt);
  }
  return std::exp(log_sum_exp(terms));
}

double conditional_density(const GaussianMixture& gm, const LinearObservationModel& model,
                           int block, const Vector& value, const Vector& x, double t,
                           const Conditions& observed) {
  if (value.size() != model.block_dim(block)) {
    throw ConfigError("conditional_density: value has wrong length for its block");
  }
  if (observed.has(block)) throw ConfigError("conditional_density: target block is also observed");
  const PosteriorMixture post = state_posterior(gm, model, x, t, observed);
  const double s = model.block_noise(block);
  return pushforward_density(post.mixture, model.block_matrix(block), s * s, value);
}

double isotropic_normal_density(const Vector& value, const Vector& mean, double var) {
  if (value.size() != mean.size()) throw ConfigError("isotropic_normal_density: size mismatch");
  const double m = static_cast<double>(value.size());
  const double q = (value - mean).squaredNorm();
  return std::exp(-0.5 * q / var - 0.5 * m * std::log(2.0 * std::numbers::pi * var));
}

double surrogate_density(const Vector& value, const Vector& predicted_mean, double lambda) {
  if (!(lambda > 0.0)) throw ConfigError("surrogate_density: lambda must be > 0");
  return isotropic_normal_density(value, predicted_mean, 1.0 / (2.0 * lambda));
}

}  // namespace dguide
