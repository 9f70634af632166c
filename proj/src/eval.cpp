#include "dguide/eval.hpp"

#include "dguide/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <ostream>
#include <sstream>

namespace dguide {

// --- Metric reports -------------------------------------------------------

MetricReport summarize(std::string metric, std::string fingerprint, std::vector<double> values) {
  MetricReport r{std::move(metric), std::move(fingerprint), std::move(values), 0.0, 0.0};
  if (r.values.empty()) throw ConfigError("summarize: no values for " + r.metric);
  const double n = static_cast<double>(r.values.size());
  r.mean = std::accumulate(r.values.begin(), r.values.end(), 0.0) / n;
  if (r.values.size() < 2) {
    r.std = std::numeric_limits<double>::quiet_NaN();
  } else {
    double ss = 0.0;
    for (double v : r.values) ss += (v - r.mean) * (v - r.mean);
    r.std = std::sqrt(ss / (n - 1.0));
  }
  return r;
}

void write_report_rows(std::ostream& out, const std::vector<MetricReport>& reports,
                       const CsvOptions& options) {
  write_csv_preamble(out, "metric_rows", 1, {"metric", "fingerprint", "repeat", "value"}, options);
  for (const auto& r : reports)
    for (std::size_t i = 0; i < r.values.size(); ++i)
      write_csv_row(out, {r.metric, r.fingerprint, std::to_string(i), format_number(r.values[i])});
}

void write_report_summary(std::ostream& out, const std::vector<MetricReport>& reports,
                          const CsvOptions& options) {
  write_csv_preamble(out, "metric_summary", 1,
                     {"metric", "fingerprint", "repeats", "mean", "std", "flag"}, options);
  for (const auto& r : reports) {
    write_csv_row(out, {r.metric, r.fingerprint, std::to_string(r.values.size()),
                        format_number(r.mean), format_number(r.std),
                        r.has_spread() ? "" : "single_repeat"});
  }
}

PairedDifference paired_difference(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.empty()) throw ConfigError("paired_difference: need matched, nonempty runs");
  std::vector<double> d(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
  PairedDifference p;
  const double n = static_cast<double>(d.size());
  p.mean = std::accumulate(d.begin(), d.end(), 0.0) / n;
  if (d.size() < 2) {
    p.standard_error = std::numeric_limits<double>::quiet_NaN();
    return p;
  }
  double ss = 0.0;
  for (double v : d) ss += (v - p.mean) * (v - p.mean);
  p.standard_error = std::sqrt(ss / (n - 1.0) / n);
  return p;
}

// --- Single block certificate ---------------------------------------------

double max_variance_derivative_sq(const Vector& value, const Vector& mean, double lo, double hi) {
  if (!(lo > 0.0) || hi < lo) throw ConfigError("max_variance_derivative_sq: need 0 < lo <= hi");
  const double m = static_cast<double>(value.size());
  const double r2 = (value - mean).squaredNorm();
  auto g = [&](double v) {
    const double log_phi = -0.5 * m * std::log(2.0 * std::numbers::pi * v) - r2 / (2.0 * v);
    const double dv = std::exp(log_phi) * (r2 / (2.0 * v * v) - m / (2.0 * v));
    return dv * dv;
  };
  if (hi == lo) return g(lo);
  constexpr int kScan = 400;
  const double ratio = std::log(hi / lo);
  auto at = [&](int i) { return lo * std::exp(ratio * i / kScan); };
  int best = 0;
  double best_val = g(lo);
  for (int i = 1; i <= kScan; ++i) {
    const double val = g(at(i));
    if (val > best_val) {
      best_val = val;
      best = i;
    }
  }
  // Golden-section refinement inside the bracket around the best scan point.
  double a = at(std::max(best - 1, 0));
  double b = at(std::min(best + 1, kScan));
  const double phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double x1 = b - phi * (b - a);
  double x2 = a + phi * (b - a);
  double f1 = g(x1), f2 = g(x2);
  for (int it = 0; it < 200 && (b - a) > 1e-14 * b; ++it) {
    if (f1 < f2) {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + phi * (b - a);
      f2 = g(x2);
    } else {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - phi * (b - a);
      f1 = g(x1);
    }
  }
  return std::max({best_val, f1, f2, g(hi)});
}

double predictor_gradient_bound(const Predictor& f) {
  if (const auto* lin = dynamic_cast<const LinearPredictor*>(&f)) {
    const double s = spectral_norm(lin->matrix(), 1e-12);
    return s * s;
  }
  if (const auto* net = dynamic_cast<const MlpPredictor*>(&f)) {
    const double m = net->network().weight_norm_bound();
    return m * m;
  }
  throw ConfigError("certificate: predictor has no known gradient bound");
}

namespace {

struct InequalityInputs {
  std::string label;
  int block = 0;
  Conditions given;        // C1 for the second inequality, nothing for the first
  const Predictor* f_hat = nullptr;
  double lambda = 0.0;
  double gradient_true = 0.0;
  double gradient_hat = 0.0;
};

BoundCertificate certify_point(const GaussianMixture& gm, const LinearObservationModel& model,
                               const DenoiserModel& denoiser, const InequalityInputs& in,
                               const Vector& x_t, double t, const Vector& c1, const Vector& c2,
                               const Vector& value, int draws, std::uint64_t seed) {
  BoundCertificate cert;
  cert.inequality = in.label;
  cert.x_t = x_t;
  cert.t = t;
  cert.c1 = c1;
  cert.c2 = c2;
  cert.lambda = in.lambda;
  cert.gradient_bound = in.gradient_hat;

  const Matrix rows = model.block_matrix(in.block);
  const double sigma = model.block_noise(in.block);
  const double m = static_cast<double>(rows.rows());
  const PosteriorMixture post = state_posterior(gm, model, x_t, t, in.given);
  const Vector post_mean = post.mean();
  const Vector estimate = denoiser.denoise(x_t, t, in.given);
  const Vector predicted = in.f_hat->value(estimate);

  const double exact = pushforward_density(post.mixture, rows, sigma * sigma, value);
  const double surrogate = surrogate_density(value, predicted, in.lambda);
  cert.lhs = (exact - surrogate) * (exact - surrogate);

  cert.term_a = m / (std::sqrt(2.0 * std::numbers::pi) * sigma) * std::exp(-1.0 / (2.0 * sigma * sigma));
  cert.term_b = 2.0 * in.gradient_true + in.gradient_hat;
  cert.term_c = post.conditional_variance();
  cert.term_d = (post_mean - estimate).squaredNorm();
  const Matrix samples = post.mixture.sample_matrix(draws, seed);
  cert.term_e = (rows * samples - in.f_hat->value(samples)).colwise().squaredNorm().mean();
  const double s2 = sigma * sigma;
  const double v_hat = 1.0 / (2.0 * in.lambda);
  const double u = max_variance_derivative_sq(value, predicted, std::min(s2, v_hat), std::max(s2, v_hat));
  cert.term_f = u * (s2 - v_hat) * (s2 - v_hat);

  cert.rhs = cert.term_a * (cert.term_b * cert.term_c + in.gradient_hat * cert.term_d + cert.term_e) +
             cert.term_f;
  cert.holds = cert.lhs <= cert.rhs + kCertificateTolerance;
  return cert;
}

}  // namespace

std::vector<BoundCertificate> theorem1_certify(const GaussianMixture& gm,
                                               const LinearObservationModel& model,
                                               const Predictor& f1, const Predictor& f2,
                                               const DenoiserModel& denoiser,
                                               const Theorem1Options& options, std::uint64_t seed) {
  if (options.points < 1 || options.posterior_draws < 1) throw ConfigError("certify: need points and draws");
  if (!(options.lambda1 > 0.0 && options.lambda2 > 0.0)) throw ConfigError("certify: λ must be > 0");
  if (!(options.t_low > 0.0 && options.t_high >= options.t_low)) throw ConfigError("certify: bad t range");
  if (model.block_count() < 2) throw ConfigError("certify: need blocks C1 and C2");
  if (!denoiser.consumes(0)) throw ConfigError("certify: denoiser must take C1 as an input");
  if (f1.output_dim() != model.block_dim(0) || f2.output_dim() != model.block_dim(1)) {
    throw ConfigError("certify: regressor outputs do not match the block dimensions");
  }

  InequalityInputs first{"C1", 0, {}, &f1, options.lambda1,
                         std::pow(spectral_norm(model.block_matrix(0), 1e-12), 2),
                         predictor_gradient_bound(f1)};
  InequalityInputs second{"C2", 1, {}, &f2, options.lambda2,
                          std::pow(spectral_norm(model.block_matrix(1), 1e-12), 2),
                          predictor_gradient_bound(f2)};

  const Matrix x0 = gm.sample_matrix(options.points, derive_seed(seed, stream::kCertify, 0));
  Engine engine = make_engine(derive_seed(seed, stream::kCertify, 1));
  std::uniform_real_distribution<double> log_t(std::log(options.t_low), std::log(options.t_high));
  std::vector<BoundCertificate> out;
  out.reserve(static_cast<std::size_t>(2 * options.points));
  for (int i = 0; i < options.points; ++i) {
    const Vector y = model.observe(x0.col(i), derive_seed(seed, stream::kObservation, i));
    const Vector c1 = model.block_slice(y, 0);
    const Vector c2 = model.block_slice(y, 1);
    const double t = std::exp(log_t(engine));
    const Vector x_t = x0.col(i) + t * standard_normal(engine, gm.dim());
    const auto draw_seed = derive_seed(seed, stream::kCertify, 2 + 2 * static_cast<std::uint64_t>(i));
    out.push_back(certify_point(gm, model, denoiser, first, x_t, t, c1, c2, c1,
                                options.posterior_draws, draw_seed));
    second.given = Conditions{}.set(0, c1);
    out.push_back(certify_point(gm, model, denoiser, second, x_t, t, c1, c2, c2,
                                options.posterior_draws, draw_seed + 1));
  }
  return out;
}

namespace {

std::string join_vector(const Vector& v) {
  std::string s;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (i) s += ' ';
    s += format_number(v(i));
  }
  return s;
}

}  // namespace

void write_certificates(std::ostream& out, const std::vector<BoundCertificate>& certs,
                        const CsvOptions& options) {
  write_csv_preamble(out, "bound_certificate", 1,
                     {"inequality", "t", "x_t", "c1", "c2", "lambda", "lhs", "term_a", "term_b",
                      "term_c", "term_d", "term_e", "term_f", "gradient_bound", "rhs", "holds"},
                     options);
  for (const auto& c : certs) {
    write_csv_row(out, {c.inequality, format_number(c.t), join_vector(c.x_t), join_vector(c.c1),
                        join_vector(c.c2), format_number(c.lambda), format_number(c.lhs),
                        format_number(c.term_a), format_number(c.term_b), format_number(c.term_c),
                        format_number(c.term_d), format_number(c.term_e), format_number(c.term_f),
                        format_number(c.gradient_bound), format_number(c.rhs),
                        c.holds ? "true" : "false"});
  }
}

// --- Distribution shift certificate -----------------------------------------

bool Box::contains(const Vector& x) const {
  return (x.array() >= lower.array()).all() && (x.array() <= upper.array()).all();
}

namespace {

struct RiskEstimate {
  double mean = 0.0;
  double se = 0.0;
};

RiskEstimate truncated_risk(const GaussianMixture& gm, const Box& box, const Matrix& rows,
                            double noise_var, const Predictor& f, int draws, std::uint64_t seed) {
  std::vector<double> losses;
  losses.reserve(static_cast<std::size_t>(draws));
  const int batch = std::max(draws, 1024);
  for (std::uint64_t round = 0; losses.size() < static_cast<std::size_t>(draws); ++round) {
    if (round > 200) {
      throw NumericalError("theorem2: the support box captures too little mass to sample from");
    }
    const Matrix x = gm.sample_matrix(batch, derive_seed(seed, stream::kCertify, round));
    std::vector<Eigen::Index> keep;
    for (Eigen::Index j = 0; j < x.cols() && keep.size() + losses.size() < static_cast<std::size_t>(draws); ++j)
      if (box.contains(x.col(j))) keep.push_back(j);
    if (keep.empty()) continue;
    Matrix kept(x.rows(), static_cast<Eigen::Index>(keep.size()));
    for (std::size_t j = 0; j < keep.size(); ++j) kept.col(static_cast<Eigen::Index>(j)) = x.col(keep[j]);
    const Vector err = (f.value(kept) - rows * kept).colwise().squaredNorm();
    for (Eigen::Index j = 0; j < err.size(); ++j)
      losses.push_back(err(j) + static_cast<double>(rows.rows()) * noise_var);
  }
  RiskEstimate r;
  const double n = static_cast<double>(losses.size());
  r.mean = std::accumulate(losses.begin(), losses.end(), 0.0) / n;
  double ss = 0.0;
  for (double l : losses) ss += (l - r.mean) * (l - r.mean);
  r.se = std::sqrt(ss / std::max(n - 1.0, 1.0) / n);
  return r;
}

}  // namespace

Theorem2Report theorem2_certify(const GaussianMixture& gm1, const GaussianMixture& gm2,
                                const LinearObservationModel& model, int block,
                                const Predictor& regressor, const Theorem2Options& options,
                                std::uint64_t seed) {
  const int d = gm1.dim();
  if (gm2.dim() != d || options.support.lower.size() != d || options.support.upper.size() != d) {
    throw ConfigError("theorem2: dimensions of the mixtures and box disagree");
  }
  if (!((options.support.upper - options.support.lower).array() > 0.0).all()) {
    throw ConfigError("theorem2: empty support box");
  }
  if (options.grid_resolution < 2 || options.draws < 2) throw ConfigError("theorem2: bad resolution or draws");
  const double cells = std::pow(static_cast<double>(options.grid_resolution), d);
  if (cells > 2e7) throw ConfigError("theorem2: grid too large; lower the resolution");

  // Node grid with trapezoid weights for the truncation constants.
  const int r = options.grid_resolution;
  const auto total = static_cast<long>(cells);
  const Vector step = (options.support.upper - options.support.lower) / (r - 1);
  std::vector<double> p1(static_cast<std::size_t>(total)), p2(static_cast<std::size_t>(total));
  double z1 = 0.0, z2 = 0.0;
  const double cell_volume = step.prod();
  Vector x(d);
  std::vector<int> idx(static_cast<std::size_t>(d), 0);
  for (long n = 0; n < total; ++n) {
    double w = cell_volume;
    for (int k = 0; k < d; ++k) {
      x(k) = options.support.lower(k) + step(k) * idx[static_cast<std::size_t>(k)];
      if (idx[static_cast<std::size_t>(k)] == 0 || idx[static_cast<std::size_t>(k)] == r - 1) w *= 0.5;
    }
    p1[static_cast<std::size_t>(n)] = gm1.density(x);
    p2[static_cast<std::size_t>(n)] = gm2.density(x);
    z1 += w * p1[static_cast<std::size_t>(n)];
    z2 += w * p2[static_cast<std::size_t>(n)];
    for (int k = 0; k < d; ++k) {
      if (++idx[static_cast<std::size_t>(k)] < r) break;
      idx[static_cast<std::size_t>(k)] = 0;
    }
  }
  Theorem2Report rep;
  if (!(z1 > 0.0 && z2 > 0.0 && std::isfinite(z1) && std::isfinite(z2))) {
    rep.density_floor = 0.0;
    rep.note = "precondition unverifiable: a mixture has no mass on the support box grid";
    return rep;
  }
  double floor = std::numeric_limits<double>::infinity();
  double delta = 0.0;
  for (long n = 0; n < total; ++n) {
    const double a = p1[static_cast<std::size_t>(n)] / z1;
    const double b = p2[static_cast<std::size_t>(n)] / z2;
    floor = std::min({floor, a, b});
    delta = std::max(delta, std::abs(a - b));
  }
  rep.delta = delta;
  rep.density_floor = floor;
  if (!(floor >= options.min_density)) {
    std::ostringstream msg;
    msg << "precondition unverifiable: grid minimum density " << floor << " is below "
        << options.min_density;
    rep.note = msg.str();
    return rep;
  }
  rep.precondition_verified = true;
  rep.note = "δ and the density floor are grid approximations over the support box";

  const Matrix rows = model.block_matrix(block);
  const double noise_var = model.block_noise(block) * model.block_noise(block);
  const RiskEstimate r1 = truncated_risk(gm1, options.support, rows, noise_var, regressor,
                                         options.draws, derive_seed(seed, stream::kCertify, 1));
  const RiskEstimate r2 = truncated_risk(gm2, options.support, rows, noise_var, regressor,
                                         options.draws, derive_seed(seed, stream::kCertify, 2));
  rep.risk_source = r1.mean;
  rep.risk_shifted = r2.mean;
  rep.se_source = r1.se;
  rep.se_shifted = r2.se;
  rep.factor = std::exp(delta / floor);
  const double se = std::sqrt(r2.se * r2.se + rep.factor * rep.factor * r1.se * r1.se);
  rep.bound = r1.mean * rep.factor + 3.0 * se;
  rep.holds = rep.risk_shifted <= rep.bound;
  return rep;
}

// --- Success rate ---------------------------------------------------------

double success_rate(const Matrix& samples, const std::vector<IntervalPredicate>& predicates) {
  if (samples.cols() == 0) throw ConfigError("success_rate: no samples");
  std::vector<char> ok(static_cast<std::size_t>(samples.cols()), 1);
  for (const auto& p : predicates) {
    if (!p.f) throw ConfigError("success_rate: predicate without a map");
    if (p.lower.size() != p.f->output_dim() || p.upper.size() != p.f->output_dim()) {
      throw ConfigError("success_rate: interval dimension does not match the map");
    }
    const Matrix v = p.f->value(samples);
    for (Eigen::Index j = 0; j < v.cols(); ++j) {
      const bool inside = (v.col(j).array() >= p.lower.array()).all() &&
                          (v.col(j).array() <= p.upper.array()).all();
      if (!inside) ok[static_cast<std::size_t>(j)] = 0;
    }
  }
  const auto hits = std::count(ok.begin(), ok.end(), 1);
  return static_cast<double>(hits) / static_cast<double>(samples.cols());
}

// --- Imputation -----------------------------------------------------------

Matrix knn_average(const Matrix& donor_x, const Matrix& donor_values, const Matrix& queries, int k) {
  if (k < 1) throw ConfigError("knn: k must be >= 1");
  if (k > donor_x.cols()) {
    throw ConfigError("knn: k = " + std::to_string(k) + " exceeds the donor set size " +
                      std::to_string(donor_x.cols()));
  }
  if (donor_x.cols() != donor_values.cols() || donor_x.rows() != queries.rows()) {
    throw ConfigError("knn: shape mismatch");
  }
  Matrix out(donor_values.rows(), queries.cols());
  constexpr Eigen::Index kChunk = 256;
  std::vector<std::pair<double, Eigen::Index>> row(static_cast<std::size_t>(donor_x.cols()));
  for (Eigen::Index start = 0; start < queries.cols(); start += kChunk) {
    const Eigen::Index len = std::min(kChunk, queries.cols() - start);
    const Matrix dist = squared_distance_matrix(queries.middleCols(start, len), donor_x);
    for (Eigen::Index q = 0; q < len; ++q) {
      for (Eigen::Index j = 0; j < dist.cols(); ++j) row[static_cast<std::size_t>(j)] = {dist(q, j), j};
      std::nth_element(row.begin(), row.begin() + (k - 1), row.end());
      std::sort(row.begin(), row.begin() + k);
      Vector acc = Vector::Zero(donor_values.rows());
      for (int i = 0; i < k; ++i) acc += donor_values.col(row[static_cast<std::size_t>(i)].second);
      out.col(start + q) = acc / static_cast<double>(k);
    }
  }
  return out;
}

BlockwiseDataset impute_and_complete(const BlockwiseDataset& data, const ImputeOptions& options,
                                     std::uint64_t seed) {
  if (data.pattern() != MissingPattern::TwoDataset) {
    throw ConfigError("impute: expects a two-dataset table");
  }
  if (data.count_source(0) == 0 || data.count_source(1) == 0) {
    throw ConfigError("impute: both source datasets must be present");
  }
  std::vector<DatasetRow> rows = data.rows();
  for (int missing = 0; missing < 2; ++missing) {
    const int donor_source = missing;       // rows of this source carry the block
    const int target_source = 1 - missing;  // rows of this source lack it
    const BlockwiseDataset donors = data.subset({donor_source});
    const auto [dx, dv] = donors.block_pairs(missing);
    std::vector<int> targets;
    for (int i = 0; i < data.size(); ++i)
      if (data.row(i).source == target_source) targets.push_back(i);
    Matrix q(data.dim(), static_cast<Eigen::Index>(targets.size()));
    for (std::size_t j = 0; j < targets.size(); ++j) q.col(static_cast<Eigen::Index>(j)) = data.row(targets[j]).x0;

    Matrix filled;
    if (options.method == ImputeMethod::KNN) {
      filled = knn_average(dx, dv, q, options.k);
    } else if (options.predictors[missing]) {
      filled = options.predictors[missing]->value(q);
    } else {
      MlpSpec spec = options.regressor_spec;
      spec.widths.front() = static_cast<int>(dx.rows());
      spec.widths.back() = static_cast<int>(dv.rows());
      const FitResult fit = fit_regressor(dx, dv, spec, options.train,
                                          derive_seed(seed, stream::kImpute, static_cast<std::uint64_t>(missing)));
      filled = fit.model.forward(q);
    }
    for (std::size_t j = 0; j < targets.size(); ++j)
      rows[static_cast<std::size_t>(targets[j])].conditions.set(missing, filled.col(static_cast<Eigen::Index>(j)));
  }
  for (auto& r : rows) r.source = 0;
  return BlockwiseDataset(MissingPattern::Complete, data.block_count(), std::move(rows));
}

// --- Score fields ---------------------------------------------------------

std::vector<Vector> FieldSlice::points() const {
  if (resolution < 2) throw ConfigError("field slice: resolution must be >= 2");
  if (axis_u == axis_v || axis_u < 0 || axis_v < 0 || axis_u >= base.size() || axis_v >= base.size()) {
    throw ConfigError("field slice: axes must be two distinct coordinates of the base point");
  }
  std::vector<Vector> pts;
  for (int i = 0; i < resolution; ++i) {
    for (int j = 0; j < resolution; ++j) {
      Vector p = base;
      p(axis_u) = u_min + (u_max - u_min) * i / (resolution - 1);
      p(axis_v) = v_min + (v_max - v_min) * j / (resolution - 1);
      pts.push_back(std::move(p));
    }
  }
  return pts;
}

double cosine_similarity(const Vector& a, const Vector& b) {
  const double na = a.norm();
  const double nb = b.norm();
  if (na == 0.0 || nb == 0.0) return na == nb ? 1.0 : 0.0;
  return a.dot(b) / (na * nb);
}

FieldComparison score_field_compare(const std::vector<NamedRule>& rules,
                                    const DenoiserModel& denoiser, const ScoreField& oracle,
                                    const FieldSlice& slice, double t) {
  if (!(t > 0.0)) throw ConfigError("score_field_compare: t must be > 0");
  FieldComparison fc;
  fc.points = slice.points();
  for (const auto& p : fc.points) fc.oracle.push_back(oracle(p));
  Matrix grid(denoiser.dim(), static_cast<Eigen::Index>(fc.points.size()));
  for (std::size_t j = 0; j < fc.points.size(); ++j) grid.col(static_cast<Eigen::Index>(j)) = fc.points[j];
  for (const auto& rule : rules) {
    const Matrix s = guided_score(rule.config, denoiser, grid, t);
    std::vector<Vector> field;
    double cos = 0.0, se = 0.0;
    for (std::size_t j = 0; j < fc.points.size(); ++j) {
      field.push_back(s.col(static_cast<Eigen::Index>(j)));
      cos += cosine_similarity(field.back(), fc.oracle[j]);
      se += (field.back() - fc.oracle[j]).squaredNorm();
    }
    const double n = static_cast<double>(fc.points.size());
    fc.names.push_back(rule.name);
    fc.fields.push_back(std::move(field));
    fc.mean_cosine.push_back(cos / n);
    fc.mse.push_back(se / (n * denoiser.dim()));
  }
  return fc;
}

void FieldComparison::write_csv(std::ostream& out, const CsvOptions& options) const {
  if (points.empty()) throw ConfigError("field comparison: nothing to write");
  const auto d = points.front().size();
  std::vector<std::string> cols;
  for (Eigen::Index i = 0; i < d; ++i) cols.push_back("x" + std::to_string(i + 1));
  for (Eigen::Index i = 0; i < d; ++i) cols.push_back("oracle_" + std::to_string(i + 1));
  for (const auto& n : names) {
    for (Eigen::Index i = 0; i < d; ++i) cols.push_back(n + "_" + std::to_string(i + 1));
    cols.push_back(n + "_cosine");
  }
  write_csv_preamble(out, "score_field", 1, cols, options);
  for (std::size_t j = 0; j < points.size(); ++j) {
    std::vector<std::string> row;
    for (Eigen::Index i = 0; i < d; ++i) row.push_back(format_number(points[j](i)));
    for (Eigen::Index i = 0; i < d; ++i) row.push_back(format_number(oracle[j](i)));
    for (std::size_t r = 0; r < names.size(); ++r) {
      for (Eigen::Index i = 0; i < d; ++i) row.push_back(format_number(fields[r][j](i)));
      row.push_back(format_number(cosine_similarity(fields[r][j], oracle[j])));
    }
    write_csv_row(out, row);
  }
}

}  // namespace dguide
