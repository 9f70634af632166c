#pragma once

// Metrics, bound certificates, imputation baselines and score-field
// comparisons.

#include "dguide/csv.hpp"
#include "dguide/dataset.hpp"
#include "dguide/diffusion.hpp"
#include "dguide/guidance.hpp"
#include "dguide/predictor.hpp"
#include "dguide/wasserstein.hpp"

#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace dguide {

// --- Metric reports -------------------------------------------------------

struct MetricReport {
  std::string metric;
  std::string fingerprint;
  std::vector<double> values;
  double mean = 0.0;
  /// Sample standard deviation; NaN with fewer than two values.
  double std = 0.0;

  bool has_spread() const { return values.size() >= 2; }
};

MetricReport summarize(std::string metric, std::string fingerprint, std::vector<double> values);

/// One row per repeat: metric, fingerprint, repeat, value.
void write_report_rows(std::ostream& out, const std::vector<MetricReport>& reports,
                       const CsvOptions& options);
/// One row per report: metric, fingerprint, repeats, mean, std, flag.
void write_report_summary(std::ostream& out, const std::vector<MetricReport>& reports,
                          const CsvOptions& options);

/// Mean and standard error of paired differences a_i − b_i.
struct PairedDifference {
  double mean = 0.0;
  double standard_error = 0.0;
};
PairedDifference paired_difference(const std::vector<double>& a, const std::vector<double>& b);

// --- Single block certificate ---------------------------------------------

struct BoundCertificate {
  /// "C1": |p(C1|X_t) − p(C1|X0|t)|², "C2": |p(C2|X_t,C1) − p(C2|X0|t,C1)|².
  std::string inequality;
  Vector x_t;
  double t = 0.0;
  Vector c1;
  Vector c2;
  double lambda = 0.0;
  double lhs = 0.0;
  double term_a = 0.0;  // m/(√(2π)σ)·exp(−1/(2σ²)), m = block dimension
  double term_b = 0.0;  // 2·max‖∇f‖² + max‖∇f̂‖²
  double term_c = 0.0;  // E‖X0 − E[X0|·]‖²
  double term_d = 0.0;  // ‖E[X0|·] − X0|t(·)‖²
  double term_e = 0.0;  // E‖f(X0) − f̂(X0)‖²
  double term_f = 0.0;  // U·(σ² − 1/(2λ))²
  double gradient_bound = 0.0;  // max‖∇f̂‖² used in b) and d)
  double rhs = 0.0;
  bool holds = false;
};

inline constexpr double kCertificateTolerance = 1e-9;

struct Theorem1Options {
  int points = 500;
  /// Evaluation times are log-uniform on [t_low, t_high].
  double t_low = 0.002;
  double t_high = 80.0;
  int posterior_draws = 2000;
  double lambda1 = 1.5;
  double lambda2 = 1.5;
};

/// max over v in [lo, hi] of |∂/∂v N(value; mean, v·I)|², by a coarse scan
/// refined with golden-section search.
double max_variance_derivative_sq(const Vector& value, const Vector& mean, double lo, double hi);

/// Certifies both inequalities at `options.points` states drawn from the
/// model: x0 from the prior, (c1, c2) observed from x0, x_t = x0 + tε.
/// Regressors must be ReLU networks (their gradient bound is M^L) or the
/// noiseless analytic maps. Blocks 0 and 1 play C1 and C2.
std::vector<BoundCertificate> theorem1_certify(const GaussianMixture& gm,
                                               const LinearObservationModel& model,
                                               const Predictor& f1, const Predictor& f2,
                                               const DenoiserModel& denoiser,
                                               const Theorem1Options& options, std::uint64_t seed);

/// max over z of ‖∇f̂(z)‖²: the squared M^L bound for a ReLU network, the
/// squared spectral norm for a linear map. Throws ConfigError otherwise.
double predictor_gradient_bound(const Predictor& f);

void write_certificates(std::ostream& out, const std::vector<BoundCertificate>& certs,
                        const CsvOptions& options);

// --- Distribution shift certificate -----------------------------------------

struct Box {
  Vector lower;
  Vector upper;
  bool contains(const Vector& x) const;
};

struct Theorem2Options {
  Box support;
  int grid_resolution = 101;  // points per axis
  /// Below this grid-minimum density the precondition is unverifiable.
  double min_density = 1e-8;
  int draws = 200000;
};

struct Theorem2Report {
  bool precondition_verified = false;
  std::string note;
  double delta = 0.0;         // grid sup |p1 − p2|
  double density_floor = 0.0; // grid min over both densities
  double risk_source = 0.0;   // R under the regressor's training law p1
  double risk_shifted = 0.0;  // R under p2
  double se_source = 0.0;
  double se_shifted = 0.0;
  double factor = 0.0;        // exp(δ/p̲)
  double bound = 0.0;         // R1·exp(δ/p̲) + 3·SE
  bool holds = false;
};

/// Both mixtures are truncated to the support box and renormalized there.
/// Risks use squared error against C = A_b·X0 + noise with the noise
/// expectation taken analytically.
Theorem2Report theorem2_certify(const GaussianMixture& gm1, const GaussianMixture& gm2,
                                const LinearObservationModel& model, int block,
                                const Predictor& regressor, const Theorem2Options& options,
                                std::uint64_t seed);

// --- Success rate ---------------------------------------------------------

struct IntervalPredicate {
  PredictorPtr f;  // noiseless map to the condition block
  Vector lower;
  Vector upper;
};

/// Fraction of columns whose f-values lie in every closed interval.
double success_rate(const Matrix& samples, const std::vector<IntervalPredicate>& predicates);

// --- Imputation -----------------------------------------------------------

enum class ImputeMethod { Regressor, KNN };

struct ImputeOptions {
  ImputeMethod method = ImputeMethod::KNN;
  int k = 5;
  /// Regressor method: used instead of training when set (index = block).
  std::array<PredictorPtr, kMaxBlocks> predictors;
  MlpSpec regressor_spec = MlpSpec::uniform(1, 1, 2, 128, Activation::SiLU);
  TrainOptions train;
};

/// Fills C2 on D1 rows and C1 on D2 rows of a two-dataset table and returns a
/// Complete dataset.
BlockwiseDataset impute_and_complete(const BlockwiseDataset& data, const ImputeOptions& options,
                                     std::uint64_t seed);

/// Mean condition value of the k nearest donors (Euclidean on x0) per query.
Matrix knn_average(const Matrix& donor_x, const Matrix& donor_values, const Matrix& queries, int k);

// --- Score fields ---------------------------------------------------------

struct FieldSlice {
  Vector base;     // fixed coordinates
  int axis_u = 0;
  int axis_v = 1;
  double u_min = -1.0, u_max = 1.0;
  double v_min = -1.0, v_max = 1.0;
  int resolution = 20;

  std::vector<Vector> points() const;
};

struct NamedRule {
  std::string name;
  GuidanceConfig config;
};

struct FieldComparison {
  std::vector<Vector> points;
  std::vector<Vector> oracle;
  std::vector<std::string> names;
  std::vector<std::vector<Vector>> fields;  // per rule, per point
  std::vector<double> mean_cosine;          // per rule
  std::vector<double> mse;                  // per rule, mean per-coordinate squared error

  void write_csv(std::ostream& out, const CsvOptions& options) const;
};

using ScoreField = std::function<Vector(const Vector&)>;

/// Evaluates each rule's guided score and the oracle on the slice at time t.
FieldComparison score_field_compare(const std::vector<NamedRule>& rules,
                                    const DenoiserModel& denoiser, const ScoreField& oracle,
                                    const FieldSlice& slice, double t);

double cosine_similarity(const Vector& a, const Vector& b);

}  // namespace dguide
