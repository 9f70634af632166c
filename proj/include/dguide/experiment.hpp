#pragma once

// Experiment configuration, the Setting I / II presets, and the repeat
// runners for the main table, the single-vs-aggregated and sample-size
// ablations and the score-field diagnostic.

#include "dguide/eval.hpp"

#include <json.hpp>

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace dguide {

enum class Setting { I, II, Custom };

std::string to_string(Setting s);
Setting parse_setting(const std::string& s);

/// K = 10, d = 5. Setting I: Σ_k = 0.01·I, m_k ~ U[−1,1]⁵. Setting II:
/// Σ_k = I, m_k ~ U[−5,5]⁵. Equal weights.
GaussianMixture preset_mixture(Setting s, std::uint64_t seed);
/// Setting I: A = diag(0.1/i), σ = 0.1. Setting II: a_ii = 0.5, a_ij = 0.25,
/// σ = 1. Blocks: C1 = Y1..2, C2 = Y3..5 for two datasets; C1 = Y1..2,
/// C2 = Y3..4, C3 = Y5 for the three-block patterns.
LinearObservationModel preset_observation(Setting s, MissingPattern pattern);

struct LambdaSet {
  double lambda1 = 0.0;
  double lambda2 = 0.0;
  double lambda3 = 0.0;
};

struct RuleSpec {
  Rule rule = Rule::Uncond;
  std::vector<LambdaSet> grid;
};

struct BaselineSpec {
  ImputeMethod method = ImputeMethod::KNN;
  int k = 5;
  /// CFG scale at sampling time on the joint conditional model.
  double lambda = 1.0;
  double p_non = 0.1;
};

/// Explicit mixture and observation model for Setting::Custom.
struct CustomProblem {
  std::vector<double> weights;
  std::vector<Vector> means;
  std::vector<Matrix> covariances;
  Matrix a;
  double noise_std = 1.0;
  std::vector<ConditionBlock> blocks;
};

enum class MixturePolicy { Redraw, Fixed };

/// Preset epoch budgets: 500 (reference) and 200 (reduced, for CI).
inline constexpr int kPresetEpochs = 500;
inline constexpr int kReducedEpochs = 200;

struct ExperimentConfig {
  std::string name = "experiment";
  Setting setting = Setting::II;
  std::optional<CustomProblem> custom;
  MissingPattern pattern = MissingPattern::TwoDataset;
  std::vector<int> sizes = {10000, 10000};
  int repeats = 20;
  std::uint64_t seed = 1;
  MixturePolicy mixture_policy = MixturePolicy::Redraw;
  int samples = 1000;
  std::vector<RuleSpec> rules;
  std::vector<BaselineSpec> baselines;
  TimeSchedule schedule;
  double sigma_data = 0.5;

  /// Denoiser training. Unset p_non means 0.5·n1/(total rows).
  TrainOptions denoiser_train{kPresetEpochs, 256, 1e-3, 0.87, 0.09, false};
  std::optional<double> p_non;
  bool time_spread_is_variance = false;
  int embedding_dim = 16;
  int denoiser_layers = 3;
  int denoiser_width = 128;

  TrainOptions regressor_train{50, 256, 1e-3, 0.87, 0.09, true};
  int regressor_layers = 2;
  int regressor_width = 128;
  Activation regressor_activation = Activation::SiLU;

  /// Analytic denoiser and predictors instead of trained ones.
  bool analytic = false;
  bool save_checkpoints = false;
  std::string output_dir;
  int workers = 1;
  bool timestamp = true;

  void validate() const;
};

ExperimentConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const ExperimentConfig& c);
ExperimentConfig load_config(const std::string& path);

/// Preset guidance scales for the four double rules of a setting.
std::vector<RuleSpec> preset_rules(Setting s);

/// Mixture, observation model and condition draw of one repeat.
struct Problem {
  GaussianMixture mixture;
  LinearObservationModel observation;
};

Problem make_problem(const ExperimentConfig& c, int repeat);

std::uint64_t repeat_seed(const ExperimentConfig& c, int repeat);

/// The conditioning draw of a repeat: x* from the prior, every block observed.
Conditions draw_targets(const Problem& p, std::uint64_t seed);

/// Problem file: the mixture, observation model and (optionally) the target
/// conditions, in the same layout as the config's 'custom' section.
nlohmann::json problem_to_json(const Problem& p, const Conditions& targets);
Problem problem_from_json(const nlohmann::json& j, Conditions* targets = nullptr);

/// Everything a repeat trains.
struct TrainedModels {
  DenoiserPtr denoiser;
  std::array<PredictorPtr, kMaxBlocks> predictors;
  int denoiser_best_epoch = 0;
  double denoiser_validation_loss = 0.0;
};

/// Trains the denoiser and the regressors a pattern needs on `data`.
TrainedModels train_models(const ExperimentConfig& c, const BlockwiseDataset& data,
                           std::uint64_t seed);
TrainedModels analytic_models(const Problem& p);

/// Regressor f̂_b trained on the rows carrying block b.
PredictorPtr train_regressor(const ExperimentConfig& c, const BlockwiseDataset& data, int block,
                             std::uint64_t seed);

/// Exposes a denoiser trained on the joint (C1, C2) condition as a model with
/// a single C1 input: C1 present means both blocks present.
class JointConditionDenoiser final : public DenoiserModel {
 public:
  JointConditionDenoiser(DenoiserPtr inner, Vector c2);
  int dim() const override { return inner_->dim(); }
  bool consumes(int block) const override { return block == 0; }
  Matrix denoise(const Matrix& x, double t, const Conditions& c) const override;
  Matrix denoise_vjp(const Matrix& x, double t, const Conditions& c,
                     const Matrix& cotangents) const override;

 private:
  Conditions translate(const Conditions& c) const;
  DenoiserPtr inner_;
  Vector c2_;
};

struct RunRow {
  int repeat = 0;
  std::uint64_t seed = 0;
  std::string method;  // rule name or baseline name
  LambdaSet lambdas;
  double w2 = 0.0;
  int failures = 0;
};

struct ExperimentResult {
  std::vector<RunRow> rows;
  std::vector<MetricReport> summaries;

  /// Per-repeat W2 values of one method / λ combination, in repeat order.
  std::vector<double> values(const std::string& method, const LambdaSet& l) const;
  std::vector<double> values(const std::string& method) const;
};

std::string fingerprint(const ExperimentConfig& c, const std::string& method, const LambdaSet& l);
std::string method_label(const std::string& method, const LambdaSet& l);

using ProgressCallback = std::function<void(const std::string&)>;

/// Runs every repeat (in parallel over `workers`), writing rows.csv and
/// summary.csv to output_dir when set. Rows are flushed in repeat order as
/// repeats complete.
ExperimentResult run_experiment(const ExperimentConfig& c, const ProgressCallback& progress = {});

/// One repeat of run_experiment.
std::vector<RunRow> run_repeat(const ExperimentConfig& c, int repeat,
                               const ProgressCallback& progress = {});

/// Per rule: W2 of models trained on D1 alone (its C2 revealed for f̂2) and on
/// D1 ∪ D2, with matched seeds. Writes comparison.csv when output_dir is set.
struct ArmComparison {
  std::string method;
  std::vector<double> single;
  std::vector<double> aggregated;
  PairedDifference difference;  // single − aggregated
};
std::vector<ArmComparison> run_single_vs_aggregated(const ExperimentConfig& c,
                                                    const ProgressCallback& progress = {});

/// One summary per n1/(n1+n2) ratio with n1 + n2 fixed.
struct RatioSummary {
  double ratio = 0.0;
  std::vector<MetricReport> summaries;
};
std::vector<RatioSummary> run_varying_n(const ExperimentConfig& c, const std::vector<double>& ratios,
                                        const ProgressCallback& progress = {});

struct FieldConfig {
  Setting setting = Setting::II;
  std::uint64_t seed = 1;
  double t = 1.0;
  int axis_u = 0;
  int axis_v = 1;
  /// Half-width of the slice around the exact posterior mean.
  double half_width = 1.0;
  int resolution = 20;
  /// Empty means DMDG and DMIDG at λ1 = λ2 = 1/(2σ²).
  std::vector<std::pair<Rule, LambdaSet>> rules;
};

FieldConfig field_config_from_json(const nlohmann::json& j);

/// Analytic denoiser and predictors; the oracle is the exact conditional
/// score given (C1, C2) drawn from the model.
FieldComparison render_field(const FieldConfig& f);

}  // namespace dguide
