#pragma once

// Reverse-process sampling with explicit Euler steps on the probability-flow
// ODE and every guidance rule: classifier and classifier-free guidance, the
// double / hybrid rules, their independent variants, the missing-type-I
// variants and the triple rules.

#include "dguide/diffusion.hpp"
#include "dguide/predictor.hpp"

#include <array>
#include <string>
#include <vector>

namespace dguide {

struct TimeSchedule {
  double t_min = 0.002;
  double t_max = 80.0;
  double rho = 7.0;
  int steps = 18;

  void validate() const;
  /// t_0 = t_min, ..., t_N = t_max (ascending index).
  std::vector<double> grid() const;
};

enum class Rule {
  Uncond,
  CG,
  DPS,
  CFG,
  DMDG,
  DMHG,
  DMIDG,
  DMIHG,
  DMDG_I,
  DMHG_I,
  DMIDG_I,
  DMIHG_I,
  DMTG,
  DMTHG,
  DMITG,
  DMITHG,
};

std::string to_string(Rule r);
Rule parse_rule(const std::string& s);
const std::vector<Rule>& all_rules();

/// Structural facts about a rule.
struct RuleTraits {
  bool uses_cfg = false;         // (1−λ1)s∅ + λ1 s_c1 rather than s∅ − λ1∇term1
  bool has_second = false;       // λ2 term on C2
  bool dependent = false;        // λ2 term evaluated at the C1-conditioned estimate
  bool shares_c3 = false;        // C3 is a denoiser input on both branches
  bool has_third = false;        // λ3 term on C3 at a Tweedie-combined estimate
};
RuleTraits traits(Rule r);

struct GuidanceConfig {
  Rule rule = Rule::Uncond;
  double lambda1 = 0.0;
  double lambda2 = 0.0;
  double lambda3 = 0.0;
  /// λ3 guidance is applied only while t ≤ sigma_data.
  double sigma_data = 0.5;
  Conditions targets;
  std::array<PredictorPtr, kMaxBlocks> predictors;

  /// Throws ConfigError if the rule needs a target, predictor or denoiser
  /// input that is missing, or a scale is negative or non-finite.
  void validate(const DenoiserModel& denoiser) const;
};

struct GuidanceStats {
  long score_evaluations = 0;
  long denoiser_calls = 0;  // batched forward evaluations
  long vjp_calls = 0;
};

/// The rule's conditional score estimate at every column of x.
Matrix guided_score(const GuidanceConfig& config, const DenoiserModel& denoiser,
                    const Matrix& x, double t, GuidanceStats* stats = nullptr);
Vector guided_score(const GuidanceConfig& config, const DenoiserModel& denoiser,
                    const Vector& x, double t);

/// Tweedie-combined clean estimate used by the triple rules: for the double
/// form X0|t − λ1t²∇term1 − λ2t²∇term2, for the hybrid form
/// (1−λ1)X0|t + λ1X0|t,c1 − λ2t²∇term2, and X0|t for the independent forms.
Matrix tweedie_combined(const GuidanceConfig& config, const DenoiserModel& denoiser,
                        const Matrix& x, double t);

struct TrajectoryFailure {
  int index = 0;
  int step = 0;  // Euler step that produced the non-finite state, 1-based
  double t = 0.0;
};

struct SampleResult {
  /// Endpoints of the trajectories that stayed finite, in index order.
  Matrix samples;
  std::vector<int> kept;
  std::vector<TrajectoryFailure> failures;
  /// Score evaluations per trajectory.
  int score_evaluations = 0;
  GuidanceStats stats;
  /// States after every step (including the initial draw) when requested.
  std::vector<Matrix> trajectory;
};

/// Draws X_{t_N} ~ N(0, t_N² I) and applies
/// x_i = x_{i+1} − (t_i − t_{i+1})·t_{i+1}·d_{i+1} with d the guided score.
SampleResult sample(const GuidanceConfig& config, const DenoiserModel& denoiser,
                    const TimeSchedule& schedule, int n, std::uint64_t seed,
                    bool record_trajectory = false);

/// Noises each source column to t_start, then integrates from t_start over the
/// schedule times below it.
SampleResult partial_diffusion(const GuidanceConfig& config, const DenoiserModel& denoiser,
                               const TimeSchedule& schedule, const Matrix& sources,
                               double t_start, std::uint64_t seed);

}  // namespace dguide
