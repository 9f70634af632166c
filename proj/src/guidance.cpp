#include "dguide/guidance.hpp"

#include "dguide/rng.hpp"

#include <algorithm>
#include <cmath>

namespace dguide {

void TimeSchedule::validate() const {
  if (!(t_min > 0.0) || !(t_max > t_min)) throw ConfigError("schedule: need 0 < t_min < t_max");
  if (!(rho > 0.0)) throw ConfigError("schedule: rho must be > 0");
  if (steps < 2) throw ConfigError("schedule: need at least 2 steps");
}

std::vector<double> TimeSchedule::grid() const {
  validate();
  std::vector<double> t(static_cast<std::size_t>(steps) + 1);
  const double a = std::pow(t_max, 1.0 / rho);
  const double b = std::pow(t_min, 1.0 / rho);
  for (int i = 0; i <= steps; ++i) {
    const double frac = static_cast<double>(steps - i) / steps;
    t[static_cast<std::size_t>(i)] = std::pow(a + frac * (b - a), rho);
  }
  t.front() = t_min;
  t.back() = t_max;
  return t;
}

namespace {

struct RuleName {
  Rule rule;
  const char* name;
};

constexpr RuleName kRuleNames[] = {
    {Rule::Uncond, "UNCOND"},   {Rule::CG, "CG"},           {Rule::DPS, "DPS"},
    {Rule::CFG, "CFG"},         {Rule::DMDG, "DMDG"},       {Rule::DMHG, "DMHG"},
    {Rule::DMIDG, "DMIDG"},     {Rule::DMIHG, "DMIHG"},     {Rule::DMDG_I, "DMDG_I"},
    {Rule::DMHG_I, "DMHG_I"},   {Rule::DMIDG_I, "DMIDG_I"}, {Rule::DMIHG_I, "DMIHG_I"},
    {Rule::DMTG, "DMTG"},       {Rule::DMTHG, "DMTHG"},     {Rule::DMITG, "DMITG"},
    {Rule::DMITHG, "DMITHG"},
};

}  // namespace

std::string to_string(Rule r) {
  for (const auto& n : kRuleNames)
    if (n.rule == r) return n.name;
  return "?";
}

Rule parse_rule(const std::string& s) {
  std::string key = s;
  std::transform(key.begin(), key.end(), key.begin(), [](unsigned char c) {
    return c == '-' ? '_' : static_cast<char>(std::toupper(c));
  });
  for (const auto& n : kRuleNames)
    if (key == n.name) return n.rule;
  throw ConfigError("unknown guidance rule '" + s + "'");
}

const std::vector<Rule>& all_rules() {
  static const std::vector<Rule> rules = [] {
    std::vector<Rule> r;
    for (const auto& n : kRuleNames) r.push_back(n.rule);
    return r;
  }();
  return rules;
}

RuleTraits traits(Rule r) {
  RuleTraits t;
  switch (r) {
    case Rule::Uncond:
    case Rule::CG:
    case Rule::DPS:
      break;
    case Rule::CFG:
      t.uses_cfg = true;
      break;
    case Rule::DMDG:
      t = {false, true, true, false, false};
      break;
    case Rule::DMHG:
      t = {true, true, true, false, false};
      break;
    case Rule::DMIDG:
      t = {false, true, false, false, false};
      break;
    case Rule::DMIHG:
      t = {true, true, false, false, false};
      break;
    case Rule::DMDG_I:
      t = {false, true, true, true, false};
      break;
    case Rule::DMHG_I:
      t = {true, true, true, true, false};
      break;
    case Rule::DMIDG_I:
      t = {false, true, false, true, false};
      break;
    case Rule::DMIHG_I:
      t = {true, true, false, true, false};
      break;
    case Rule::DMTG:
      t = {false, true, true, false, true};
      break;
    case Rule::DMTHG:
      t = {true, true, true, false, true};
      break;
    case Rule::DMITG:
      t = {false, true, false, false, true};
      break;
    case Rule::DMITHG:
      t = {true, true, false, false, true};
      break;
  }
  return t;
}

void GuidanceConfig::validate(const DenoiserModel& denoiser) const {
  for (double l : {lambda1, lambda2, lambda3}) {
    if (!std::isfinite(l) || l < 0.0) throw ConfigError("guidance: scales must be finite and >= 0");
  }
  if (!(sigma_data > 0.0)) throw ConfigError("guidance: sigma_data must be > 0");
  if (rule == Rule::Uncond) return;
  const RuleTraits tr = traits(rule);
  const std::string name = to_string(rule);
  auto need_target = [&](int b) {
    if (!targets.has(b)) {
      throw ConfigError("guidance: rule " + name + " needs a target for C" + std::to_string(b + 1));
    }
  };
  auto need_predictor = [&](int b) {
    need_target(b);
    if (!predictors[b]) {
      throw ConfigError("guidance: rule " + name + " needs a predictor for C" + std::to_string(b + 1));
    }
    if (predictors[b]->input_dim() != denoiser.dim() ||
        predictors[b]->output_dim() != targets.at(b).size()) {
      throw ConfigError("guidance: predictor for C" + std::to_string(b + 1) +
                        " does not match the state or target dimension");
    }
  };
  auto need_input = [&](int b) {
    need_target(b);
    if (!denoiser.consumes(b)) {
      throw ConfigError("guidance: rule " + name + " needs a denoiser conditioned on C" +
                        std::to_string(b + 1));
    }
  };
  if (tr.uses_cfg) {
    need_input(0);
  } else {
    need_predictor(0);
  }
  if (tr.has_second) need_predictor(1);
  if (tr.shares_c3) need_input(2);
  if (tr.has_third) need_predictor(2);
}

namespace {

// Everything one guided-score evaluation needs, computed once per batch.
class Evaluator {
 public:
  Evaluator(const GuidanceConfig& config, const DenoiserModel& denoiser, double t,
            GuidanceStats* stats)
      : config_(config), denoiser_(denoiser), t_(t), stats_(stats), tr_(traits(config.rule)) {
    if (tr_.shares_c3) base_.set(2, config.targets.at(2));
    with_c1_ = base_;
    if (config.targets.has(0)) with_c1_.set(0, config.targets.at(0));
  }

  const RuleTraits& rule_traits() const { return tr_; }
  const Conditions& base() const { return base_; }
  const Conditions& with_c1() const { return with_c1_; }

  Matrix denoise(const Matrix& x, const Conditions& c) const {
    if (stats_) ++stats_->denoiser_calls;
    return denoiser_.denoise(x, t_, c);
  }

  Matrix vjp(const Matrix& x, const Conditions& c, const Matrix& cot) const {
    if (stats_) ++stats_->vjp_calls;
    return denoiser_.denoise_vjp(x, t_, c, cot);
  }

  /// Cotangent 2(f̂(est) − c) pulled back through f̂.
  Matrix predictor_pullback(int block, const Matrix& est) const {
    const Predictor& f = *config_.predictors[block];
    const Matrix residual = f.value(est).colwise() - config_.targets.at(block);
    return f.vjp(est, 2.0 * residual);
  }

  /// ∇_x ‖c − f̂(D(x; cond))‖² given est = D(x; cond).
  Matrix term_gradient(int block, const Matrix& x, const Conditions& cond, const Matrix& est) const {
    return vjp(x, cond, predictor_pullback(block, est));
  }

  Matrix first_gradient(const Matrix& x) const {
    return term_gradient(0, x, base_, denoise(x, base_));
  }

  Matrix second_gradient(const Matrix& x) const {
    const Conditions& cond = tr_.dependent ? with_c1_ : base_;
    return term_gradient(1, x, cond, denoise(x, cond));
  }

  /// Hessian-vector products of a gradient field by central differences,
  /// one direction per column.
  template <typename Grad>
  Matrix hessian_product(const Grad& grad, const Matrix& x, const Matrix& v) const {
    Matrix steps(x.rows(), x.cols());
    Vector h(x.cols());
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      const double nv = v.col(j).norm();
      h(j) = nv > 0.0 ? 1e-5 * std::max(1.0, x.col(j).norm()) / nv : 0.0;
      steps.col(j) = h(j) * v.col(j);
    }
    const Matrix diff = grad(x + steps) - grad(x - steps);
    Matrix out(x.rows(), x.cols());
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      out.col(j) = h(j) > 0.0 ? Vector(diff.col(j) / (2.0 * h(j))) : Vector::Zero(x.rows());
    }
    return out;
  }

  double t() const { return t_; }
  const GuidanceConfig& config() const { return config_; }

 private:
  const GuidanceConfig& config_;
  const DenoiserModel& denoiser_;
  double t_;
  GuidanceStats* stats_;
  RuleTraits tr_;
  Conditions base_;
  Conditions with_c1_;
};

struct Combined {
  Matrix value;
  Matrix d0, d1, g1, g2;
};

// X̂ together with the pieces it was built from.
Combined combine(const Evaluator& ev, const Matrix& x) {
  const auto& cfg = ev.config();
  const auto& tr = ev.rule_traits();
  const double t2 = ev.t() * ev.t();
  Combined c;
  c.d0 = ev.denoise(x, ev.base());
  if (!tr.dependent) {
    c.value = c.d0;
    return c;
  }
  c.d1 = ev.denoise(x, ev.with_c1());
  c.g2 = ev.term_gradient(1, x, ev.with_c1(), c.d1);
  if (tr.uses_cfg) {
    c.value = (1.0 - cfg.lambda1) * c.d0 + cfg.lambda1 * c.d1 - cfg.lambda2 * t2 * c.g2;
  } else {
    c.g1 = ev.term_gradient(0, x, ev.base(), c.d0);
    c.value = c.d0 - cfg.lambda1 * t2 * c.g1 - cfg.lambda2 * t2 * c.g2;
  }
  return c;
}

// ∇_x ‖c3 − f̂3(X̂(x))‖².
Matrix third_gradient(const Evaluator& ev, const Matrix& x) {
  const auto& cfg = ev.config();
  const auto& tr = ev.rule_traits();
  const double t2 = ev.t() * ev.t();
  const Combined c = combine(ev, x);
  const Matrix v = ev.predictor_pullback(2, c.value);
  if (!tr.dependent) return ev.vjp(x, ev.base(), v);
  Matrix out;
  if (tr.uses_cfg) {
    out = (1.0 - cfg.lambda1) * ev.vjp(x, ev.base(), v) + cfg.lambda1 * ev.vjp(x, ev.with_c1(), v);
  } else {
    out = ev.vjp(x, ev.base(), v);
    if (cfg.lambda1 != 0.0) {
      out -= cfg.lambda1 * t2 *
             ev.hessian_product([&](const Matrix& y) { return ev.first_gradient(y); }, x, v);
    }
  }
  if (cfg.lambda2 != 0.0) {
    out -= cfg.lambda2 * t2 *
           ev.hessian_product([&](const Matrix& y) { return ev.second_gradient(y); }, x, v);
  }
  return out;
}

}  // namespace

Matrix guided_score(const GuidanceConfig& config, const DenoiserModel& denoiser, const Matrix& x,
                    double t, GuidanceStats* stats) {
  if (!(t > 0.0)) throw ConfigError("guided_score: t must be > 0");
  config.validate(denoiser);
  if (stats) ++stats->score_evaluations;
  const Evaluator ev(config, denoiser, t, stats);
  const RuleTraits& tr = ev.rule_traits();
  const double t2 = t * t;

  const Matrix d0 = ev.denoise(x, ev.base());
  const Matrix s0 = (d0 - x) / t2;
  if (config.rule == Rule::Uncond) return s0;

  Matrix score;
  Matrix d1;
  if (tr.uses_cfg) {
    d1 = ev.denoise(x, ev.with_c1());
    score = (1.0 - config.lambda1) * s0 + config.lambda1 * ((d1 - x) / t2);
  } else {
    score = s0;
    if (config.lambda1 != 0.0) score -= config.lambda1 * ev.term_gradient(0, x, ev.base(), d0);
  }
  if (tr.has_second && config.lambda2 != 0.0) {
    if (tr.dependent) {
      if (d1.size() == 0) d1 = ev.denoise(x, ev.with_c1());
      score -= config.lambda2 * ev.term_gradient(1, x, ev.with_c1(), d1);
    } else {
      score -= config.lambda2 * ev.term_gradient(1, x, ev.base(), d0);
    }
  }
  if (tr.has_third && config.lambda3 != 0.0 && t <= config.sigma_data) {
    score -= config.lambda3 * third_gradient(ev, x);
  }
  return score;
}

Vector guided_score(const GuidanceConfig& config, const DenoiserModel& denoiser, const Vector& x,
                    double t) {
  return guided_score(config, denoiser, Matrix(x), t).col(0);
}

Matrix tweedie_combined(const GuidanceConfig& config, const DenoiserModel& denoiser,
                        const Matrix& x, double t) {
  if (!traits(config.rule).has_third) {
    throw ConfigError("tweedie_combined: rule " + to_string(config.rule) + " is not a triple rule");
  }
  if (!(t > 0.0)) throw ConfigError("tweedie_combined: t must be > 0");
  config.validate(denoiser);
  const Evaluator ev(config, denoiser, t, nullptr);
  return combine(ev, x).value;
}

namespace {

SampleResult integrate(const GuidanceConfig& config, const DenoiserModel& denoiser,
                       const std::vector<double>& times, Matrix x, bool record) {
  SampleResult result;
  const auto n = static_cast<int>(x.cols());
  std::vector<int> active(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) active[static_cast<std::size_t>(i)] = i;
  Matrix full = x;
  if (record) result.trajectory.push_back(full);

  const int steps = static_cast<int>(times.size()) - 1;
  for (int k = 0; k < steps && !active.empty(); ++k) {
    const double t_hi = times[static_cast<std::size_t>(k)];
    const double t_lo = times[static_cast<std::size_t>(k) + 1];
    const Matrix d = guided_score(config, denoiser, x, t_hi, &result.stats);
    x = x - (t_lo - t_hi) * t_hi * d;

    std::vector<int> survivors;
    std::vector<Eigen::Index> cols;
    for (std::size_t j = 0; j < active.size(); ++j) {
      if (x.col(static_cast<Eigen::Index>(j)).allFinite()) {
        survivors.push_back(active[j]);
        cols.push_back(static_cast<Eigen::Index>(j));
      } else {
        result.failures.push_back({active[j], k + 1, t_lo});
      }
    }
    if (cols.size() != active.size()) {
      Matrix kept(x.rows(), static_cast<Eigen::Index>(cols.size()));
      for (std::size_t j = 0; j < cols.size(); ++j) kept.col(static_cast<Eigen::Index>(j)) = x.col(cols[j]);
      x = std::move(kept);
    }
    active = std::move(survivors);
    if (record) {
      full.setConstant(std::numeric_limits<double>::quiet_NaN());
      for (std::size_t j = 0; j < active.size(); ++j) full.col(active[j]) = x.col(static_cast<Eigen::Index>(j));
      result.trajectory.push_back(full);
    }
  }
  result.samples = std::move(x);
  result.kept = std::move(active);
  result.score_evaluations = steps;
  std::sort(result.failures.begin(), result.failures.end(),
            [](const TrajectoryFailure& a, const TrajectoryFailure& b) { return a.index < b.index; });
  return result;
}

}  // namespace

SampleResult sample(const GuidanceConfig& config, const DenoiserModel& denoiser,
                    const TimeSchedule& schedule, int n, std::uint64_t seed,
                    bool record_trajectory) {
  if (n < 1) throw ConfigError("sample: n must be >= 1");
  config.validate(denoiser);
  std::vector<double> times = schedule.grid();
  std::reverse(times.begin(), times.end());
  Engine engine = make_engine(seed);
  Matrix x = schedule.t_max * standard_normal(engine, denoiser.dim(), n);
  return integrate(config, denoiser, times, std::move(x), record_trajectory);
}

SampleResult partial_diffusion(const GuidanceConfig& config, const DenoiserModel& denoiser,
                               const TimeSchedule& schedule, const Matrix& sources,
                               double t_start, std::uint64_t seed) {
  schedule.validate();
  if (!(t_start > schedule.t_min && t_start <= schedule.t_max)) {
    throw ConfigError("partial_diffusion: t_start must lie in (t_min, t_max]");
  }
  if (sources.rows() != denoiser.dim() || sources.cols() < 1) {
    throw ConfigError("partial_diffusion: sources must be d × n with n >= 1");
  }
  config.validate(denoiser);
  std::vector<double> times = {t_start};
  const std::vector<double> grid = schedule.grid();
  for (auto it = grid.rbegin(); it != grid.rend(); ++it)
    if (*it < t_start) times.push_back(*it);
  Engine engine = make_engine(seed);
  Matrix x = sources + t_start * standard_normal(engine, denoiser.dim(), static_cast<int>(sources.cols()));
  return integrate(config, denoiser, times, std::move(x), false);
}

}  // namespace dguide
