#include "dguide/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

namespace dguide {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kPresetComponents = 10;
constexpr int kPresetDim = 5;

double uniform01(Engine& e) { return static_cast<double>(e() >> 11) * 0x1.0p-53; }

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char ch) { return std::tolower(ch); });
  return s;
}

std::vector<ConditionBlock> preset_blocks(MissingPattern pattern) {
  if (pattern == MissingPattern::TwoDataset) {
    return {{"C1", {0, 1}, std::nullopt}, {"C2", {2, 3, 4}, std::nullopt}};
  }
  if (pattern == MissingPattern::Complete) {
    throw ConfigError("preset: the complete pattern has no preset block layout");
  }
  return {{"C1", {0, 1}, std::nullopt}, {"C2", {2, 3}, std::nullopt}, {"C3", {4}, std::nullopt}};
}

}  // namespace

std::string to_string(Setting s) {
  switch (s) {
    case Setting::I: return "I";
    case Setting::II: return "II";
    case Setting::Custom: return "custom";
  }
  return "?";
}

Setting parse_setting(const std::string& s) {
  const std::string l = lower(s);
  if (l == "i" || l == "setting_i" || l == "settingi" || l == "1") return Setting::I;
  if (l == "ii" || l == "setting_ii" || l == "settingii" || l == "2") return Setting::II;
  if (l == "custom") return Setting::Custom;
  throw ConfigError("unknown setting '" + s + "' (expected I, II or custom)");
}

GaussianMixture preset_mixture(Setting s, std::uint64_t seed) {
  if (s == Setting::Custom) throw ConfigError("preset_mixture: custom settings have no preset");
  const double half_range = s == Setting::I ? 1.0 : 5.0;
  const double var = s == Setting::I ? 0.01 : 1.0;
  Engine engine = make_engine(seed);
  std::vector<Vector> means;
  std::vector<Matrix> covs;
  for (int k = 0; k < kPresetComponents; ++k) {
    Vector m(kPresetDim);
    for (int i = 0; i < kPresetDim; ++i) m(i) = -half_range + 2.0 * half_range * uniform01(engine);
    means.push_back(m);
    covs.push_back(var * Matrix::Identity(kPresetDim, kPresetDim));
  }
  return GaussianMixture(std::vector<double>(kPresetComponents, 1.0 / kPresetComponents),
                         std::move(means), std::move(covs));
}

LinearObservationModel preset_observation(Setting s, MissingPattern pattern) {
  if (s == Setting::Custom) throw ConfigError("preset_observation: custom settings have no preset");
  Matrix a(kPresetDim, kPresetDim);
  double sigma = 0.0;
  if (s == Setting::I) {
    a.setZero();
    for (int i = 0; i < kPresetDim; ++i) a(i, i) = 0.1 / (i + 1);
    sigma = 0.1;
  } else {
    a.setConstant(0.25);
    a.diagonal().setConstant(0.5);
    sigma = 1.0;
  }
  return LinearObservationModel(a, sigma, preset_blocks(pattern));
}

// --- Configuration --------------------------------------------------------

void ExperimentConfig::validate() const {
  if (setting == Setting::Custom && !custom) throw ConfigError("config: custom setting needs a 'custom' section");
  if (pattern == MissingPattern::Complete) throw ConfigError("config: pattern must be two_dataset, type_i or type_ii");
  if (static_cast<int>(sizes.size()) != source_count(pattern)) {
    throw ConfigError("config: pattern " + to_string(pattern) + " needs " +
                      std::to_string(source_count(pattern)) + " sizes");
  }
  for (int n : sizes) {
    if (n < 10) throw ConfigError("config: every dataset needs at least 10 rows");
  }
  if (repeats < 1) throw ConfigError("config: repeats must be >= 1");
  if (samples < 2) throw ConfigError("config: samples must be >= 2");
  if (rules.empty() && baselines.empty()) throw ConfigError("config: no rules or baselines to run");
  for (const auto& r : rules) {
    if (r.grid.empty()) throw ConfigError("config: rule " + to_string(r.rule) + " has an empty lambda grid");
  }
  if (!baselines.empty() && pattern != MissingPattern::TwoDataset) {
    throw ConfigError("config: imputation baselines need the two_dataset pattern");
  }
  for (const auto& b : baselines) {
    if (b.k < 1) throw ConfigError("config: baseline k must be >= 1");
    if (!(b.p_non >= 0.0 && b.p_non < 1.0)) throw ConfigError("config: baseline p_non must be in [0, 1)");
    if (!(b.lambda >= 0.0) || !std::isfinite(b.lambda)) throw ConfigError("config: baseline lambda must be finite and >= 0");
  }
  if (p_non && !(*p_non >= 0.0 && *p_non < 1.0)) throw ConfigError("config: p_non must be in [0, 1)");
  schedule.validate();
  if (denoiser_train.epochs < 1 || regressor_train.epochs < 1) throw ConfigError("config: epochs must be >= 1");
  if (workers < 1) throw ConfigError("config: workers must be >= 1");
}

namespace {

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError("config: '" + where + "' must be an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!allowed.count(it.key())) throw ConfigError("config: unknown key '" + it.key() + "' in " + where);
  }
}

template <class T>
void read(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: bad value for '") + key + "': " + e.what());
  }
}

Vector to_vector(const json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

Matrix to_matrix(const json& j) {
  const auto rows = j.get<std::vector<std::vector<double>>>();
  if (rows.empty()) throw ConfigError("config: empty matrix");
  Matrix m(rows.size(), rows.front().size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != rows.front().size()) throw ConfigError("config: ragged matrix");
    for (std::size_t k = 0; k < rows[i].size(); ++k) m(i, k) = rows[i][k];
  }
  return m;
}

json from_matrix(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json r = json::array();
    for (Eigen::Index k = 0; k < m.cols(); ++k) r.push_back(m(i, k));
    rows.push_back(r);
  }
  return rows;
}

json from_vector(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

CustomProblem custom_from_json(const json& j) {
  check_keys(j, {"weights", "means", "covariances", "a", "noise_std", "blocks"}, "custom");
  CustomProblem p;
  try {
    p.weights = j.at("weights").get<std::vector<double>>();
    for (const auto& m : j.at("means")) p.means.push_back(to_vector(m));
    for (const auto& c : j.at("covariances")) p.covariances.push_back(to_matrix(c));
    p.a = to_matrix(j.at("a"));
    read(j, "noise_std", p.noise_std);
    for (const auto& b : j.at("blocks")) {
      check_keys(b, {"name", "rows", "noise_std"}, "custom.blocks");
      ConditionBlock cb;
      cb.name = b.value("name", "C" + std::to_string(p.blocks.size() + 1));
      cb.rows = b.at("rows").get<std::vector<int>>();
      if (b.contains("noise_std")) cb.noise_std = b.at("noise_std").get<double>();
      p.blocks.push_back(std::move(cb));
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: bad custom problem: ") + e.what());
  }
  return p;
}

json custom_to_json(const CustomProblem& p) {
  json j;
  j["weights"] = p.weights;
  j["means"] = json::array();
  for (const auto& m : p.means) j["means"].push_back(from_vector(m));
  j["covariances"] = json::array();
  for (const auto& c : p.covariances) j["covariances"].push_back(from_matrix(c));
  j["a"] = from_matrix(p.a);
  j["noise_std"] = p.noise_std;
  j["blocks"] = json::array();
  for (const auto& b : p.blocks) {
    json jb{{"name", b.name}, {"rows", b.rows}};
    if (b.noise_std) jb["noise_std"] = *b.noise_std;
    j["blocks"].push_back(jb);
  }
  return j;
}

LambdaSet lambda_from_json(const json& j) {
  LambdaSet l;
  if (j.is_array()) {
    const auto v = j.get<std::vector<double>>();
    if (v.empty() || v.size() > 3) throw ConfigError("config: lambda triples need 1 to 3 values");
    l.lambda1 = v[0];
    if (v.size() > 1) l.lambda2 = v[1];
    if (v.size() > 2) l.lambda3 = v[2];
    return l;
  }
  check_keys(j, {"lambda1", "lambda2", "lambda3"}, "lambda grid entry");
  read(j, "lambda1", l.lambda1);
  read(j, "lambda2", l.lambda2);
  read(j, "lambda3", l.lambda3);
  return l;
}

void read_train(const json& j, TrainOptions& t) {
  read(j, "epochs", t.epochs);
  read(j, "batch_size", t.batch_size);
  read(j, "learning_rate", t.learning_rate);
  read(j, "train_fraction", t.train_fraction);
  read(j, "validation_fraction", t.validation_fraction);
}

}  // namespace

ExperimentConfig config_from_json(const json& j) {
  check_keys(j, {"name", "setting", "custom", "pattern", "sizes", "repeats", "seed", "mixture_policy",
                 "samples", "rules", "baselines", "schedule", "sigma_data", "budget", "denoiser",
                 "regressor", "analytic", "save_checkpoints", "output_dir", "workers", "timestamp"},
             "config");
  ExperimentConfig c;
  read(j, "name", c.name);
  if (j.contains("setting")) c.setting = parse_setting(j.at("setting").get<std::string>());
  if (j.contains("custom")) c.custom = custom_from_json(j.at("custom"));
  if (j.contains("pattern")) c.pattern = parse_missing_pattern(j.at("pattern").get<std::string>());
  if (!j.contains("sizes") && c.pattern != MissingPattern::TwoDataset) {
    c.sizes = c.pattern == MissingPattern::TypeI ? std::vector<int>{10000, 10000}
                                                 : std::vector<int>{6667, 6667, 6667};
  }
  read(j, "sizes", c.sizes);
  read(j, "repeats", c.repeats);
  read(j, "seed", c.seed);
  if (j.contains("mixture_policy")) {
    const std::string p = lower(j.at("mixture_policy").get<std::string>());
    if (p == "redraw") c.mixture_policy = MixturePolicy::Redraw;
    else if (p == "fixed") c.mixture_policy = MixturePolicy::Fixed;
    else throw ConfigError("config: mixture_policy must be 'redraw' or 'fixed'");
  }
  read(j, "samples", c.samples);
  if (j.contains("rules")) {
    for (const auto& r : j.at("rules")) {
      check_keys(r, {"rule", "grid"}, "rules entry");
      RuleSpec spec;
      spec.rule = parse_rule(r.at("rule").get<std::string>());
      if (r.contains("grid")) {
        for (const auto& g : r.at("grid")) spec.grid.push_back(lambda_from_json(g));
      } else if (spec.rule == Rule::Uncond) {
        spec.grid.push_back({});
      }
      c.rules.push_back(std::move(spec));
    }
  } else if (c.setting != Setting::Custom && c.pattern == MissingPattern::TwoDataset) {
    c.rules = preset_rules(c.setting);
  }
  if (j.contains("baselines")) {
    for (const auto& b : j.at("baselines")) {
      check_keys(b, {"method", "k", "lambda", "p_non"}, "baselines entry");
      BaselineSpec spec;
      const std::string m = lower(b.at("method").get<std::string>());
      if (m == "knn") spec.method = ImputeMethod::KNN;
      else if (m == "regressor") spec.method = ImputeMethod::Regressor;
      else throw ConfigError("config: baseline method must be 'knn' or 'regressor'");
      read(b, "k", spec.k);
      read(b, "lambda", spec.lambda);
      read(b, "p_non", spec.p_non);
      c.baselines.push_back(spec);
    }
  }
  if (j.contains("schedule")) {
    const json& s = j.at("schedule");
    check_keys(s, {"t_min", "t_max", "rho", "steps"}, "schedule");
    read(s, "t_min", c.schedule.t_min);
    read(s, "t_max", c.schedule.t_max);
    read(s, "rho", c.schedule.rho);
    read(s, "steps", c.schedule.steps);
  }
  read(j, "sigma_data", c.sigma_data);
  c.denoiser_train.epochs = kPresetEpochs;
  if (j.contains("budget")) {
    const std::string b = lower(j.at("budget").get<std::string>());
    if (b == "preset") c.denoiser_train.epochs = kPresetEpochs;
    else if (b == "reduced" || b == "ci") c.denoiser_train.epochs = kReducedEpochs;
    else throw ConfigError("config: budget must be 'preset' or 'reduced'");
  }
  if (j.contains("denoiser")) {
    const json& d = j.at("denoiser");
    check_keys(d, {"epochs", "batch_size", "learning_rate", "train_fraction", "validation_fraction", "p_non",
                   "time_spread_is_variance", "embedding_dim", "hidden_layers", "hidden_width"},
               "denoiser");
    read_train(d, c.denoiser_train);
    if (d.contains("p_non") && !d.at("p_non").is_null()) c.p_non = d.at("p_non").get<double>();
    read(d, "time_spread_is_variance", c.time_spread_is_variance);
    read(d, "embedding_dim", c.embedding_dim);
    read(d, "hidden_layers", c.denoiser_layers);
    read(d, "hidden_width", c.denoiser_width);
  }
  if (j.contains("regressor")) {
    const json& r = j.at("regressor");
    check_keys(r, {"epochs", "batch_size", "learning_rate", "train_fraction", "validation_fraction",
                   "hidden_layers", "hidden_width", "activation"},
               "regressor");
    read_train(r, c.regressor_train);
    read(r, "hidden_layers", c.regressor_layers);
    read(r, "hidden_width", c.regressor_width);
    if (r.contains("activation")) c.regressor_activation = parse_activation(r.at("activation").get<std::string>());
  }
  read(j, "analytic", c.analytic);
  read(j, "save_checkpoints", c.save_checkpoints);
  read(j, "output_dir", c.output_dir);
  read(j, "workers", c.workers);
  read(j, "timestamp", c.timestamp);
  c.validate();
  return c;
}

json config_to_json(const ExperimentConfig& c) {
  json j;
  j["name"] = c.name;
  j["setting"] = to_string(c.setting);
  if (c.custom) j["custom"] = custom_to_json(*c.custom);
  j["pattern"] = to_string(c.pattern);
  j["sizes"] = c.sizes;
  j["repeats"] = c.repeats;
  j["seed"] = c.seed;
  j["mixture_policy"] = c.mixture_policy == MixturePolicy::Redraw ? "redraw" : "fixed";
  j["samples"] = c.samples;
  j["rules"] = json::array();
  for (const auto& r : c.rules) {
    json g = json::array();
    for (const auto& l : r.grid) g.push_back({{"lambda1", l.lambda1}, {"lambda2", l.lambda2}, {"lambda3", l.lambda3}});
    j["rules"].push_back({{"rule", to_string(r.rule)}, {"grid", g}});
  }
  j["baselines"] = json::array();
  for (const auto& b : c.baselines) {
    j["baselines"].push_back({{"method", b.method == ImputeMethod::KNN ? "knn" : "regressor"},
                              {"k", b.k},
                              {"lambda", b.lambda},
                              {"p_non", b.p_non}});
  }
  j["schedule"] = {{"t_min", c.schedule.t_min}, {"t_max", c.schedule.t_max}, {"rho", c.schedule.rho},
                   {"steps", c.schedule.steps}};
  j["sigma_data"] = c.sigma_data;
  const auto& d = c.denoiser_train;
  j["denoiser"] = {{"epochs", d.epochs},
                   {"batch_size", d.batch_size},
                   {"learning_rate", d.learning_rate},
                   {"train_fraction", d.train_fraction},
                   {"validation_fraction", d.validation_fraction},
                   {"p_non", c.p_non ? json(*c.p_non) : json(nullptr)},
                   {"time_spread_is_variance", c.time_spread_is_variance},
                   {"embedding_dim", c.embedding_dim},
                   {"hidden_layers", c.denoiser_layers},
                   {"hidden_width", c.denoiser_width}};
  const auto& r = c.regressor_train;
  j["regressor"] = {{"epochs", r.epochs},
                    {"batch_size", r.batch_size},
                    {"learning_rate", r.learning_rate},
                    {"train_fraction", r.train_fraction},
                    {"validation_fraction", r.validation_fraction},
                    {"hidden_layers", c.regressor_layers},
                    {"hidden_width", c.regressor_width},
                    {"activation", to_string(c.regressor_activation)}};
  j["analytic"] = c.analytic;
  j["save_checkpoints"] = c.save_checkpoints;
  j["output_dir"] = c.output_dir;
  j["workers"] = c.workers;
  j["timestamp"] = c.timestamp;
  return j;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path);
  json j;
  try {
    j = json::parse(in, nullptr, true, true);
  } catch (const json::parse_error& e) {
    throw ConfigError("config: " + path + ": " + e.what());
  }
  return config_from_json(j);
}

std::vector<RuleSpec> preset_rules(Setting s) {
  if (s == Setting::I) {
    return {{Rule::DMDG, {{180.0, 180.0, 0.0}}},
            {Rule::DMIDG, {{180.0, 180.0, 0.0}}},
            {Rule::DMHG, {{1.0, 250.0, 0.0}}},
            {Rule::DMIHG, {{1.0, 250.0, 0.0}}}};
  }
  return {{Rule::DMDG, {{1.5, 1.5, 0.0}}},
          {Rule::DMIDG, {{2.0, 2.0, 0.0}}},
          {Rule::DMHG, {{1.5, 1.5, 0.0}}},
          {Rule::DMIHG, {{1.5, 1.5, 0.0}}}};
}

// --- Problem and models ---------------------------------------------------

std::uint64_t repeat_seed(const ExperimentConfig& c, int repeat) {
  return derive_seed(c.seed, stream::kRepeat, static_cast<std::uint64_t>(repeat));
}

Problem make_problem(const ExperimentConfig& c, int repeat) {
  if (c.setting == Setting::Custom) {
    const CustomProblem& p = *c.custom;
    return {GaussianMixture(p.weights, p.means, p.covariances),
            LinearObservationModel(p.a, p.noise_std, p.blocks)};
  }
  const std::uint64_t seed = c.mixture_policy == MixturePolicy::Redraw
                                 ? derive_seed(repeat_seed(c, repeat), stream::kMixture)
                                 : derive_seed(c.seed, stream::kMixture);
  return {preset_mixture(c.setting, seed), preset_observation(c.setting, c.pattern)};
}

Conditions draw_targets(const Problem& p, std::uint64_t seed) {
  const Vector x_star = p.mixture.sample_matrix(1, derive_seed(seed, stream::kTarget, 0)).col(0);
  const Vector y = p.observation.observe(x_star, derive_seed(seed, stream::kTarget, 1));
  Conditions targets;
  for (int b = 0; b < p.observation.block_count(); ++b) targets.set(b, p.observation.block_slice(y, b));
  return targets;
}

json problem_to_json(const Problem& p, const Conditions& targets) {
  CustomProblem c;
  c.weights = p.mixture.weights();
  for (int k = 0; k < p.mixture.size(); ++k) {
    c.means.push_back(p.mixture.mean(k));
    c.covariances.push_back(p.mixture.covariance(k));
  }
  c.a = p.observation.matrix();
  c.noise_std = p.observation.noise_std();
  for (int b = 0; b < p.observation.block_count(); ++b) c.blocks.push_back(p.observation.block(b));
  json j = custom_to_json(c);
  json t = json::object();
  for (int b = 0; b < kMaxBlocks; ++b) {
    if (targets.has(b)) t[p.observation.block(b).name] = from_vector(targets.at(b));
  }
  if (!t.empty()) j["targets"] = t;
  return j;
}

Problem problem_from_json(const json& j, Conditions* targets) {
  json body = j;
  json t = body.contains("targets") ? body.at("targets") : json::object();
  body.erase("targets");
  const CustomProblem c = custom_from_json(body);
  Problem p{GaussianMixture(c.weights, c.means, c.covariances), LinearObservationModel(c.a, c.noise_std, c.blocks)};
  if (targets) {
    *targets = {};
    for (auto it = t.begin(); it != t.end(); ++it) {
      int found = -1;
      for (int b = 0; b < p.observation.block_count(); ++b) {
        if (p.observation.block(b).name == it.key()) found = b;
      }
      if (found < 0) throw ConfigError("problem: target for unknown block '" + it.key() + "'");
      const Vector v = to_vector(it.value());
      if (v.size() != p.observation.block_dim(found)) throw ConfigError("problem: target '" + it.key() + "' has the wrong length");
      targets->set(found, v);
    }
  }
  return p;
}

namespace {

DenoiserConfig denoiser_config(const ExperimentConfig& c, const BlockwiseDataset& data) {
  DenoiserConfig d;
  d.time.spread_is_variance = c.time_spread_is_variance;
  d.time_embedding_dim = c.embedding_dim;
  d.hidden_layers = c.denoiser_layers;
  d.hidden_width = c.denoiser_width;
  switch (data.pattern()) {
    case MissingPattern::TwoDataset:
    case MissingPattern::TypeII:
      d.blocks = {0};
      d.maskable = {0};
      break;
    case MissingPattern::TypeI:
      d.blocks = {0, 2};
      d.maskable = {0};
      break;
    case MissingPattern::Complete:
      d.blocks.clear();
      for (int b = 0; b < data.block_count(); ++b) d.blocks.push_back(b);
      d.maskable = d.blocks;
      break;
  }
  const int n1 = data.count_source(0);
  d.p_non = c.p_non ? *c.p_non : DenoiserConfig::aggregated_p_non(n1, data.size() - n1);
  return d;
}

DenoiserFit fit_denoiser(const ExperimentConfig& c, const BlockwiseDataset& data, const DenoiserConfig& d,
                         std::uint64_t seed) {
  return train_denoiser(data, d, c.denoiser_train, derive_seed(seed, stream::kTraining));
}

/// Condition blocks whose predictors the configured rules use.
std::set<int> needed_predictors(const ExperimentConfig& c) {
  std::set<int> need;
  for (const auto& r : c.rules) {
    const RuleTraits t = traits(r.rule);
    if (r.rule != Rule::Uncond && !t.uses_cfg) need.insert(0);
    if (t.has_second) need.insert(1);
    if (t.has_third) need.insert(2);
  }
  return need;
}

}  // namespace

PredictorPtr train_regressor(const ExperimentConfig& c, const BlockwiseDataset& data, int block,
                             std::uint64_t seed) {
  const auto [x, y] = data.block_pairs(block);
  if (x.cols() < 3) throw ConfigError("train_regressor: block C" + std::to_string(block + 1) + " has too few rows");
  const MlpSpec spec = MlpSpec::uniform(static_cast<int>(x.rows()), static_cast<int>(y.rows()), c.regressor_layers,
                                        c.regressor_width, c.regressor_activation);
  FitResult fit = fit_regressor(x, y, spec, c.regressor_train,
                                derive_seed(seed, stream::kRegressor, static_cast<std::uint64_t>(block)));
  return std::make_shared<MlpPredictor>(std::move(fit.model));
}

TrainedModels train_models(const ExperimentConfig& c, const BlockwiseDataset& data, std::uint64_t seed) {
  TrainedModels m;
  DenoiserFit fit = fit_denoiser(c, data, denoiser_config(c, data), seed);
  m.denoiser_best_epoch = fit.best_epoch;
  m.denoiser_validation_loss = fit.best_validation_loss;
  m.denoiser = std::make_shared<Denoiser>(std::move(fit.model));
  for (int b : needed_predictors(c)) {
    if (b < data.block_count()) m.predictors[b] = train_regressor(c, data, b, seed);
  }
  return m;
}

TrainedModels analytic_models(const Problem& p) {
  TrainedModels m;
  m.denoiser = std::make_shared<AnalyticDenoiser>(p.mixture, p.observation);
  for (int b = 0; b < p.observation.block_count(); ++b) {
    m.predictors[b] = std::make_shared<LinearPredictor>(p.observation.block_matrix(b));
  }
  return m;
}

JointConditionDenoiser::JointConditionDenoiser(DenoiserPtr inner, Vector c2)
    : inner_(std::move(inner)), c2_(std::move(c2)) {
  if (!inner_ || !inner_->consumes(0) || !inner_->consumes(1)) {
    throw ConfigError("joint denoiser: the wrapped model must consume C1 and C2");
  }
}

Conditions JointConditionDenoiser::translate(const Conditions& c) const {
  if (c.has(1) || c.has(2)) throw ConfigError("joint denoiser: only C1 may be passed");
  Conditions out;
  if (c.has(0)) {
    out.set(0, c.at(0));
    out.set(1, c2_);
  }
  return out;
}

Matrix JointConditionDenoiser::denoise(const Matrix& x, double t, const Conditions& c) const {
  return inner_->denoise(x, t, translate(c));
}

Matrix JointConditionDenoiser::denoise_vjp(const Matrix& x, double t, const Conditions& c,
                                           const Matrix& cotangents) const {
  return inner_->denoise_vjp(x, t, translate(c), cotangents);
}

// --- Results --------------------------------------------------------------

namespace {

bool same_lambdas(const LambdaSet& a, const LambdaSet& b) {
  return a.lambda1 == b.lambda1 && a.lambda2 == b.lambda2 && a.lambda3 == b.lambda3;
}

std::string baseline_name(const BaselineSpec& b) { return b.method == ImputeMethod::KNN ? "KNN" : "Regressor"; }

}  // namespace

std::vector<double> ExperimentResult::values(const std::string& method, const LambdaSet& l) const {
  std::vector<double> v;
  for (const auto& r : rows) {
    if (r.method == method && same_lambdas(r.lambdas, l)) v.push_back(r.w2);
  }
  return v;
}

std::vector<double> ExperimentResult::values(const std::string& method) const {
  std::vector<double> v;
  for (const auto& r : rows) {
    if (r.method == method) v.push_back(r.w2);
  }
  return v;
}

std::string method_label(const std::string& method, const LambdaSet& l) {
  return method + "(" + format_number(l.lambda1) + "," + format_number(l.lambda2) + "," +
         format_number(l.lambda3) + ")";
}

std::string fingerprint(const ExperimentConfig& c, const std::string& method, const LambdaSet& l) {
  std::ostringstream s;
  s << "setting=" << to_string(c.setting) << ";pattern=" << to_string(c.pattern) << ";sizes=";
  for (std::size_t i = 0; i < c.sizes.size(); ++i) s << (i ? "/" : "") << c.sizes[i];
  s << ";method=" << method << ";l1=" << format_number(l.lambda1) << ";l2=" << format_number(l.lambda2)
    << ";l3=" << format_number(l.lambda3);
  for (const auto& b : c.baselines) {
    if (baseline_name(b) == method) s << ";impute_k=" << b.k << ";sampling=cfg;p_non=" << format_number(b.p_non);
  }
  s << ";seed=" << c.seed << ";mixture=" << (c.mixture_policy == MixturePolicy::Redraw ? "redraw" : "fixed")
    << ";epochs=" << c.denoiser_train.epochs << ";samples=" << c.samples
    << ";schedule=" << format_number(c.schedule.t_min) << "/" << format_number(c.schedule.t_max) << "/"
    << format_number(c.schedule.rho) << "/" << c.schedule.steps << ";sigma_data=" << format_number(c.sigma_data)
    << ";models=" << (c.analytic ? "analytic" : "trained");
  return s.str();
}

namespace {

struct RepeatContext {
  Problem problem;
  std::uint64_t seed = 0;
  Conditions targets;
  Matrix reference;
};

RepeatContext make_context(const ExperimentConfig& c, int repeat) {
  RepeatContext ctx{make_problem(c, repeat), repeat_seed(c, repeat), {}, {}};
  ctx.targets = draw_targets(ctx.problem, ctx.seed);
  const PosteriorMixture post = exact_posterior(ctx.problem.mixture, ctx.problem.observation, ctx.targets);
  ctx.reference = post.mixture.sample_matrix(c.samples, derive_seed(ctx.seed, stream::kReference));
  return ctx;
}

/// W2 of the finite trajectories against as many reference draws.
double score_samples(const SampleResult& s, const Matrix& reference) {
  if (s.kept.size() < 2) return std::numeric_limits<double>::quiet_NaN();
  return wasserstein2(s.samples, reference.leftCols(s.samples.cols()));
}

RunRow evaluate_rule(const ExperimentConfig& c, const RepeatContext& ctx, const DenoiserModel& denoiser,
                     const std::array<PredictorPtr, kMaxBlocks>& predictors, Rule rule, const LambdaSet& l,
                     int repeat) {
  GuidanceConfig g;
  g.rule = rule;
  g.lambda1 = l.lambda1;
  g.lambda2 = l.lambda2;
  g.lambda3 = l.lambda3;
  g.sigma_data = c.sigma_data;
  g.targets = ctx.targets;
  g.predictors = predictors;
  const SampleResult s = sample(g, denoiser, c.schedule, c.samples, derive_seed(ctx.seed, stream::kSampler));
  return {repeat, ctx.seed, to_string(rule), l, score_samples(s, ctx.reference), static_cast<int>(s.failures.size())};
}

void save_checkpoints(const ExperimentConfig& c, int repeat, const std::string& tag, const TrainedModels& m) {
  if (!c.save_checkpoints || c.output_dir.empty() || c.analytic) return;
  char name[32];
  std::snprintf(name, sizeof name, "repeat_%03d", repeat);
  const fs::path dir = fs::path(c.output_dir) / name;
  fs::create_directories(dir);
  if (const auto* d = dynamic_cast<const Denoiser*>(m.denoiser.get())) d->save((dir / (tag + "denoiser.dgnn")).string());
  for (int b = 0; b < kMaxBlocks; ++b) {
    if (const auto* p = dynamic_cast<const MlpPredictor*>(m.predictors[b].get())) {
      save_mlp((dir / (tag + "f" + std::to_string(b + 1) + ".dgnn")).string(), p->network());
    }
  }
}

template <class Fn>
auto with_context(const std::string& where, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const ConfigError& e) {
    throw ConfigError(where + ": " + e.what());
  } catch (const NumericalError& e) {
    throw NumericalError(where + ": " + e.what());
  } catch (const std::exception& e) {
    throw std::runtime_error(where + ": " + e.what());
  }
}

std::string repeat_tag(const ExperimentConfig& c, int repeat) {
  return "repeat " + std::to_string(repeat) + " (seed " + std::to_string(repeat_seed(c, repeat)) + ", " +
         c.name + ")";
}

}  // namespace

std::vector<RunRow> run_repeat(const ExperimentConfig& c, int repeat, const ProgressCallback& progress) {
  return with_context(repeat_tag(c, repeat), [&] {
    c.validate();
    const RepeatContext ctx = make_context(c, repeat);
    std::optional<BlockwiseDataset> data;
    TrainedModels models;
    if (c.analytic) {
      models = analytic_models(ctx.problem);
    } else {
      data = generate_dataset(ctx.problem.mixture, ctx.problem.observation, c.pattern, c.sizes,
                              derive_seed(ctx.seed, stream::kDataset));
      models = train_models(c, *data, ctx.seed);
      save_checkpoints(c, repeat, "", models);
      if (progress) {
        progress(repeat_tag(c, repeat) + ": denoiser best epoch " + std::to_string(models.denoiser_best_epoch) +
                 ", validation loss " + format_number(models.denoiser_validation_loss));
      }
    }
    std::vector<RunRow> rows;
    for (const auto& spec : c.rules) {
      for (const auto& l : spec.grid) {
        rows.push_back(evaluate_rule(c, ctx, *models.denoiser, models.predictors, spec.rule, l, repeat));
        if (progress) {
          progress(repeat_tag(c, repeat) + ": " + method_label(rows.back().method, l) + " W2 " +
                   format_number(rows.back().w2));
        }
      }
    }
    for (std::size_t i = 0; i < c.baselines.size(); ++i) {
      const BaselineSpec& b = c.baselines[i];
      if (c.analytic) throw ConfigError("imputation baselines need trained models");
      ImputeOptions io;
      io.method = b.method;
      io.k = b.k;
      io.train = c.regressor_train;
      io.regressor_spec = MlpSpec::uniform(1, 1, c.regressor_layers, c.regressor_width, c.regressor_activation);
      if (b.method == ImputeMethod::Regressor) {
        for (int blk = 0; blk < 2; ++blk) {
          io.predictors[blk] = models.predictors[blk] ? models.predictors[blk]
                                                      : train_regressor(c, *data, blk, ctx.seed);
        }
      }
      const BlockwiseDataset completed =
          impute_and_complete(*data, io, derive_seed(ctx.seed, stream::kImpute, i));
      DenoiserConfig dc = denoiser_config(c, completed);
      dc.p_non = b.p_non;
      DenoiserFit fit = train_denoiser(completed, dc, c.denoiser_train,
                                       derive_seed(ctx.seed, stream::kImpute, 100 + i));
      TrainedModels joint;
      joint.denoiser = std::make_shared<Denoiser>(std::move(fit.model));
      save_checkpoints(c, repeat, lower(baseline_name(b)) + "_", joint);
      const JointConditionDenoiser wrapped(joint.denoiser, ctx.targets.at(1));
      RepeatContext only_c1 = ctx;
      only_c1.targets = ctx.targets.only({0});
      RunRow row = evaluate_rule(c, only_c1, wrapped, {}, Rule::CFG, {b.lambda, 0.0, 0.0}, repeat);
      row.method = baseline_name(b);
      rows.push_back(row);
      if (progress) progress(repeat_tag(c, repeat) + ": " + row.method + " W2 " + format_number(row.w2));
    }
    return rows;
  });
}

namespace {

const std::vector<std::string> kRowColumns = {"repeat", "seed", "method", "lambda1", "lambda2",
                                              "lambda3", "w2", "failures", "fingerprint"};

void write_row(std::ostream& out, const ExperimentConfig& c, const RunRow& r) {
  write_csv_row(out, {std::to_string(r.repeat), std::to_string(r.seed), r.method, format_number(r.lambdas.lambda1),
                      format_number(r.lambdas.lambda2), format_number(r.lambdas.lambda3), format_number(r.w2),
                      std::to_string(r.failures), fingerprint(c, r.method, r.lambdas)});
}

/// Serializes per-repeat rows to one stream in repeat order.
class OrderedWriter {
 public:
  OrderedWriter(const ExperimentConfig& c, std::ostream* out) : c_(c), out_(out) {}

  void complete(int repeat, std::vector<RunRow> rows) {
    std::lock_guard<std::mutex> lock(mu_);
    pending_[repeat] = std::move(rows);
    while (!pending_.empty() && pending_.begin()->first == next_) {
      for (const auto& r : pending_.begin()->second) {
        if (out_) write_row(*out_, c_, r);
        done_.push_back(r);
      }
      if (out_) out_->flush();
      pending_.erase(pending_.begin());
      ++next_;
    }
  }

  std::vector<RunRow> rows() const { return done_; }

 private:
  const ExperimentConfig& c_;
  std::ostream* out_;
  std::mutex mu_;
  std::map<int, std::vector<RunRow>> pending_;
  std::vector<RunRow> done_;
  int next_ = 0;
};

std::vector<MetricReport> summarize_rows(const ExperimentConfig& c, const std::vector<RunRow>& rows) {
  std::vector<std::pair<std::string, LambdaSet>> keys;
  for (const auto& r : rows) {
    const bool seen = std::any_of(keys.begin(), keys.end(), [&](const auto& k) {
      return k.first == r.method && same_lambdas(k.second, r.lambdas);
    });
    if (!seen) keys.emplace_back(r.method, r.lambdas);
  }
  std::vector<MetricReport> out;
  for (const auto& [method, l] : keys) {
    std::vector<double> v;
    for (const auto& r : rows) {
      if (r.method == method && same_lambdas(r.lambdas, l)) v.push_back(r.w2);
    }
    out.push_back(summarize("w2", fingerprint(c, method, l), std::move(v)));
  }
  return out;
}

/// Runs fn(repeat) for every repeat on `workers` threads. The first failure
/// stops dispatch; it is rethrown after running repeats finish.
void for_each_repeat(int repeats, int workers, const std::function<void(int)>& fn) {
  std::atomic<int> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr error;
  std::mutex error_mu;
  auto work = [&] {
    for (;;) {
      if (failed) return;
      const int r = next++;
      if (r >= repeats) return;
      try {
        fn(r);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mu);
        if (!error) error = std::current_exception();
        failed = true;
      }
    }
  };
  const int n = std::min(workers, repeats);
  if (n <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < n; ++i) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  if (error) std::rethrow_exception(error);
}

void write_config_copy(const ExperimentConfig& c, const fs::path& dir) {
  std::ofstream out(dir / "config.json");
  out << config_to_json(c).dump(2) << "\n";
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& c, const ProgressCallback& progress) {
  c.validate();
  const CsvOptions csv{c.timestamp};
  std::ofstream rows_out;
  if (!c.output_dir.empty()) {
    fs::create_directories(c.output_dir);
    write_config_copy(c, c.output_dir);
    rows_out.open(fs::path(c.output_dir) / "rows.csv");
    if (!rows_out) throw ConfigError("experiment: cannot write to " + c.output_dir);
    write_csv_preamble(rows_out, "experiment_rows", 1, kRowColumns, csv);
  }
  OrderedWriter writer(c, rows_out.is_open() ? &rows_out : nullptr);
  std::mutex progress_mu;
  ProgressCallback locked;
  if (progress) {
    locked = [&](const std::string& msg) {
      std::lock_guard<std::mutex> lock(progress_mu);
      progress(msg);
    };
  }
  std::exception_ptr failure;
  try {
    for_each_repeat(c.repeats, c.workers, [&](int r) { writer.complete(r, run_repeat(c, r, locked)); });
  } catch (...) {
    failure = std::current_exception();
  }
  ExperimentResult result;
  result.rows = writer.rows();
  result.summaries = summarize_rows(c, result.rows);
  if (!c.output_dir.empty()) {
    std::ofstream s(fs::path(c.output_dir) / "summary.csv");
    write_report_summary(s, result.summaries, csv);
  }
  if (failure) std::rethrow_exception(failure);
  return result;
}

// --- Ablations ------------------------------------------------------------

std::vector<ArmComparison> run_single_vs_aggregated(const ExperimentConfig& c, const ProgressCallback& progress) {
  c.validate();
  if (c.pattern != MissingPattern::TwoDataset) throw ConfigError("single_vs_aggregated: needs the two_dataset pattern");
  if (c.analytic) throw ConfigError("single_vs_aggregated: needs trained models");
  std::vector<ArmComparison> out;
  for (const auto& spec : c.rules) {
    for (const auto& l : spec.grid) out.push_back({method_label(to_string(spec.rule), l), {}, {}, {}});
  }
  std::vector<std::vector<std::pair<double, double>>> per_repeat(static_cast<std::size_t>(c.repeats));
  for_each_repeat(c.repeats, c.workers, [&](int repeat) {
    per_repeat[static_cast<std::size_t>(repeat)] = with_context(repeat_tag(c, repeat), [&] {
      const RepeatContext ctx = make_context(c, repeat);
      const int n1 = c.sizes[0];
      const BlockwiseDataset full =
          generate_dataset(ctx.problem.mixture, ctx.problem.observation, MissingPattern::Complete,
                           {c.sizes[0] + c.sizes[1]}, derive_seed(ctx.seed, stream::kDataset));
      std::vector<DatasetRow> agg_rows = full.rows();
      std::vector<DatasetRow> d1_full(full.rows().begin(), full.rows().begin() + n1);
      for (int i = 0; i < full.size(); ++i) {
        DatasetRow& r = agg_rows[static_cast<std::size_t>(i)];
        r.source = i < n1 ? 0 : 1;
        r.conditions.values[i < n1 ? 1 : 0].reset();
      }
      const BlockwiseDataset aggregated(MissingPattern::TwoDataset, full.block_count(), std::move(agg_rows));
      const BlockwiseDataset d1_revealed(MissingPattern::Complete, full.block_count(), std::move(d1_full));
      const BlockwiseDataset d1 = aggregated.subset({0});

      const TrainedModels agg = train_models(c, aggregated, ctx.seed);
      TrainedModels single;
      DenoiserFit fit = fit_denoiser(c, d1, denoiser_config(c, d1), ctx.seed);
      single.denoiser = std::make_shared<Denoiser>(std::move(fit.model));
      for (int b : needed_predictors(c)) single.predictors[b] = train_regressor(c, d1_revealed, b, ctx.seed);
      save_checkpoints(c, repeat, "aggregated_", agg);
      save_checkpoints(c, repeat, "single_", single);

      std::vector<std::pair<double, double>> values;
      for (const auto& spec : c.rules) {
        for (const auto& l : spec.grid) {
          const double s = evaluate_rule(c, ctx, *single.denoiser, single.predictors, spec.rule, l, repeat).w2;
          const double a = evaluate_rule(c, ctx, *agg.denoiser, agg.predictors, spec.rule, l, repeat).w2;
          values.emplace_back(s, a);
          if (progress) {
            progress(repeat_tag(c, repeat) + ": " + method_label(to_string(spec.rule), l) + " single " +
                     format_number(s) + " aggregated " + format_number(a));
          }
        }
      }
      return values;
    });
  });
  for (const auto& v : per_repeat) {
    for (std::size_t k = 0; k < out.size(); ++k) {
      out[k].single.push_back(v[k].first);
      out[k].aggregated.push_back(v[k].second);
    }
  }
  for (auto& cmp : out) {
    if (cmp.single.size() >= 2) {
      cmp.difference = paired_difference(cmp.single, cmp.aggregated);
    } else {
      cmp.difference = {cmp.single[0] - cmp.aggregated[0], std::numeric_limits<double>::quiet_NaN()};
    }
  }
  if (!c.output_dir.empty()) {
    fs::create_directories(c.output_dir);
    write_config_copy(c, c.output_dir);
    const CsvOptions csv{c.timestamp};
    std::ofstream rows(fs::path(c.output_dir) / "comparison_rows.csv");
    write_csv_preamble(rows, "single_vs_aggregated_rows", 1,
                       {"method", "repeat", "seed", "single_w2", "aggregated_w2", "difference"}, csv);
    for (const auto& cmp : out) {
      for (std::size_t r = 0; r < cmp.single.size(); ++r) {
        write_csv_row(rows, {cmp.method, std::to_string(r), std::to_string(repeat_seed(c, static_cast<int>(r))),
                             format_number(cmp.single[r]), format_number(cmp.aggregated[r]),
                             format_number(cmp.single[r] - cmp.aggregated[r])});
      }
    }
    std::ofstream sum(fs::path(c.output_dir) / "comparison.csv");
    write_csv_preamble(sum, "single_vs_aggregated", 1,
                       {"method", "repeats", "single_mean", "aggregated_mean", "difference_mean",
                        "difference_se", "flag"},
                       csv);
    for (const auto& cmp : out) {
      const MetricReport s = summarize("w2", cmp.method, cmp.single);
      const MetricReport a = summarize("w2", cmp.method, cmp.aggregated);
      write_csv_row(sum, {cmp.method, std::to_string(cmp.single.size()), format_number(s.mean),
                          format_number(a.mean), format_number(cmp.difference.mean),
                          cmp.single.size() >= 2 ? format_number(cmp.difference.standard_error) : "",
                          cmp.single.size() >= 2 ? "" : "single_repeat"});
    }
  }
  return out;
}

std::vector<RatioSummary> run_varying_n(const ExperimentConfig& c, const std::vector<double>& ratios,
                                        const ProgressCallback& progress) {
  c.validate();
  if (c.pattern != MissingPattern::TwoDataset) throw ConfigError("varying_n: needs the two_dataset pattern");
  if (ratios.empty()) throw ConfigError("varying_n: no ratios");
  const int total = c.sizes[0] + c.sizes[1];
  std::vector<RatioSummary> out;
  std::vector<MetricReport> all;
  for (double ratio : ratios) {
    if (!(ratio > 0.0 && ratio < 1.0)) throw ConfigError("varying_n: ratios must lie in (0, 1)");
    ExperimentConfig rc = c;
    const int n1 = static_cast<int>(std::lround(ratio * total));
    rc.sizes = {n1, total - n1};
    if (!c.output_dir.empty()) rc.output_dir = (fs::path(c.output_dir) / ("ratio_" + format_number(ratio))).string();
    ExperimentResult r = run_experiment(rc, progress);
    out.push_back({ratio, r.summaries});
    for (auto m : r.summaries) all.push_back(std::move(m));
  }
  if (!c.output_dir.empty()) {
    std::ofstream s(fs::path(c.output_dir) / "varying_n.csv");
    write_csv_preamble(s, "varying_n", 1, {"ratio", "n1", "n2", "metric", "fingerprint", "repeats", "mean", "std"},
                       CsvOptions{c.timestamp});
    for (const auto& rs : out) {
      const int n1 = static_cast<int>(std::lround(rs.ratio * total));
      for (const auto& m : rs.summaries) {
        write_csv_row(s, {format_number(rs.ratio), std::to_string(n1), std::to_string(total - n1), m.metric,
                          m.fingerprint, std::to_string(m.values.size()), format_number(m.mean),
                          m.has_spread() ? format_number(m.std) : ""});
      }
    }
  }
  return out;
}

// --- Score fields ---------------------------------------------------------

FieldConfig field_config_from_json(const json& j) {
  check_keys(j, {"setting", "seed", "t", "axis_u", "axis_v", "half_width", "resolution", "rules"}, "field config");
  FieldConfig f;
  if (j.contains("setting")) f.setting = parse_setting(j.at("setting").get<std::string>());
  read(j, "seed", f.seed);
  read(j, "t", f.t);
  read(j, "axis_u", f.axis_u);
  read(j, "axis_v", f.axis_v);
  read(j, "half_width", f.half_width);
  read(j, "resolution", f.resolution);
  if (j.contains("rules")) {
    for (const auto& r : j.at("rules")) {
      check_keys(r, {"rule", "lambda1", "lambda2", "lambda3"}, "field rule");
      LambdaSet l;
      read(r, "lambda1", l.lambda1);
      read(r, "lambda2", l.lambda2);
      read(r, "lambda3", l.lambda3);
      f.rules.emplace_back(parse_rule(r.at("rule").get<std::string>()), l);
    }
  }
  return f;
}

FieldComparison render_field(const FieldConfig& f) {
  if (f.setting == Setting::Custom) throw ConfigError("render_field: needs a preset setting");
  if (!(f.t > 0.0)) throw ConfigError("render_field: t must be positive");
  if (!(f.half_width > 0.0)) throw ConfigError("render_field: half_width must be positive");
  const GaussianMixture gm = preset_mixture(f.setting, derive_seed(f.seed, stream::kMixture));
  const LinearObservationModel obs = preset_observation(f.setting, MissingPattern::TwoDataset);
  const Conditions targets = draw_targets({gm, obs}, f.seed);

  const TrainedModels models = analytic_models({gm, obs});
  std::vector<NamedRule> rules;
  auto specs = f.rules;
  if (specs.empty()) {
    const double lambda = 1.0 / (2.0 * obs.noise_std() * obs.noise_std());
    specs = {{Rule::DMDG, {lambda, lambda, 0.0}}, {Rule::DMIDG, {lambda, lambda, 0.0}}};
  }
  for (const auto& [rule, l] : specs) {
    NamedRule nr;
    nr.name = method_label(to_string(rule), l);
    nr.config.rule = rule;
    nr.config.lambda1 = l.lambda1;
    nr.config.lambda2 = l.lambda2;
    nr.config.lambda3 = l.lambda3;
    nr.config.targets = targets;
    nr.config.predictors = models.predictors;
    rules.push_back(std::move(nr));
  }
  FieldSlice slice;
  slice.base = exact_posterior(gm, obs, targets).mean();
  slice.axis_u = f.axis_u;
  slice.axis_v = f.axis_v;
  slice.u_min = slice.base(f.axis_u) - f.half_width;
  slice.u_max = slice.base(f.axis_u) + f.half_width;
  slice.v_min = slice.base(f.axis_v) - f.half_width;
  slice.v_max = slice.base(f.axis_v) + f.half_width;
  slice.resolution = f.resolution;
  const double t = f.t;
  const ScoreField oracle = [&](const Vector& x) { return score_t(gm, obs, x, t, targets); };
  return score_field_compare(rules, *models.denoiser, oracle, slice, t);
}

}  // namespace dguide
