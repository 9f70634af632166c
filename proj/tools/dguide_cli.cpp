// Command-line front end: data generation, training, sampling, evaluation,
// full experiments, certificates, score fields and ablations.

#include "dguide/csv.hpp"
#include "dguide/dataset.hpp"
#include "dguide/diffusion.hpp"
#include "dguide/eval.hpp"
#include "dguide/experiment.hpp"
#include "dguide/guidance.hpp"
#include "dguide/rng.hpp"
#include "dguide/wasserstein.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <cmath>
#include <map>
#include <sstream>

namespace fs = std::filesystem;
using namespace dguide;
using nlohmann::json;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = ".";
  int workers = 0;
  bool no_timestamp = false;
};

void add_common(CLI::App* cmd, Common& o, bool needs_config = true) {
  auto* c = cmd->add_option("--config", o.config, "Experiment config (JSON)");
  if (needs_config) c->required()->check(CLI::ExistingFile);
  cmd->add_option("--seed", o.seed, "Master seed (overrides the config)");
  cmd->add_option("--out", o.out, "Output directory");
  cmd->add_option("--workers", o.workers, "Worker threads (overrides the config)")->check(CLI::PositiveNumber);
  cmd->add_flag("--no-timestamp", o.no_timestamp, "Omit the generated-at line from CSV files");
}

ExperimentConfig load(const Common& o) {
  ExperimentConfig c = o.config.empty() ? ExperimentConfig{} : load_config(o.config);
  if (o.seed) c.seed = *o.seed;
  if (o.workers > 0) c.workers = o.workers;
  if (o.no_timestamp) c.timestamp = false;
  c.output_dir = o.out;
  c.validate();
  return c;
}

CsvOptions csv_options(const ExperimentConfig& c) { return CsvOptions{c.timestamp}; }

std::ofstream open_out(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  return out;
}

json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  return json::parse(in);
}

void log(const std::string& s) { std::cerr << s << "\n"; }

// Data lines of a CSV written by this tool: comment lines and the header are skipped.
std::vector<std::vector<std::string>> read_rows(const std::string& path, std::vector<std::string>* header) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::vector<std::vector<std::string>> rows;
  std::string line;
  bool seen_header = false;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> fields;
    std::stringstream s(line);
    std::string f;
    while (std::getline(s, f, ',')) fields.push_back(f);
    if (!seen_header) {
      seen_header = true;
      if (header) *header = fields;
      continue;
    }
    rows.push_back(std::move(fields));
  }
  return rows;
}

// --- gen-data ---------------------------------------------------------------

void gen_data(const Common& o) {
  const ExperimentConfig c = load(o);
  const Problem p = make_problem(c, 0);
  const std::uint64_t seed = repeat_seed(c, 0);
  const Conditions targets = draw_targets(p, seed);
  open_out(fs::path(o.out) / "problem.json") << problem_to_json(p, targets).dump(2) << "\n";
  const BlockwiseDataset data =
      generate_dataset(p.mixture, p.observation, c.pattern, c.sizes, derive_seed(seed, stream::kDataset));
  auto out = open_out(fs::path(o.out) / "dataset.csv");
  data.write_csv(out);
  log("wrote " + std::to_string(data.size()) + " rows and problem.json to " + o.out);
}

// --- train ------------------------------------------------------------------

void train(const Common& o, const std::string& data_path) {
  ExperimentConfig c = load(o);
  c.analytic = false;
  std::ifstream in(data_path);
  if (!in) throw std::runtime_error("cannot read " + data_path);
  const BlockwiseDataset data = BlockwiseDataset::read_csv(in);
  const TrainedModels m = train_models(c, data, repeat_seed(c, 0));
  fs::create_directories(o.out);
  const auto& den = dynamic_cast<const Denoiser&>(*m.denoiser);
  den.save((fs::path(o.out) / "denoiser.dgnn").string());
  json summary = {{"best_epoch", m.denoiser_best_epoch}, {"validation_loss", m.denoiser_validation_loss}};
  for (int b = 0; b < kMaxBlocks; ++b) {
    if (const auto* f = dynamic_cast<const MlpPredictor*>(m.predictors[b].get())) {
      const std::string name = "f" + std::to_string(b + 1) + ".dgnn";
      save_mlp((fs::path(o.out) / name).string(), f->network());
      summary["regressors"].push_back(name);
    }
  }
  open_out(fs::path(o.out) / "training.json") << summary.dump(2) << "\n";
  log("denoiser best epoch " + std::to_string(m.denoiser_best_epoch) + ", validation loss " +
      format_number(m.denoiser_validation_loss));
}

// --- sample -----------------------------------------------------------------

TrainedModels load_models(const std::string& dir, const Problem& p, bool analytic) {
  if (analytic) return analytic_models(p);
  TrainedModels m;
  m.denoiser = std::make_shared<Denoiser>(Denoiser::load((fs::path(dir) / "denoiser.dgnn").string()));
  for (int b = 0; b < kMaxBlocks; ++b) {
    const fs::path f = fs::path(dir) / ("f" + std::to_string(b + 1) + ".dgnn");
    if (fs::exists(f)) m.predictors[b] = std::make_shared<MlpPredictor>(load_mlp(f.string()));
  }
  return m;
}

void sample_cmd(const Common& o, const std::string& problem_path, const std::string& models, bool analytic,
                bool trajectory) {
  const ExperimentConfig c = load(o);
  Conditions targets;
  const Problem p = problem_from_json(read_json(problem_path), &targets);
  if (targets.empty()) throw ConfigError(problem_path + ": no targets to condition on");
  const TrainedModels m = load_models(models, p, analytic || c.analytic);
  const std::uint64_t seed = repeat_seed(c, 0);
  const int d = p.mixture.dim();

  std::vector<std::string> cols = {"method", "lambda1", "lambda2", "lambda3", "index"};
  for (int i = 0; i < d; ++i) cols.push_back("x" + std::to_string(i + 1));
  auto out = open_out(fs::path(o.out) / "samples.csv");
  write_csv_preamble(out, "samples", 1, cols, csv_options(c));

  std::ofstream traj;
  if (trajectory) {
    traj = open_out(fs::path(o.out) / "trajectories.csv");
    std::vector<std::string> tc = {"method", "lambda1", "lambda2", "lambda3", "step", "t", "index"};
    for (int i = 0; i < d; ++i) tc.push_back("x" + std::to_string(i + 1));
    write_csv_preamble(traj, "trajectories", 1, tc, csv_options(c));
  }

  for (const auto& spec : c.rules) {
    for (const auto& l : spec.grid) {
      GuidanceConfig g;
      g.rule = spec.rule;
      g.lambda1 = l.lambda1;
      g.lambda2 = l.lambda2;
      g.lambda3 = l.lambda3;
      g.sigma_data = c.sigma_data;
      g.targets = targets;
      g.predictors = m.predictors;
      const SampleResult s =
          sample(g, *m.denoiser, c.schedule, c.samples, derive_seed(seed, stream::kSampler), trajectory);
      const std::vector<std::string> key = {to_string(spec.rule), format_number(l.lambda1),
                                            format_number(l.lambda2), format_number(l.lambda3)};
      for (Eigen::Index j = 0; j < s.samples.cols(); ++j) {
        std::vector<std::string> row = key;
        row.push_back(std::to_string(s.kept[j]));
        for (int i = 0; i < d; ++i) row.push_back(format_number(s.samples(i, j)));
        write_csv_row(out, row);
      }
      if (trajectory) {
        const auto times = c.schedule.grid();
        for (std::size_t k = 0; k < s.trajectory.size(); ++k) {
          const double t = times[times.size() - 1 - k];
          for (Eigen::Index j = 0; j < s.trajectory[k].cols(); ++j) {
            std::vector<std::string> row = key;
            row.push_back(std::to_string(k));
            row.push_back(format_number(t));
            row.push_back(std::to_string(j));
            for (int i = 0; i < d; ++i) row.push_back(format_number(s.trajectory[k](i, j)));
            write_csv_row(traj, row);
          }
        }
      }
      log(method_label(to_string(spec.rule), l) + ": " + std::to_string(s.kept.size()) + " kept, " +
          std::to_string(s.failures.size()) + " non-finite");
    }
  }
}

// --- eval -------------------------------------------------------------------

void eval_cmd(const Common& o, const std::string& problem_path, const std::string& samples_path) {
  const ExperimentConfig c = load(o);
  Conditions targets;
  const Problem p = problem_from_json(read_json(problem_path), &targets);
  const int d = p.mixture.dim();
  std::vector<std::string> header;
  const auto rows = read_rows(samples_path, &header);
  if (header.size() != static_cast<std::size_t>(5 + d)) {
    throw ConfigError(samples_path + ": expected " + std::to_string(5 + d) + " columns");
  }
  std::map<std::vector<std::string>, std::vector<Vector>> groups;
  std::vector<std::vector<std::string>> order;
  for (const auto& r : rows) {
    if (r.size() != header.size()) throw ConfigError(samples_path + ": ragged row");
    std::vector<std::string> key(r.begin(), r.begin() + 4);
    Vector x(d);
    for (int i = 0; i < d; ++i) x(i) = std::stod(r[5 + i]);
    auto [it, fresh] = groups.try_emplace(key);
    if (fresh) order.push_back(key);
    it->second.push_back(x);
  }
  const PosteriorMixture post = exact_posterior(p.mixture, p.observation, targets);
  auto out = open_out(fs::path(o.out) / "metrics.csv");
  write_csv_preamble(out, "sample_metrics", 1, {"method", "lambda1", "lambda2", "lambda3", "n", "w2"},
                     csv_options(c));
  for (const auto& key : order) {
    const auto& xs = groups.at(key);
    const int n = static_cast<int>(xs.size());
    const Matrix ref = post.mixture.sample_matrix(n, derive_seed(repeat_seed(c, 0), stream::kReference));
    Matrix a(d, n);
    for (int j = 0; j < n; ++j) a.col(j) = xs[j];
    const double w2 = n >= 2 ? wasserstein2(a, ref) : std::numeric_limits<double>::quiet_NaN();
    std::vector<std::string> row = key;
    row.push_back(std::to_string(n));
    row.push_back(format_number(w2));
    write_csv_row(out, row);
    log(key[0] + "(" + key[1] + "," + key[2] + "," + key[3] + ") W2 " + format_number(w2));
  }
}

// --- experiment -------------------------------------------------------------

void experiment_cmd(const Common& o) {
  const ExperimentConfig c = load(o);
  const ExperimentResult r = run_experiment(c, log);
  std::vector<std::pair<std::string, LambdaSet>> methods;
  for (const auto& spec : c.rules) {
    for (const auto& l : spec.grid) methods.emplace_back(to_string(spec.rule), l);
  }
  for (const auto& b : c.baselines) methods.emplace_back(b.method == ImputeMethod::KNN ? "KNN" : "Regressor", LambdaSet{b.lambda, 0, 0});
  for (const auto& [m, l] : methods) {
    const MetricReport s = summarize("w2", "", r.values(m, l));
    log(method_label(m, l) + ": mean W2 " + format_number(s.mean) + ", std " + format_number(s.std) + " over " +
        std::to_string(s.values.size()) + " repeats");
  }
}

// --- certify ----------------------------------------------------------------

void certify_cmd(const Common& o, int points, std::optional<double> shift) {
  ExperimentConfig c = load(o);
  c.regressor_activation = Activation::ReLU;
  const Problem p = make_problem(c, 0);
  const std::uint64_t seed = repeat_seed(c, 0);
  const BlockwiseDataset data = generate_dataset(p.mixture, p.observation, MissingPattern::TwoDataset,
                                                 {c.sizes.at(0), c.sizes.at(1)}, derive_seed(seed, stream::kDataset));
  const PredictorPtr f1 = train_regressor(c, data, 0, seed);
  const PredictorPtr f2 = train_regressor(c, data, 1, seed);
  const AnalyticDenoiser den(p.mixture, p.observation);
  Theorem1Options opts;
  opts.points = points;
  opts.lambda1 = c.rules.front().grid.front().lambda1;
  opts.lambda2 = c.rules.front().grid.front().lambda2;
  const auto certs = theorem1_certify(p.mixture, p.observation, *f1, *f2, den, opts, seed);
  auto out = open_out(fs::path(o.out) / "theorem1.csv");
  write_certificates(out, certs, csv_options(c));
  int violations = 0;
  for (const auto& cert : certs) violations += cert.holds ? 0 : 1;
  log("guidance certificate: " + std::to_string(violations) + "/" + std::to_string(certs.size()) + " violations");

  if (!shift) return;
  const int d = p.mixture.dim();
  std::vector<Vector> moved;
  for (int k = 0; k < p.mixture.size(); ++k) moved.push_back(p.mixture.mean(k).array() + *shift);
  std::vector<Matrix> covs;
  for (int k = 0; k < p.mixture.size(); ++k) covs.push_back(p.mixture.covariance(k));
  const GaussianMixture shifted(p.mixture.weights(), moved, covs);
  Theorem2Options t2;
  Vector lo = Vector::Constant(d, INFINITY), hi = Vector::Constant(d, -INFINITY);
  for (int k = 0; k < p.mixture.size(); ++k) {
    const Vector sd = p.mixture.covariance(k).diagonal().cwiseSqrt();
    lo = lo.cwiseMin(p.mixture.mean(k) - 3 * sd).cwiseMin(moved[k] - 3 * sd);
    hi = hi.cwiseMax(p.mixture.mean(k) + 3 * sd).cwiseMax(moved[k] + 3 * sd);
  }
  t2.support = {lo, hi};
  t2.grid_resolution = std::min(101, static_cast<int>(std::pow(2e6, 1.0 / d)));
  const Theorem2Report rep = theorem2_certify(p.mixture, shifted, p.observation, 0, *f1, t2, seed);
  auto o2 = open_out(fs::path(o.out) / "theorem2.csv");
  write_csv_preamble(o2, "theorem2", 1,
                     {"shift", "precondition_verified", "delta", "density_floor", "risk_source", "risk_shifted",
                      "factor", "bound", "holds", "note"},
                     csv_options(c));
  write_csv_row(o2, {format_number(*shift), rep.precondition_verified ? "1" : "0", format_number(rep.delta),
                     format_number(rep.density_floor), format_number(rep.risk_source),
                     format_number(rep.risk_shifted), format_number(rep.factor), format_number(rep.bound),
                     rep.holds ? "1" : "0", csv_field(rep.note)});
  log("shift certificate: R2 " + format_number(rep.risk_shifted) + " vs bound " + format_number(rep.bound) +
      (rep.precondition_verified ? "" : " (precondition unverified: " + rep.note + ")"));
}

// --- render-field -----------------------------------------------------------

void render_field_cmd(const Common& o) {
  FieldConfig f;
  if (!o.config.empty()) f = field_config_from_json(read_json(o.config));
  if (o.seed) f.seed = *o.seed;
  const FieldComparison cmp = render_field(f);
  auto out = open_out(fs::path(o.out) / "field.csv");
  cmp.write_csv(out, CsvOptions{!o.no_timestamp});
  for (std::size_t r = 0; r < cmp.names.size(); ++r) {
    log(cmp.names[r] + ": mean cosine " + format_number(cmp.mean_cosine[r]) + ", mse " + format_number(cmp.mse[r]));
  }
}

// --- ablate -----------------------------------------------------------------

void ablate_cmd(const Common& o, const std::string& kind, const std::vector<double>& ratios) {
  const ExperimentConfig c = load(o);
  if (kind == "single_vs_aggregated") {
    for (const auto& a : run_single_vs_aggregated(c, log)) {
      log(a.method + ": single − aggregated " + format_number(a.difference.mean) + " (se " +
          format_number(a.difference.standard_error) + ")");
    }
  } else {
    for (const auto& r : run_varying_n(c, ratios, log)) {
      for (const auto& s : r.summaries) {
        log("ratio " + format_number(r.ratio) + " " + s.metric + ": mean " + format_number(s.mean));
      }
    }
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Guided diffusion sampling under block-wise missing conditions"};
  app.require_subcommand(1);

  Common gen_o, train_o, sample_o, eval_o, exp_o, cert_o, field_o, abl_o;
  auto* gen = app.add_subcommand("gen-data", "Draw a problem, its targets and a training dataset");
  add_common(gen, gen_o);

  std::string data_path;
  auto* tr = app.add_subcommand("train", "Train the denoiser and regressors on a dataset");
  add_common(tr, train_o);
  tr->add_option("--data", data_path, "Dataset CSV from gen-data")->required()->check(CLI::ExistingFile);

  std::string problem_path, models_dir, samples_path;
  bool analytic = false, trajectory = false;
  auto* sm = app.add_subcommand("sample", "Sample every configured rule and λ");
  add_common(sm, sample_o);
  sm->add_option("--problem", problem_path, "problem.json from gen-data")->required()->check(CLI::ExistingFile);
  sm->add_option("--models", models_dir, "Directory with denoiser.dgnn and f*.dgnn");
  sm->add_flag("--analytic", analytic, "Use the exact denoiser and noiseless predictors");
  sm->add_flag("--trajectory", trajectory, "Also write every intermediate state");

  auto* ev = app.add_subcommand("eval", "W2 of samples against exact posterior draws");
  add_common(ev, eval_o);
  ev->add_option("--problem", problem_path, "problem.json from gen-data")->required()->check(CLI::ExistingFile);
  ev->add_option("--samples", samples_path, "samples.csv from sample")->required()->check(CLI::ExistingFile);

  auto* ex = app.add_subcommand("experiment", "Run all repeats of a configured experiment");
  add_common(ex, exp_o);

  int points = 500;
  std::optional<double> shift;
  auto* ce = app.add_subcommand("certify", "Check the guidance and shift certificates");
  add_common(ce, cert_o);
  ce->add_option("--points", points, "States per certificate run")->check(CLI::PositiveNumber);
  ce->add_option("--shift", shift, "Also certify the regressor under a mean shift of this size");

  auto* rf = app.add_subcommand("render-field", "Guided score fields against the oracle on a 2-D slice");
  add_common(rf, field_o, false);

  std::string kind;
  std::vector<double> ratios = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  auto* ab = app.add_subcommand("ablate", "Single vs aggregated data, or varying dataset ratios");
  add_common(ab, abl_o);
  ab->add_option("kind", kind, "single_vs_aggregated or varying_n")
      ->required()
      ->check(CLI::IsMember({"single_vs_aggregated", "varying_n"}));
  ab->add_option("--ratios", ratios, "n1/(n1+n2) values for varying_n");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) gen_data(gen_o);
    if (*tr) train(train_o, data_path);
    if (*sm) {
      if (!analytic && models_dir.empty()) throw ConfigError("sample: --models or --analytic is required");
      sample_cmd(sample_o, problem_path, models_dir, analytic, trajectory);
    }
    if (*ev) eval_cmd(eval_o, problem_path, samples_path);
    if (*ex) experiment_cmd(exp_o);
    if (*ce) certify_cmd(cert_o, points, shift);
    if (*rf) render_field_cmd(field_o);
    if (*ab) ablate_cmd(abl_o, kind, ratios);
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
