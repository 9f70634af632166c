#include "dguide/experiment.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace dguide;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("dguide_unit_" + name);
  fs::remove_all(p);
  return p;
}

ExperimentConfig tiny(const std::string& name) {
  ExperimentConfig c;
  c.name = name;
  c.sizes = {120, 120};
  c.repeats = 2;
  c.samples = 20;
  c.denoiser_train.epochs = 2;
  c.regressor_train.epochs = 2;
  c.denoiser_width = 16;
  c.regressor_width = 16;
  c.rules = {{Rule::Uncond, {{0, 0, 0}}}};
  c.timestamp = false;
  return c;
}

int data_lines(const std::string& csv) {
  int n = 0;
  std::istringstream in(csv);
  std::string line;
  bool header = false;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (!header) {
      header = true;
      continue;
    }
    ++n;
  }
  return n;
}

}  // namespace

TEST_CASE("Setting I preset constants") {
  const GaussianMixture gm = preset_mixture(Setting::I, 42);
  REQUIRE(gm.size() == 10);
  REQUIRE(gm.dim() == 5);
  for (int k = 0; k < 10; ++k) {
    CHECK(gm.weight(k) == 0.1);
    CHECK(gm.covariance(k) == 0.01 * Matrix::Identity(5, 5));
    CHECK(gm.mean(k).cwiseAbs().maxCoeff() <= 1.0);
  }
  const LinearObservationModel m = preset_observation(Setting::I, MissingPattern::TwoDataset);
  CHECK(m.noise_std() == 0.1);
  Matrix a = Matrix::Zero(5, 5);
  a.diagonal() << 0.1, 0.05, 0.1 / 3, 0.025, 0.02;
  CHECK(m.matrix() == a);
  CHECK(m.block(0).rows == std::vector<int>{0, 1});
  CHECK(m.block(1).rows == std::vector<int>{2, 3, 4});
}

TEST_CASE("Setting II preset constants") {
  const GaussianMixture gm = preset_mixture(Setting::II, 42);
  bool wide = false;
  for (int k = 0; k < 10; ++k) {
    CHECK(gm.weight(k) == 0.1);
    CHECK(gm.covariance(k) == Matrix::Identity(5, 5));
    CHECK(gm.mean(k).cwiseAbs().maxCoeff() <= 5.0);
    wide = wide || gm.mean(k).cwiseAbs().maxCoeff() > 1.0;
  }
  CHECK(wide);
  const LinearObservationModel m = preset_observation(Setting::II, MissingPattern::TypeII);
  CHECK(m.noise_std() == 1.0);
  for (int i = 0; i < 5; ++i) {
    for (int j = 0; j < 5; ++j) CHECK(m.matrix()(i, j) == (i == j ? 0.5 : 0.25));
  }
  REQUIRE(m.block_count() == 3);
  CHECK(m.block(0).rows == std::vector<int>{0, 1});
  CHECK(m.block(1).rows == std::vector<int>{2, 3});
  CHECK(m.block(2).rows == std::vector<int>{4});
}

TEST_CASE("preset mixtures depend only on their seed") {
  const GaussianMixture a = preset_mixture(Setting::II, 5);
  const GaussianMixture b = preset_mixture(Setting::II, 5);
  const GaussianMixture c = preset_mixture(Setting::II, 6);
  CHECK(a.mean(3) == b.mean(3));
  CHECK(a.mean(3) != c.mean(3));
}

TEST_CASE("preset guidance scales") {
  const auto two = preset_rules(Setting::II);
  REQUIRE(two.size() == 4);
  CHECK(two[0].rule == Rule::DMDG);
  CHECK(two[0].grid[0].lambda1 == 1.5);
  CHECK(two[1].rule == Rule::DMIDG);
  CHECK(two[1].grid[0].lambda2 == 2.0);
  const auto one = preset_rules(Setting::I);
  bool hybrid = false;
  for (const auto& r : one) {
    if (r.rule == Rule::DMHG) {
      CHECK(r.grid[0].lambda1 == 1.0);
      CHECK(r.grid[0].lambda2 == 250.0);
      hybrid = true;
    }
  }
  CHECK(hybrid);
}

TEST_CASE("config defaults, budgets and strict keys") {
  const ExperimentConfig d = config_from_json(nlohmann::json::object());
  CHECK(d.denoiser_train.epochs == kPresetEpochs);
  CHECK(d.rules.size() == 4);
  CHECK(config_from_json({{"budget", "reduced"}}).denoiser_train.epochs == kReducedEpochs);
  CHECK_THROWS_AS(config_from_json({{"repeatz", 3}}), ConfigError);
  CHECK_THROWS_AS(config_from_json({{"rules", {{{"rule", "DMDG"}, {"grid", nlohmann::json::array()}}}}}), ConfigError);
  CHECK_THROWS_AS(config_from_json({{"setting", "III"}}), ConfigError);
}

TEST_CASE("config JSON round trip") {
  ExperimentConfig c = tiny("round");
  c.setting = Setting::I;
  c.pattern = MissingPattern::TwoDataset;
  c.rules = preset_rules(Setting::I);
  c.baselines = {BaselineSpec{}};
  c.mixture_policy = MixturePolicy::Fixed;
  c.p_non = 0.3;
  const ExperimentConfig back = config_from_json(config_to_json(c));
  CHECK(config_to_json(back) == config_to_json(c));
  CHECK(fingerprint(back, "DMHG", {1, 250, 0}) == fingerprint(c, "DMHG", {1, 250, 0}));
}

TEST_CASE("custom problems serialize with their targets") {
  const Problem p{preset_mixture(Setting::II, 9), preset_observation(Setting::II, MissingPattern::TwoDataset)};
  const Conditions t = draw_targets(p, 10);
  Conditions back_t;
  const Problem back = problem_from_json(problem_to_json(p, t), &back_t);
  CHECK(back.mixture.mean(4) == p.mixture.mean(4));
  CHECK(back.observation.matrix() == p.observation.matrix());
  CHECK(back_t.at(0) == t.at(0));
  CHECK(back_t.at(1) == t.at(1));

  ExperimentConfig c;
  c.setting = Setting::Custom;
  nlohmann::json j = problem_to_json(p, {});
  c = config_from_json({{"setting", "custom"}, {"custom", j}, {"rules", {{{"rule", "UNCOND"}}}}});
  const Problem again = make_problem(c, 0);
  CHECK(again.mixture.mean(0) == p.mixture.mean(0));
}

TEST_CASE("mixture policy controls redraws") {
  ExperimentConfig c;
  c.mixture_policy = MixturePolicy::Redraw;
  CHECK(make_problem(c, 0).mixture.mean(0) != make_problem(c, 1).mixture.mean(0));
  c.mixture_policy = MixturePolicy::Fixed;
  CHECK(make_problem(c, 0).mixture.mean(0) == make_problem(c, 1).mixture.mean(0));
  CHECK(repeat_seed(c, 0) != repeat_seed(c, 1));
}

TEST_CASE("unconditional smoke run emits one row per repeat and a summary") {
  ExperimentConfig c = tiny("smoke");
  const fs::path out = scratch("smoke");
  c.output_dir = out.string();
  const ExperimentResult r = run_experiment(c);
  CHECK(r.rows.size() == 2);
  CHECK(r.summaries.size() == 1);
  CHECK(data_lines(slurp(out / "rows.csv")) == 2);
  CHECK(data_lines(slurp(out / "summary.csv")) == 1);
  CHECK(slurp(out / "rows.csv").rfind("# schema: experiment_rows v1\n", 0) == 0);
  CHECK(fs::exists(out / "config.json"));
}

TEST_CASE("CSV output is byte reproducible and independent of the worker count") {
  ExperimentConfig c = tiny("repro");
  c.rules = {{Rule::DMDG, {{1.5, 1.5, 0}}}, {Rule::DMHG, {{1.5, 1.5, 0}}}};
  const fs::path a = scratch("repro_a"), b = scratch("repro_b");
  c.output_dir = a.string();
  run_experiment(c);
  c.output_dir = b.string();
  c.workers = 2;
  run_experiment(c);
  CHECK(slurp(a / "rows.csv") == slurp(b / "rows.csv"));
  CHECK(slurp(a / "summary.csv") == slurp(b / "summary.csv"));
  CHECK(slurp(a / "rows.csv").find("# generated") == std::string::npos);
}

TEST_CASE("a single repeat can be rerun in isolation") {
  ExperimentConfig c = tiny("isolated");
  c.rules = {{Rule::DMHG, {{1.5, 1.5, 0}}}};
  const ExperimentResult all = run_experiment(c);
  const auto one = run_repeat(c, 1);
  REQUIRE(one.size() == 1);
  CHECK(one[0].w2 == all.rows[1].w2);
  CHECK(one[0].seed == all.rows[1].seed);
}

TEST_CASE("invalid configurations are rejected before running") {
  ExperimentConfig c = tiny("bad");
  c.repeats = 0;
  CHECK_THROWS_AS(run_experiment(c), ConfigError);
  c = tiny("bad");
  c.rules.clear();
  c.baselines.clear();
  CHECK_THROWS_AS(run_experiment(c), ConfigError);
}

TEST_CASE("errors inside a repeat carry the repeat context") {
  ExperimentConfig c = tiny("ctx");
  c.analytic = true;
  c.baselines = {BaselineSpec{}};
  try {
    run_experiment(c);
    FAIL("expected an error");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("repeat 0") != std::string::npos);
  }
}

TEST_CASE("single-repeat ablation rows are flagged") {
  ExperimentConfig c = tiny("ablation");
  c.repeats = 1;
  c.rules = {{Rule::DMDG, {{1.5, 1.5, 0}}}};
  const fs::path out = scratch("ablation");
  c.output_dir = out.string();
  const auto cmp = run_single_vs_aggregated(c);
  REQUIRE(cmp.size() == 1);
  CHECK(cmp[0].single.size() == 1);
  CHECK(cmp[0].aggregated.size() == 1);
  CHECK(slurp(out / "comparison.csv").find("single_repeat") != std::string::npos);
}

TEST_CASE("varying dataset ratios give one summary per ratio") {
  ExperimentConfig c = tiny("ratios");
  c.repeats = 1;
  c.sizes = {150, 150};
  const auto r = run_varying_n(c, {0.2, 0.8});
  REQUIRE(r.size() == 2);
  CHECK(r[0].ratio == 0.2);
  CHECK(r[0].summaries.size() == 1);
  CHECK(r[1].summaries.size() == 1);
}

TEST_CASE("joint conditional model sees both blocks when C1 is present") {
  const Problem p{preset_mixture(Setting::II, 31), preset_observation(Setting::II, MissingPattern::TwoDataset)};
  const auto inner = std::make_shared<AnalyticDenoiser>(p.mixture, p.observation);
  const Conditions t = draw_targets(p, 32);
  const JointConditionDenoiser joint(inner, t.at(1));
  const Matrix x = p.mixture.sample_matrix(4, 33);
  CHECK(joint.denoise(x, 0.7, t.only({0})) == inner->denoise(x, 0.7, t));
  CHECK(joint.denoise(x, 0.7, {}) == inner->denoise(x, 0.7, {}));
  CHECK_THROWS_AS(joint.denoise(x, 0.7, t), ConfigError);
}

TEST_CASE("score field slices follow the block correlation") {
  FieldConfig f;
  f.setting = Setting::II;
  const FieldComparison two = render_field(f);
  REQUIRE(two.names.size() == 2);
  CHECK(two.mean_cosine[0] > two.mean_cosine[1]);
  f.setting = Setting::I;
  const FieldComparison one = render_field(f);
  CHECK(std::abs(one.mean_cosine[0] - one.mean_cosine[1]) < 0.02);
  std::ostringstream a, b;
  two.write_csv(a, CsvOptions{false});
  render_field(FieldConfig{}).write_csv(b, CsvOptions{false});
  CHECK(a.str() == b.str());
}

TEST_CASE("field configs parse from JSON") {
  const FieldConfig f = field_config_from_json(
      {{"setting", "I"}, {"resolution", 5}, {"rules", {{{"rule", "DMHG"}, {"lambda1", 1}, {"lambda2", 250}}}}});
  CHECK(f.setting == Setting::I);
  CHECK(f.resolution == 5);
  REQUIRE(f.rules.size() == 1);
  CHECK(f.rules[0].first == Rule::DMHG);
  CHECK(render_field(f).points.size() == 25);
  CHECK_THROWS_AS(field_config_from_json({{"resolutoin", 5}}), ConfigError);
}
