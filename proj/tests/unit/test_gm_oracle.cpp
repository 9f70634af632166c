#include "../oracles.hpp"
#include "dguide/experiment.hpp"
#include "dguide/gm_oracle.hpp"

#include <doctest.h>

#include <numbers>

using namespace dguide;

namespace {

GaussianMixture standard_normal_prior(int d) {
  return GaussianMixture({1.0}, {Vector::Zero(d)}, {Matrix::Identity(d, d)});
}

LinearObservationModel identity_model(int d, double sigma) {
  std::vector<int> rows(d);
  for (int i = 0; i < d; ++i) rows[i] = i;
  return LinearObservationModel(Matrix::Identity(d, d), sigma, {{"C1", rows, std::nullopt}});
}

LinearObservationModel two_block_model(const Matrix& a, double sigma, int split) {
  std::vector<int> r1, r2;
  for (int i = 0; i < a.rows(); ++i) (i < split ? r1 : r2).push_back(i);
  return LinearObservationModel(a, sigma, {{"C1", r1, std::nullopt}, {"C2", r2, std::nullopt}});
}

}  // namespace

TEST_CASE("standard normal prior draws average to zero") {
  const auto xs = sample_prior(standard_normal_prior(3), 100000, 11);
  Vector mean = Vector::Zero(3);
  for (const auto& x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  CHECK(mean.cwiseAbs().maxCoeff() < 0.02);
}

TEST_CASE("tight Setting I components keep draws inside the widened cube") {
  const GaussianMixture gm = preset_mixture(Setting::I, 3);
  const Matrix x = gm.sample_matrix(20000, 4);
  CHECK(x.cwiseAbs().maxCoeff() < 1.5);
}

TEST_CASE("component frequencies follow the weights") {
  const GaussianMixture gm({0.3, 0.7}, {Vector::Constant(1, -100.0), Vector::Constant(1, 100.0)},
                           {Matrix::Identity(1, 1), Matrix::Identity(1, 1)});
  const int n = 1000000;
  const Matrix x = gm.sample_matrix(n, 5);
  const double first = static_cast<double>((x.array() < 0.0).count()) / n;
  CHECK(std::abs(first - 0.3) < 0.01);
}

TEST_CASE("noiseless identity observation returns its input") {
  Vector x0(5);
  x0 << 1, 2, 3, 4, 5;
  const Vector y = observe(identity_model(5, 0.3), x0, 9, true);
  CHECK((y - x0).norm() == 0.0);
}

TEST_CASE("Setting II observation of the ones vector has mean 1.5 per coordinate") {
  const LinearObservationModel m = preset_observation(Setting::II, MissingPattern::TwoDataset);
  const Vector ones = Vector::Ones(5);
  CHECK((m.observe(ones, 1, true).array() - 1.5).abs().maxCoeff() < 1e-15);
  const int n = 40000;
  Vector avg = Vector::Zero(5);
  for (int i = 0; i < n; ++i) avg += m.observe(ones, derive_seed(2, 0, i));
  avg /= n;
  // σ = 1, so the standard error of each average is 1/√n.
  CHECK((avg.array() - 1.5).abs().maxCoeff() < 4.0 / std::sqrt(n));
}

TEST_CASE("Setting I observation scales coordinate i by 0.1/i") {
  const LinearObservationModel m = preset_observation(Setting::I, MissingPattern::TwoDataset);
  Vector x0(5);
  x0 << 0.3, -0.7, 0.2, 0.9, -0.4;
  const Vector y = m.observe(x0, 1, true);
  for (int i = 0; i < 5; ++i) CHECK(y(i) == doctest::Approx(0.1 / (i + 1) * x0(i)).epsilon(1e-15));
}

TEST_CASE("conjugate standard normal posterior halves the covariance") {
  const auto post = exact_posterior(standard_normal_prior(3), identity_model(3, 1.0),
                                    Conditions{}.set(0, Vector::Zero(3)));
  REQUIRE(post.mixture.size() == 1);
  CHECK(post.mixture.mean(0).norm() < 1e-15);
  CHECK((post.mixture.covariance(0) - 0.5 * Matrix::Identity(3, 3)).norm() < 1e-14);
}

TEST_CASE("single component posterior matches Gaussian conditioning") {
  const int d = 4;
  const Matrix l = oracle::random_matrix(d, d, 21);
  const Matrix cov = l * l.transpose() + 0.5 * Matrix::Identity(d, d);
  const Vector m = oracle::random_matrix(d, 1, 22).col(0);
  const GaussianMixture gm({1.0}, {m}, {cov});
  const Matrix a = oracle::random_matrix(3, d, 23);
  const LinearObservationModel model = two_block_model(a, 0.7, 2);
  const Vector y = oracle::random_matrix(3, 1, 24).col(0);
  const auto post = exact_posterior(gm, model, Conditions{}.set(0, y.head(2)).set(1, y.tail(1)));

  const Matrix s = a * cov * a.transpose() + 0.49 * Matrix::Identity(3, 3);
  const Matrix gain = cov * a.transpose() * s.inverse();
  const Vector mean = m + gain * (y - a * m);
  const Matrix pcov = cov - gain * a * cov;
  CHECK((post.mixture.mean(0) - mean).norm() < 1e-10);
  CHECK((post.mixture.covariance(0) - pcov).norm() < 1e-10);
}

TEST_CASE("posterior weights sum to one even for far observations") {
  const GaussianMixture gm = preset_mixture(Setting::II, 8);
  const LinearObservationModel model = preset_observation(Setting::II, MissingPattern::TwoDataset);
  const Conditions c = Conditions{}.set(0, Vector::Constant(2, 300.0)).set(1, Vector::Constant(3, -250.0));
  const auto post = exact_posterior(gm, model, c);
  double sum = 0.0;
  for (double w : post.mixture.weights()) {
    CHECK(std::isfinite(w));
    sum += w;
  }
  CHECK(std::abs(sum - 1.0) < 1e-12);
  const Vector r = gm.responsibilities(Vector::Constant(5, 1e3));
  CHECK(r.allFinite());
  CHECK(std::abs(r.sum() - 1.0) < 1e-12);
}

TEST_CASE("sequential conditioning agrees with joint conditioning") {
  const GaussianMixture gm = oracle::random_mixture(3, 4, 31);
  const Matrix a = oracle::random_matrix(4, 4, 32);
  const LinearObservationModel model = two_block_model(a, 0.6, 2);
  const Vector y = oracle::random_matrix(4, 1, 33).col(0);
  const Conditions both = Conditions{}.set(0, y.head(2)).set(1, y.tail(2));
  const auto joint = exact_posterior(gm, model, both);
  const auto first = exact_posterior(gm, model, Conditions{}.set(0, y.head(2)));
  const GaussianMixture chained =
      condition_on_linear(first.mixture, model.block_matrix(1), y.tail(2), Vector::Constant(2, 0.36));
  for (int k = 0; k < gm.size(); ++k) {
    CHECK(std::abs(chained.weight(k) - joint.mixture.weight(k)) < 1e-9);
    CHECK((chained.mean(k) - joint.mixture.mean(k)).norm() < 1e-9);
    CHECK((chained.covariance(k) - joint.mixture.covariance(k)).norm() < 1e-9);
  }
}

TEST_CASE("standard normal smoothed score and posterior mean") {
  const GaussianMixture gm = standard_normal_prior(3);
  const LinearObservationModel model = identity_model(3, 1.0);
  Vector x(3);
  x << 0.4, -1.3, 2.2;
  for (double t : {0.01, 0.5, 1.0, 7.0}) {
    CHECK((score_t(gm, model, x, t) + x / (1 + t * t)).norm() < 1e-13);
    CHECK((posterior_mean_t(gm, model, x, t) - x / (1 + t * t)).norm() < 1e-13);
  }
}

TEST_CASE("posterior mean approaches x as t goes to zero") {
  const GaussianMixture gm = oracle::random_mixture(4, 3, 41);
  const LinearObservationModel model = identity_model(3, 1.0);
  const Vector x = oracle::random_matrix(3, 1, 42).col(0);
  for (double t : {1e-2, 1e-3, 1e-4}) {
    CHECK((posterior_mean_t(gm, model, x, t) - x).norm() < 50.0 * t * t);
  }
}

TEST_CASE("smoothed score matches finite differences at random points") {
  double worst = 0.0;
  for (int i = 0; i < 200; ++i) {
    const GaussianMixture gm = oracle::random_mixture(3, 3, 100 + i);
    const Vector x = 1.5 * oracle::random_matrix(3, 1, 500 + i).col(0);
    const double t = std::exp(-2.0 + 3.0 * (i % 20) / 19.0);
    const Vector fd = oracle::fd_gradient([&](const Vector& z) { return oracle::log_smoothed(gm, z, t); }, x, 1e-4);
    worst = std::max(worst, oracle::relative_error(score_t(gm, identity_model(3, 1.0), x, t), fd));
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("conditioning adds the gradient of the log likelihood of C1") {
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const GaussianMixture gm = oracle::random_mixture(2, 3, 700 + i);
    const Matrix a = oracle::random_matrix(3, 3, 800 + i);
    const LinearObservationModel model = two_block_model(a, 0.8, 2);
    const Vector x = oracle::random_matrix(3, 1, 900 + i).col(0);
    const Vector c1 = oracle::random_matrix(2, 1, 1000 + i).col(0);
    const double t = 0.3 + 0.02 * i;
    const Matrix h = a.topRows(2);
    const Vector r = Vector::Constant(2, 0.64);
    const auto log_lik = [&](const Vector& z) {
      return oracle::log_joint(gm, h, r, z, c1, t) - oracle::log_smoothed(gm, z, t);
    };
    const Vector diff = score_t(gm, model, x, t, Conditions{}.set(0, c1)) - score_t(gm, model, x, t);
    worst = std::max(worst, oracle::relative_error(diff, oracle::fd_gradient(log_lik, x, 1e-4)));
  }
  CHECK(worst < 1e-6);
}

TEST_CASE("small observation noise pulls the score toward the preimage") {
  const int d = 3;
  const GaussianMixture gm({1.0}, {Vector::Zero(d)}, {Matrix::Identity(d, d)});
  Matrix a = oracle::random_matrix(d, d, 51) + 2.0 * Matrix::Identity(d, d);
  const LinearObservationModel model(a, 0.01, {{"C1", {0, 1}, std::nullopt}, {"C2", {2}, std::nullopt}});
  Vector target(d);
  target << 0.8, -0.5, 0.3;
  const Vector y = a * target;
  const Conditions c = Conditions{}.set(0, y.head(2)).set(1, y.tail(1));
  const Vector x = oracle::random_matrix(d, 1, 52).col(0);
  const Vector s = score_t(gm, model, x, 1.0, c);
  const Vector dir = a.lu().solve(y) - x;
  CHECK(s.dot(dir) / (s.norm() * dir.norm()) > 0.999);
}

TEST_CASE("Tweedie posterior mean agrees with importance sampling") {
  const GaussianMixture gm = oracle::random_mixture(3, 2, 61);
  const LinearObservationModel model = identity_model(2, 1.0);
  Vector x(2);
  x << 0.7, -0.4;
  const double t = 0.8;
  const auto [mc, se] = oracle::tweedie_importance(gm, x, t, 1000000, 62);
  const Vector exact = posterior_mean_t(gm, model, x, t);
  CHECK((exact - mc).norm() <= 3.0 * se.norm());
}

TEST_CASE("single component conditional density matches the closed form") {
  const int d = 3;
  const Matrix l = oracle::random_matrix(d, d, 71);
  const Matrix cov = l * l.transpose() + Matrix::Identity(d, d);
  const Vector m = oracle::random_matrix(d, 1, 72).col(0);
  const GaussianMixture gm({1.0}, {m}, {cov});
  const Matrix a = oracle::random_matrix(3, d, 73);
  const LinearObservationModel model = two_block_model(a, 0.5, 1);
  const Vector x = oracle::random_matrix(d, 1, 74).col(0);
  const double t = 0.9;
  const Vector c2 = oracle::random_matrix(2, 1, 75).col(0);

  // X0 | X_t = x is N(μ, S); C2 | X_t is N(A2 μ, A2 S A2ᵀ + σ² I).
  const Matrix s_t = cov + t * t * Matrix::Identity(d, d);
  const Matrix gain = cov * s_t.inverse();
  const Vector mu = m + gain * (x - m);
  const Matrix s = cov - gain * cov;
  const Matrix a2 = a.bottomRows(2);
  const double expected = std::exp(oracle::log_gauss(c2, a2 * mu, a2 * s * a2.transpose() + 0.25 * Matrix::Identity(2, 2)));
  CHECK(conditional_density(gm, model, 1, c2, x, t) == doctest::Approx(expected).epsilon(1e-10));
}

TEST_CASE("conditional density agrees with a Monte Carlo average over the state posterior") {
  const GaussianMixture gm = oracle::random_mixture(3, 3, 81);
  const Matrix a = oracle::random_matrix(3, 3, 82);
  const LinearObservationModel model = two_block_model(a, 0.7, 1);
  const Vector x = oracle::random_matrix(3, 1, 83).col(0);
  const Vector c1 = oracle::random_matrix(1, 1, 84).col(0);
  const double t = 0.6;
  const Vector c2 = a.bottomRows(2) * posterior_mean_t(gm, model, x, t, Conditions{}.set(0, c1));
  const double exact = conditional_density(gm, model, 1, c2, x, t, Conditions{}.set(0, c1));

  const auto post = state_posterior(gm, model, x, t, Conditions{}.set(0, c1));
  const int n = 400000;
  const Matrix draws = post.mixture.sample_matrix(n, 85);
  double sum = 0.0, sum_sq = 0.0;
  for (int j = 0; j < n; ++j) {
    const double v = std::exp(oracle::log_gauss(c2, a.bottomRows(2) * draws.col(j), 0.49 * Matrix::Identity(2, 2)));
    sum += v;
    sum_sq += v * v;
  }
  const double mean = sum / n;
  const double se = std::sqrt((sum_sq / n - mean * mean) / n);
  CHECK(std::abs(exact - mean) <= 4.0 * se);
}

TEST_CASE("surrogate density at its mode") {
  const Vector v = Vector::Constant(3, 0.2);
  const double lambda = 1.7;
  CHECK(surrogate_density(v, v, lambda) == doctest::Approx(std::pow(lambda / std::numbers::pi, 1.5)).epsilon(1e-14));
}

TEST_CASE("ill-conditioned covariances are rejected") {
  Matrix cov = Matrix::Identity(2, 2);
  cov(1, 1) = 1e-13;
  CHECK_THROWS_AS(GaussianMixture({1.0}, {Vector::Zero(2)}, {cov}), NumericalError);
}

TEST_CASE("per-block noise overrides the shared noise") {
  const Matrix a = Matrix::Identity(2, 2);
  const LinearObservationModel model(a, 1.0, {{"C1", {0}, 0.1}, {"C2", {1}, std::nullopt}});
  CHECK(model.block_noise(0) == 0.1);
  CHECK(model.block_noise(1) == 1.0);
  const auto post = exact_posterior(standard_normal_prior(2), model, Conditions{}.set(0, Vector::Constant(1, 1.0)));
  CHECK(post.mixture.covariance(0)(0, 0) == doctest::Approx(1.0 - 1.0 / 1.01).epsilon(1e-12));
  CHECK(post.mixture.covariance(0)(1, 1) == doctest::Approx(1.0).epsilon(1e-12));
}
