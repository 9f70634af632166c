#include "dguide/wasserstein.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace dguide {

Matrix squared_distance_matrix(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) throw ConfigError("distance matrix: point dimensions differ");
  Matrix c = -2.0 * (a.transpose() * b);
  c.colwise() += a.colwise().squaredNorm().transpose();
  c.rowwise() += b.colwise().squaredNorm();
  return c.cwiseMax(0.0);
}

std::vector<int> solve_assignment(const Matrix& cost) {
  const int n = static_cast<int>(cost.rows());
  if (cost.cols() != n) throw ConfigError("solve_assignment: cost matrix must be square");
  if (n == 0) return {};
  if (!cost.allFinite()) throw ConfigError("solve_assignment: cost matrix has non-finite entries");
  const double inf = std::numeric_limits<double>::infinity();
  // 1-based potentials; column 0 is a virtual start.
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<int> match(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1);
  for (int i = 1; i <= n; ++i) {
    match[0] = i;
    int j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const int i0 = match[j0];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[match[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (match[j0] != 0);
    do {
      const int j1 = way[j0];
      match[j0] = match[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> assignment(n);
  for (int j = 1; j <= n; ++j) assignment[match[j] - 1] = j - 1;
  return assignment;
}

namespace {

// ε·log Σ_j exp((g_j − C_ij)/ε) for every row i.
Vector soft_min_rows(const Matrix& cost, const Vector& g, double eps) {
  Vector out(cost.rows());
  for (Eigen::Index i = 0; i < cost.rows(); ++i) {
    const auto z = (g.transpose() - cost.row(i)) / eps;
    const double m = z.maxCoeff();
    out(i) = eps * (m + std::log((z.array() - m).exp().sum()));
  }
  return out;
}

}  // namespace

double sinkhorn_cost(const Matrix& cost, const SinkhornOptions& options) {
  const auto n = cost.rows();
  const auto m = cost.cols();
  if (n == 0 || m == 0) throw ConfigError("sinkhorn: empty cost matrix");
  if (!(options.epsilon_end > 0.0) || !(options.epsilon_start >= options.epsilon_end) ||
      !(options.epsilon_decay > 0.0 && options.epsilon_decay < 1.0)) {
    throw ConfigError("sinkhorn: bad epsilon schedule");
  }
  const double scale = std::max(cost.mean(), 1e-300);
  const Vector log_a = Vector::Constant(n, -std::log(static_cast<double>(n)));
  const Vector log_b = Vector::Constant(m, -std::log(static_cast<double>(m)));
  const Matrix cost_t = cost.transpose();
  Vector f = Vector::Zero(n);
  Vector g = Vector::Zero(m);
  double eps = options.epsilon_start * scale;
  const double eps_end = options.epsilon_end * scale;
  while (true) {
    for (int it = 0; it < options.max_iterations_per_stage; ++it) {
      const Vector f_next = eps * log_a - soft_min_rows(cost, g, eps);
      // Row marginals of the current plan are a_i·exp((f_i − f_next_i)/ε).
      const double err =
          (log_a.array().exp() * (((f - f_next) / eps).array().exp() - 1.0).abs()).sum();
      f = f_next;
      g = eps * log_b - soft_min_rows(cost_t, f, eps);
      if (it > 0 && err < options.marginal_tolerance) break;
    }
    if (eps <= eps_end) break;
    eps = std::max(eps * options.epsilon_decay, eps_end);
  }
  Matrix plan(n, m);
  for (Eigen::Index i = 0; i < n; ++i)
    plan.row(i) = ((g.transpose() - cost.row(i)).array() / eps + f(i) / eps).exp();

  // Round onto the transport polytope.
  const Vector a = log_a.array().exp();
  const Vector b = log_b.array().exp();
  const Vector rows = plan.rowwise().sum();
  for (Eigen::Index i = 0; i < n; ++i)
    if (rows(i) > a(i)) plan.row(i) *= a(i) / rows(i);
  const Vector cols = plan.colwise().sum().transpose();
  for (Eigen::Index j = 0; j < m; ++j)
    if (cols(j) > b(j)) plan.col(j) *= b(j) / cols(j);
  const Vector err_a = a - plan.rowwise().sum();
  const Vector err_b = b - plan.colwise().sum().transpose();
  const double mass = err_a.lpNorm<1>();
  if (mass > 0.0) plan += err_a * err_b.transpose() / mass;
  return plan.cwiseProduct(cost).sum();
}

double wasserstein2(const Matrix& a, const Matrix& b, const W2Options& options) {
  if (a.cols() != b.cols()) {
    throw ConfigError("wasserstein2: point sets differ in size (" + std::to_string(a.cols()) +
                      " vs " + std::to_string(b.cols()) + ")");
  }
  if (a.cols() < 1) throw ConfigError("wasserstein2: empty point sets");
  const Matrix cost = squared_distance_matrix(a, b);
  const auto n = static_cast<double>(a.cols());
  const bool exact = options.method == W2Method::Exact ||
                     (options.method == W2Method::Auto && a.cols() <= options.exact_limit);
  double total = 0.0;
  if (exact) {
    const auto assignment = solve_assignment(cost);
    for (Eigen::Index i = 0; i < cost.rows(); ++i) total += cost(i, assignment[static_cast<std::size_t>(i)]);
    total /= n;
  } else {
    total = sinkhorn_cost(cost, options.sinkhorn);
  }
  return std::sqrt(std::max(total, 0.0));
}

double wasserstein2(const std::vector<Vector>& a, const std::vector<Vector>& b,
                    const W2Options& options) {
  if (a.size() != b.size()) throw ConfigError("wasserstein2: point sets differ in size");
  if (a.empty()) throw ConfigError("wasserstein2: empty point sets");
  const auto d = a.front().size();
  Matrix ma(d, static_cast<Eigen::Index>(a.size()));
  Matrix mb(d, static_cast<Eigen::Index>(b.size()));
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].size() != d || b[i].size() != d) throw ConfigError("wasserstein2: mixed dimensions");
    ma.col(static_cast<Eigen::Index>(i)) = a[i];
    mb.col(static_cast<Eigen::Index>(i)) = b[i];
  }
  return wasserstein2(ma, mb, options);
}

}  // namespace dguide
