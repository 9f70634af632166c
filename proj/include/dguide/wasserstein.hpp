#pragma once

// Empirical 2-Wasserstein distance between equal-size point sets (columns).

#include "dguide/linalg.hpp"

#include <vector>

namespace dguide {

/// Squared Euclidean cost matrix C(i, j) = ‖a_i − b_j‖².
Matrix squared_distance_matrix(const Matrix& a, const Matrix& b);

/// Minimum-cost perfect assignment of a square cost matrix by shortest
/// augmenting paths with dual potentials, O(n³). Returns assignment[i] = j.
std::vector<int> solve_assignment(const Matrix& cost);

struct SinkhornOptions {
  /// ε runs geometrically from start to end, both relative to the mean cost.
  double epsilon_start = 1.0;
  double epsilon_end = 1e-3;
  double epsilon_decay = 0.5;
  /// L1 violation of the row marginals that ends a stage.
  double marginal_tolerance = 1e-4;
  int max_iterations_per_stage = 500;
};

/// Transport cost of the entropic plan at the final ε after rounding onto the
/// exact marginals (uniform weights).
double sinkhorn_cost(const Matrix& cost, const SinkhornOptions& options = {});

enum class W2Method { Auto, Exact, Sinkhorn };

struct W2Options {
  W2Method method = W2Method::Auto;
  /// Auto uses the exact assignment up to this many points per set.
  int exact_limit = 4096;
  SinkhornOptions sinkhorn;
};

/// sqrt(min over assignments of (1/n)·Σ ‖a_i − b_σ(i)‖²).
double wasserstein2(const Matrix& a, const Matrix& b, const W2Options& options = {});
double wasserstein2(const std::vector<Vector>& a, const std::vector<Vector>& b,
                    const W2Options& options = {});

}  // namespace dguide
