#pragma once

#include <optional>
#include <vector>

#include "otsns/core.hpp"

// Ground truth for small uniform-marginal instances, where the vertices of the
// transport polytope are the permutation matrices scaled by 1/n.
namespace otsns::oracle {

using Permutation = std::vector<std::size_t>;

struct AssignmentResult {
  double optimal_cost = 0.0;  // (1/n) min_sigma sum_i c_{i, sigma(i)}
  std::vector<Permutation> optimal_permutations;
  std::optional<double> vertex_gap;  // second-best vertex cost minus the best
  std::size_t n = 0;
};

inline constexpr std::size_t kMaxEnumerationSize = 10;

/// Enumerates all n! permutations. Vertex costs within 1e-12 (relative to
/// max(1, |best|)) of each other count as ties.
AssignmentResult brute_force_assignment(const Matrix& cost);

/// min over optimal vertices V of ||P - V/n||_1.
double dist_to_optimal_vertices(const LogPlan& plan, const AssignmentResult& result);

struct SparsityProfile {
  double tau = 0.0;  // kept / n^2
  double eps = 0.0;  // L1 mass outside the kept entries
};

/// Keeps exactly ceil(lambda n^2) largest entries of P.
SparsityProfile sparsity_profile(const LogPlan& plan, double lambda);

/// Entropic optimum of C = [[0,1],[1,0]], r = c = (1/2, 1/2):
/// p = e^eta / (2 (1 + e^eta)) on the diagonal, 1/2 - p off it.
Matrix entropic_2x2_reference(double eta);

}  // namespace otsns::oracle
