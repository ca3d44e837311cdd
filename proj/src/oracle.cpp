#include "otsns/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>

#include "otsns/selection.hpp"

namespace otsns::oracle {

AssignmentResult brute_force_assignment(const Matrix& cost) {
  const std::size_t n = cost.rows();
  if (n == 0 || cost.cols() != n) throw ValidationError("brute_force_assignment: need a square cost");
  if (n > kMaxEnumerationSize) {
    throw ValidationError("brute_force_assignment: n = " + std::to_string(n) +
                          " exceeds the enumeration limit of " +
                          std::to_string(kMaxEnumerationSize));
  }
  const double inv_n = 1.0 / static_cast<double>(n);

  Permutation sigma(n);
  std::iota(sigma.begin(), sigma.end(), std::size_t{0});
  std::vector<std::pair<double, Permutation>> vertices;
  do {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) total += cost(i, sigma[i]);
    vertices.emplace_back(total * inv_n, sigma);
  } while (std::next_permutation(sigma.begin(), sigma.end()));

  double best = std::numeric_limits<double>::infinity();
  for (const auto& v : vertices) best = std::min(best, v.first);
  const double tol = 1e-12 * std::max(1.0, std::fabs(best));

  AssignmentResult result;
  result.n = n;
  result.optimal_cost = best;
  double runner_up = std::numeric_limits<double>::infinity();
  for (auto& [value, perm] : vertices) {
    if (value - best <= tol) {
      result.optimal_permutations.push_back(std::move(perm));
    } else {
      runner_up = std::min(runner_up, value);
    }
  }
  if (std::isfinite(runner_up)) result.vertex_gap = runner_up - best;
  return result;
}

double dist_to_optimal_vertices(const LogPlan& plan, const AssignmentResult& result) {
  const Matrix p = to_plan(plan);
  const std::size_t n = p.rows();
  if (n != result.n) throw ValidationError("dist_to_optimal_vertices: size mismatch");
  const double inv_n = 1.0 / static_cast<double>(n);
  double total = 0.0;
  for (double v : p.values()) total += v;

  double best = std::numeric_limits<double>::infinity();
  for (const auto& perm : result.optimal_permutations) {
    // sum |P - V/n| = sum_all P - sum_support P + sum_support |P - 1/n|
    double d = total;
    for (std::size_t i = 0; i < n; ++i) {
      const double v = p(i, perm[i]);
      d += std::fabs(v - inv_n) - v;
    }
    best = std::min(best, d);
  }
  return best;
}

SparsityProfile sparsity_profile(const LogPlan& plan, double lambda) {
  const Matrix p = to_plan(plan);
  std::vector<double> values(p.values().begin(), p.values().end());
  if (lambda <= 0.0 || lambda > 1.0) throw ValidationError("sparsity_profile: lambda must lie in (0, 1]");
  const std::size_t k = selection_count(lambda, values.size());
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(k - 1),
                   values.end(), std::greater<>());
  double dropped = 0.0;
  for (std::size_t idx = k; idx < values.size(); ++idx) dropped += values[idx];
  return {static_cast<double>(k) / static_cast<double>(values.size()), dropped};
}

Matrix entropic_2x2_reference(double eta) {
  const double p = 0.5 / (1.0 + std::exp(-eta));
  Matrix m(2, 2);
  m(0, 0) = m(1, 1) = p;
  m(0, 1) = m(1, 0) = 0.5 - p;
  return m;
}

}  // namespace otsns::oracle
