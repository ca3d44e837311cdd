#include "ascent.hpp"

#include <cmath>
#include <numeric>
#include <string>

#include "otsns/sinkhorn.hpp"

namespace otsns::detail {

void project_balanced(std::span<double> x, std::span<double> y) {
  const double n2 = static_cast<double>(x.size() + y.size());
  const double gamma = (std::accumulate(x.begin(), x.end(), 0.0) -
                        std::accumulate(y.begin(), y.end(), 0.0)) / n2;
  for (double& v : x) v -= gamma;
  for (double& v : y) v += gamma;
}

namespace {

// An accepted step that leaves the marginal KL above this fraction of its
// previous value counts as a stall and is followed by a Sinkhorn sweep.
constexpr double kStallRatio = 0.99;

Vector objective_gradient(const Problem& problem, const DualPotentials& duals,
                          const PlanEvaluation& eval, bool augmented) {
  Vector g = gradient_from_log_sums(problem, eval.log_row_sums, eval.log_col_sums);
  if (augmented) {
    const std::size_t n = problem.size();
    const double gamma = balance(duals);
    for (std::size_t i = 0; i < n; ++i) {
      g[i] -= gamma;
      g[n + i] += gamma;
    }
  }
  return g;
}

}  // namespace

NewtonResult ascend(const Problem& problem, DualPotentials duals, const SolverConfig& config,
                    Stage stage, bool sweep_on_stall, TraceSink& trace,
                    const Stopwatch& clock, const DirectionFn& direction) {
  const std::size_t n = problem.size();
  const auto stop = sinkhorn::StopRule::from(config);
  const auto search = LineSearchOptions::from(config);

  project_balanced(duals.x, duals.y);
  PlanEvaluation eval = evaluate_plan(problem, duals, true);

  NewtonResult result;
  auto measure = [&] {
    result.marginal_kl = kl_from_log_sums(problem.row_marginal, eval.log_row_sums) +
                         kl_from_log_sums(problem.col_marginal, eval.log_col_sums);
    result.l1_error = l1_from_log_sums(problem.row_marginal, eval.log_row_sums) +
                      l1_from_log_sums(problem.col_marginal, eval.log_col_sums);
  };
  measure();
  if (stop.reached(result.marginal_kl, result.l1_error)) {
    result.converged = true;
    result.duals = std::move(duals);
    return result;
  }

  for (int it = 1; it <= config.n2; ++it) {
    const Vector grad = objective_gradient(problem, duals, eval, config.augmented);
    Direction dir = direction(DirectionRequest{problem, duals, eval, grad, it});
    result.cg_iterations += dir.cg_iterations;
    std::span<double> dz(dir.dz);
    project_balanced(dz.first(n), dz.subspan(n));

    double slope = 0.0;
    for (std::size_t k = 0; k < 2 * n; ++k) slope += grad[k] * dz[k];
    const auto increment = [&](double alpha) {
      return potential_increment(problem, eval, grad, dz, alpha, config.augmented);
    };
    const LineSearchResult ls = armijo_backtrack(increment, slope, search);

    const auto check_finite = [&] {
      if (!std::isfinite(eval.potential)) {
        throw NumericalError(std::string(to_string(stage)) +
                             ": potential became non-finite at iteration " + std::to_string(it));
      }
    };
    const auto sinkhorn_sweep = [&] {
      ++result.fallbacks;
      duals = sinkhorn::y_step(problem, sinkhorn::x_step(problem, duals));
      project_balanced(duals.x, duals.y);
      eval = evaluate_plan(problem, duals, true);
      check_finite();
      measure();
    };

    if (ls.step > 0.0) {
      const double previous_kl = result.marginal_kl;
      for (std::size_t i = 0; i < n; ++i) {
        duals.x[i] += ls.step * dz[i];
        duals.y[i] += ls.step * dz[n + i];
      }
      eval = evaluate_plan(problem, duals, true);
      check_finite();
      measure();
      if (sweep_on_stall && result.marginal_kl > kStallRatio * previous_kl &&
          !stop.reached(result.marginal_kl, result.l1_error)) {
        sinkhorn_sweep();
      }
    } else {
      sinkhorn_sweep();
    }
    result.iterations = it;

    TraceRecord row;
    row.stage = stage;
    row.iteration = it;
    row.elapsed_seconds = clock.seconds();
    row.potential_value = eval.potential;
    row.marginal_kl = result.marginal_kl;
    row.l1_marginal_error = result.l1_error;
    row.hessian_sparsity = dir.sparsity;
    trace.record(row);

    if (stop.reached(result.marginal_kl, result.l1_error)) {
      result.converged = true;
      break;
    }
  }
  result.duals = std::move(duals);
  return result;
}

}  // namespace otsns::detail
