#include "otsns/sinkhorn.hpp"

#include <cmath>
#include <limits>

#include "otsns/lyapunov.hpp"
#include "otsns/selection.hpp"

namespace otsns::sinkhorn {

namespace {

constexpr double kSwitchEpsilon = 0.1;

double log_sum_exp(const Vector& v) {
  double m = -std::numeric_limits<double>::infinity();
  for (double x : v) m = std::max(m, x);
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

void scale_toward(Vector& dual, const Vector& target, const Vector& log_sums, double eta) {
  for (std::size_t i = 0; i < dual.size(); ++i) {
    dual[i] += (std::log(target[i]) - log_sums[i]) / eta;
  }
}

// Dropped L1 mass of P outside its top ceil(lambda n^2) entries.
double dropped_mass(const Problem& problem, const DualPotentials& duals, double lambda) {
  const PlanEvaluation eval = evaluate_plan(problem, duals, true);
  const auto values = eval.scaled_plan.values();
  const TopKSplit split = split_top_k(values, selection_count(lambda, values.size()));
  const double total = split.kept_mass + split.dropped_mass;
  return total > 0.0 ? split.dropped_mass / total : 0.0;
}

}  // namespace

DualPotentials x_step(const Problem& problem, const DualPotentials& duals) {
  DualPotentials out = duals;
  scale_toward(out.x, problem.row_marginal, row_log_sums(problem, duals), problem.eta);
  return out;
}

DualPotentials y_step(const Problem& problem, const DualPotentials& duals) {
  DualPotentials out = duals;
  scale_toward(out.y, problem.col_marginal, col_log_sums(problem, duals), problem.eta);
  return out;
}

StopRule StopRule::from(const SolverConfig& config) {
  StopRule rule;
  rule.marginal_kl = config.stop_marginal_kl;
  if (config.stop_l1_error > 0.0) rule.l1_error = config.stop_l1_error;
  return rule;
}

bool StopRule::reached(double kl, double l1) const noexcept {
  return (marginal_kl && kl <= *marginal_kl) || (l1_error && l1 <= *l1_error);
}

DualPotentials run(const Problem& problem, DualPotentials duals, int steps, TraceSink& trace,
                   const Stopwatch& clock) {
  RunOptions options;
  options.max_steps = steps;
  return run(problem, std::move(duals), options, trace, clock).duals;
}

RunResult run(const Problem& problem, DualPotentials duals, const RunOptions& options,
              TraceSink& trace, const Stopwatch& clock) {
  const std::size_t n = problem.size();
  const double eta = problem.eta;
  RunResult result;
  if (options.max_steps <= 0) {
    result.duals = std::move(duals);
    return result;
  }

  Vector lr = row_log_sums(problem, duals);
  double previous_f = std::numeric_limits<double>::quiet_NaN();
  for (int it = 1; it <= options.max_steps; ++it) {
    scale_toward(duals.x, problem.row_marginal, lr, eta);

    // After the y update column j has log-sum lc_j + eta * dy_j, i.e. log c_j
    // up to rounding; keep the exactly propagated value for the metrics.
    Vector lc = col_log_sums(problem, duals);
    for (std::size_t j = 0; j < n; ++j) {
      const double before = duals.y[j];
      duals.y[j] += (std::log(problem.col_marginal[j]) - lc[j]) / eta;
      lc[j] += eta * (duals.y[j] - before);
    }
    lr = row_log_sums(problem, duals);

    TraceRecord row;
    row.stage = Stage::sinkhorn;
    row.iteration = it;
    row.marginal_kl = kl_from_log_sums(problem.row_marginal, lr) +
                      kl_from_log_sums(problem.col_marginal, lc);
    row.l1_marginal_error = l1_from_log_sums(problem.row_marginal, lr) +
                            l1_from_log_sums(problem.col_marginal, lc);
    double linear = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      linear += problem.row_marginal[i] * duals.x[i] + problem.col_marginal[i] * duals.y[i];
    }
    row.potential_value = -std::exp(log_sum_exp(lr)) / eta + linear;
    row.elapsed_seconds = clock.seconds();
    trace.record(row);

    result.iterations = it;
    result.marginal_kl = row.marginal_kl;
    result.l1_error = row.l1_marginal_error;
    if (!std::isfinite(row.potential_value)) {
      throw NumericalError("sinkhorn: potential became non-finite at iteration " +
                           std::to_string(it));
    }
    if (options.stop.reached(row.marginal_kl, row.l1_marginal_error)) {
      result.converged = true;
      break;
    }
    if (options.dynamic_switch) {
      const double f = row.potential_value;
      const bool stalled = std::isfinite(previous_f) &&
                           f - previous_f < 10.0 * std::numeric_limits<double>::epsilon() *
                                                std::fabs(f);
      if (stalled || dropped_mass(problem, duals, options.switch_lambda) <= kSwitchEpsilon) {
        result.switched = true;
        break;
      }
      previous_f = f;
    }
  }
  result.duals = std::move(duals);
  return result;
}

}  // namespace otsns::sinkhorn
