#pragma once

#include <functional>
#include <optional>
#include <span>

#include "otsns/core.hpp"
#include "otsns/lyapunov.hpp"
#include "otsns/sparse_newton.hpp"

// Shared second-stage loop: direction, Armijo on the accurately computed
// increment, Sinkhorn fallback when the search fails. The solvers differ only
// in how they produce a direction. With sweep_on_stall, an accepted step that
// barely moves the marginal KL is followed by a Sinkhorn sweep as well.
namespace otsns::detail {

struct DirectionRequest {
  const Problem& problem;
  const DualPotentials& duals;
  const PlanEvaluation& eval;
  std::span<const double> grad;  // gradient of the objective being maximized
  int iteration;
};

struct Direction {
  Vector dz;
  std::optional<double> sparsity;
  int cg_iterations = 0;
};

using DirectionFn = std::function<Direction(const DirectionRequest&)>;

/// z <- z - (v^T z / 2n) v with v = [1; -1].
void project_balanced(std::span<double> x, std::span<double> y);

NewtonResult ascend(const Problem& problem, DualPotentials duals, const SolverConfig& config,
                    Stage stage, bool sweep_on_stall, TraceSink& trace,
                    const Stopwatch& clock, const DirectionFn& direction);

}  // namespace otsns::detail
