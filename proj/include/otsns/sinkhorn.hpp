#pragma once

#include <optional>

#include "otsns/core.hpp"

// Log-domain alternating scaling. Each half-step maximizes the potential
// exactly in x (resp. y) with the other block fixed.
namespace otsns::sinkhorn {

/// x <- x + (log r - log P1) / eta
DualPotentials x_step(const Problem& problem, const DualPotentials& duals);
/// y <- y + (log c - log P^T 1) / eta
DualPotentials y_step(const Problem& problem, const DualPotentials& duals);

struct StopRule {
  std::optional<double> marginal_kl;
  std::optional<double> l1_error;

  /// KL threshold always, l1 threshold only when config.stop_l1_error > 0.
  static StopRule from(const SolverConfig& config);
  bool reached(double kl, double l1) const noexcept;
};

struct RunOptions {
  int max_steps = 0;
  StopRule stop;
  // Leave early once f stagnates or the plan looks (lambda, 0.1)-sparse.
  bool dynamic_switch = false;
  double switch_lambda = 1.0;
};

struct RunResult {
  DualPotentials duals;
  int iterations = 0;
  double marginal_kl = 0.0;
  double l1_error = 0.0;
  bool converged = false;
  bool switched = false;
};

/// `steps` full (x, y) iterations, one trace record each.
DualPotentials run(const Problem& problem, DualPotentials duals, int steps, TraceSink& trace,
                   const Stopwatch& clock = Stopwatch{});

RunResult run(const Problem& problem, DualPotentials duals, const RunOptions& options,
              TraceSink& trace, const Stopwatch& clock = Stopwatch{});

}  // namespace otsns::sinkhorn
