#pragma once

#include <optional>
#include <string_view>

#include "otsns/core.hpp"
#include "otsns/sparse_newton.hpp"

namespace otsns {

/// Newton stage with the full 2n x 2n augmented system factorized by Cholesky.
/// A failed factorization is retried with a small diagonal ridge; throws
/// NumericalError when that fails too.
NewtonResult run_dense_newton(const Problem& problem, DualPotentials duals,
                              const SolverConfig& config, TraceSink& trace,
                              const Stopwatch& clock = Stopwatch{});

/// Limited-memory BFGS ascent on the augmented potential. memory >= 1.
NewtonResult run_lbfgs(const Problem& problem, DualPotentials duals, int memory,
                       const SolverConfig& config, TraceSink& trace,
                       const Stopwatch& clock = Stopwatch{});

enum class Method { sinkhorn, sns, dense_newton, lbfgs };

std::string_view to_string(Method method) noexcept;
/// Accepts "sinkhorn", "sns", "newton-dense", "lbfgs".
std::optional<Method> parse_method(std::string_view name) noexcept;

struct SolveOptions {
  int sinkhorn_max_iters = 1'000'000;  // Sinkhorn-only runs
  int lbfgs_memory = 10;
};

/// Runs a full solve from zero duals. Every method except Sinkhorn-only
/// uses config.n1 warm-up steps before its second stage.
SolveResult solve(const Problem& problem, Method method, const SolverConfig& config,
                  const SolveOptions& options, TraceSink& trace);

}  // namespace otsns
