#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>

#include "otsns/core.hpp"
#include "otsns/csr.hpp"
#include "otsns/kernels.hpp"
#include "otsns/lyapunov.hpp"

namespace otsns {

/// Thresholded negated Hessian: full diagonal, the retained entries of eta*P
/// as one CSR block applied as both P and P^T, and optionally v v^T.
struct SparseHessian {
  Vector diag;            // eta [P1; P^T 1] (+ diagonal shift)
  CsrBlock off_block;     // retained entries of eta * P
  double threshold_rho = 0.0;     // in units of P, not eta * P
  double achieved_sparsity = 0.0; // nnz / n^2
  double dropped_mass = 0.0;      // sum of dropped P entries / sum of all
  bool rank1 = false;

  std::size_t size() const noexcept { return off_block.n; }

  void apply(std::span<const double> u, std::span<double> out) const;
  Vector apply(std::span<const double> u) const;
  /// Diagonal of the full operator, rank-1 term included.
  Vector diagonal() const;
};

/// rho is the ceil(lambda n^2)-largest entry of the plan block; entries >= rho
/// are kept. The diagonal blocks are always kept in full.
SparseHessian sparsify(const HessianOperator& op, double target_sparsity);

/// Same, built straight from a plan evaluation without materializing P twice.
SparseHessian sparsify(const PlanEvaluation& eval, double eta, double target_sparsity,
                       bool augmented, double diagonal_shift = 0.0);

struct CgResult {
  Vector solution;
  int iterations = 0;
  double residual = 0.0;           // ||op z - b||_2 (recursive estimate)
  double relative_residual = 0.0;  // residual / ||b||_2
};

/// Conjugate gradient from a zero initial guess. Op is any callable
/// op(u, out) writing out = A u. Returns the best iterate seen; throws
/// NumericalError when a non-finite value appears.
template <class Op>
CgResult conjugate_gradient(const Op& op, std::span<const double> b, double rel_tol,
                            int max_iters, std::span<const double> inverse_diagonal = {});

/// With jacobi, preconditions by the inverse of op.diag (rank-1 term left out).
CgResult conjugate_gradient(const SparseHessian& op, std::span<const double> b, double rel_tol,
                            int max_iters, bool jacobi = false);

struct LineSearchOptions {
  double c1 = 1e-4;
  double shrink = 0.5;
  int max_backtracks = 40;

  static LineSearchOptions from(const SolverConfig& config) {
    return {config.armijo_c1, config.armijo_shrink, config.armijo_max_backtracks};
  }
};

struct LineSearchResult {
  double step = 0.0;      // 0 when no trial passed
  double increase = 0.0;  // objective gain at the accepted step
  int trials = 0;
};

/// Armijo backtracking given increment(alpha) = objective(z + alpha dz) -
/// objective(z) and slope = <grad objective(z), dz>.
LineSearchResult armijo_backtrack(const std::function<double(double)>& increment, double slope,
                                  const LineSearchOptions& options);

/// Armijo backtracking on an explicit objective. Returns the accepted step or 0.
double line_search(const std::function<double(std::span<const double>)>& objective,
                   std::span<const double> z, std::span<const double> dz,
                   std::span<const double> grad, const LineSearchOptions& options = {});

struct NewtonResult {
  DualPotentials duals;
  int iterations = 0;
  int fallbacks = 0;
  int cg_iterations = 0;
  double marginal_kl = 0.0;
  double l1_error = 0.0;
  bool converged = false;
};

namespace sparse_newton {

/// Newton stage on the (augmented) potential with a sparsified Hessian.
NewtonResult run(const Problem& problem, DualPotentials duals, const SolverConfig& config,
                 TraceSink& trace, const Stopwatch& clock = Stopwatch{});

}  // namespace sparse_newton

struct StageTotals {
  int iterations = 0;
  double seconds = 0.0;
};

struct SolveResult {
  DualPotentials duals;
  StageTotals sinkhorn;
  StageTotals second;  // Newton / dense Newton / L-BFGS stage
  int fallbacks = 0;
  double marginal_kl = 0.0;
  double l1_error = 0.0;
  bool converged = false;

  int total_iterations() const noexcept { return sinkhorn.iterations + second.iterations; }
};

/// Sinkhorn warm-up (n1 steps, or fewer with the dynamic switch) followed by
/// the sparse Newton stage, starting from zero duals.
SolveResult solve_sns(const Problem& problem, const SolverConfig& config, TraceSink& trace);

// ---------------------------------------------------------------------------

template <class Op>
CgResult conjugate_gradient(const Op& op, std::span<const double> b, double rel_tol,
                            int max_iters, std::span<const double> inverse_diagonal) {
  const std::size_t m = b.size();
  const auto& k = kernels::active();
  auto dot = [&](const Vector& u, const Vector& w) { return k.dot(u.data(), w.data(), m); };
  auto precondition = [&](const Vector& r, Vector& z) {
    if (inverse_diagonal.empty()) {
      z = r;
    } else {
      for (std::size_t i = 0; i < m; ++i) z[i] = inverse_diagonal[i] * r[i];
    }
  };

  CgResult out;
  out.solution.assign(m, 0.0);
  Vector r(b.begin(), b.end());
  const double b_norm = std::sqrt(dot(r, r));
  if (!std::isfinite(b_norm)) throw NumericalError("conjugate_gradient: non-finite right-hand side");
  out.residual = b_norm;
  if (b_norm == 0.0) return out;

  Vector x(m, 0.0), z(m), p(m), ap(m);
  precondition(r, z);
  p = z;
  double rz = dot(r, z);
  for (int it = 1; it <= max_iters; ++it) {
    op(std::span<const double>(p), std::span<double>(ap));
    const double pap = dot(p, ap);
    if (!std::isfinite(pap)) throw NumericalError("conjugate_gradient: non-finite curvature");
    if (pap <= 0.0) break;
    const double a = rz / pap;
    k.axpy(a, p.data(), x.data(), m);
    k.axpy(-a, ap.data(), r.data(), m);
    const double res = std::sqrt(dot(r, r));
    if (!std::isfinite(res)) throw NumericalError("conjugate_gradient: non-finite residual");
    out.iterations = it;
    if (res < out.residual) {
      out.residual = res;
      out.solution = x;
    }
    if (res <= rel_tol * b_norm) break;
    precondition(r, z);
    const double rz_next = dot(r, z);
    const double beta = rz_next / rz;
    rz = rz_next;
    for (std::size_t i = 0; i < m; ++i) p[i] = z[i] + beta * p[i];
  }
  out.relative_residual = out.residual / b_norm;
  return out;
}

}  // namespace otsns
