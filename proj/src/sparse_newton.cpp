#include "otsns/sparse_newton.hpp"

#include <cmath>
#include <limits>

#include "ascent.hpp"
#include "otsns/kernels.hpp"
#include "otsns/selection.hpp"
#include "otsns/sinkhorn.hpp"

namespace otsns {

namespace {

// Shared by both sparsify overloads: `scaled` holds P / scale row-major.
SparseHessian build_sparse(std::span<const double> scaled, double scale,
                           std::span<const double> row_sums, std::span<const double> col_sums,
                           double eta, double target_sparsity, bool rank1, double shift) {
  const std::size_t n = row_sums.size();
  if (target_sparsity <= 0.0 || target_sparsity > 1.0) {
    throw ValidationError("sparsify: target sparsity must lie in (0, 1]");
  }
  SparseHessian h;
  h.rank1 = rank1;
  h.diag.resize(2 * n);
  for (std::size_t i = 0; i < n; ++i) h.diag[i] = eta * row_sums[i] + shift;
  for (std::size_t j = 0; j < n; ++j) h.diag[n + j] = eta * col_sums[j] + shift;

  const double cut = kth_largest(scaled, selection_count(target_sparsity, scaled.size()));
  h.threshold_rho = cut * scale;

  CsrBlock& b = h.off_block;
  b.n = n;
  b.row_ptr.assign(n + 1, 0);
  const double factor = eta * scale;
  double kept = 0.0;
  double dropped = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = scaled.data() + i * n;
    for (std::size_t j = 0; j < n; ++j) {
      if (row[j] >= cut) {
        b.col.push_back(static_cast<std::uint32_t>(j));
        b.values.push_back(factor * row[j]);
        kept += row[j];
      } else {
        dropped += row[j];
      }
    }
    b.row_ptr[i + 1] = b.values.size();
  }
  h.dropped_mass = kept + dropped > 0.0 ? dropped / (kept + dropped) : 0.0;
  h.achieved_sparsity = static_cast<double>(b.nnz()) / static_cast<double>(scaled.size());
  return h;
}

}  // namespace

void SparseHessian::apply(std::span<const double> u, std::span<double> out) const {
  const std::size_t n = size();
  if (u.size() != 2 * n || out.size() != 2 * n) {
    throw ValidationError("SparseHessian::apply: expected vectors of length " +
                          std::to_string(2 * n));
  }
  for (std::size_t k = 0; k < 2 * n; ++k) out[k] = diag[k] * u[k];
  const double* ux = u.data();
  const double* uy = u.data() + n;
  kernels::active().csr_block_matvec(off_block.row_ptr.data(), off_block.col.data(),
                                     off_block.values.data(), n, ux, uy, out.data(),
                                     out.data() + n);
  if (rank1) {
    double vu = 0.0;
    for (std::size_t i = 0; i < n; ++i) vu += ux[i] - uy[i];
    for (std::size_t i = 0; i < n; ++i) {
      out[i] += vu;
      out[n + i] -= vu;
    }
  }
}

Vector SparseHessian::apply(std::span<const double> u) const {
  Vector out(2 * size());
  apply(u, out);
  return out;
}

Vector SparseHessian::diagonal() const {
  Vector d = diag;
  if (rank1) {
    for (double& v : d) v += 1.0;
  }
  return d;
}

SparseHessian sparsify(const HessianOperator& op, double target_sparsity) {
  const std::size_t n = op.size();
  Matrix dense;
  if (const auto* m = std::get_if<Matrix>(&op.plan_block)) {
    dense = *m;
  } else {
    const auto& csr = std::get<CsrBlock>(op.plan_block);
    dense = Matrix(n, n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t k = csr.row_ptr[i]; k < csr.row_ptr[i + 1]; ++k) {
        dense(i, csr.col[k]) = csr.values[k];
      }
    }
  }
  return build_sparse(dense.values(), 1.0, op.row_sums, op.col_sums, op.eta, target_sparsity,
                      op.rank1_correction, op.diagonal_shift);
}

SparseHessian sparsify(const PlanEvaluation& eval, double eta, double target_sparsity,
                       bool augmented, double diagonal_shift) {
  if (eval.scaled_plan.empty()) throw ValidationError("sparsify: evaluation holds no plan");
  const std::size_t n = eval.size();
  Vector rows(n), cols(n);
  for (std::size_t i = 0; i < n; ++i) rows[i] = std::exp(eval.log_row_sums[i]);
  for (std::size_t j = 0; j < n; ++j) cols[j] = std::exp(eval.log_col_sums[j]);
  return build_sparse(eval.scaled_plan.values(), std::exp(eval.log_scale), rows, cols, eta,
                      target_sparsity, augmented, diagonal_shift);
}

CgResult conjugate_gradient(const SparseHessian& op, std::span<const double> b, double rel_tol,
                            int max_iters, bool jacobi) {
  auto apply = [&op](std::span<const double> u, std::span<double> out) { op.apply(u, out); };
  if (!jacobi) return conjugate_gradient(apply, b, rel_tol, max_iters);
  // The rank-1 term adds 1 to every diagonal entry and would hide the scale
  // of rows with tiny mass, so only the block diagonal is inverted.
  Vector inverse = op.diag;
  for (double& v : inverse) v = v > 0.0 ? 1.0 / v : 1.0;
  return conjugate_gradient(apply, b, rel_tol, max_iters, inverse);
}

LineSearchResult armijo_backtrack(const std::function<double(double)>& increment, double slope,
                                  const LineSearchOptions& options) {
  LineSearchResult result;
  if (!(slope > 0.0)) return result;
  double alpha = 1.0;
  for (int t = 1; t <= options.max_backtracks; ++t) {
    result.trials = t;
    const double gain = increment(alpha);
    if (gain >= options.c1 * alpha * slope) {
      result.step = alpha;
      result.increase = gain;
      return result;
    }
    alpha *= options.shrink;
  }
  return result;
}

double line_search(const std::function<double(std::span<const double>)>& objective,
                   std::span<const double> z, std::span<const double> dz,
                   std::span<const double> grad, const LineSearchOptions& options) {
  double slope = 0.0;
  for (std::size_t k = 0; k < z.size(); ++k) slope += grad[k] * dz[k];
  const double base = objective(z);
  Vector trial(z.size());
  const auto increment = [&](double alpha) {
    for (std::size_t k = 0; k < z.size(); ++k) trial[k] = z[k] + alpha * dz[k];
    const double value = objective(trial) - base;
    return std::isnan(value) ? -std::numeric_limits<double>::infinity() : value;
  };
  return armijo_backtrack(increment, slope, options).step;
}

namespace sparse_newton {

NewtonResult run(const Problem& problem, DualPotentials duals, const SolverConfig& config,
                 TraceSink& trace, const Stopwatch& clock) {
  validate(config, problem.size());
  const double shift = config.augmented ? 0.0 : 1e-12 * problem.eta;
  const auto direction = [&](const detail::DirectionRequest& req) {
    const SparseHessian h =
        sparsify(req.eval, problem.eta, config.target_sparsity, config.augmented, shift);
    CgResult cg =
        conjugate_gradient(h, req.grad, config.cg_rel_tol, config.cg_max_iters, config.jacobi);
    return detail::Direction{std::move(cg.solution), h.achieved_sparsity, cg.iterations};
  };
  return detail::ascend(problem, std::move(duals), config, Stage::newton, true, trace,
                        clock, direction);
}

}  // namespace sparse_newton

SolveResult solve_sns(const Problem& problem, const SolverConfig& config, TraceSink& trace) {
  validate(problem);
  validate(config, problem.size());
  const Stopwatch clock;

  sinkhorn::RunOptions warm;
  warm.max_steps = config.n1;
  warm.stop = sinkhorn::StopRule::from(config);
  warm.dynamic_switch = config.dynamic_switch;
  warm.switch_lambda = config.target_sparsity;
  const sinkhorn::RunResult first =
      sinkhorn::run(problem, DualPotentials::zeros(problem.size()), warm, trace, clock);

  SolveResult out;
  out.sinkhorn = {first.iterations, clock.seconds()};
  if (first.converged) {
    out.duals = first.duals;
    out.marginal_kl = first.marginal_kl;
    out.l1_error = first.l1_error;
    out.converged = true;
    return out;
  }
  NewtonResult second = sparse_newton::run(problem, first.duals, config, trace, clock);
  out.second = {second.iterations, clock.seconds() - out.sinkhorn.seconds};
  out.duals = std::move(second.duals);
  out.fallbacks = second.fallbacks;
  out.marginal_kl = second.marginal_kl;
  out.l1_error = second.l1_error;
  out.converged = second.converged;
  return out;
}

}  // namespace otsns
