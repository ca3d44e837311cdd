#include "otsns/core.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "kernels/constants.hpp"
#include "otsns/kernels.hpp"

namespace otsns {

namespace {

void check_marginal(const Vector& m, std::string_view name) {
  double sum = 0.0;
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (!std::isfinite(m[i]) || m[i] <= 0.0) {
      throw ValidationError(std::string(name) + "[" + std::to_string(i) +
                            "] must be strictly positive and finite, got " + std::to_string(m[i]));
    }
    sum += m[i];
  }
  if (std::fabs(sum - 1.0) > kMarginalSumTolerance) {
    throw ValidationError(std::string(name) + " sums to " + std::to_string(sum) +
                          ", expected 1 within 1e-12");
  }
}

}  // namespace

void validate(const Problem& problem) {
  const std::size_t n = problem.row_marginal.size();
  if (n == 0) throw ValidationError("problem is empty");
  if (problem.col_marginal.size() != n) {
    throw ValidationError("dimension mismatch: r has " + std::to_string(n) + " entries, c has " +
                          std::to_string(problem.col_marginal.size()));
  }
  if (problem.cost.rows() != n || problem.cost.cols() != n) {
    throw ValidationError("dimension mismatch: cost is " + std::to_string(problem.cost.rows()) +
                          "x" + std::to_string(problem.cost.cols()) + ", marginals have " +
                          std::to_string(n) + " entries");
  }
  if (!(problem.eta > 0.0) || !std::isfinite(problem.eta)) {
    throw ValidationError("eta must be positive and finite");
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double v = problem.cost(i, j);
      if (!std::isfinite(v) || v < 0.0) {
        throw ValidationError("cost(" + std::to_string(i) + "," + std::to_string(j) +
                              ") must be finite and non-negative");
      }
    }
  }
  check_marginal(problem.row_marginal, "r");
  check_marginal(problem.col_marginal, "c");
}

LogPlan make_log_plan(const Problem& problem, const DualPotentials& duals) {
  const std::size_t n = problem.size();
  const auto& k = kernels::active();
  Vector beta(n);
  for (std::size_t j = 0; j < n; ++j) beta[j] = problem.eta * duals.y[j];
  LogPlan plan{Matrix(n, n)};
  for (std::size_t i = 0; i < n; ++i) {
    k.affine_row(problem.cost.row(i).data(), beta.data(), problem.eta * duals.x[i] - 1.0,
                 problem.eta, plan.log_entries.row(i).data(), n);
  }
  return plan;
}

Matrix to_plan(const LogPlan& plan) {
  const std::size_t n = plan.size();
  Matrix out(n, n);
  kernels::active().exp(plan.log_entries.data(), out.data(), n * n);
  return out;
}

Vector log_row_sums(const LogPlan& plan) {
  const std::size_t n = plan.size();
  const auto& k = kernels::active();
  Vector out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = plan.log_entries.row(i).data();
    const double m = k.max(row, n);
    out[i] = std::isinf(m) ? m : m + std::log(k.sum_exp(row, m, n));
  }
  return out;
}

Vector log_col_sums(const LogPlan& plan) {
  const std::size_t n = plan.size();
  const auto& k = kernels::active();
  Vector shift(n, -std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < n; ++i) k.max_update(plan.log_entries.row(i).data(), shift.data(), n);
  for (double& s : shift) {
    if (std::isinf(s)) s = 0.0;
  }
  Vector acc(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    k.exp_accumulate(plan.log_entries.row(i).data(), shift.data(), acc.data(), n);
  }
  for (std::size_t j = 0; j < n; ++j) acc[j] = shift[j] + std::log(acc[j]);
  return acc;
}

double expm1_minus_linear(double u) noexcept {
  using kernels::detail::kPhiCoefficients;
  using kernels::detail::kPhiTerms;
  if (std::fabs(u) < kernels::detail::kPhiSeriesBound) {
    double acc = kPhiCoefficients[kPhiTerms - 1];
    for (int k = kPhiTerms - 2; k >= 0; --k) acc = acc * u + kPhiCoefficients[k];
    return acc * u * u;
  }
  return std::expm1(u) - u;
}

double kl_from_log_sums(std::span<const double> target, std::span<const double> log_sums) {
  double kl = 0.0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    kl += target[i] * expm1_minus_linear(log_sums[i] - std::log(target[i]));
  }
  return kl;
}

double l1_from_log_sums(std::span<const double> target, std::span<const double> log_sums) {
  double err = 0.0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    err += target[i] * std::fabs(std::expm1(log_sums[i] - std::log(target[i])));
  }
  return err;
}

double marginal_kl(const LogPlan& plan, const Problem& problem) {
  return kl_from_log_sums(problem.row_marginal, log_row_sums(plan)) +
         kl_from_log_sums(problem.col_marginal, log_col_sums(plan));
}

double l1_marginal_error(const LogPlan& plan, const Problem& problem) {
  return l1_from_log_sums(problem.row_marginal, log_row_sums(plan)) +
         l1_from_log_sums(problem.col_marginal, log_col_sums(plan));
}

double transport_cost(const LogPlan& plan, const Problem& problem) {
  const std::size_t n = plan.size();
  const auto& k = kernels::active();
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    total += k.dot_exp(problem.cost.row(i).data(), plan.log_entries.row(i).data(), n);
  }
  return total;
}

double entropy(const LogPlan& plan) {
  const std::size_t n = plan.size();
  const auto& k = kernels::active();
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = plan.log_entries.row(i).data();
    total += k.dot_exp(row, row, n);
  }
  return total;
}

SolverConfig SolverConfig::defaults_for(std::size_t n) {
  SolverConfig config;
  config.target_sparsity = n > 0 ? std::min(1.0, 2.0 / static_cast<double>(n)) : 1.0;
  // CG stops on its relative tolerance; 2n iterations (the exact-arithmetic
  // bound) is not enough once the Hessian is badly conditioned.
  config.cg_max_iters = 1000;
  return config;
}

void validate(const SolverConfig& config, std::size_t n) {
  auto fail = [](const std::string& what) { throw ValidationError("solver config: " + what); };
  if (config.n1 < 0) fail("n1 must be non-negative");
  if (config.n2 < 0) fail("n2 must be non-negative");
  if (!(config.target_sparsity > 0.0 && config.target_sparsity <= 1.0)) {
    fail("target_sparsity must lie in (0, 1]");
  }
  const double nn = static_cast<double>(n) * static_cast<double>(n);
  if (config.target_sparsity * nn < 1.0 - 1e-9) fail("target_sparsity * n^2 must be at least 1");
  if (!(config.cg_rel_tol > 0.0)) fail("cg_rel_tol must be positive");
  if (config.cg_max_iters < 1) fail("cg_max_iters must be positive");
  if (!(config.armijo_c1 > 0.0 && config.armijo_c1 < 1.0)) fail("armijo_c1 must lie in (0, 1)");
  if (!(config.armijo_shrink > 0.0 && config.armijo_shrink < 1.0)) {
    fail("armijo_shrink must lie in (0, 1)");
  }
  if (config.armijo_max_backtracks < 1) fail("armijo_max_backtracks must be positive");
  if (!(config.stop_marginal_kl >= 0.0)) fail("stop_marginal_kl must be non-negative");
  if (!(config.stop_l1_error >= 0.0)) fail("stop_l1_error must be non-negative");
}

std::string_view to_string(Stage stage) noexcept {
  switch (stage) {
    case Stage::sinkhorn:
      return "sinkhorn";
    case Stage::newton:
      return "newton";
    case Stage::dense_newton:
      return "dense_newton";
    case Stage::lbfgs:
      return "lbfgs";
  }
  return "unknown";
}

}  // namespace otsns
