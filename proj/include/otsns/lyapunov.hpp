#pragma once

#include <span>
#include <variant>

#include "otsns/core.hpp"
#include "otsns/csr.hpp"

// Lyapunov (dual) potential
//   f(x, y) = -(1/eta) sum_ij exp(eta(-c_ij + x_i + y_j) - 1) + r.x + c.y,
// its gradient [r - P1; c - P^T 1], and the negated Hessian
//   H = eta [diag(P1), P; P^T, diag(P^T 1)]   (positive semidefinite).
// The augmented potential f_aug = f - (sum x - sum y)^2 / 2 removes the null
// direction v = [1; -1] of H.
namespace otsns {

/// One sweep over the implied plan. Entries are stored as exp(L - log_scale)
/// with log_scale the largest log-entry, so evaluation never overflows.
struct PlanEvaluation {
  double log_scale = 0.0;
  Matrix scaled_plan;  // empty unless requested
  Vector log_row_sums;
  Vector log_col_sums;
  double log_mass = 0.0;
  double potential = 0.0;

  std::size_t size() const noexcept { return log_row_sums.size(); }
  /// exp(log-entries); requires scaled_plan.
  Matrix plan() const;
};

PlanEvaluation evaluate_plan(const Problem& problem, const DualPotentials& duals,
                             bool keep_plan);

/// log(P1) with an exact per-row max shift.
Vector row_log_sums(const Problem& problem, const DualPotentials& duals);
/// log(P^T 1) with an exact per-column max shift.
Vector col_log_sums(const Problem& problem, const DualPotentials& duals);

double potential(const Problem& problem, const DualPotentials& duals);
Vector gradient(const Problem& problem, const DualPotentials& duals);

/// sum(x) - sum(y), the component of z along v = [1; -1].
double balance(const DualPotentials& duals) noexcept;

double augmented_potential(const Problem& problem, const DualPotentials& duals);
Vector augmented_gradient(const Problem& problem, const DualPotentials& duals);

/// Gradient of f from already computed log marginals, as -r expm1(log(P1) - log r).
Vector gradient_from_log_sums(const Problem& problem, std::span<const double> log_row,
                              std::span<const double> log_col);

/// f(z + alpha dz) - f(z) (or of f_aug when augmented) evaluated without
/// forming the difference of two potentials. `grad` is the gradient of the
/// same objective at z; `eval` must hold the plan at z.
double potential_increment(const Problem& problem, const PlanEvaluation& eval,
                           std::span<const double> grad,
                           std::span<const double> dz, double alpha, bool augmented);

struct HessianOperator {
  Vector row_sums;  // P1
  Vector col_sums;  // P^T 1
  std::variant<Matrix, CsrBlock> plan_block;  // P, dense or thresholded
  double eta = 1.0;
  bool rank1_correction = false;  // adds v v^T
  double diagonal_shift = 0.0;    // adds shift * I

  std::size_t size() const noexcept { return row_sums.size(); }
};

HessianOperator negated_hessian(const Problem& problem, const DualPotentials& duals,
                                bool augmented);
HessianOperator negated_hessian(const PlanEvaluation& eval, double eta, bool augmented);

/// out = H u. Throws ValidationError on dimension mismatch.
void hessian_matvec(const HessianOperator& op, std::span<const double> u, std::span<double> out);
Vector hessian_matvec(const HessianOperator& op, std::span<const double> u);

}  // namespace otsns
