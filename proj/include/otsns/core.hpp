#pragma once

#include <chrono>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "otsns/errors.hpp"
#include "otsns/matrix.hpp"

namespace otsns {

/// Tolerance on |sum(r) - 1| and |sum(c) - 1| accepted by validate().
inline constexpr double kMarginalSumTolerance = 1e-12;

/// Log-entries below this contribute nothing to cost/entropy sums (0 log 0 = 0).
inline constexpr double kLogUnderflowFloor = -745.0;

/// An entropic optimal transport instance: min C.P + (1/eta) sum p log p
/// subject to P1 = r, P^T 1 = c.
struct Problem {
  Matrix cost;
  Vector row_marginal;
  Vector col_marginal;
  double eta = 1.0;

  std::size_t size() const noexcept { return row_marginal.size(); }
};

/// Throws ValidationError unless the problem is square, finite, has strictly
/// positive marginals summing to one and eta > 0.
void validate(const Problem& problem);

struct DualPotentials {
  Vector x;
  Vector y;

  static DualPotentials zeros(std::size_t n) { return {Vector(n, 0.0), Vector(n, 0.0)}; }
  std::size_t size() const noexcept { return x.size(); }

  friend bool operator==(const DualPotentials&, const DualPotentials&) = default;
};

/// Transport plan held as log-entries eta(-c_ij + x_i + y_j) - 1.
struct LogPlan {
  Matrix log_entries;

  std::size_t size() const noexcept { return log_entries.rows(); }
};

LogPlan make_log_plan(const Problem& problem, const DualPotentials& duals);

/// Exponentiated plan. Entries below the underflow floor become 0.
Matrix to_plan(const LogPlan& plan);

/// log(P1) and log(P^T 1) via per-row / per-column max-shifted log-sum-exp.
Vector log_row_sums(const LogPlan& plan);
Vector log_col_sums(const LogPlan& plan);

/// KL(r || P1) + KL(c || P^T 1) in its generalized (Bregman) form
/// sum r log(r/s) - r + s, which coincides with the plain KL whenever P has
/// unit mass and is non-negative always.
double marginal_kl(const LogPlan& plan, const Problem& problem);

/// ||P1 - r||_1 + ||P^T 1 - c||_1.
double l1_marginal_error(const LogPlan& plan, const Problem& problem);

/// C . P
double transport_cost(const LogPlan& plan, const Problem& problem);

/// H(P) = sum p_ij log p_ij.
double entropy(const LogPlan& plan);

/// Generalized KL of a target distribution against sums given in log domain.
/// Each term is t_i * (e^l - 1 - l) with l = log_sums_i - log t_i, evaluated
/// without cancellation, so values far below 1e-16 are resolved.
double kl_from_log_sums(std::span<const double> target, std::span<const double> log_sums);

/// sum |exp(log_sums_i) - t_i|.
double l1_from_log_sums(std::span<const double> target, std::span<const double> log_sums);

/// e^u - 1 - u, accurate for small |u|.
double expm1_minus_linear(double u) noexcept;

struct SolverConfig {
  int n1 = 20;                     // Sinkhorn warm-up iterations
  int n2 = 100;                    // maximum Newton iterations
  double target_sparsity = 1.0;    // lambda, fraction of plan entries kept
  double cg_rel_tol = 1e-10;
  int cg_max_iters = 1000;
  double armijo_c1 = 1e-4;
  double armijo_shrink = 0.5;
  int armijo_max_backtracks = 40;
  double stop_marginal_kl = 1e-25;
  double stop_l1_error = 0.0;      // 0 disables the l1 stopping test
  bool augmented = true;           // rank-1 corrected potential; false = Tikhonov shift
  bool jacobi = false;             // diagonal preconditioner in CG
  bool dynamic_switch = false;     // leave Sinkhorn early on stagnation / sparsity

  /// lambda = 2/n (capped at 1), other fields at their defaults.
  static SolverConfig defaults_for(std::size_t n);
};

/// Throws ValidationError when a field is out of range or lambda*n^2 < 1.
void validate(const SolverConfig& config, std::size_t n);

enum class Stage { sinkhorn, newton, dense_newton, lbfgs };

std::string_view to_string(Stage stage) noexcept;

struct TraceRecord {
  Stage stage = Stage::sinkhorn;
  int iteration = 0;
  double elapsed_seconds = 0.0;
  double potential_value = 0.0;
  double marginal_kl = 0.0;
  double l1_marginal_error = 0.0;
  std::optional<double> hessian_sparsity;
};

/// Monotonic wall clock started at construction.
class Stopwatch {
 public:
  Stopwatch() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

class TraceSink {
 public:
  virtual ~TraceSink() = default;
  virtual void record(const TraceRecord& row) = 0;
};

/// Discards everything.
class NullTrace final : public TraceSink {
 public:
  void record(const TraceRecord&) override {}
};

/// Keeps records in memory.
class TraceLog final : public TraceSink {
 public:
  void record(const TraceRecord& row) override { records_.push_back(row); }
  const std::vector<TraceRecord>& records() const noexcept { return records_; }
  void clear() noexcept { records_.clear(); }

 private:
  std::vector<TraceRecord> records_;
};

}  // namespace otsns
