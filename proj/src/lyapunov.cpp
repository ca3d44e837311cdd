#include "otsns/lyapunov.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "otsns/kernels.hpp"
#include "otsns/parallel.hpp"

namespace otsns {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
// Scaled row/column sums below this are recomputed with their own max shift.
constexpr double kRescanThreshold = 1e-250;

// Log-entry row i is alpha_i + beta_j - eta c_ij.
struct AffineForm {
  Vector alpha;
  Vector beta;
  double eta;

  AffineForm(const Problem& problem, const DualPotentials& duals) : eta(problem.eta) {
    const std::size_t n = problem.size();
    alpha.resize(n);
    beta.resize(n);
    for (std::size_t i = 0; i < n; ++i) alpha[i] = eta * duals.x[i] - 1.0;
    for (std::size_t j = 0; j < n; ++j) beta[j] = eta * duals.y[j];
  }

  void row(const kernels::KernelTable& k, const Problem& problem, std::size_t i,
           double* out) const {
    k.affine_row(problem.cost.row(i).data(), beta.data(), alpha[i], eta, out, beta.size());
  }
};

double log_sum_exp(std::span<const double> v) {
  double m = kNegInf;
  for (double x : v) m = std::max(m, x);
  if (std::isinf(m)) return m;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

double exact_col_log_sum(const Problem& problem, const AffineForm& form, std::size_t j) {
  const std::size_t n = problem.size();
  Vector column(n);
  for (std::size_t i = 0; i < n; ++i) {
    column[i] = (form.alpha[i] + form.beta[j]) - form.eta * problem.cost(i, j);
  }
  return log_sum_exp(column);
}

}  // namespace

Matrix PlanEvaluation::plan() const {
  Matrix out = scaled_plan;
  const double scale = std::exp(log_scale);
  for (double& v : out.values()) v *= scale;
  return out;
}

PlanEvaluation evaluate_plan(const Problem& problem, const DualPotentials& duals,
                             bool keep_plan) {
  const std::size_t n = problem.size();
  const auto& k = kernels::active();
  const AffineForm form(problem, duals);
  const std::size_t chunks = chunk_count(n, n);

  PlanEvaluation eval;
  if (keep_plan) eval.scaled_plan = Matrix(n, n);
  // With keep_plan the log-entries are parked in scaled_plan and
  // exponentiated in place by the second pass.
  Vector row_max(n);
  for_each_chunk(n, chunks, [&](std::size_t, std::size_t begin, std::size_t end) {
    Vector scratch(n);
    for (std::size_t i = begin; i < end; ++i) {
      double* dest = keep_plan ? eval.scaled_plan.row(i).data() : scratch.data();
      form.row(k, problem, i, dest);
      row_max[i] = k.max(dest, n);
    }
  });
  eval.log_scale = *std::max_element(row_max.begin(), row_max.end());
  if (!std::isfinite(eval.log_scale)) {
    throw NumericalError("plan evaluation: non-finite log-entries");
  }
  const double shift = eval.log_scale;

  eval.log_row_sums.assign(n, 0.0);
  std::vector<Vector> col_partial(std::max<std::size_t>(1, std::min(chunks, n)), Vector(n, 0.0));
  for_each_chunk(n, chunks, [&](std::size_t c, std::size_t begin, std::size_t end) {
    Vector scratch(n);
    Vector& cols = col_partial[c];
    for (std::size_t i = begin; i < end; ++i) {
      double* dest = scratch.data();
      if (keep_plan) {
        dest = eval.scaled_plan.row(i).data();
      } else {
        form.row(k, problem, i, dest);
      }
      const double s = k.exp_store(dest, shift, dest, n);
      k.axpy(1.0, dest, cols.data(), n);
      if (s < kRescanThreshold) {
        form.row(k, problem, i, scratch.data());
        eval.log_row_sums[i] = row_max[i] + std::log(k.sum_exp(scratch.data(), row_max[i], n));
      } else {
        eval.log_row_sums[i] = shift + std::log(s);
      }
    }
  });
  Vector& cols = col_partial[0];
  for (std::size_t c = 1; c < col_partial.size(); ++c) {
    k.axpy(1.0, col_partial[c].data(), cols.data(), n);
  }
  eval.log_col_sums.resize(n);
  for (std::size_t j = 0; j < n; ++j) {
    eval.log_col_sums[j] =
        cols[j] < kRescanThreshold ? exact_col_log_sum(problem, form, j) : shift + std::log(cols[j]);
  }

  eval.log_mass = log_sum_exp(eval.log_row_sums);
  eval.potential = -std::exp(eval.log_mass) / problem.eta +
                   k.dot(problem.row_marginal.data(), duals.x.data(), n) +
                   k.dot(problem.col_marginal.data(), duals.y.data(), n);
  return eval;
}

Vector row_log_sums(const Problem& problem, const DualPotentials& duals) {
  const std::size_t n = problem.size();
  const auto& k = kernels::active();
  const AffineForm form(problem, duals);
  Vector out(n);
  for_each_chunk(n, chunk_count(n, n), [&](std::size_t, std::size_t begin, std::size_t end) {
    Vector scratch(n);
    for (std::size_t i = begin; i < end; ++i) {
      form.row(k, problem, i, scratch.data());
      const double m = k.max(scratch.data(), n);
      out[i] = m + std::log(k.sum_exp(scratch.data(), m, n));
    }
  });
  return out;
}

Vector col_log_sums(const Problem& problem, const DualPotentials& duals) {
  const std::size_t n = problem.size();
  const auto& k = kernels::active();
  const AffineForm form(problem, duals);
  const std::size_t chunks = chunk_count(n, n);
  const std::size_t parts = std::max<std::size_t>(1, std::min(chunks, n));

  std::vector<Vector> partial(parts, Vector(n, kNegInf));
  for_each_chunk(n, chunks, [&](std::size_t c, std::size_t begin, std::size_t end) {
    Vector scratch(n);
    for (std::size_t i = begin; i < end; ++i) {
      form.row(k, problem, i, scratch.data());
      k.max_update(scratch.data(), partial[c].data(), n);
    }
  });
  Vector col_max = partial[0];
  for (std::size_t c = 1; c < parts; ++c) k.max_update(partial[c].data(), col_max.data(), n);

  for (auto& p : partial) std::fill(p.begin(), p.end(), 0.0);
  for_each_chunk(n, chunks, [&](std::size_t c, std::size_t begin, std::size_t end) {
    Vector scratch(n);
    for (std::size_t i = begin; i < end; ++i) {
      form.row(k, problem, i, scratch.data());
      k.exp_accumulate(scratch.data(), col_max.data(), partial[c].data(), n);
    }
  });
  Vector out = partial[0];
  for (std::size_t c = 1; c < parts; ++c) k.axpy(1.0, partial[c].data(), out.data(), n);
  for (std::size_t j = 0; j < n; ++j) out[j] = col_max[j] + std::log(out[j]);
  return out;
}

double potential(const Problem& problem, const DualPotentials& duals) {
  for (double v : duals.x) {
    if (!std::isfinite(v)) throw NumericalError("potential: non-finite dual x");
  }
  for (double v : duals.y) {
    if (!std::isfinite(v)) throw NumericalError("potential: non-finite dual y");
  }
  const Vector lr = row_log_sums(problem, duals);
  const double mass = std::exp(log_sum_exp(lr));
  const auto& k = kernels::active();
  const std::size_t n = problem.size();
  return -mass / problem.eta + k.dot(problem.row_marginal.data(), duals.x.data(), n) +
         k.dot(problem.col_marginal.data(), duals.y.data(), n);
}

Vector gradient_from_log_sums(const Problem& problem, std::span<const double> log_row,
                              std::span<const double> log_col) {
  const std::size_t n = problem.size();
  Vector g(2 * n);
  for (std::size_t i = 0; i < n; ++i) {
    const double r = problem.row_marginal[i];
    g[i] = -r * std::expm1(log_row[i] - std::log(r));
  }
  for (std::size_t j = 0; j < n; ++j) {
    const double c = problem.col_marginal[j];
    g[n + j] = -c * std::expm1(log_col[j] - std::log(c));
  }
  return g;
}

Vector gradient(const Problem& problem, const DualPotentials& duals) {
  return gradient_from_log_sums(problem, row_log_sums(problem, duals),
                                col_log_sums(problem, duals));
}

double balance(const DualPotentials& duals) noexcept {
  return std::accumulate(duals.x.begin(), duals.x.end(), 0.0) -
         std::accumulate(duals.y.begin(), duals.y.end(), 0.0);
}

double augmented_potential(const Problem& problem, const DualPotentials& duals) {
  const double gamma = balance(duals);
  return potential(problem, duals) - 0.5 * gamma * gamma;
}

Vector augmented_gradient(const Problem& problem, const DualPotentials& duals) {
  Vector g = gradient(problem, duals);
  const double gamma = balance(duals);
  const std::size_t n = problem.size();
  for (std::size_t i = 0; i < n; ++i) g[i] -= gamma;
  for (std::size_t j = 0; j < n; ++j) g[n + j] += gamma;
  return g;
}

double potential_increment(const Problem& problem, const PlanEvaluation& eval,
                           std::span<const double> grad,
                           std::span<const double> dz, double alpha, bool augmented) {
  const std::size_t n = problem.size();
  const auto& k = kernels::active();
  const double* dx = dz.data();
  const double* dy = dz.data() + n;
  const double scale = problem.eta * alpha;
  const std::size_t chunks = chunk_count(n, n);
  const std::size_t parts = std::max<std::size_t>(1, std::min(chunks, n));

  std::vector<double> partial(parts, 0.0);
  for_each_chunk(n, chunks, [&](std::size_t c, std::size_t begin, std::size_t end) {
    double s = 0.0;
    for (std::size_t i = begin; i < end; ++i) {
      s += k.phi_sum(eval.scaled_plan.row(i).data(), dy, dx[i], scale, n);
    }
    partial[c] = s;
  });
  double curvature = 0.0;
  for (double s : partial) curvature += s;
  curvature *= std::exp(eval.log_scale);

  double delta = alpha * k.dot(grad.data(), dz.data(), 2 * n) - curvature / problem.eta;
  if (augmented) {
    double shift = 0.0;
    for (std::size_t i = 0; i < n; ++i) shift += dx[i] - dy[i];
    delta -= 0.5 * alpha * alpha * shift * shift;
  }
  return std::isnan(delta) ? -std::numeric_limits<double>::infinity() : delta;
}

HessianOperator negated_hessian(const PlanEvaluation& eval, double eta, bool augmented) {
  HessianOperator op;
  const std::size_t n = eval.size();
  op.row_sums.resize(n);
  op.col_sums.resize(n);
  for (std::size_t i = 0; i < n; ++i) op.row_sums[i] = std::exp(eval.log_row_sums[i]);
  for (std::size_t j = 0; j < n; ++j) op.col_sums[j] = std::exp(eval.log_col_sums[j]);
  op.plan_block = eval.plan();
  op.eta = eta;
  op.rank1_correction = augmented;
  return op;
}

HessianOperator negated_hessian(const Problem& problem, const DualPotentials& duals,
                                bool augmented) {
  return negated_hessian(evaluate_plan(problem, duals, true), problem.eta, augmented);
}

void hessian_matvec(const HessianOperator& op, std::span<const double> u, std::span<double> out) {
  const std::size_t n = op.size();
  if (u.size() != 2 * n || out.size() != 2 * n) {
    throw ValidationError("hessian_matvec: expected vectors of length " + std::to_string(2 * n));
  }
  const auto& k = kernels::active();
  const double* ux = u.data();
  const double* uy = u.data() + n;
  double* ox = out.data();
  double* oy = out.data() + n;
  std::fill(out.begin(), out.end(), 0.0);

  if (const auto* dense = std::get_if<Matrix>(&op.plan_block)) {
    for (std::size_t i = 0; i < n; ++i) {
      const double* row = dense->row(i).data();
      ox[i] = k.dot(row, uy, n);
      k.axpy(ux[i], row, oy, n);
    }
  } else {
    const auto& csr = std::get<CsrBlock>(op.plan_block);
    k.csr_block_matvec(csr.row_ptr.data(), csr.col.data(), csr.values.data(), n, ux, uy, ox, oy);
  }
  for (std::size_t i = 0; i < n; ++i) ox[i] = op.eta * (op.row_sums[i] * ux[i] + ox[i]);
  for (std::size_t j = 0; j < n; ++j) oy[j] = op.eta * (op.col_sums[j] * uy[j] + oy[j]);

  if (op.diagonal_shift != 0.0) k.axpy(op.diagonal_shift, u.data(), out.data(), 2 * n);
  if (op.rank1_correction) {
    double vu = 0.0;
    for (std::size_t i = 0; i < n; ++i) vu += ux[i] - uy[i];
    for (std::size_t i = 0; i < n; ++i) {
      ox[i] += vu;
      oy[i] -= vu;
    }
  }
}

Vector hessian_matvec(const HessianOperator& op, std::span<const double> u) {
  Vector out(2 * op.size());
  hessian_matvec(op, u, out);
  return out;
}

}  // namespace otsns
