#include <cmath>
#include <limits>

#include "kernels/constants.hpp"
#include "otsns/core.hpp"
#include "otsns/kernels.hpp"

namespace otsns::kernels {
namespace {

inline double flushed_exp(double x) { return x < detail::kExpFlushBelow ? 0.0 : std::exp(x); }

void affine_row(const double* cost, const double* beta, double alpha, double eta, double* out,
                std::size_t n) {
  for (std::size_t j = 0; j < n; ++j) out[j] = (alpha + beta[j]) - eta * cost[j];
}

double max(const double* v, std::size_t n) {
  double m = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < n; ++j) m = v[j] > m ? v[j] : m;
  return m;
}

double sum_exp(const double* v, double shift, std::size_t n) {
  double s = 0.0;
  for (std::size_t j = 0; j < n; ++j) s += flushed_exp(v[j] - shift);
  return s;
}

double exp_store(const double* v, double shift, double* out, std::size_t n) {
  double s = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    out[j] = flushed_exp(v[j] - shift);
    s += out[j];
  }
  return s;
}

void max_update(const double* v, double* acc, std::size_t n) {
  for (std::size_t j = 0; j < n; ++j) acc[j] = v[j] > acc[j] ? v[j] : acc[j];
}

void exp_accumulate(const double* v, const double* shift, double* acc, std::size_t n) {
  for (std::size_t j = 0; j < n; ++j) acc[j] += flushed_exp(v[j] - shift[j]);
}

double dot(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t j = 0; j < n; ++j) s += a[j] * b[j];
  return s;
}

void axpy(double a, const double* x, double* y, std::size_t n) {
  for (std::size_t j = 0; j < n; ++j) y[j] += a * x[j];
}

double dot_exp(const double* w, const double* v, std::size_t n) {
  double s = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    if (v[j] >= kLogUnderflowFloor) s += w[j] * std::exp(v[j]);
  }
  return s;
}

double phi(double u) {
  if (std::fabs(u) < detail::kPhiSeriesBound) {
    double acc = detail::kPhiCoefficients[detail::kPhiTerms - 1];
    for (int k = detail::kPhiTerms - 2; k >= 0; --k) acc = acc * u + detail::kPhiCoefficients[k];
    return acc * u * u;
  }
  return std::expm1(u) - u;
}

double phi_sum(const double* p, const double* d, double offset, double scale, std::size_t n) {
  double s = 0.0;
  for (std::size_t j = 0; j < n; ++j) s += p[j] * phi(scale * (offset + d[j]));
  return s;
}

void csr_block_matvec(const std::size_t* row_ptr, const std::uint32_t* col, const double* val,
                      std::size_t n, const double* u_x, const double* u_y, double* out_x,
                      double* out_y) {
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    const double ui = u_x[i];
    for (std::size_t k = row_ptr[i]; k < row_ptr[i + 1]; ++k) {
      acc += val[k] * u_y[col[k]];
      out_y[col[k]] += val[k] * ui;
    }
    out_x[i] += acc;
  }
}

void exp_values(const double* v, double* out, std::size_t n) {
  for (std::size_t j = 0; j < n; ++j) out[j] = flushed_exp(v[j]);
}

}  // namespace

const KernelTable& scalar_table() noexcept {
  static const KernelTable table{
      "scalar",  affine_row, max,     sum_exp, exp_store, max_update,       exp_accumulate,
      dot,       axpy,       dot_exp, phi_sum, csr_block_matvec, exp_values,
  };
  return table;
}

}  // namespace otsns::kernels
