// Compiled with -mavx2 -mfma; only reached through avx2_table() after a
// runtime CPU check.
#include <immintrin.h>

#include <cmath>
#include <limits>

#include "kernels/constants.hpp"
#include "otsns/core.hpp"
#include "otsns/kernels.hpp"

namespace otsns::kernels::avx2 {
namespace {

constexpr std::size_t kLanes = 4;

inline double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

inline double hmax(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d m = _mm_max_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_max_sd(m, _mm_unpackhi_pd(m, m)));
}

// 2^k for integral k in [-1022, 1023].
inline __m256d pow2_integral(__m256d k) {
  const __m256d magic = _mm256_set1_pd(6755399441055744.0);  // 1.5 * 2^52
  __m256i bits = _mm256_sub_epi64(_mm256_castpd_si256(_mm256_add_pd(k, magic)),
                                  _mm256_castpd_si256(magic));
  bits = _mm256_add_epi64(bits, _mm256_set1_epi64x(1023));
  return _mm256_castsi256_pd(_mm256_slli_epi64(bits, 52));
}

// exp with Cody-Waite reduction x = k ln2 + r, |r| <= ln2/2, and a degree-13
// Taylor polynomial. The scale 2^k is applied as two factors so that k up to
// 1024 works; inputs below the flush bound give 0.
inline __m256d exp_pd(__m256d x) {
  const __m256d upper = _mm256_set1_pd(709.782712893384);
  const __m256d lower = _mm256_set1_pd(detail::kExpFlushBelow);
  const __m256d over = _mm256_cmp_pd(x, upper, _CMP_GT_OQ);
  const __m256d under = _mm256_cmp_pd(x, lower, _CMP_LT_OQ);
  const __m256d nan = _mm256_cmp_pd(x, x, _CMP_UNORD_Q);
  const __m256d xc = _mm256_min_pd(_mm256_max_pd(x, lower), upper);

  const __m256d k = _mm256_round_pd(_mm256_mul_pd(xc, _mm256_set1_pd(1.4426950408889634)),
                                    _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
  __m256d r = _mm256_fnmadd_pd(k, _mm256_set1_pd(6.93147180369123816490e-01), xc);
  r = _mm256_fnmadd_pd(k, _mm256_set1_pd(1.90821492927058770002e-10), r);

  __m256d p = _mm256_set1_pd(1.0 / 6227020800.0);
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 479001600.0));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 39916800.0));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 3628800.0));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 362880.0));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 40320.0));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 5040.0));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 720.0));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 120.0));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 24.0));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 6.0));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(0.5));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0));

  const __m256d k1 = _mm256_floor_pd(_mm256_mul_pd(k, _mm256_set1_pd(0.5)));
  const __m256d k2 = _mm256_sub_pd(k, k1);
  __m256d result = _mm256_mul_pd(_mm256_mul_pd(p, pow2_integral(k1)), pow2_integral(k2));

  result = _mm256_blendv_pd(result, _mm256_setzero_pd(), under);
  result = _mm256_blendv_pd(result, _mm256_set1_pd(std::numeric_limits<double>::infinity()),
                            over);
  return _mm256_blendv_pd(result, x, nan);
}

// Single-lane exp for loop tails, so tails round exactly like full vectors.
inline double exp1(double x) { return _mm256_cvtsd_f64(exp_pd(_mm256_set1_pd(x))); }

inline __m256d phi_pd(__m256d u) {
  using detail::kPhiCoefficients;
  using detail::kPhiTerms;
  __m256d acc = _mm256_set1_pd(kPhiCoefficients[kPhiTerms - 1]);
  for (int k = kPhiTerms - 2; k >= 0; --k) {
    acc = _mm256_fmadd_pd(acc, u, _mm256_set1_pd(kPhiCoefficients[k]));
  }
  const __m256d series = _mm256_mul_pd(acc, _mm256_mul_pd(u, u));
  const __m256d direct =
      _mm256_sub_pd(_mm256_sub_pd(exp_pd(u), _mm256_set1_pd(1.0)), u);
  const __m256d abs_u = _mm256_andnot_pd(_mm256_set1_pd(-0.0), u);
  const __m256d small =
      _mm256_cmp_pd(abs_u, _mm256_set1_pd(detail::kPhiSeriesBound), _CMP_LT_OQ);
  return _mm256_blendv_pd(direct, series, small);
}

double phi_scalar(double u) {
  if (std::fabs(u) < detail::kPhiSeriesBound) {
    double acc = detail::kPhiCoefficients[detail::kPhiTerms - 1];
    for (int k = detail::kPhiTerms - 2; k >= 0; --k) acc = acc * u + detail::kPhiCoefficients[k];
    return acc * u * u;
  }
  return std::expm1(u) - u;
}

void affine_row(const double* cost, const double* beta, double alpha, double eta, double* out,
                std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  const __m256d ve = _mm256_set1_pd(eta);
  std::size_t j = 0;
  for (; j + kLanes <= n; j += kLanes) {
    const __m256d b = _mm256_add_pd(va, _mm256_loadu_pd(beta + j));
    _mm256_storeu_pd(out + j, _mm256_fnmadd_pd(ve, _mm256_loadu_pd(cost + j), b));
  }
  for (; j < n; ++j) out[j] = (alpha + beta[j]) - eta * cost[j];
}

double max(const double* v, std::size_t n) {
  double m = -std::numeric_limits<double>::infinity();
  std::size_t j = 0;
  if (n >= kLanes) {
    __m256d acc = _mm256_set1_pd(m);
    for (; j + kLanes <= n; j += kLanes) acc = _mm256_max_pd(acc, _mm256_loadu_pd(v + j));
    m = hmax(acc);
  }
  for (; j < n; ++j) m = v[j] > m ? v[j] : m;
  return m;
}

double sum_exp(const double* v, double shift, std::size_t n) {
  const __m256d vs = _mm256_set1_pd(shift);
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t j = 0;
  for (; j + 2 * kLanes <= n; j += 2 * kLanes) {
    acc0 = _mm256_add_pd(acc0, exp_pd(_mm256_sub_pd(_mm256_loadu_pd(v + j), vs)));
    acc1 = _mm256_add_pd(acc1, exp_pd(_mm256_sub_pd(_mm256_loadu_pd(v + j + kLanes), vs)));
  }
  for (; j + kLanes <= n; j += kLanes) {
    acc0 = _mm256_add_pd(acc0, exp_pd(_mm256_sub_pd(_mm256_loadu_pd(v + j), vs)));
  }
  double s = hsum(_mm256_add_pd(acc0, acc1));
  for (; j < n; ++j) s += exp1(v[j] - shift);
  return s;
}

double exp_store(const double* v, double shift, double* out, std::size_t n) {
  const __m256d vs = _mm256_set1_pd(shift);
  __m256d acc = _mm256_setzero_pd();
  std::size_t j = 0;
  for (; j + kLanes <= n; j += kLanes) {
    const __m256d e = exp_pd(_mm256_sub_pd(_mm256_loadu_pd(v + j), vs));
    _mm256_storeu_pd(out + j, e);
    acc = _mm256_add_pd(acc, e);
  }
  double s = hsum(acc);
  for (; j < n; ++j) {
    out[j] = exp1(v[j] - shift);
    s += out[j];
  }
  return s;
}

void max_update(const double* v, double* acc, std::size_t n) {
  std::size_t j = 0;
  for (; j + kLanes <= n; j += kLanes) {
    _mm256_storeu_pd(acc + j, _mm256_max_pd(_mm256_loadu_pd(acc + j), _mm256_loadu_pd(v + j)));
  }
  for (; j < n; ++j) acc[j] = v[j] > acc[j] ? v[j] : acc[j];
}

void exp_accumulate(const double* v, const double* shift, double* acc, std::size_t n) {
  std::size_t j = 0;
  for (; j + kLanes <= n; j += kLanes) {
    const __m256d e = exp_pd(_mm256_sub_pd(_mm256_loadu_pd(v + j), _mm256_loadu_pd(shift + j)));
    _mm256_storeu_pd(acc + j, _mm256_add_pd(_mm256_loadu_pd(acc + j), e));
  }
  for (; j < n; ++j) acc[j] += exp1(v[j] - shift[j]);
}

double dot(const double* a, const double* b, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t j = 0;
  for (; j + 2 * kLanes <= n; j += 2 * kLanes) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + j), _mm256_loadu_pd(b + j), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + j + kLanes), _mm256_loadu_pd(b + j + kLanes),
                           acc1);
  }
  for (; j + kLanes <= n; j += kLanes) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + j), _mm256_loadu_pd(b + j), acc0);
  }
  double s = hsum(_mm256_add_pd(acc0, acc1));
  for (; j < n; ++j) s += a[j] * b[j];
  return s;
}

void axpy(double a, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(a);
  std::size_t j = 0;
  for (; j + kLanes <= n; j += kLanes) {
    _mm256_storeu_pd(y + j, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + j), _mm256_loadu_pd(y + j)));
  }
  for (; j < n; ++j) y[j] += a * x[j];
}

double dot_exp(const double* w, const double* v, std::size_t n) {
  const __m256d floor = _mm256_set1_pd(kLogUnderflowFloor);
  __m256d acc = _mm256_setzero_pd();
  std::size_t j = 0;
  for (; j + kLanes <= n; j += kLanes) {
    const __m256d x = _mm256_loadu_pd(v + j);
    const __m256d keep = _mm256_cmp_pd(x, floor, _CMP_GE_OQ);
    const __m256d prod = _mm256_mul_pd(_mm256_loadu_pd(w + j), exp_pd(x));
    acc = _mm256_add_pd(acc, _mm256_and_pd(prod, keep));
  }
  double s = hsum(acc);
  for (; j < n; ++j) {
    if (v[j] >= kLogUnderflowFloor) s += w[j] * exp1(v[j]);
  }
  return s;
}

double phi_sum(const double* p, const double* d, double offset, double scale, std::size_t n) {
  const __m256d vo = _mm256_set1_pd(offset);
  const __m256d vs = _mm256_set1_pd(scale);
  __m256d acc = _mm256_setzero_pd();
  std::size_t j = 0;
  for (; j + kLanes <= n; j += kLanes) {
    const __m256d u = _mm256_mul_pd(vs, _mm256_add_pd(vo, _mm256_loadu_pd(d + j)));
    acc = _mm256_fmadd_pd(_mm256_loadu_pd(p + j), phi_pd(u), acc);
  }
  double s = hsum(acc);
  for (; j < n; ++j) s += p[j] * phi_scalar(scale * (offset + d[j]));
  return s;
}

void csr_block_matvec(const std::size_t* row_ptr, const std::uint32_t* col, const double* val,
                      std::size_t n, const double* u_x, const double* u_y, double* out_x,
                      double* out_y) {
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t begin = row_ptr[i];
    const std::size_t end = row_ptr[i + 1];
    const double ui = u_x[i];
    std::size_t k = begin;
    double s = 0.0;
    // Gathers only pay off on long rows; thresholded plans mostly have a
    // handful of entries per row.
    if (end - begin >= 2 * kLanes) {
      __m256d acc = _mm256_setzero_pd();
      for (; k + kLanes <= end; k += kLanes) {
        const __m128i idx = _mm_loadu_si128(reinterpret_cast<const __m128i*>(col + k));
        const __m256d gathered = _mm256_i32gather_pd(u_y, idx, 8);
        acc = _mm256_fmadd_pd(_mm256_loadu_pd(val + k), gathered, acc);
        out_y[col[k]] += val[k] * ui;
        out_y[col[k + 1]] += val[k + 1] * ui;
        out_y[col[k + 2]] += val[k + 2] * ui;
        out_y[col[k + 3]] += val[k + 3] * ui;
      }
      s = hsum(acc);
    }
    for (; k < end; ++k) {
      s += val[k] * u_y[col[k]];
      out_y[col[k]] += val[k] * ui;
    }
    out_x[i] += s;
  }
}

void exp_values(const double* v, double* out, std::size_t n) {
  std::size_t j = 0;
  for (; j + kLanes <= n; j += kLanes) _mm256_storeu_pd(out + j, exp_pd(_mm256_loadu_pd(v + j)));
  for (; j < n; ++j) out[j] = exp1(v[j]);
}

}  // namespace

const KernelTable& table() noexcept {
  static const KernelTable t{
      "avx2",  affine_row, max,     sum_exp, exp_store, max_update,       exp_accumulate,
      dot,     axpy,       dot_exp, phi_sum, csr_block_matvec, exp_values,
  };
  return t;
}

}  // namespace otsns::kernels::avx2
