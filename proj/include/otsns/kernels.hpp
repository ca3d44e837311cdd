#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>
#include <vector>

// Inner loops over plan rows. Every routine has a scalar reference version and
// optionally a vectorized one; the table in use is chosen once at startup from
// CPU features, or forced with OT_SNS_KERNELS=scalar|avx2.
namespace otsns::kernels {

struct KernelTable {
  std::string_view name;

  // out_j = alpha + beta_j - eta * cost_j
  void (*affine_row)(const double* cost, const double* beta, double alpha, double eta,
                     double* out, std::size_t n);
  // max_j v_j (-inf for n == 0)
  double (*max)(const double* v, std::size_t n);
  // sum_j exp(v_j - shift)
  double (*sum_exp)(const double* v, double shift, std::size_t n);
  // out_j = exp(v_j - shift); returns sum_j out_j. out may alias v.
  double (*exp_store)(const double* v, double shift, double* out, std::size_t n);
  // acc_j = max(acc_j, v_j)
  void (*max_update)(const double* v, double* acc, std::size_t n);
  // acc_j += exp(v_j - shift_j)
  void (*exp_accumulate)(const double* v, const double* shift, double* acc, std::size_t n);
  double (*dot)(const double* a, const double* b, std::size_t n);
  // y += a * x
  void (*axpy)(double a, const double* x, double* y, std::size_t n);
  // sum_j w_j exp(v_j), skipping v_j below the underflow floor
  double (*dot_exp)(const double* w, const double* v, std::size_t n);
  // sum_j p_j * phi(scale * (offset + d_j)),  phi(u) = e^u - 1 - u
  double (*phi_sum)(const double* p, const double* d, double offset, double scale,
                    std::size_t n);
  // Symmetric block product with an n x n CSR block B:
  //   out_x += B u_y,  out_y += B^T u_x
  void (*csr_block_matvec)(const std::size_t* row_ptr, const std::uint32_t* col,
                           const double* val, std::size_t n, const double* u_x,
                           const double* u_y, double* out_x, double* out_y);
  // out_j = exp(v_j)
  void (*exp)(const double* v, double* out, std::size_t n);
};

const KernelTable& scalar_table() noexcept;

/// nullptr when the variant was not compiled in or the CPU lacks AVX2/FMA.
const KernelTable* avx2_table() noexcept;

/// All tables usable on this machine, scalar first.
std::vector<const KernelTable*> available_tables();

/// Currently selected table.
const KernelTable& active() noexcept;

/// Force a table by name ("scalar", "avx2"). Not thread-safe; meant for tests
/// and benchmarks. Throws ValidationError for unknown/unavailable names.
void select(std::string_view name);

/// Restores the startup selection.
void reset_selection();

}  // namespace otsns::kernels
