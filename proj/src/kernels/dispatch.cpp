#include <atomic>
#include <cstdlib>
#include <string>

#include "otsns/errors.hpp"
#include "otsns/kernels.hpp"

namespace otsns::kernels {

#ifdef OTSNS_HAVE_AVX2
namespace avx2 {
const KernelTable& table() noexcept;
}
#endif

namespace {

bool cpu_has_avx2() noexcept {
#if defined(OTSNS_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

const KernelTable* lookup(std::string_view name) {
  if (name == "scalar") return &scalar_table();
  if (name == "avx2") return avx2_table();
  return nullptr;
}

const KernelTable* startup_choice() {
  if (const char* forced = std::getenv("OT_SNS_KERNELS"); forced && *forced) {
    if (const KernelTable* t = lookup(forced)) return t;
  }
  if (const KernelTable* t = avx2_table()) return t;
  return &scalar_table();
}

std::atomic<const KernelTable*>& current() {
  static std::atomic<const KernelTable*> table{startup_choice()};
  return table;
}

}  // namespace

const KernelTable* avx2_table() noexcept {
#ifdef OTSNS_HAVE_AVX2
  static const bool supported = cpu_has_avx2();
  return supported ? &avx2::table() : nullptr;
#else
  return nullptr;
#endif
}

std::vector<const KernelTable*> available_tables() {
  std::vector<const KernelTable*> out{&scalar_table()};
  if (const KernelTable* t = avx2_table()) out.push_back(t);
  return out;
}

const KernelTable& active() noexcept { return *current().load(std::memory_order_relaxed); }

void select(std::string_view name) {
  const KernelTable* t = lookup(name);
  if (t == nullptr) {
    throw ValidationError("kernel table '" + std::string(name) + "' is not available");
  }
  current().store(t, std::memory_order_relaxed);
}

void reset_selection() { current().store(startup_choice(), std::memory_order_relaxed); }

}  // namespace otsns::kernels
