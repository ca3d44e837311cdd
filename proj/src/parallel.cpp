#include "otsns/parallel.hpp"

#include <cstdlib>
#include <string>

namespace otsns {

std::size_t thread_count() {
  static const std::size_t count = [] {
    if (const char* env = std::getenv("OT_SNS_THREADS"); env && *env) {
      try {
        const long v = std::stol(env);
        if (v >= 1) return static_cast<std::size_t>(v);
      } catch (...) {
      }
    }
    return std::max<std::size_t>(1, std::thread::hardware_concurrency());
  }();
  return count;
}

std::size_t chunk_count(std::size_t rows, std::size_t cols) {
  // Below ~64k entries the thread start-up cost dominates.
  constexpr std::size_t kMinEntriesPerChunk = 1 << 16;
  const std::size_t by_work = std::max<std::size_t>(1, rows * cols / kMinEntriesPerChunk);
  return std::max<std::size_t>(1, std::min({thread_count(), by_work, rows}));
}

}  // namespace otsns
