#pragma once

#include <algorithm>
#include <cstddef>
#include <thread>
#include <vector>

namespace otsns {

/// Worker count for row-parallel loops: OT_SNS_THREADS when set, otherwise
/// the hardware concurrency. Read once per process.
std::size_t thread_count();

/// Number of row chunks used for an rows x cols sweep. Depends only on the
/// shape and thread_count(), so chunk-ordered reductions are reproducible.
std::size_t chunk_count(std::size_t rows, std::size_t cols);

/// Calls fn(chunk, begin, end) for `chunks` contiguous row ranges covering
/// [0, rows). Chunk 0 runs on the calling thread.
template <class Fn>
void for_each_chunk(std::size_t rows, std::size_t chunks, Fn&& fn) {
  chunks = std::max<std::size_t>(1, std::min(chunks, rows));
  auto bounds = [&](std::size_t c) { return rows * c / chunks; };
  if (chunks == 1) {
    fn(std::size_t{0}, std::size_t{0}, rows);
    return;
  }
  std::vector<std::jthread> workers;
  workers.reserve(chunks - 1);
  for (std::size_t c = 1; c < chunks; ++c) {
    workers.emplace_back([&, c] { fn(c, bounds(c), bounds(c + 1)); });
  }
  fn(std::size_t{0}, bounds(0), bounds(1));
}

}  // namespace otsns
