#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace otsns {

/// Square n x n block in compressed sparse row form, columns sorted per row.
struct CsrBlock {
  std::size_t n = 0;
  std::vector<std::size_t> row_ptr;  // n + 1 offsets
  std::vector<std::uint32_t> col;
  std::vector<double> values;

  std::size_t nnz() const noexcept { return values.size(); }
};

}  // namespace otsns
