#pragma once

#include <cstddef>
#include <span>

namespace otsns {

/// ceil(lambda * total), clamped to [1, total]. Products within 1e-9 relative
/// of an integer count as that integer, so lambda = k/n gives exactly k*n.
std::size_t selection_count(double lambda, std::size_t total);

/// The k-th largest value (1-based) by selection, O(size) expected.
double kth_largest(std::span<const double> values, std::size_t k);

/// Splits non-negative values into the top-k (ties at the k-th value all
/// kept) and the rest. Returns the mass of the dropped part and the number
/// actually kept.
struct TopKSplit {
  double threshold = 0.0;
  std::size_t kept = 0;
  double kept_mass = 0.0;
  double dropped_mass = 0.0;
};
TopKSplit split_top_k(std::span<const double> values, std::size_t k);

}  // namespace otsns
