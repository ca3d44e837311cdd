#include "otsns/selection.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include "otsns/errors.hpp"

namespace otsns {

std::size_t selection_count(double lambda, std::size_t total) {
  const double exact = lambda * static_cast<double>(total);
  const double nearest = std::round(exact);
  double k = std::fabs(exact - nearest) <= 1e-9 * std::max(1.0, exact) ? nearest : std::ceil(exact);
  k = std::clamp(k, 1.0, static_cast<double>(total));
  return static_cast<std::size_t>(k);
}

double kth_largest(std::span<const double> values, std::size_t k) {
  if (k == 0 || k > values.size()) throw ValidationError("kth_largest: k out of range");
  if (k <= values.size() / 16) {
    // Keep every value above `floor` in a buffer of at most 2k; on overflow,
    // cut it back to its k largest and raise the floor to the k-th of them.
    // Values equal to the floor can no longer change the k-th largest.
    std::vector<double> buffer;
    buffer.reserve(2 * k);
    double floor = -std::numeric_limits<double>::infinity();
    auto compact = [&] {
      auto nth = buffer.begin() + static_cast<std::ptrdiff_t>(k - 1);
      std::nth_element(buffer.begin(), nth, buffer.end(), std::greater<>());
      floor = *nth;
      buffer.resize(k);
    };
    for (double v : values) {
      if (v > floor) {
        buffer.push_back(v);
        if (buffer.size() == 2 * k) compact();
      }
    }
    if (buffer.size() >= k) {
      compact();
      return floor;
    }
  }
  std::vector<double> scratch(values.begin(), values.end());
  auto nth = scratch.begin() + static_cast<std::ptrdiff_t>(k - 1);
  std::nth_element(scratch.begin(), nth, scratch.end(), std::greater<>());
  return *nth;
}

TopKSplit split_top_k(std::span<const double> values, std::size_t k) {
  TopKSplit split;
  split.threshold = kth_largest(values, k);
  for (double v : values) {
    if (v >= split.threshold) {
      ++split.kept;
      split.kept_mass += v;
    } else {
      split.dropped_mass += v;
    }
  }
  return split;
}

}  // namespace otsns
