#include <algorithm>
#include <functional>
#include <random>

#include <gtest/gtest.h>

#include "otsns/selection.hpp"

namespace otsns {
namespace {

TEST(SelectionCount, CeilingWithIntegerTolerance) {
  EXPECT_EQ(selection_count(0.5, 4), 2u);
  EXPECT_EQ(selection_count(0.3, 10), 3u);
  EXPECT_EQ(selection_count(0.31, 10), 4u);
  // 2/100 * 100^2 is 200 up to rounding; must not become 201.
  EXPECT_EQ(selection_count(2.0 / 100, 100 * 100), 200u);
  EXPECT_EQ(selection_count(15.0 / 196, 196 * 196), 15u * 196u);
  EXPECT_EQ(selection_count(1e-9, 10), 1u);
  EXPECT_EQ(selection_count(1.0, 7), 7u);
}

TEST(KthLargest, SmallExamples) {
  const std::vector<double> v{5.0, 0.1, 0.2, 4.0};
  EXPECT_EQ(kth_largest(v, 1), 5.0);
  EXPECT_EQ(kth_largest(v, 2), 4.0);
  EXPECT_EQ(kth_largest(v, 4), 0.1);
}

// Both the small-k buffered path and the plain selection path against a sort.
class KthLargestRandom : public ::testing::TestWithParam<std::size_t> {};

TEST_P(KthLargestRandom, MatchesFullSort) {
  const std::size_t k = GetParam();
  std::mt19937_64 rng(k);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> v(10000);
  for (double& x : v) x = u(rng);
  std::vector<double> sorted = v;
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  EXPECT_EQ(kth_largest(v, k), sorted[k - 1]);
}

INSTANTIATE_TEST_SUITE_P(Ks, KthLargestRandom, ::testing::Values(1, 7, 200, 624, 626, 5000, 10000));

TEST(KthLargest, WithTies) {
  std::vector<double> v(1000, 1.0);
  v[3] = 2.0;
  EXPECT_EQ(kth_largest(v, 1), 2.0);
  EXPECT_EQ(kth_largest(v, 2), 1.0);
  EXPECT_EQ(kth_largest(v, 40), 1.0);
}

TEST(SplitTopK, KeepsTiesAndAccountsMass) {
  const std::vector<double> v{3.0, 1.0, 2.0, 2.0, 0.5};
  const TopKSplit s = split_top_k(v, 2);
  EXPECT_EQ(s.threshold, 2.0);
  EXPECT_EQ(s.kept, 3u);  // both 2.0 entries survive
  EXPECT_DOUBLE_EQ(s.kept_mass, 7.0);
  EXPECT_DOUBLE_EQ(s.dropped_mass, 1.5);
}

}  // namespace
}  // namespace otsns
