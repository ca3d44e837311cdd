#include <array>
#include <cmath>
#include <fstream>

#include <gtest/gtest.h>

#include "otsns/problems.hpp"
#include "test_util.hpp"

namespace otsns {
namespace {

TEST(RandomAssignment, ShapeAndRange) {
  const Problem p = gen_random_assignment(1, 3);
  ASSERT_EQ(p.cost.rows(), 1u);
  EXPECT_GE(p.cost(0, 0), 0.0);
  EXPECT_LT(p.cost(0, 0), 1.0);
  EXPECT_EQ(p.row_marginal, Vector{1.0});
  EXPECT_EQ(p.col_marginal, Vector{1.0});
  EXPECT_THROW(gen_random_assignment(0, 1), ValidationError);
}

TEST(RandomAssignment, DeterministicPerSeed) {
  const Problem a = gen_random_assignment(20, 42), b = gen_random_assignment(20, 42);
  EXPECT_EQ(a.cost, b.cost);
  EXPECT_EQ(a.row_marginal, b.row_marginal);
  EXPECT_NE(gen_random_assignment(20, 43).cost, a.cost);
}

TEST(RandomAssignment, SampleMean) {
  const Problem p = gen_random_assignment(500, 7);
  double sum = 0.0;
  for (double v : p.cost.values()) sum += v;
  const double mean = sum / static_cast<double>(p.cost.size());
  EXPECT_GT(mean, 0.45);
  EXPECT_LT(mean, 0.55);
}

TEST(RankOne, CostIsAdditive) {
  const Problem p = gen_rank_one(6, 2);
  // c_ij - c_i0 - c_0j + c_00 = 0 for c_ij = a_i + b_j.
  for (std::size_t i = 0; i < 6; ++i) {
    for (std::size_t j = 0; j < 6; ++j) {
      EXPECT_NEAR(p.cost(i, j) - p.cost(i, 0) - p.cost(0, j) + p.cost(0, 0), 0.0, 1e-15);
    }
  }
  EXPECT_NO_THROW(validate(p));
}

TEST(GridCost, CornerToCornerSquaredEuclidean) {
  const Matrix c = grid_cost(28, 28, GridMetric::l2_squared);
  ASSERT_EQ(c.rows(), 784u);
  EXPECT_NEAR(c(0, 783), 2.0 * (27.0 / 28.0) * (27.0 / 28.0), 1e-15);
  EXPECT_NEAR(c(0, 783), 1.859694, 1e-6);
}

TEST(GridCost, SelfDistanceZeroAndNeighbourL1) {
  const Matrix c = grid_cost(28, 28, GridMetric::l1);
  for (std::size_t k = 0; k < c.rows(); k += 97) EXPECT_EQ(c(k, k), 0.0);
  EXPECT_NEAR(c(0, 1), 1.0 / 28.0, 1e-15);
  EXPECT_NEAR(c(0, 28), 1.0 / 28.0, 1e-15);
}

TEST(GridCost, RectangularUsesLongerSide) {
  const Matrix c = grid_cost(4, 2, GridMetric::l1);
  // (row 1, col 3) is index 7; distance (1 + 3) / 4.
  EXPECT_NEAR(c(0, 7), 1.0, 1e-15);
  EXPECT_EQ(c(7, 0), c(0, 7));
}

TEST(GridMetricNames, ParseAndReject) {
  EXPECT_EQ(parse_grid_metric("l1"), GridMetric::l1);
  EXPECT_EQ(parse_grid_metric("l2sq"), GridMetric::l2_squared);
  EXPECT_THROW(parse_grid_metric("l2"), ValidationError);
}

TEST(ImageToMarginal, UniformStaysUniform) {
  const ImageGrid img{3, 2, Vector(6, 7.0)};
  for (double eps : {0.0, 1e-6, 0.5}) {
    for (double v : image_to_marginal(img, eps)) EXPECT_NEAR(v, 1.0 / 6.0, 1e-16);
  }
}

TEST(ImageToMarginal, SingleLitPixel) {
  ImageGrid img{4, 4, Vector(16, 0.0)};
  img.at(1, 2) = 1.0;
  const Vector zero_eps = image_to_marginal(img, 0.0);
  EXPECT_EQ(zero_eps[6], 1.0);
  EXPECT_EQ(zero_eps[0], 0.0);  // a later validate() rejects this marginal

  const Vector m = image_to_marginal(img, 1e-6);
  EXPECT_NEAR(m[6], 1.0 / (1.0 + 1e-6), 1e-7);
  for (double v : m) EXPECT_GT(v, 0.0);
}

TEST(ImageToMarginal, SumsToOne) {
  const auto v = testing::random_vector(30, 5);
  ImageGrid img{6, 5, Vector(30)};
  for (std::size_t k = 0; k < 30; ++k) img.intensities[k] = std::fabs(v[k]);
  const Vector m = image_to_marginal(img, 1e-6);
  double s = 0.0;
  for (double x : m) s += x;
  EXPECT_NEAR(s, 1.0, 1e-14);
}

TEST(ImageToMarginal, RejectsEmptyOrNegative) {
  EXPECT_THROW(image_to_marginal(ImageGrid{2, 1, {0.0, 0.0}}, 0.0), ValidationError);
  EXPECT_THROW(image_to_marginal(ImageGrid{2, 1, {1.0, -1.0}}, 0.0), ValidationError);
}

TEST(GaussianImage, PeakAtCentre) {
  const std::array<GaussianBlob, 1> blob{{{2.0, 3.0, 1.0, 2.0}}};
  const ImageGrid img = gaussian_image(6, 5, blob);
  EXPECT_DOUBLE_EQ(img.at(2, 3), 2.0);
  EXPECT_DOUBLE_EQ(img.at(2, 4), 2.0 * std::exp(-0.5));
}

TEST(ImagePair, DimensionsAndValidity) {
  const std::array<GaussianBlob, 1> a{{{1.0, 1.0, 1.0, 1.0}}};
  const std::array<GaussianBlob, 1> b{{{3.0, 2.0, 1.0, 1.0}}};
  const Problem p = image_pair_problem(gaussian_image(5, 4, a), gaussian_image(5, 4, b),
                                       GridMetric::l1, 1e-6, 12.0);
  EXPECT_EQ(p.size(), 20u);
  EXPECT_EQ(p.eta, 12.0);
  EXPECT_NO_THROW(validate(p));
  EXPECT_THROW(image_pair_problem(gaussian_image(5, 4, a), gaussian_image(4, 5, b),
                                  GridMetric::l1, 1e-6, 1.0),
               ValidationError);
}

TEST(Pgm, PlainFormat) {
  const ImageGrid img = parse_pgm("P2 2 2 255\n0 255\n255 0\n");
  EXPECT_EQ(img.width, 2u);
  EXPECT_EQ(img.height, 2u);
  EXPECT_EQ(img.intensities, (Vector{0.0, 255.0, 255.0, 0.0}));
}

TEST(Pgm, CommentsAndErrors) {
  const ImageGrid img = parse_pgm("P2\n# made by hand\n3 1\n9\n1 2 3\n");
  EXPECT_EQ(img.intensities, (Vector{1.0, 2.0, 3.0}));
  EXPECT_THROW(parse_pgm("P5 1 1 255 0"), ParseError);
  EXPECT_THROW(parse_pgm("P2 2 2 255\n0 1 2\n"), ParseError);
  EXPECT_THROW(parse_pgm("P2 1 1 10\n11\n"), ParseError);
}

TEST(Csv, NegativeValueNamesTheCell) {
  try {
    parse_csv_grid("1,2,3\n4,-5,6\n", "img.csv");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
    EXPECT_EQ(e.column(), 3u);
    EXPECT_NE(std::string(e.what()).find("img.csv:2:3"), std::string::npos);
  }
}

TEST(Csv, ShapeAndRaggedRows) {
  const ImageGrid img = parse_csv_grid("1, 2\n3, 4\n\n");
  EXPECT_EQ(img.width, 2u);
  EXPECT_EQ(img.height, 2u);
  EXPECT_EQ(img.at(1, 0), 3.0);
  EXPECT_THROW(parse_csv_grid("1,2\n3\n"), ParseError);
  EXPECT_THROW(parse_csv_grid("1,x\n"), ParseError);
  EXPECT_THROW(parse_csv_grid(""), ParseError);
}

TEST(LoadImage, ByExtension) {
  testing::TempDir dir;
  std::ofstream(dir / "a.pgm") << "P2 2 1 9\n1 2\n";
  std::ofstream(dir / "b.csv") << "1,2\n";
  EXPECT_EQ(load_image(dir / "a.pgm").intensities, load_image(dir / "b.csv").intensities);
  EXPECT_THROW(load_image(dir / "missing.pgm"), IoError);
}

TEST(ProblemFiles, RoundTripIsBitwise) {
  testing::TempDir dir;
  Problem p = gen_random_assignment(17, 9);
  p.row_marginal = testing::random_marginal(17, 10);
  p.eta = 1.0 / 3.0;
  const auto path = dir / "r17.otp.json";
  save_problem(p, path, {{"seed", 9}, {"smoothing_eps", 1e-6}});
  EXPECT_TRUE(std::filesystem::exists(dir / "r17.otp.bin"));
  const Problem q = load_problem(path);
  EXPECT_EQ(q.cost, p.cost);
  EXPECT_EQ(q.row_marginal, p.row_marginal);
  EXPECT_EQ(q.col_marginal, p.col_marginal);
  EXPECT_EQ(q.eta, p.eta);
  const ProblemMetadata meta = load_problem_metadata(path);
  EXPECT_EQ(meta.at("seed"), 9.0);
  EXPECT_EQ(meta.at("smoothing_eps"), 1e-6);
}

TEST(ProblemFiles, NamingAndCorruption) {
  testing::TempDir dir;
  const Problem p = gen_random_assignment(3, 1);
  EXPECT_THROW(save_problem(p, dir / "bad.json"), ValidationError);

  const auto path = dir / "p.otp.json";
  save_problem(p, path);
  std::filesystem::resize_file(dir / "p.otp.bin", 8);
  EXPECT_THROW(load_problem(path), ValidationError);

  std::ofstream(dir / "q.otp.json") << "{\"n\": 3,\n \"eta\": ";
  EXPECT_THROW(load_problem(dir / "q.otp.json"), ParseError);
  EXPECT_THROW(load_problem(dir / "none.otp.json"), IoError);
}

}  // namespace
}  // namespace otsns
