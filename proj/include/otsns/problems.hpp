#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>

#include "otsns/core.hpp"

namespace otsns {

/// Row-major intensities, `height` rows of `width` pixels.
struct ImageGrid {
  std::size_t width = 0;
  std::size_t height = 0;
  Vector intensities;

  double& at(std::size_t row, std::size_t col) { return intensities[row * width + col]; }
  double at(std::size_t row, std::size_t col) const { return intensities[row * width + col]; }
};

enum class GridMetric { l1, l2_squared };

/// "l1" or "l2sq".
GridMetric parse_grid_metric(std::string_view name);

/// Uniform [0, 1) costs from a seeded 64-bit Mersenne twister, uniform
/// marginals. eta is left at 1.
Problem gen_random_assignment(std::size_t n, std::uint64_t seed);

/// c_ij = a_i + b_j with a, b uniform on [0, 1): every feasible plan has the
/// same cost. Uniform marginals.
Problem gen_rank_one(std::size_t n, std::uint64_t seed);

/// Pairwise pixel costs. Pixel (i, j) with row i sits at (i / s, j / s),
/// s = max(width, height); index i * width + j.
Matrix grid_cost(std::size_t width, std::size_t height, GridMetric metric);

/// Adds smoothing_eps / (w h) to every pixel and normalizes to unit mass.
Vector image_to_marginal(const ImageGrid& image, double smoothing_eps);

struct GaussianBlob {
  double row = 0.0;  // center, in pixels
  double col = 0.0;
  double sigma = 1.0;
  double weight = 1.0;
};

/// Sum of isotropic Gaussian bumps sampled at pixel centers.
ImageGrid gaussian_image(std::size_t width, std::size_t height,
                         std::span<const GaussianBlob> blobs);

/// Transport between two equally sized images.
Problem image_pair_problem(const ImageGrid& a, const ImageGrid& b, GridMetric metric,
                           double smoothing_eps, double eta);

/// Plain PGM (P2) or CSV, chosen by extension (.pgm / anything else as CSV).
ImageGrid load_image(const std::filesystem::path& path);
ImageGrid parse_pgm(std::string_view text, std::string_view source = "<pgm>");
ImageGrid parse_csv_grid(std::string_view text, std::string_view source = "<csv>");

/// Numeric provenance stored alongside a problem (e.g. smoothing, seed).
using ProblemMetadata = std::map<std::string, double>;

/// Writes `<name>.otp.json` plus the raw cost file next to it. `path` must end
/// in ".otp.json". Metadata goes into a "meta" object in the header.
void save_problem(const Problem& problem, const std::filesystem::path& path,
                  const ProblemMetadata& metadata = {});
Problem load_problem(const std::filesystem::path& path);
ProblemMetadata load_problem_metadata(const std::filesystem::path& path);

}  // namespace otsns
