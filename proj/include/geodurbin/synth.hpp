#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "geodurbin/ingest.hpp"
#include "geodurbin/weights.hpp"

namespace geodurbin {

// Parameters of y = rho W y + a + X beta + W X theta + e, e ~ N(0, sigma^2).
struct DgpSpec {
  double rho = 0.0;
  Eigen::VectorXd beta;
  Eigen::VectorXd theta;  // same length as beta
  double intercept = 0.0;
  double sigma = 1.0;
  std::uint64_t seed = 0;
  // When absent, beta.size() i.i.d. N(0,1) columns x1..xp are drawn.
  std::optional<std::vector<Column>> covariates;
};

struct SdmSample {
  std::vector<double> y;
  std::vector<Column> x;
  std::vector<double> epsilon;
};

// Draws from SplitMix64(seed): covariates column by column (when generated),
// then the noise vector, then solves (I - rho W) y = rhs by dense LU.
// Throws SingularFilter when |rho| >= 1 or the solve is inaccurate,
// InvalidArgument on inconsistent dimensions.
SdmSample gen_sdm(const SpatialWeights& w, const DgpSpec& spec);

// Literal O(n^2) double sum over a dense copy of W; oracle for global_moran.
double brute_moran(std::span<const double> y, const SpatialWeights& w);

enum class LatticeKind { Ring, Grid, Scatter };
LatticeKind parse_lattice_kind(std::string_view text);
std::string_view to_string(LatticeKind kind) noexcept;

// Synthetic regions whose KNN graph has a known shape:
//   Ring    - n points evenly spaced on the equator; neighbours are the
//             nearest positions along the ring.
//   Grid    - sqrt(n) x sqrt(n) lattice with 0.5 degree spacing centred on
//             the equator; k = 4 gives rook neighbours in the interior.
//   Scatter - n seeded uniform points in a 7 x 14 degree box.
// Each region carries a square polygon for rendering. Throws BadShape when
// n < k + 1 or a grid size is not a perfect square.
RegionSet gen_lattice(std::size_t n, LatticeKind kind, std::size_t k, std::uint64_t seed = 0);

}  // namespace geodurbin
