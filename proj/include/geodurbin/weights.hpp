#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "geodurbin/ingest.hpp"

namespace geodurbin {

inline constexpr double kEarthRadiusKm = 6371.0088;

// Great-circle distance in km between two WGS84 points (haversine).
double haversine_km(LonLat a, LonLat b) noexcept;

// Row-standardized k-nearest-neighbour weights in compressed sparse row
// form. Every row holds exactly k entries of weight 1/k, sorted by
// (distance, index); the matrix is generally not symmetric.
class SpatialWeights {
 public:
  SpatialWeights(std::size_t n, std::size_t k, std::vector<std::size_t> neighbors);

  std::size_t n() const noexcept { return n_; }
  std::size_t k() const noexcept { return k_; }
  // Sum of all weights; equals n for row-standardized weights.
  double s0() const noexcept;

  std::span<const std::size_t> neighbors(std::size_t i) const {
    return {col_index_.data() + row_ptr_[i], row_ptr_[i + 1] - row_ptr_[i]};
  }
  std::span<const double> row_weights(std::size_t i) const {
    return {values_.data() + row_ptr_[i], row_ptr_[i + 1] - row_ptr_[i]};
  }
  std::span<const std::size_t> row_ptr() const noexcept { return row_ptr_; }
  std::span<const std::size_t> col_index() const noexcept { return col_index_; }
  std::span<const double> values() const noexcept { return values_; }

  // Dense copy, for eigenvalues and LU factorizations.
  Eigen::MatrixXd dense() const;

 private:
  std::size_t n_;
  std::size_t k_;
  std::vector<std::size_t> row_ptr_;
  std::vector<std::size_t> col_index_;
  std::vector<double> values_;
};

// Ties in distance go to the smaller row index. Throws KTooLarge if k >= n,
// InvalidArgument if k == 0.
SpatialWeights build_knn(const RegionSet& regions, std::size_t k);

// (Wy)_i = sum_j w_ij y_j. Throws DimensionMismatch on length mismatch.
std::vector<double> spatial_lag(const SpatialWeights& w, std::span<const double> y);
void spatial_lag(const SpatialWeights& w, std::span<const double> y, std::span<double> out);

// weights.csv: from_id,to_id,weight
void write_weights_csv(const std::filesystem::path& path, const SpatialWeights& w,
                       const RegionSet& regions);

}  // namespace geodurbin
