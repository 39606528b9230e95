#include "geodurbin/weights.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <string>

#include "geodurbin/csv.hpp"
#include "geodurbin/error.hpp"

namespace geodurbin {

double haversine_km(LonLat a, LonLat b) noexcept {
  constexpr double rad = std::numbers::pi / 180.0;
  // Differences are taken in degrees first so equal spacings give equal
  // distances bit for bit.
  const double dlat = (b.lat - a.lat) * rad;
  const double dlon = (b.lon - a.lon) * rad;
  const double s1 = std::sin(0.5 * dlat);
  const double s2 = std::sin(0.5 * dlon);
  const double h = s1 * s1 + std::cos(a.lat * rad) * std::cos(b.lat * rad) * s2 * s2;
  return 2.0 * kEarthRadiusKm * std::asin(std::min(1.0, std::sqrt(h)));
}

SpatialWeights::SpatialWeights(std::size_t n, std::size_t k,
                               std::vector<std::size_t> neighbors)
    : n_(n), k_(k), col_index_(std::move(neighbors)) {
  if (k == 0) throw Error(ErrorCode::InvalidArgument, "k", "k must be positive");
  if (k >= n) {
    throw Error(ErrorCode::KTooLarge, "k=" + std::to_string(k),
                "need k < n = " + std::to_string(n));
  }
  if (col_index_.size() != n * k) throw Error(ErrorCode::DimensionMismatch, "neighbors");
  row_ptr_.resize(n + 1);
  for (std::size_t i = 0; i <= n; ++i) row_ptr_[i] = i * k;
  for (std::size_t i = 0; i < n; ++i) {
    auto row = this->neighbors(i);
    for (std::size_t j : row) {
      if (j >= n || j == i) {
        throw Error(ErrorCode::InvalidArgument, "row " + std::to_string(i),
                    "neighbor index out of range or self-loop");
      }
    }
    std::vector<std::size_t> sorted(row.begin(), row.end());
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
      throw Error(ErrorCode::InvalidArgument, "row " + std::to_string(i), "repeated neighbor");
    }
  }
  values_.assign(n * k, 1.0 / static_cast<double>(k));
}

double SpatialWeights::s0() const noexcept {
  return std::accumulate(values_.begin(), values_.end(), 0.0);
}

Eigen::MatrixXd SpatialWeights::dense() const {
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n_),
                                            static_cast<Eigen::Index>(n_));
  for (std::size_t i = 0; i < n_; ++i) {
    for (std::size_t e = row_ptr_[i]; e < row_ptr_[i + 1]; ++e) {
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(col_index_[e])) = values_[e];
    }
  }
  return m;
}

SpatialWeights build_knn(const RegionSet& regions, std::size_t k) {
  const std::size_t n = regions.size();
  if (k == 0) throw Error(ErrorCode::InvalidArgument, "k", "k must be positive");
  if (k >= n) {
    throw Error(ErrorCode::KTooLarge, "k=" + std::to_string(k),
                "need k < n = " + std::to_string(n));
  }
  std::vector<std::size_t> neighbors;
  neighbors.reserve(n * k);
  std::vector<std::pair<double, std::size_t>> candidates(n - 1);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t c = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      const double d = haversine_km(regions[i].centroid, regions[j].centroid);
      if (!std::isfinite(d)) throw Error(ErrorCode::BadCoordinate, regions[j].id);
      candidates[c++] = {d, j};
    }
    std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(k),
                      candidates.end());
    for (std::size_t m = 0; m < k; ++m) neighbors.push_back(candidates[m].second);
  }
  return SpatialWeights(n, k, std::move(neighbors));
}

void spatial_lag(const SpatialWeights& w, std::span<const double> y, std::span<double> out) {
  if (y.size() != w.n() || out.size() != w.n()) {
    throw Error(ErrorCode::DimensionMismatch, "spatial_lag",
                "expected length " + std::to_string(w.n()));
  }
  const auto rp = w.row_ptr();
  const auto ci = w.col_index();
  const auto v = w.values();
  for (std::size_t i = 0; i < w.n(); ++i) {
    double s = 0.0;
    for (std::size_t e = rp[i]; e < rp[i + 1]; ++e) s += v[e] * y[ci[e]];
    out[i] = s;
  }
}

std::vector<double> spatial_lag(const SpatialWeights& w, std::span<const double> y) {
  std::vector<double> out(w.n());
  spatial_lag(w, y, out);
  return out;
}

void write_weights_csv(const std::filesystem::path& path, const SpatialWeights& w,
                       const RegionSet& regions) {
  if (regions.size() != w.n()) throw Error(ErrorCode::DimensionMismatch, "weights");
  csv::Writer out({"from_id", "to_id", "weight"});
  for (std::size_t i = 0; i < w.n(); ++i) {
    const auto nb = w.neighbors(i);
    const auto wt = w.row_weights(i);
    for (std::size_t m = 0; m < nb.size(); ++m) {
      out.row({regions[i].id, regions[nb[m]].id, csv::format_double(wt[m])});
    }
  }
  out.save(path);
}

}  // namespace geodurbin
