#include "geodurbin/synth.hpp"

#include <cmath>
#include <string>

#include "geodurbin/error.hpp"
#include "geodurbin/rng.hpp"

namespace geodurbin {

SdmSample gen_sdm(const SpatialWeights& w, const DgpSpec& spec) {
  const std::size_t n = w.n();
  const auto p = static_cast<std::size_t>(spec.beta.size());
  if (static_cast<std::size_t>(spec.theta.size()) != p) {
    throw Error(ErrorCode::InvalidArgument, "theta", "must match beta in length");
  }
  if (!(spec.sigma >= 0.0)) throw Error(ErrorCode::InvalidArgument, "sigma", "must be >= 0");
  if (!(std::abs(spec.rho) < 1.0)) {
    throw Error(ErrorCode::SingularFilter, "rho=" + std::to_string(spec.rho), "need |rho| < 1");
  }

  SplitMix64 rng(spec.seed);
  SdmSample out;
  if (spec.covariates) {
    if (spec.covariates->size() != p) {
      throw Error(ErrorCode::InvalidArgument, "covariates", "must match beta in length");
    }
    for (const auto& c : *spec.covariates) {
      if (c.values.size() != n) throw Error(ErrorCode::DimensionMismatch, c.name);
    }
    out.x = *spec.covariates;
  } else {
    for (std::size_t j = 0; j < p; ++j) {
      Column c{"x" + std::to_string(j + 1), std::vector<double>(n), ColumnKind::Raw};
      for (auto& v : c.values) v = rng.normal();
      out.x.push_back(std::move(c));
    }
  }
  out.epsilon.resize(n);
  for (auto& e : out.epsilon) e = spec.sigma * rng.normal();

  Eigen::VectorXd rhs = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(n), spec.intercept);
  for (std::size_t j = 0; j < p; ++j) {
    const auto lag = spatial_lag(w, out.x[j].values);
    for (std::size_t i = 0; i < n; ++i) {
      rhs[static_cast<Eigen::Index>(i)] +=
          spec.beta[static_cast<Eigen::Index>(j)] * out.x[j].values[i] +
          spec.theta[static_cast<Eigen::Index>(j)] * lag[i];
    }
  }
  for (std::size_t i = 0; i < n; ++i) rhs[static_cast<Eigen::Index>(i)] += out.epsilon[i];

  const auto ni = static_cast<Eigen::Index>(n);
  const Eigen::MatrixXd a = Eigen::MatrixXd::Identity(ni, ni) - spec.rho * w.dense();
  const Eigen::PartialPivLU<Eigen::MatrixXd> lu(a);
  Eigen::VectorXd y = lu.solve(rhs);
  y += lu.solve(rhs - a * y);  // one refinement step
  const double residual = (a * y - rhs).lpNorm<Eigen::Infinity>();
  if (!std::isfinite(residual) || residual > 1e-10 * std::max(1.0, rhs.lpNorm<Eigen::Infinity>())) {
    throw Error(ErrorCode::SingularFilter, "rho=" + std::to_string(spec.rho),
                "solve residual " + std::to_string(residual));
  }
  out.y.assign(y.data(), y.data() + y.size());
  return out;
}

double brute_moran(std::span<const double> y, const SpatialWeights& w) {
  const std::size_t n = y.size();
  if (n != w.n()) throw Error(ErrorCode::DimensionMismatch, "y");
  const Eigen::MatrixXd dense = w.dense();
  double ybar = 0.0;
  for (std::size_t i = 0; i < n; ++i) ybar += y[i];
  ybar /= static_cast<double>(n);

  double num = 0.0, den = 0.0, s0 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double wij = dense(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      num += wij * (y[i] - ybar) * (y[j] - ybar);
      s0 += wij;
    }
    den += (y[i] - ybar) * (y[i] - ybar);
  }
  if (den == 0.0) throw Error(ErrorCode::ZeroVariance, "brute_moran");
  return static_cast<double>(n) / s0 * num / den;
}

LatticeKind parse_lattice_kind(std::string_view text) {
  if (text == "ring") return LatticeKind::Ring;
  if (text == "grid") return LatticeKind::Grid;
  if (text == "scatter") return LatticeKind::Scatter;
  throw Error(ErrorCode::InvalidArgument, std::string(text), "layout must be ring, grid or scatter");
}

std::string_view to_string(LatticeKind kind) noexcept {
  switch (kind) {
    case LatticeKind::Ring: return "ring";
    case LatticeKind::Grid: return "grid";
    case LatticeKind::Scatter: return "scatter";
  }
  return "ring";
}

namespace {

MultiPolygon square(LonLat c, double half) {
  return {{{{c.lon - half, c.lat - half},
             {c.lon + half, c.lat - half},
             {c.lon + half, c.lat + half},
             {c.lon - half, c.lat + half},
             {c.lon - half, c.lat - half}}}};
}

}  // namespace

RegionSet gen_lattice(std::size_t n, LatticeKind kind, std::size_t k, std::uint64_t seed) {
  if (k == 0 || n < k + 1) {
    throw Error(ErrorCode::BadShape, "n=" + std::to_string(n),
                "need n >= k + 1 with k = " + std::to_string(k));
  }
  std::vector<LonLat> points(n);
  double half = 0.0;
  switch (kind) {
    case LatticeKind::Ring: {
      const double spacing = 360.0 / static_cast<double>(n);
      for (std::size_t i = 0; i < n; ++i) {
        points[i] = {-180.0 + spacing * (static_cast<double>(i) + 0.5), 0.0};
      }
      half = std::min(0.4 * spacing, 20.0);
      break;
    }
    case LatticeKind::Grid: {
      const auto m = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(n))));
      if (m * m != n) {
        throw Error(ErrorCode::BadShape, "n=" + std::to_string(n), "grid needs a perfect square");
      }
      constexpr double spacing = 0.5;
      const double offset = 0.5 * static_cast<double>(m - 1);
      for (std::size_t r = 0; r < m; ++r) {
        for (std::size_t c = 0; c < m; ++c) {
          points[r * m + c] = {100.0 + spacing * static_cast<double>(c),
                               spacing * (static_cast<double>(r) - offset)};
        }
      }
      half = 0.5 * spacing;
      break;
    }
    case LatticeKind::Scatter: {
      SplitMix64 rng(seed);
      for (auto& pt : points) {
        pt.lon = 98.0 + 7.0 * rng.uniform();
        pt.lat = 6.0 + 14.0 * rng.uniform();
      }
      half = 0.15;
      break;
    }
  }
  std::vector<Region> regions;
  regions.reserve(n);
  const std::size_t width = std::to_string(n).size();
  for (std::size_t i = 0; i < n; ++i) {
    std::string id = std::to_string(i + 1);
    id = "R" + std::string(width - id.size(), '0') + id;
    regions.push_back({id, "Region " + std::to_string(i + 1), points[i], square(points[i], half)});
  }
  return RegionSet(std::move(regions));
}

}  // namespace geodurbin
