#include "geodurbin/pca.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "geodurbin/error.hpp"
#include "geodurbin/stats.hpp"

namespace geodurbin {

namespace {

// Columns scaled to mean 0 and sample variance 1.
Eigen::MatrixXd standardized(std::span<const Column> columns) {
  if (columns.empty()) throw Error(ErrorCode::InvalidArgument, "columns", "no columns");
  const std::size_t n = columns.front().values.size();
  if (n < 3) throw Error(ErrorCode::TooFewObservations, std::to_string(n));
  Eigen::MatrixXd z(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(columns.size()));
  for (std::size_t j = 0; j < columns.size(); ++j) {
    const auto& c = columns[j];
    if (c.values.size() != n) throw Error(ErrorCode::DimensionMismatch, c.name);
    const auto d = stats::centered(c.values);
    const double ss = stats::sum_squares(d);
    if (stats::is_degenerate(c.values, ss)) throw Error(ErrorCode::ZeroVariance, c.name);
    const double sd = std::sqrt(ss / static_cast<double>(n - 1));
    for (std::size_t i = 0; i < n; ++i) {
      z(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = d[i] / sd;
    }
  }
  return z;
}

Eigen::MatrixXd correlation_of(const Eigen::MatrixXd& z) {
  Eigen::MatrixXd r = z.transpose() * z / static_cast<double>(z.rows() - 1);
  r = 0.5 * (r + r.transpose());
  r.diagonal().setOnes();
  return r;
}

}  // namespace

Eigen::MatrixXd correlation_matrix(std::span<const Column> columns) {
  return correlation_of(standardized(columns));
}

std::vector<double> PcaResult::component_scores(std::size_t j) const {
  const auto col = scores.col(static_cast<Eigen::Index>(j));
  return {col.data(), col.data() + col.size()};
}

PcaResult pca_fit(std::span<const Column> columns) {
  const Eigen::MatrixXd z = standardized(columns);
  PcaResult out;
  for (const auto& c : columns) out.variables.push_back(c.name);
  out.correlation = correlation_of(z);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(out.correlation);
  if (eig.info() != Eigen::Success) {
    throw Error(ErrorCode::NumericalFailure, "pca", "eigen decomposition failed");
  }
  const auto p = out.correlation.rows();
  // Eigen returns ascending eigenvalues.
  out.eigenvalues.resize(p);
  out.loadings.resize(p, p);
  for (Eigen::Index j = 0; j < p; ++j) {
    const Eigen::Index src = p - 1 - j;
    out.eigenvalues[j] = std::max(0.0, eig.eigenvalues()[src]);
    Eigen::VectorXd v = eig.eigenvectors().col(src);
    Eigen::Index arg = 0;
    for (Eigen::Index i = 1; i < p; ++i) {
      if (std::abs(v[i]) > std::abs(v[arg])) arg = i;
    }
    if (v[arg] < 0.0) v = -v;
    out.loadings.col(j) = v;
  }
  out.explained = out.eigenvalues / static_cast<double>(p);
  out.scores = z * out.loadings;
  return out;
}

}  // namespace geodurbin
