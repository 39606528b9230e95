#pragma once

#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "geodurbin/ingest.hpp"

namespace geodurbin {

// Pearson correlations; throws ZeroVariance(name) for a constant column and
// TooFewObservations when n < 3.
Eigen::MatrixXd correlation_matrix(std::span<const Column> columns);

// Correlation-matrix PCA.
struct PcaResult {
  std::vector<std::string> variables;
  Eigen::MatrixXd loadings;      // p x p, column j = component j
  Eigen::VectorXd eigenvalues;   // non-increasing, clamped at 0
  Eigen::VectorXd explained;     // eigenvalue / p
  Eigen::MatrixXd scores;        // n x p, z-scored data times loadings
  Eigen::MatrixXd correlation;

  std::vector<double> component_scores(std::size_t j) const;
};

// Each loading column is oriented so its largest-magnitude entry (first one
// on ties) is positive.
PcaResult pca_fit(std::span<const Column> columns);

}  // namespace geodurbin
