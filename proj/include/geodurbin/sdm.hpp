#pragma once

#include <complex>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "geodurbin/ingest.hpp"
#include "geodurbin/weights.hpp"

namespace geodurbin {

inline constexpr std::string_view kInterceptName = "(Intercept)";
inline constexpr std::string_view kLagPrefix = "lag.";

// Z = [1 | X | WX] (Durbin) or [1 | X] (spatial lag only).
struct DesignMatrix {
  Eigen::MatrixXd z;
  std::vector<std::string> names;
  std::size_t p = 0;  // covariates
  bool durbin = true;

  std::size_t rows() const noexcept { return static_cast<std::size_t>(z.rows()); }
  std::size_t cols() const noexcept { return static_cast<std::size_t>(z.cols()); }
};

// Throws NameClash on repeated names, InvalidArgument when no covariates.
DesignMatrix build_design(std::span<const Column> covariates, const SpatialWeights& w,
                          bool durbin = true);

// log|det(I - rho W)|, from the eigenvalues of W (computed once) or, above
// `kEigenLimit` regions or on request, from a dense LU factorization.
class LogDetSpatialFilter {
 public:
  enum class Method { Auto, Eigenvalues, LU };
  static constexpr std::size_t kEigenLimit = 2000;

  explicit LogDetSpatialFilter(const SpatialWeights& w, Method method = Method::Auto);

  // Throws SingularFilter when det(I - rho W) <= 0.
  double operator()(double rho) const;
  // log|det(I - (rho + step) W)| - log|det(I - rho W)| without cancellation
  // on the eigenvalue path.
  double difference(double rho, double step) const;

  Method method() const noexcept { return method_; }
  std::span<const std::complex<double>> eigenvalues() const noexcept { return eigenvalues_; }

 private:
  Method method_;
  Eigen::MatrixXd w_;  // kept only for the LU path
  std::vector<std::complex<double>> eigenvalues_;
};

double log_det_spatial_filter(const SpatialWeights& w, double rho);
// Direct route through a partial-pivot LU of I - rho W.
double log_det_lu(const SpatialWeights& w, double rho);

struct OlsFit {
  std::vector<std::string> names;
  Eigen::VectorXd coefficients;
  Eigen::VectorXd se;       // from s^2 = RSS / (n - cols)
  Eigen::VectorXd p_value;  // two-sided Student t, n - cols df
  Eigen::VectorXd residuals;
  double sigma2 = 0.0;      // RSS / n
  double loglik = 0.0;
  double aic = 0.0;
  std::size_t n = 0;

  std::size_t parameters() const noexcept {
    return static_cast<std::size_t>(coefficients.size()) + 1;
  }
};

// Throws RankDeficient naming the dependent columns, TooFewObservations
// when n <= cols, DimensionMismatch on length mismatch.
OlsFit fit_ols(std::span<const double> y, const DesignMatrix& design);

// Profile likelihood over rho with coefficients and variance concentrated
// out: L(rho) = -n/2 (log 2pi + 1) - n/2 log s2(rho) + log|det(I - rho W)|.
class ConcentratedLikelihood {
 public:
  ConcentratedLikelihood(std::span<const double> y, const DesignMatrix& design,
                         const SpatialWeights& w, const LogDetSpatialFilter& log_det);

  double operator()(double rho) const;
  double sigma2(double rho) const;
  Eigen::VectorXd coefficients(double rho) const;
  Eigen::VectorXd residuals(double rho) const;

  // Full log-likelihood at (rho, delta, log sigma^2).
  double full(double rho, const Eigen::VectorXd& delta, double log_sigma2) const;
  // full(x + d) - full(x), evaluated without subtracting two large totals.
  double full_change(double rho, const Eigen::VectorXd& delta, double log_sigma2, double d_rho,
                     const Eigen::VectorXd& d_delta, double d_log_sigma2) const;

  std::size_t n() const noexcept { return static_cast<std::size_t>(y_.size()); }
  const Eigen::VectorXd& ols_residuals() const noexcept { return e0_; }
  const Eigen::VectorXd& lag_residuals() const noexcept { return el_; }
  const Eigen::VectorXd& y() const noexcept { return y_; }
  const Eigen::VectorXd& wy() const noexcept { return wy_; }

 private:
  const DesignMatrix* design_;
  const LogDetSpatialFilter* log_det_;
  Eigen::VectorXd y_, wy_;
  Eigen::VectorXd delta0_, delta_l_;  // LS fits of y and Wy on Z
  Eigen::VectorXd e0_, el_;           // and their residuals
};

struct SdmOptions {
  double rho_lower = -0.999;
  double rho_upper = 0.999;
  double tolerance = 1e-8;        // final golden-section bracket width
  std::size_t grid_points = 201;  // coarse global search before refinement
  // Shared spectrum for repeated fits on the same W; built per fit if null.
  const LogDetSpatialFilter* log_det = nullptr;
};

struct ConvergenceInfo {
  std::size_t iterations = 0;
  double bracket_width = 0.0;
  bool pseudo_inverse = false;  // Hessian was near-singular
  bool exact_fit = false;       // residual variance at rounding level
};

struct SdmFit {
  std::vector<std::string> names;  // design column names
  std::size_t p = 0;
  bool durbin = true;
  std::size_t n = 0;

  double rho = 0.0;
  double rho_se = 0.0;
  double rho_p_value = 1.0;  // likelihood ratio against rho = 0
  double lr_statistic = 0.0;

  Eigen::VectorXd coefficients;  // design order: intercept, beta, theta
  Eigen::VectorXd se;
  Eigen::VectorXd p_value;       // asymptotic normal
  Eigen::VectorXd residuals;     // (I - rho W) y - Z delta
  double sigma2 = 0.0;
  double loglik = 0.0;
  double loglik_rho0 = 0.0;      // same design with rho fixed at 0
  double aic = 0.0;
  ConvergenceInfo convergence;

  std::size_t parameters() const noexcept {
    return static_cast<std::size_t>(coefficients.size()) + 2;
  }
  double intercept() const { return coefficients[0]; }
  Eigen::VectorXd beta() const { return coefficients.segment(1, static_cast<Eigen::Index>(p)); }
  Eigen::VectorXd theta() const;
  Eigen::VectorXd beta_se() const { return se.segment(1, static_cast<Eigen::Index>(p)); }
  Eigen::VectorXd theta_se() const;
};

// Maximum likelihood for y = rho W y + Z delta + e on an arbitrary design.
SdmFit fit_lag_model(std::span<const double> y, const DesignMatrix& design,
                     const SpatialWeights& w, const SdmOptions& options = {});
// Spatial Durbin model: Z = [1 | X | WX].
SdmFit fit_sdm(std::span<const double> y, std::span<const Column> covariates,
               const SpatialWeights& w, const SdmOptions& options = {});
// Spatial lag model: Z = [1 | X].
SdmFit fit_sar(std::span<const double> y, std::span<const Column> covariates,
               const SpatialWeights& w, const SdmOptions& options = {});

// Central-difference Hessian of `fit`'s full log-likelihood in
// (rho, delta, log sigma^2), step 1e-5 * max(1, |parameter|).
Eigen::MatrixXd numerical_hessian(const ConcentratedLikelihood& likelihood, double rho,
                                  const Eigen::VectorXd& delta, double log_sigma2);

struct LmTestResult {
  double statistic = 0.0;  // Moran's I of the residuals
  double p_value = 1.0;
  std::string method = "permutation-moran";
  std::size_t nsim = 0;
};

// Permutation Moran test on the fitted residuals.
LmTestResult lm_residual_test(const SdmFit& fit, const SpatialWeights& w, std::size_t nsim,
                              std::uint64_t seed);

enum class PreferredModel { Sdm, Ols };
std::string_view to_string(PreferredModel model) noexcept;

struct ModelComparison {
  double aic_sdm = 0.0;
  double aic_ols = 0.0;
  double delta_aic = 0.0;     // aic_ols - aic_sdm
  double lr_statistic = 0.0;  // 2 (LL_sdm - LL_ols)
  PreferredModel preferred = PreferredModel::Ols;
};

// Lower AIC wins; a tie goes to OLS, the simpler model.
ModelComparison model_compare(const SdmFit& sdm, const OlsFit& ols);

}  // namespace geodurbin
