#include "geodurbin/sdm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <set>

#include <boost/math/distributions/students_t.hpp>

#include "geodurbin/autocorr.hpp"
#include "geodurbin/error.hpp"
#include "geodurbin/stats.hpp"

namespace geodurbin {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;  // log(2 pi)
// Residual variance this far below the outcome variance is treated as an
// exact fit; the likelihood is unbounded there.
constexpr double kExactFitRatio = 1e-22;
constexpr double kRankThreshold = 1e-10;

Eigen::VectorXd to_vector(std::span<const double> y) {
  return Eigen::Map<const Eigen::VectorXd>(y.data(), static_cast<Eigen::Index>(y.size()));
}

double gaussian_loglik(std::size_t n, double sigma2) {
  const double dn = static_cast<double>(n);
  return -0.5 * dn * (kLog2Pi + std::log(sigma2) + 1.0);
}

double normal_two_sided(double estimate, double se) {
  const double p = std::erfc(std::abs(estimate / se) / std::numbers::sqrt2);
  return std::isnan(p) ? 1.0 : p;
}

// Throws RankDeficient listing the columns a pivoted QR could not use.
Eigen::ColPivHouseholderQR<Eigen::MatrixXd> checked_qr(const DesignMatrix& design) {
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design.z);
  qr.setThreshold(kRankThreshold);
  const auto rank = static_cast<std::size_t>(qr.rank());
  if (rank < design.cols()) {
    std::vector<std::size_t> dropped;
    const auto& perm = qr.colsPermutation().indices();
    for (auto j = static_cast<Eigen::Index>(rank); j < perm.size(); ++j) {
      dropped.push_back(static_cast<std::size_t>(perm[j]));
    }
    std::sort(dropped.begin(), dropped.end());
    std::string names;
    for (auto j : dropped) {
      if (!names.empty()) names += ",";
      names += design.names[j];
    }
    throw Error(ErrorCode::RankDeficient, names,
                "design has rank " + std::to_string(rank) + " of " +
                    std::to_string(design.cols()));
  }
  return qr;
}

void check_outcome(std::span<const double> y, const DesignMatrix& design) {
  if (y.size() != design.rows()) {
    throw Error(ErrorCode::DimensionMismatch, "y",
                std::to_string(y.size()) + " values for " + std::to_string(design.rows()) +
                    " design rows");
  }
}

}  // namespace

DesignMatrix build_design(std::span<const Column> covariates, const SpatialWeights& w,
                          bool durbin) {
  if (covariates.empty()) throw Error(ErrorCode::InvalidArgument, "X", "no covariates");
  const std::size_t n = w.n();
  const std::size_t p = covariates.size();
  DesignMatrix design;
  design.p = p;
  design.durbin = durbin;
  const auto cols = static_cast<Eigen::Index>(1 + (durbin ? 2 : 1) * p);
  design.z.resize(static_cast<Eigen::Index>(n), cols);
  design.z.col(0).setOnes();
  design.names.emplace_back(kInterceptName);

  std::set<std::string> seen{std::string(kInterceptName)};
  for (std::size_t j = 0; j < p; ++j) {
    const auto& c = covariates[j];
    if (c.values.size() != n) throw Error(ErrorCode::DimensionMismatch, c.name);
    if (!seen.insert(c.name).second) throw Error(ErrorCode::NameClash, c.name);
    design.z.col(static_cast<Eigen::Index>(1 + j)) = to_vector(c.values);
    design.names.push_back(c.name);
  }
  if (durbin) {
    for (std::size_t j = 0; j < p; ++j) {
      const auto& c = covariates[j];
      std::string name = std::string(kLagPrefix) + c.name;
      if (!seen.insert(name).second) throw Error(ErrorCode::NameClash, name);
      design.z.col(static_cast<Eigen::Index>(1 + p + j)) = to_vector(spatial_lag(w, c.values));
      design.names.push_back(std::move(name));
    }
  }
  return design;
}

LogDetSpatialFilter::LogDetSpatialFilter(const SpatialWeights& w, Method method)
    : method_(method) {
  if (method_ == Method::Auto) {
    method_ = w.n() <= kEigenLimit ? Method::Eigenvalues : Method::LU;
  }
  if (method_ == Method::LU) {
    w_ = w.dense();
    return;
  }
  Eigen::EigenSolver<Eigen::MatrixXd> solver(w.dense(), /*computeEigenvectors=*/false);
  if (solver.info() != Eigen::Success) {
    throw Error(ErrorCode::NumericalFailure, "eigenvalues", "eigen solver did not converge");
  }
  const auto& ev = solver.eigenvalues();
  eigenvalues_.assign(ev.data(), ev.data() + ev.size());
}

double LogDetSpatialFilter::operator()(double rho) const {
  if (method_ == Method::LU) {
    const auto n = w_.rows();
    Eigen::MatrixXd a = Eigen::MatrixXd::Identity(n, n) - rho * w_;
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(a);
    const auto& m = lu.matrixLU();
    double sign = lu.permutationP().determinant();
    double log_abs = 0.0;
    const double tiny = 1e-12 * std::max(1.0, a.cwiseAbs().maxCoeff());
    for (Eigen::Index i = 0; i < n; ++i) {
      const double u = m(i, i);
      if (std::abs(u) <= tiny) throw Error(ErrorCode::SingularFilter, "rho=" + std::to_string(rho));
      if (u < 0.0) sign = -sign;
      log_abs += std::log(std::abs(u));
    }
    if (sign <= 0.0) throw Error(ErrorCode::SingularFilter, "rho=" + std::to_string(rho));
    return log_abs;
  }
  // Complex pairs contribute |1 - rho l|^2 > 0; only real eigenvalues can
  // flip the sign of the determinant.
  double sum = 0.0;
  int negative = 0;
  for (const auto& l : eigenvalues_) {
    const std::complex<double> f = 1.0 - rho * l;
    const double mag2 = std::norm(f);
    if (!(std::sqrt(mag2) > 1e-12 * (1.0 + std::abs(rho * l)))) {
      throw Error(ErrorCode::SingularFilter, "rho=" + std::to_string(rho));
    }
    if (l.imag() == 0.0 && f.real() < 0.0) ++negative;
    sum += 0.5 * std::log(mag2);
  }
  if (negative % 2 != 0) throw Error(ErrorCode::SingularFilter, "rho=" + std::to_string(rho));
  return sum;
}

double LogDetSpatialFilter::difference(double rho, double step) const {
  const double to = (*this)(rho + step);
  if (method_ == Method::LU) return to - (*this)(rho);
  // log|1 - (rho + h) l| - log|1 - rho l| = log|1 - q|, q = h l / (1 - rho l)
  double sum = 0.0;
  for (const auto& l : eigenvalues_) {
    const std::complex<double> q = step * l / (1.0 - rho * l);
    sum += 0.5 * std::log1p(-2.0 * q.real() + std::norm(q));
  }
  return sum;
}

double log_det_spatial_filter(const SpatialWeights& w, double rho) {
  return LogDetSpatialFilter(w, LogDetSpatialFilter::Method::Eigenvalues)(rho);
}

double log_det_lu(const SpatialWeights& w, double rho) {
  return LogDetSpatialFilter(w, LogDetSpatialFilter::Method::LU)(rho);
}

OlsFit fit_ols(std::span<const double> y, const DesignMatrix& design) {
  check_outcome(y, design);
  const std::size_t n = design.rows();
  const std::size_t cols = design.cols();
  if (n <= cols) {
    throw Error(ErrorCode::TooFewObservations, std::to_string(n),
                "need more observations than the " + std::to_string(cols) + " design columns");
  }
  const auto qr = checked_qr(design);
  const Eigen::VectorXd yv = to_vector(y);

  OlsFit fit;
  fit.names = design.names;
  fit.n = n;
  fit.coefficients = qr.solve(yv);
  fit.residuals = yv - design.z * fit.coefficients;
  const double rss = fit.residuals.squaredNorm();
  fit.sigma2 = rss / static_cast<double>(n);
  fit.loglik = gaussian_loglik(n, fit.sigma2);
  fit.aic = 2.0 * static_cast<double>(fit.parameters()) - 2.0 * fit.loglik;

  const double df = static_cast<double>(n - cols);
  const double s2 = rss / df;
  const Eigen::MatrixXd xtx = design.z.transpose() * design.z;
  const Eigen::MatrixXd xtx_inv =
      xtx.ldlt().solve(Eigen::MatrixXd::Identity(xtx.rows(), xtx.cols()));
  fit.se = (s2 * xtx_inv.diagonal()).cwiseMax(0.0).cwiseSqrt();
  fit.p_value.resize(fit.coefficients.size());
  const boost::math::students_t dist(df);
  for (Eigen::Index j = 0; j < fit.coefficients.size(); ++j) {
    const double t = fit.coefficients[j] / fit.se[j];
    if (std::isnan(t)) {
      fit.p_value[j] = 1.0;
    } else if (std::isinf(t)) {
      fit.p_value[j] = 0.0;
    } else {
      fit.p_value[j] = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
    }
  }
  return fit;
}

ConcentratedLikelihood::ConcentratedLikelihood(std::span<const double> y,
                                               const DesignMatrix& design,
                                               const SpatialWeights& w,
                                               const LogDetSpatialFilter& log_det)
    : design_(&design), log_det_(&log_det), y_(to_vector(y)) {
  check_outcome(y, design);
  if (w.n() != design.rows()) throw Error(ErrorCode::DimensionMismatch, "W");
  wy_ = to_vector(spatial_lag(w, y));
  const auto qr = checked_qr(design);
  delta0_ = qr.solve(y_);
  delta_l_ = qr.solve(wy_);
  e0_ = y_ - design.z * delta0_;
  el_ = wy_ - design.z * delta_l_;
}

double ConcentratedLikelihood::sigma2(double rho) const {
  return (e0_ - rho * el_).squaredNorm() / static_cast<double>(n());
}

Eigen::VectorXd ConcentratedLikelihood::coefficients(double rho) const {
  return delta0_ - rho * delta_l_;
}

Eigen::VectorXd ConcentratedLikelihood::residuals(double rho) const {
  return e0_ - rho * el_;
}

double ConcentratedLikelihood::operator()(double rho) const {
  const double dn = static_cast<double>(n());
  return -0.5 * dn * (kLog2Pi + 1.0) - 0.5 * dn * std::log(sigma2(rho)) + (*log_det_)(rho);
}

double ConcentratedLikelihood::full(double rho, const Eigen::VectorXd& delta,
                                    double log_sigma2) const {
  const double dn = static_cast<double>(n());
  const Eigen::VectorXd e = y_ - rho * wy_ - design_->z * delta;
  return -0.5 * dn * (kLog2Pi + log_sigma2) - 0.5 * e.squaredNorm() * std::exp(-log_sigma2) +
         (*log_det_)(rho);
}

double ConcentratedLikelihood::full_change(double rho, const Eigen::VectorXd& delta,
                                           double log_sigma2, double d_rho,
                                           const Eigen::VectorXd& d_delta,
                                           double d_log_sigma2) const {
  const double dn = static_cast<double>(n());
  const Eigen::VectorXd e = y_ - rho * wy_ - design_->z * delta;
  const Eigen::VectorXd u = -d_rho * wy_ - design_->z * d_delta;
  const double ss_change = e.squaredNorm() * std::expm1(-d_log_sigma2) +
                           (2.0 * e.dot(u) + u.squaredNorm()) * std::exp(-d_log_sigma2);
  return -0.5 * dn * d_log_sigma2 - 0.5 * std::exp(-log_sigma2) * ss_change +
         log_det_->difference(rho, d_rho);
}

Eigen::MatrixXd numerical_hessian(const ConcentratedLikelihood& likelihood, double rho,
                                  const Eigen::VectorXd& delta, double log_sigma2) {
  const auto cols = delta.size();
  const Eigen::Index m = cols + 2;
  Eigen::VectorXd x0(m);
  x0[0] = rho;
  x0.segment(1, cols) = delta;
  x0[m - 1] = log_sigma2;

  auto f = [&](const Eigen::VectorXd& x) {
    const Eigen::VectorXd d = x - x0;
    return likelihood.full_change(rho, delta, log_sigma2, d[0], d.segment(1, cols), d[m - 1]);
  };
  Eigen::VectorXd h(m);
  for (Eigen::Index i = 0; i < m; ++i) h[i] = 1e-5 * std::max(1.0, std::abs(x0[i]));

  const double f0 = 0.0;
  Eigen::MatrixXd hess(m, m);
  Eigen::VectorXd x = x0;
  for (Eigen::Index i = 0; i < m; ++i) {
    x[i] = x0[i] + h[i];
    const double fp = f(x);
    x[i] = x0[i] - h[i];
    const double fm = f(x);
    x[i] = x0[i];
    hess(i, i) = (fp - 2.0 * f0 + fm) / (h[i] * h[i]);
    for (Eigen::Index j = 0; j < i; ++j) {
      double acc = 0.0;
      for (int si : {1, -1}) {
        for (int sj : {1, -1}) {
          x[i] = x0[i] + si * h[i];
          x[j] = x0[j] + sj * h[j];
          acc += si * sj * f(x);
        }
      }
      x[i] = x0[i];
      x[j] = x0[j];
      hess(i, j) = hess(j, i) = acc / (4.0 * h[i] * h[j]);
    }
  }
  return hess;
}

Eigen::VectorXd SdmFit::theta() const {
  if (!durbin) return {};
  return coefficients.segment(static_cast<Eigen::Index>(1 + p), static_cast<Eigen::Index>(p));
}

Eigen::VectorXd SdmFit::theta_se() const {
  if (!durbin) return {};
  return se.segment(static_cast<Eigen::Index>(1 + p), static_cast<Eigen::Index>(p));
}

SdmFit fit_lag_model(std::span<const double> y, const DesignMatrix& design,
                     const SpatialWeights& w, const SdmOptions& options) {
  check_outcome(y, design);
  const std::size_t n = design.rows();
  if (w.n() != n) throw Error(ErrorCode::DimensionMismatch, "W");
  if (n <= design.cols() + 2) {
    throw Error(ErrorCode::TooFewObservations, std::to_string(n),
                "need n > " + std::to_string(design.cols() + 2));
  }
  if (!(options.rho_lower < options.rho_upper) || options.grid_points < 3 ||
      !(options.tolerance > 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "SdmOptions");
  }
  const auto centred = stats::centered(y);
  const double centred_ss = stats::sum_squares(centred);
  if (stats::is_degenerate(y, centred_ss)) throw Error(ErrorCode::ZeroVariance, "y");

  const OlsFit ols = fit_ols(y, design);
  std::optional<LogDetSpatialFilter> own_log_det;
  const LogDetSpatialFilter* log_det = options.log_det;
  if (!log_det) log_det = &own_log_det.emplace(w);
  const ConcentratedLikelihood likelihood(y, design, w, *log_det);

  SdmFit fit;
  fit.names = design.names;
  fit.p = design.p;
  fit.durbin = design.durbin;
  fit.n = n;
  fit.loglik_rho0 = ols.loglik;

  const double exact_threshold = kExactFitRatio * centred_ss / static_cast<double>(n);
  const auto& e0 = likelihood.ols_residuals();
  const auto& el = likelihood.lag_residuals();
  std::optional<double> exact_rho;
  if (ols.sigma2 <= exact_threshold) {
    exact_rho = 0.0;
  } else if (el.squaredNorm() > 0.0) {
    const double root = e0.dot(el) / el.squaredNorm();
    if (likelihood.sigma2(root) <= exact_threshold) {
      if (!(root > options.rho_lower && root < options.rho_upper)) {
        throw Error(ErrorCode::BoundaryRho, std::to_string(root), "exact fit outside interval");
      }
      exact_rho = root;
    }
  }

  if (exact_rho) {
    fit.convergence.exact_fit = true;
    fit.rho = *exact_rho;
    if (*exact_rho == 0.0) {
      fit.coefficients = ols.coefficients;
      fit.residuals = ols.residuals;
      fit.sigma2 = ols.sigma2;
      fit.loglik = ols.loglik;
    } else {
      fit.coefficients = likelihood.coefficients(fit.rho);
      fit.residuals = likelihood.residuals(fit.rho);
      fit.sigma2 = likelihood.sigma2(fit.rho);
      fit.loglik = likelihood(fit.rho);
    }
    fit.se = Eigen::VectorXd::Zero(fit.coefficients.size());
    fit.rho_se = 0.0;
  } else {
    auto evaluate = [&](double rho) {
      const double v = likelihood(rho);
      if (!std::isfinite(v)) {
        throw Error(ErrorCode::NumericalFailure, "rho=" + std::to_string(rho),
                    "non-finite likelihood");
      }
      return v;
    };

    const std::size_t g_points = options.grid_points;
    const double step = (options.rho_upper - options.rho_lower) / static_cast<double>(g_points - 1);
    std::size_t best_index = 0;
    double best_rho = options.rho_lower;
    double best_value = -std::numeric_limits<double>::infinity();
    for (std::size_t g = 0; g < g_points; ++g) {
      const double rho = g + 1 == g_points ? options.rho_upper
                                           : options.rho_lower + static_cast<double>(g) * step;
      const double v = evaluate(rho);
      if (v > best_value) {
        best_value = v;
        best_rho = rho;
        best_index = g;
      }
    }
    if (best_index == 0 || best_index + 1 == g_points) {
      throw Error(ErrorCode::BoundaryRho, std::to_string(best_rho),
                  "likelihood maximised at the edge of the search interval");
    }

    // Golden-section refinement inside the neighbouring grid cells.
    const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
    double a = best_rho - step, b = best_rho + step;
    double c = b - inv_phi * (b - a), d = a + inv_phi * (b - a);
    double fc = evaluate(c), fd = evaluate(d);
    auto track = [&](double rho, double v) {
      if (v > best_value) {
        best_value = v;
        best_rho = rho;
      }
    };
    track(c, fc);
    track(d, fd);
    std::size_t iterations = 0;
    while (b - a > options.tolerance) {
      if (fc > fd) {
        b = d;
        d = c;
        fd = fc;
        c = b - inv_phi * (b - a);
        fc = evaluate(c);
        track(c, fc);
      } else {
        a = c;
        c = d;
        fc = fd;
        d = a + inv_phi * (b - a);
        fd = evaluate(d);
        track(d, fd);
      }
      ++iterations;
    }
    fit.convergence.iterations = iterations;
    fit.convergence.bracket_width = b - a;
    if (best_rho - options.rho_lower <= 2.0 * options.tolerance ||
        options.rho_upper - best_rho <= 2.0 * options.tolerance) {
      throw Error(ErrorCode::BoundaryRho, std::to_string(best_rho));
    }

    fit.rho = best_rho;
    fit.coefficients = likelihood.coefficients(fit.rho);
    fit.residuals = likelihood.residuals(fit.rho);
    fit.sigma2 = likelihood.sigma2(fit.rho);
    fit.loglik = best_value;

    const Eigen::MatrixXd hess =
        numerical_hessian(likelihood, fit.rho, fit.coefficients, std::log(fit.sigma2));
    Eigen::MatrixXd info = -0.5 * (hess + hess.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(info);
    const auto& values = eig.eigenvalues();
    const double top = values.cwiseAbs().maxCoeff();
    Eigen::VectorXd inv(values.size());
    for (Eigen::Index i = 0; i < values.size(); ++i) {
      if (values[i] > 1e-12 * top) {
        inv[i] = 1.0 / values[i];
      } else {
        inv[i] = 0.0;
        fit.convergence.pseudo_inverse = true;
      }
    }
    const Eigen::MatrixXd cov = eig.eigenvectors() * inv.asDiagonal() * eig.eigenvectors().transpose();
    const auto cols = fit.coefficients.size();
    fit.rho_se = std::sqrt(std::max(0.0, cov(0, 0)));
    fit.se = cov.diagonal().segment(1, cols).cwiseMax(0.0).cwiseSqrt();
  }

  if (!std::isfinite(fit.loglik) && !fit.convergence.exact_fit) {
    throw Error(ErrorCode::NumericalFailure, "loglik");
  }
  fit.aic = 2.0 * static_cast<double>(fit.parameters()) - 2.0 * fit.loglik;
  fit.lr_statistic = std::max(0.0, 2.0 * (fit.loglik - fit.loglik_rho0));
  fit.rho_p_value = std::erfc(std::sqrt(0.5 * fit.lr_statistic));
  fit.p_value.resize(fit.coefficients.size());
  for (Eigen::Index j = 0; j < fit.coefficients.size(); ++j) {
    fit.p_value[j] = normal_two_sided(fit.coefficients[j], fit.se[j]);
  }
  return fit;
}

SdmFit fit_sdm(std::span<const double> y, std::span<const Column> covariates,
               const SpatialWeights& w, const SdmOptions& options) {
  return fit_lag_model(y, build_design(covariates, w, true), w, options);
}

SdmFit fit_sar(std::span<const double> y, std::span<const Column> covariates,
               const SpatialWeights& w, const SdmOptions& options) {
  return fit_lag_model(y, build_design(covariates, w, false), w, options);
}

LmTestResult lm_residual_test(const SdmFit& fit, const SpatialWeights& w, std::size_t nsim,
                              std::uint64_t seed) {
  const std::vector<double> e(fit.residuals.data(), fit.residuals.data() + fit.residuals.size());
  const auto test = global_moran_test(e, w, nsim, seed);
  LmTestResult out;
  out.statistic = test.statistic;
  out.p_value = test.p_value;
  out.nsim = nsim;
  return out;
}

std::string_view to_string(PreferredModel model) noexcept {
  return model == PreferredModel::Sdm ? "SDM" : "OLS";
}

ModelComparison model_compare(const SdmFit& sdm, const OlsFit& ols) {
  if (sdm.n != ols.n) {
    throw Error(ErrorCode::DimensionMismatch, "model_compare",
                std::to_string(sdm.n) + " vs " + std::to_string(ols.n) + " observations");
  }
  ModelComparison out;
  out.aic_sdm = sdm.aic;
  out.aic_ols = ols.aic;
  out.delta_aic = ols.aic - sdm.aic;
  out.lr_statistic = 2.0 * (sdm.loglik - ols.loglik);
  out.preferred = sdm.aic < ols.aic ? PreferredModel::Sdm : PreferredModel::Ols;
  return out;
}

}  // namespace geodurbin
