#include "geodurbin/autocorr.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "geodurbin/error.hpp"
#include "geodurbin/rng.hpp"
#include "geodurbin/stats.hpp"

namespace geodurbin {

namespace {

void check_length(std::span<const double> y, const SpatialWeights& w) {
  if (y.size() != w.n()) {
    throw Error(ErrorCode::DimensionMismatch, "y",
                "length " + std::to_string(y.size()) + " vs n = " + std::to_string(w.n()));
  }
}

void check_inference(std::size_t nsim) {
  if (nsim < kMinSimulations) {
    throw Error(ErrorCode::TooFewSimulations, std::to_string(nsim),
                "nsim must be at least " + std::to_string(kMinSimulations));
  }
}

// Centred values and their sum of squares; throws ZeroVariance.
std::pair<std::vector<double>, double> deviations(std::span<const double> y) {
  auto d = stats::centered(y);
  const double ss = stats::sum_squares(d);
  if (stats::is_degenerate(y, ss)) throw Error(ErrorCode::ZeroVariance, "moran");
  return {std::move(d), ss};
}

// sum_i d_i (W d)_i
double cross_product(std::span<const double> d, const SpatialWeights& w) {
  const auto rp = w.row_ptr();
  const auto ci = w.col_index();
  const auto v = w.values();
  double num = 0.0;
  for (std::size_t i = 0; i < w.n(); ++i) {
    double lag = 0.0;
    for (std::size_t e = rp[i]; e < rp[i + 1]; ++e) lag += v[e] * d[ci[e]];
    num += d[i] * lag;
  }
  return num;
}

double pseudo_p(std::size_t extreme, std::size_t nsim) {
  return static_cast<double>(1 + extreme) / static_cast<double>(1 + nsim);
}

}  // namespace

double global_moran(std::span<const double> y, const SpatialWeights& w) {
  check_length(y, w);
  const auto [d, ss] = deviations(y);
  return static_cast<double>(w.n()) / w.s0() * cross_product(d, w) / ss;
}

GlobalMoranResult global_moran_test(std::span<const double> y, const SpatialWeights& w,
                                    std::size_t nsim, std::uint64_t seed) {
  check_length(y, w);
  check_inference(nsim);
  const auto [d, ss] = deviations(y);
  const double scale = static_cast<double>(w.n()) / w.s0() / ss;

  GlobalMoranResult result;
  result.statistic = scale * cross_product(d, w);
  result.nsim = nsim;
  result.seed = seed;
  result.simulated.resize(nsim);

  std::vector<double> shuffled(d.size());
  for (std::size_t s = 0; s < nsim; ++s) {
    std::copy(d.begin(), d.end(), shuffled.begin());
    SplitMix64 rng(seed ^ static_cast<std::uint64_t>(s));
    fisher_yates(std::span<double>(shuffled), rng);
    result.simulated[s] = scale * cross_product(shuffled, w);
  }

  std::size_t extreme = 0;
  for (double v : result.simulated) extreme += v >= result.statistic ? 1 : 0;
  result.p_value = pseudo_p(extreme, nsim);

  result.sim_mean = stats::mean(result.simulated);
  double acc = 0.0;
  for (double v : result.simulated) acc += (v - result.sim_mean) * (v - result.sim_mean);
  result.sim_sd = std::sqrt(acc / static_cast<double>(nsim - 1));
  return result;
}

std::string_view to_string(LisaLabel label) noexcept {
  switch (label) {
    case LisaLabel::HH: return "HH";
    case LisaLabel::LL: return "LL";
    case LisaLabel::HL: return "HL";
    case LisaLabel::LH: return "LH";
    case LisaLabel::Insignificant: return "Insignificant";
  }
  return "Insignificant";
}

std::string_view to_string(LisaTail tail) noexcept {
  switch (tail) {
    case LisaTail::Greater: return "greater";
    case LisaTail::TwoSided: return "two-sided";
    case LisaTail::Directed: return "directed";
  }
  return "directed";
}

LisaTail parse_lisa_tail(std::string_view text) {
  if (text == "greater") return LisaTail::Greater;
  if (text == "two-sided") return LisaTail::TwoSided;
  if (text == "directed") return LisaTail::Directed;
  throw Error(ErrorCode::InvalidArgument, std::string(text),
              "lisa tail must be greater, two-sided or directed");
}

LisaLabel classify(double z, double z_lag, double p, double alpha) noexcept {
  if (!(p < alpha)) return LisaLabel::Insignificant;
  if (z > 0.0 && z_lag > 0.0) return LisaLabel::HH;
  if (z < 0.0 && z_lag < 0.0) return LisaLabel::LL;
  if (z > 0.0 && z_lag < 0.0) return LisaLabel::HL;
  if (z < 0.0 && z_lag > 0.0) return LisaLabel::LH;
  return LisaLabel::Insignificant;
}

std::vector<double> local_moran_statistics(std::span<const double> y,
                                           const SpatialWeights& w) {
  check_length(y, w);
  const auto [d, ss] = deviations(y);
  const double m2 = ss / static_cast<double>(y.size());
  const auto lag = spatial_lag(w, d);
  std::vector<double> out(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) out[i] = d[i] / m2 * lag[i];
  return out;
}

std::vector<double> benjamini_hochberg(std::span<const double> p) {
  const std::size_t n = p.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return p[a] < p[b]; });
  std::vector<double> adjusted(n);
  double running = 1.0;
  for (std::size_t r = n; r-- > 0;) {
    const double v = p[order[r]] * static_cast<double>(n) / static_cast<double>(r + 1);
    running = std::min(running, v);
    adjusted[order[r]] = std::min(1.0, running);
  }
  return adjusted;
}

LocalMoranResult local_moran(std::span<const double> y, const SpatialWeights& w,
                             const LocalMoranOptions& options) {
  check_length(y, w);
  check_inference(options.nsim);
  if (!(options.alpha > 0.0 && options.alpha < 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "alpha", "must lie in (0, 1)");
  }
  const std::size_t n = y.size();
  const auto [d, ss] = deviations(y);
  const double m2 = ss / static_cast<double>(n);
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));

  LocalMoranResult result;
  result.options = options;
  result.statistic.resize(n);
  result.p_value.resize(n);
  result.z.resize(n);
  for (std::size_t i = 0; i < n; ++i) result.z[i] = d[i] / sd;
  result.z_lag = spatial_lag(w, result.z);

  std::vector<std::size_t> pool;
  pool.reserve(n - 1);
  std::vector<std::size_t> swaps;
  for (std::size_t i = 0; i < n; ++i) {
    const auto nb = w.neighbors(i);
    const auto wt = w.row_weights(i);
    double lag = 0.0;
    for (std::size_t m = 0; m < nb.size(); ++m) lag += wt[m] * d[nb[m]];
    const double observed = d[i] / m2 * lag;
    result.statistic[i] = observed;

    pool.clear();
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i) pool.push_back(j);
    }
    const std::size_t draws = nb.size();
    swaps.resize(draws);
    std::size_t greater = 0, lesser = 0;
    for (std::size_t s = 0; s < options.nsim; ++s) {
      SplitMix64 rng(options.seed ^ ((static_cast<std::uint64_t>(i) + 1) << 32) ^
                     static_cast<std::uint64_t>(s));
      double sim_lag = 0.0;
      for (std::size_t t = 0; t < draws; ++t) {
        const auto j = t + static_cast<std::size_t>(rng.below(pool.size() - t));
        swaps[t] = j;
        std::swap(pool[t], pool[j]);
        sim_lag += wt[t] * d[pool[t]];
      }
      for (std::size_t t = draws; t-- > 0;) std::swap(pool[t], pool[swaps[t]]);
      const double simulated = d[i] / m2 * sim_lag;
      greater += simulated >= observed ? 1 : 0;
      lesser += simulated <= observed ? 1 : 0;
    }

    const double p_greater = pseudo_p(greater, options.nsim);
    const double p_lesser = pseudo_p(lesser, options.nsim);
    switch (options.tail) {
      case LisaTail::Greater:
        result.p_value[i] = p_greater;
        break;
      case LisaTail::TwoSided:
        result.p_value[i] = std::min(1.0, 2.0 * std::min(p_greater, p_lesser));
        break;
      case LisaTail::Directed:
        result.p_value[i] = observed >= 0.0 ? p_greater : p_lesser;
        break;
    }
  }

  if (options.fdr) result.p_value = benjamini_hochberg(result.p_value);
  result.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    result.labels[i] = classify(result.z[i], result.z_lag[i], result.p_value[i], options.alpha);
  }
  return result;
}

}  // namespace geodurbin
