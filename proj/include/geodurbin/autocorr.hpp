#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "geodurbin/weights.hpp"

namespace geodurbin {

inline constexpr std::size_t kMinSimulations = 99;

// I = (n/S0) * sum_i sum_j w_ij d_i d_j / sum_i d_i^2, d = y - mean(y).
// Throws ZeroVariance for constant y, DimensionMismatch on length mismatch.
double global_moran(std::span<const double> y, const SpatialWeights& w);

struct GlobalMoranResult {
  double statistic = 0.0;
  std::size_t nsim = 0;
  double p_value = 1.0;
  double sim_mean = 0.0;
  double sim_sd = 0.0;
  std::uint64_t seed = 0;
  std::vector<double> simulated;  // indexed by simulation
};

// One-sided permutation test: p = (1 + #{I_sim >= I_obs}) / (1 + nsim).
// Simulation s shuffles y with SplitMix64(seed ^ s), so the result does not
// depend on the order in which simulations run.
GlobalMoranResult global_moran_test(std::span<const double> y, const SpatialWeights& w,
                                    std::size_t nsim, std::uint64_t seed);

enum class LisaTail {
  Greater,   // count I_sim >= I_obs
  TwoSided,  // twice the smaller one-sided p, capped at 1
  Directed,  // one-sided in the direction of the sign of I_obs
};
enum class LisaLabel { HH, LL, HL, LH, Insignificant };

std::string_view to_string(LisaLabel label) noexcept;
std::string_view to_string(LisaTail tail) noexcept;
LisaTail parse_lisa_tail(std::string_view text);

// Quadrant of (z, z_lag) when p < alpha; zero on either axis is Insignificant.
LisaLabel classify(double z, double z_lag, double p, double alpha) noexcept;

struct LocalMoranOptions {
  std::size_t nsim = 999;
  std::uint64_t seed = 0;
  double alpha = 0.05;
  LisaTail tail = LisaTail::Directed;
  bool fdr = false;  // Benjamini-Hochberg adjustment before labelling
};

struct LocalMoranResult {
  std::vector<double> statistic;  // I_i
  std::vector<double> p_value;    // FDR-adjusted when options.fdr is set
  std::vector<double> z;          // (y - mean) / sample sd
  std::vector<double> z_lag;      // W z
  std::vector<LisaLabel> labels;
  LocalMoranOptions options;
};

// I_i = (d_i / m2) * sum_j w_ij d_j with m2 = sum d^2 / n.
std::vector<double> local_moran_statistics(std::span<const double> y, const SpatialWeights& w);

// Conditional permutation: for region i, each simulation draws k of the
// other n-1 values without replacement from SplitMix64(seed ^ ((i+1) << 32 ^ s)).
LocalMoranResult local_moran(std::span<const double> y, const SpatialWeights& w,
                             const LocalMoranOptions& options);

std::vector<double> benjamini_hochberg(std::span<const double> p);

}  // namespace geodurbin
