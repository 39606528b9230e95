#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

namespace geodurbin::stats {

inline double mean(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += v;
  return s / static_cast<double>(x.size());
}

inline std::vector<double> centered(std::span<const double> x) {
  const double m = mean(x);
  std::vector<double> out(x.begin(), x.end());
  for (double& v : out) v -= m;
  return out;
}

inline double sum_squares(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += v * v;
  return s;
}

// Sample variance with the n-1 divisor.
inline double sample_variance(std::span<const double> x) {
  const auto d = centered(x);
  return sum_squares(d) / static_cast<double>(x.size() - 1);
}

// True when the centred sum of squares is indistinguishable from rounding
// noise, e.g. a constant column whose mean is not exactly representable.
inline bool is_degenerate(std::span<const double> x, double centred_ss) {
  double scale = 0.0;
  for (double v : x) scale = std::max(scale, std::abs(v));
  const double noise = 64.0 * std::numeric_limits<double>::epsilon() * scale;
  return !(centred_ss > static_cast<double>(x.size()) * noise * noise);
}

}  // namespace geodurbin::stats
