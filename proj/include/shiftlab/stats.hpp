#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "shiftlab/errors.hpp"

namespace shiftlab {

// Percentile with linear interpolation between order statistics:
// h = (n-1) * p/100, result = x[floor(h)] + frac(h) * (x[floor(h)+1] - x[floor(h)]).
// Single definition shared by quintile fitting, bootstrap CIs, and alert
// thresholds, so all three agree bit-for-bit.
inline double percentile_linear(std::vector<double> values, double pct) {
  if (values.empty()) throw UndefinedMetricError("percentile of empty set");
  std::sort(values.begin(), values.end());
  if (values.size() == 1) return values[0];
  double h = (static_cast<double>(values.size()) - 1.0) * pct / 100.0;
  h = std::clamp(h, 0.0, static_cast<double>(values.size()) - 1.0);
  std::size_t lo = static_cast<std::size_t>(h);
  if (lo + 1 >= values.size()) return values.back();
  double frac = h - static_cast<double>(lo);
  return values[lo] + frac * (values[lo + 1] - values[lo]);
}

inline double mean_of(std::span<const double> v) {
  double s = 0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

struct LinearFit {
  std::optional<double> r;          // Pearson correlation
  std::optional<double> slope;      // least-squares y = a + b x
  std::optional<double> intercept;
};

// Pearson r and least-squares line of y on x. Undefined pieces (n < 2 or a
// zero-variance axis) come back as nullopt markers rather than NaN.
inline LinearFit linear_fit(std::span<const double> x, std::span<const double> y) {
  LinearFit out;
  std::size_t n = std::min(x.size(), y.size());
  if (n < 2) return out;
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxx = 0, syy = 0, sxy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (sxx > 0) {
    out.slope = sxy / sxx;
    out.intercept = my - *out.slope * mx;
  }
  if (sxx > 0 && syy > 0) out.r = sxy / std::sqrt(sxx * syy);
  return out;
}

// Two-sided normal tail probability: P(|Z| >= |z|) = erfc(|z| / sqrt(2)).
inline double normal_two_sided_p(double z) {
  return std::erfc(std::fabs(z) / 1.4142135623730950488016887242097);
}

// Standard normal CDF (used by test oracles for analytic AUROC).
inline double normal_cdf(double z) {
  return 0.5 * std::erfc(-z / 1.4142135623730950488016887242097);
}

inline double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace shiftlab
