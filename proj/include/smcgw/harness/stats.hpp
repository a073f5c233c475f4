#pragma once

#include <cstddef>
#include <vector>

namespace smcgw::harness {

/// Midpoint median. Empty input gives 0.
double median(std::vector<double> xs);
/// Linear-interpolated quantile, q in [0, 1]. Empty input gives 0.
double quantile(std::vector<double> xs, double q);
double maximum(const std::vector<double>& xs);

struct LinearFit {
  double slope = 0;
  double intercept = 0;
  double r_squared = 0;
};

/// Ordinary least squares y = slope * x + intercept.
LinearFit fit_line(const std::vector<double>& xs, const std::vector<double>& ys);

struct SignTest {
  std::size_t positive = 0;
  std::size_t negative = 0;
  std::size_t ties = 0;
  /// One-sided: probability of at least `positive` successes out of
  /// positive + negative fair coin flips.
  double p_value = 1;
};

/// Paired sign test of a[i] > b[i]; ties are dropped.
SignTest sign_test(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace smcgw::harness
