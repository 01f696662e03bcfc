#pragma once

#include <span>
#include <vector>

namespace qcube::stats {

/// Type-7 empirical quantile (linear interpolation between order statistics,
/// h = (n - 1) p) of an ascending-sorted sample. p is clamped to [0, 1].
double quantile_type7_sorted(std::span<const double> sorted, double p);

/// Same estimator on unsorted data; sorts a copy.
double quantile_type7(std::span<const double> values, double p);

double mean(std::span<const double> values);

/// Unbiased sample variance; 0 for fewer than two values.
double variance(std::span<const double> values);

}  // namespace qcube::stats
