#pragma once

// Order statistics shared by the Shapley summaries and the sweep envelopes.

#include <cstddef>
#include <span>

namespace optithreat {

/// Linearly interpolated quantile (the "type 7" definition). Throws
/// DomainError on empty input or q outside [0, 1].
double quantile(std::span<const double> values, double q);

struct BoxStats {
  std::size_t count = 0;
  double min = 0.0;
  double q1 = 0.0;
  double median = 0.0;
  double q3 = 0.0;
  double max = 0.0;
};

BoxStats box_stats(std::span<const double> values);

}  // namespace optithreat
