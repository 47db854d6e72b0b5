#include "optithreat/stats.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "optithreat/common.hpp"

namespace optithreat {
namespace {

double sorted_quantile(const std::vector<double>& s, double q) {
  const double pos = q * static_cast<double>(s.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, s.size() - 1);
  return s[lo] + (pos - static_cast<double>(lo)) * (s[hi] - s[lo]);
}

}  // namespace

double quantile(std::span<const double> values, double q) {
  if (values.empty()) throw DomainError("quantile of an empty sample");
  if (!(q >= 0.0 && q <= 1.0)) throw DomainError("quantile level must lie in [0, 1]");
  std::vector<double> s(values.begin(), values.end());
  std::sort(s.begin(), s.end());
  return sorted_quantile(s, q);
}

BoxStats box_stats(std::span<const double> values) {
  if (values.empty()) throw DomainError("box statistics of an empty sample");
  std::vector<double> s(values.begin(), values.end());
  std::sort(s.begin(), s.end());
  return {s.size(), s.front(), sorted_quantile(s, 0.25), sorted_quantile(s, 0.5),
          sorted_quantile(s, 0.75), s.back()};
}

}  // namespace optithreat
