#pragma once

// Exact Shapley values over small sets of Zernike coefficients.
//
// A coalition S of features keeps its coefficients from the sample point;
// every feature outside S is reset to the baseline spectrum (all zero by
// default, i.e. diffraction-limited).

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "optithreat/metrics.hpp"
#include "optithreat/stats.hpp"
#include "optithreat/zernike.hpp"

namespace optithreat {

inline constexpr int kMaxShapleyFeatures = 12;
inline constexpr int kNormalizingFeature = 4;
inline constexpr double kNormalizationFloor = 1e-12;

/// Bit i of a coalition mask selects features[i].
using CoalitionMask = std::uint32_t;

struct CoalitionGame {
  std::vector<int> features;
  std::function<double(CoalitionMask)> value;
};

/// Scalar merit of a spectrum. Must be a pure function and safe to call from
/// several threads.
using SpectrumMerit = std::function<double(const ZernikeSpectrum&)>;

/// Game whose coalition value is `merit` evaluated at `point` with the
/// non-members replaced by their `baseline` coefficients.
CoalitionGame spectrum_game(const ZernikeSpectrum& point, std::vector<int> features,
                            SpectrumMerit merit, const ZernikeSpectrum& baseline = {});

/// Spectrum seen by a coalition of a spectrum game.
ZernikeSpectrum coalition_spectrum(const ZernikeSpectrum& point, std::span<const int> features,
                                   CoalitionMask mask, const ZernikeSpectrum& baseline);

struct ShapleyReport {
  std::string merit;
  ZernikeSpectrum point;
  std::vector<int> features;
  std::vector<double> phi;
  /// phi / |phi(feature 4)|; empty when feature 4 is absent or its
  /// |phi| < kNormalizationFloor.
  std::vector<std::optional<double>> phi_normalized;
  double grand_value = 0.0;  // v(all features)
  double empty_value = 0.0;  // v({})
  std::size_t oracle_calls = 0;
};

/// Enumerates all 2^n coalitions once each. Throws DomainError for more than
/// kMaxShapleyFeatures or duplicate features, NumericError naming the
/// coalition when the oracle returns a non-finite value.
ShapleyReport shapley_exact(const CoalitionGame& game);

/// Fills phi_normalized from phi and the features.
void normalize_report(ShapleyReport& report);

struct GridPoint {
  std::size_t id = 0;
  ZernikeSpectrum spectrum;
};

struct FeatureSummary {
  int feature = 0;
  BoxStats phi;
  BoxStats abs_phi;
  std::optional<BoxStats> phi_normalized;  // over points where it is defined
};

struct GridFailure {
  std::size_t grid_point_id = 0;
  std::string message;
};

struct ShapleyDistribution {
  std::string merit;
  std::vector<int> features;
  std::vector<ShapleyReport> reports;  // ordered by grid point id
  std::vector<std::size_t> grid_point_ids;
  std::vector<GridFailure> failures;

  /// One entry per feature, empty when no grid point succeeded.
  std::vector<FeatureSummary> summarize() const;
};

struct NamedMerit {
  std::string label;
  SpectrumMerit merit;
};

/// Runs shapley_exact for every merit at every grid point with `threads`
/// workers (0 = hardware concurrency). Failing grid points are recorded and
/// skipped.
std::vector<ShapleyDistribution> shapley_distribution(std::span<const GridPoint> grid,
                                                      const std::vector<int>& features,
                                                      const std::vector<NamedMerit>& merits,
                                                      const ZernikeSpectrum& baseline = {},
                                                      unsigned threads = 0);

/// Thread-safe memo of OpticalReports keyed by the non-zero coefficients, so
/// coalition spectra shared between grid points and merits are simulated
/// once. Concurrent requests for the same spectrum wait for one evaluation.
class OpticalReportCache {
 public:
  explicit OpticalReportCache(const OpticalModel& model) : model_(model) {}

  OpticalReport report(const ZernikeSpectrum& spectrum);
  SpectrumMerit merit(Merit merit);
  std::size_t evaluations() const;

 private:
  struct Entry;
  const OpticalModel& model_;
  mutable std::mutex mutex_;
  std::map<std::map<int, double>, std::shared_ptr<Entry>> entries_;
  std::size_t evaluations_ = 0;
};

/// Long-format CSV: merit,feature,grid_point_id,w3,w4,w5,phi,phi_normalized.
/// Undefined normalized values are left empty.
void write_shapley_csv(const std::string& path, std::span<const ShapleyDistribution> results);

}  // namespace optithreat
