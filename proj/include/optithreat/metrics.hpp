#pragma once

// Optical merit functions: refractive power, MTF at half-Nyquist, Strehl
// ratio (MTF-area form) and optical informative gain (squared-MTF form).
// Per-axis metrics use one-dimensional central slices of the 2D MTF.

#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "optithreat/common.hpp"
#include "optithreat/optics.hpp"
#include "optithreat/zernike.hpp"

namespace optithreat {

/// um / mm^2 -> 1/m. 1e-6 m / (1e-3 m)^2 = 1 m^-1.
inline constexpr double kDioptresPerMicronPerSquareMm = 1.0;

struct RefractivePowerField {
  Axis axis = Axis::Horizontal;
  Array2D<double> dioptres;            // zero outside the eroded interior
  Array2D<std::uint8_t> interior;      // pupil eroded by kRefractiveEdgeErosion samples
  double max_abs_dioptres = 0.0;
};

inline constexpr int kRefractiveEdgeErosion = 2;
inline constexpr int kMinRefractiveGrid = 128;

/// Second derivative of W along `axis` by central differences on the
/// physical grid, in dioptres.
RefractivePowerField refractive_power(const WavefrontMap& map, Axis axis);

/// Trapezoid integral of a sampled curve.
double trapezoid(std::span<const double> x, std::span<const double> y);

/// Ratio of MTF areas over [0, Nyquist].
double strehl_ratio(const MtfCurve& aberrated, const MtfCurve& reference);

/// Ratio of squared-MTF areas over [0, Nyquist].
double oig(const MtfCurve& aberrated, const MtfCurve& reference);

/// Linear interpolation at 0.25 cycles/pixel.
double mtf_at_half_nyquist(const MtfCurve& curve);

/// Ratio of the MTF volumes over the full 2D frequency plane, restricted to
/// the sensor Nyquist square. Unlike the per-axis slices this form equals the
/// on-axis peak ratio whenever the OTF is non-negative.
double strehl_ratio_2d(const Psf& aberrated, const Psf& reference);

/// |h_aberrated(0)|^2 / |h_reference(0)|^2 for unit-energy PSFs.
double strehl_peak_ratio(const Psf& aberrated, const Psf& reference);

/// Spatial-domain counterpart of the unrestricted OIG along one axis:
/// sum LSF_aberrated^2 / sum LSF_reference^2.
double oig_spatial(const Psf& aberrated, const Psf& reference, Axis axis);

struct OpticalReport {
  ZernikeSpectrum spectrum;
  double refractive_power_max_x = 0.0;  // dioptres
  double refractive_power_max_y = 0.0;
  double mtf_half_nyquist_x = 0.0;
  double mtf_half_nyquist_y = 0.0;
  double strehl_x = 0.0;
  double strehl_y = 0.0;
  double oig_x = 0.0;
  double oig_y = 0.0;
};

/// Scalar merit functions used for sensitivity analysis. Strehl, OIG and
/// MTF@half-Nyquist average the two axes; refractive power takes the
/// maximum absolute value over both axes.
enum class Merit { RefractivePower, MtfHalfNyquist, Strehl, Oig };

std::string to_string(Merit merit);
Merit merit_from_string(const std::string& name);
double merit_value(const OpticalReport& report, Merit merit);

/// Evaluates OpticalReports for one optical configuration. The
/// diffraction-limited reference curves are computed once on construction.
class OpticalModel {
 public:
  explicit OpticalModel(OpticalConfig config);

  const OpticalConfig& config() const noexcept { return config_; }
  const MtfCurve& reference_mtf(Axis axis) const {
    return axis == Axis::Horizontal ? reference_x_ : reference_y_;
  }
  const Psf& reference_psf() const noexcept { return reference_psf_; }

  OpticalReport evaluate(const ZernikeSpectrum& spectrum) const;
  /// Same, reusing an already simulated PSF and wavefront for the spectrum.
  OpticalReport evaluate(const ZernikeSpectrum& spectrum, const WavefrontMap& map,
                         const Psf& psf) const;

 private:
  OpticalConfig config_;
  Psf reference_psf_;
  MtfCurve reference_x_;
  MtfCurve reference_y_;
};

}  // namespace optithreat
