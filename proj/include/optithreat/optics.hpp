#pragma once

// Fourier-optics imaging model: generalized pupil -> incoherent PSF -> MTF.
//
// Under the Fresnel approximation the coherent impulse response is the
// Fourier transform of the pupil evaluated at x_a = lambda * d_z * k. With a
// pupil grid of pitch 2R/N zero-padded to M = N * pad_factor samples, the
// observer-plane PSF pitch is lambda * d_z / (2R * pad_factor).

#include <complex>
#include <span>
#include <vector>

#include "optithreat/common.hpp"
#include "optithreat/zernike.hpp"

namespace optithreat {

struct OpticalConfig {
  double wavelength_um = kDefaultWavelengthUm;
  double pupil_radius_mm = 4.0;
  double propagation_distance_mm = 25.0;
  int grid_size = 512;
  int pad_factor = 2;
  /// Image-sensor pixel pitch. The default equals the PSF sample pitch at the
  /// other defaults, which puts the sensor Nyquist frequency exactly at the
  /// diffraction cutoff 2R / (lambda d_z).
  double pixel_pitch_um = 0.859375;

  void validate() const;

  int padded_size() const noexcept { return grid_size * pad_factor; }
  double psf_sample_pitch_um() const noexcept;
  /// Incoherent cutoff frequency 2R / (lambda d_z) in cycles per micrometre.
  double cutoff_frequency_per_um() const noexcept;

  friend bool operator==(const OpticalConfig&, const OpticalConfig&) = default;
};

/// Generalized pupil P(x) exp(2 pi i W(x) / lambda) on the wavefront grid.
class PupilFunction {
 public:
  /// Validates that every sample has magnitude 0 or 1 (within 1e-9).
  PupilFunction(Array2D<std::complex<double>> samples, OpticalConfig config);

  const Array2D<std::complex<double>>& samples() const noexcept { return samples_; }
  const OpticalConfig& config() const noexcept { return config_; }

 private:
  Array2D<std::complex<double>> samples_;
  OpticalConfig config_;
};

/// Incoherent PSF |h|^2 on an M x M observer-plane grid. The optical axis is
/// at sample (M/2, M/2).
struct Psf {
  Array2D<double> samples;
  double sample_pitch_um = 0.0;
  double pixel_pitch_um = 0.0;
  bool normalized = false;

  std::size_t size() const noexcept { return samples.rows(); }
  std::size_t center() const noexcept { return samples.rows() / 2; }
};

/// One-sided MTF slice. Frequencies are in cycles per sensor pixel, from 0
/// to Nyquist (0.5).
struct MtfCurve {
  std::vector<double> frequency;
  std::vector<double> value;
  Axis axis = Axis::Horizontal;
};

PupilFunction build_pupil(const WavefrontMap& map, const OpticalConfig& config);

Psf compute_psf(const PupilFunction& pupil);

/// Line spread function along `axis`: the PSF integrated over the other axis.
std::vector<double> line_spread_function(const Psf& psf, Axis axis);

/// |F[PSF]| along the central row (Horizontal) or column (Vertical) of the
/// 2D spectrum, normalized to 1 at zero frequency and restricted to
/// [0, Nyquist] of the sensor pitch.
MtfCurve compute_mtf(const Psf& psf, Axis axis);

/// Same slice without the Nyquist restriction: every non-negative DFT bin of
/// the PSF grid, in cycles per PSF sample.
MtfCurve compute_mtf_unrestricted(const Psf& psf, Axis axis);

/// Convenience: spectrum -> wavefront -> pupil -> PSF with config's grid.
Psf simulate_psf(const ZernikeSpectrum& spectrum, const OpticalConfig& config);

}  // namespace optithreat
