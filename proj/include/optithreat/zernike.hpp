#pragma once

// Orthonormal Zernike polynomials on the unit disk and wavefront maps built
// from them.
//
// Indexing follows the OSA/ANSI single index j = (n(n+2) + m) / 2, starting
// at 0 for piston:
//
//   j  (n, m)   name                   Z_j(rho, phi)
//   0  (0,  0)  piston                 1
//   1  (1, -1)  tilt (y)               2 rho sin(phi)
//   2  (1,  1)  tilt (x)               2 rho cos(phi)
//   3  (2, -2)  oblique astigmatism    sqrt(6) rho^2 sin(2 phi)
//   4  (2,  0)  defocus                sqrt(3) (2 rho^2 - 1)
//   5  (2,  2)  vertical astigmatism   sqrt(6) rho^2 cos(2 phi)
//   6..9        trefoil / coma (n = 3)
//   10..14      n = 4 terms incl. primary spherical (j = 12)
//
// Every Z_j has unit RMS over the disk, so <Z_j, Z_k> = delta_jk when the
// inner product is normalized by the disk area.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "optithreat/common.hpp"

namespace optithreat {

inline constexpr int kMaxBasisIndex = 14;
inline constexpr double kDefaultWavelengthUm = 0.55;

struct ZernikeOrder {
  int radial;     // n
  int azimuthal;  // m, negative for sine terms
};

/// Maps an OSA/ANSI index to (n, m). Throws DomainError outside [0, kMaxBasisIndex].
ZernikeOrder zernike_order(int index);

/// Orthonormal Zernike polynomial Z_index(rho, phi). Throws DomainError for
/// rho outside [0, 1] or an unsupported index.
double evaluate_basis(int index, double rho, double phi);

/// sqrt((2 - delta_m0)(n + 1)): ratio between an orthonormal Zernike term and
/// its classical (peak-normalized) counterpart, as used when converting
/// ISO 24157 style measured coefficients.
double normalization_factor(int index);

class ZernikeSpectrum {
 public:
  ZernikeSpectrum() = default;
  explicit ZernikeSpectrum(double wavelength_um, std::map<int, double> coefficients = {});

  double wavelength_um() const noexcept { return wavelength_um_; }
  const std::map<int, double>& coefficients() const noexcept { return coefficients_; }
  bool empty() const noexcept { return coefficients_.empty(); }

  /// Coefficient in micrometres; 0 for indices not present.
  double coefficient(int index) const;
  void set(int index, double value_um);

  /// True when every coefficient is exactly zero (diffraction-limited).
  bool is_zero() const;

  /// RMS wavefront error over the disk excluding piston and tilt (j >= 3).
  double aberration_rms_um() const;

  ZernikeSpectrum scaled(double factor) const;
  friend ZernikeSpectrum operator+(const ZernikeSpectrum& a, const ZernikeSpectrum& b);
  friend bool operator==(const ZernikeSpectrum&, const ZernikeSpectrum&) = default;

  /// Converts classical (unnormalized) coefficients to the orthonormal basis.
  static ZernikeSpectrum from_unnormalized(const ZernikeSpectrum& classical);
  ZernikeSpectrum to_unnormalized() const;

  /// {"wavelength_um": 0.55, "coefficients": {"3": -0.2, "4": 0.5}}
  std::string to_json() const;
  static ZernikeSpectrum from_json(const std::string& text);
  static ZernikeSpectrum load(const std::string& path);
  void save(const std::string& path) const;

 private:
  void validate() const;

  double wavelength_um_ = kDefaultWavelengthUm;
  std::map<int, double> coefficients_;
};

/// Wavefront W sampled at the pixel centres of an N x N grid spanning
/// [-R, R]^2. Column index increases with x, row index increases with y.
/// A pixel belongs to the pupil when its centre satisfies rho <= 1; samples
/// outside the pupil are exactly zero.
class WavefrontMap {
 public:
  WavefrontMap(int grid_size, double pupil_radius_mm);

  int grid_size() const noexcept { return grid_size_; }
  double pupil_radius_mm() const noexcept { return pupil_radius_mm_; }
  double sample_pitch_mm() const noexcept { return 2.0 * pupil_radius_mm_ / grid_size_; }

  /// Physical coordinate of a pixel centre (mm).
  double coordinate_mm(int index) const noexcept {
    return -pupil_radius_mm_ + (index + 0.5) * sample_pitch_mm();
  }

  bool inside(int row, int col) const { return mask_(row, col) != 0; }
  const Array2D<std::uint8_t>& mask() const noexcept { return mask_; }
  std::size_t pupil_sample_count() const noexcept { return pupil_samples_; }

  double operator()(int row, int col) const { return values_(row, col); }
  const Array2D<double>& values() const noexcept { return values_; }

  /// Writes a sample inside the pupil. Throws DomainError for pixels outside.
  void set(int row, int col, double value_um);

 private:
  int grid_size_;
  double pupil_radius_mm_;
  Array2D<double> values_;
  Array2D<std::uint8_t> mask_;
  std::size_t pupil_samples_ = 0;
};

WavefrontMap synthesize_wavefront(const ZernikeSpectrum& spectrum, int grid_size,
                                  double pupil_radius_mm);

/// Projects the map onto Z_0..Z_max_index with the disk-area-normalized
/// discrete inner product.
ZernikeSpectrum decompose_wavefront(const WavefrontMap& map, int max_index,
                                    double wavelength_um = kDefaultWavelengthUm);

/// Discrete <Z_a, Z_b> over the pupil of an N x N grid, normalized by the
/// number of pupil samples.
double basis_inner_product(int a, int b, int grid_size);

}  // namespace optithreat
