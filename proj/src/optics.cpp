#include "optithreat/optics.hpp"

#include <fmt/format.h>

#include <cmath>
#include <numbers>
#include <numeric>

#include "optithreat/fft.hpp"

namespace optithreat {

std::string to_string(Axis axis) { return axis == Axis::Horizontal ? "horizontal" : "vertical"; }

void OpticalConfig::validate() const {
  auto positive = [](double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v)) {
      throw ConfigError(fmt::format("{} must be positive, got {}", name, v));
    }
  };
  positive(wavelength_um, "wavelength_um");
  positive(pupil_radius_mm, "pupil_radius_mm");
  positive(propagation_distance_mm, "propagation_distance_mm");
  positive(pixel_pitch_um, "pixel_pitch_um");
  if (grid_size < 64 || grid_size % 2 != 0) {
    throw ConfigError(fmt::format("grid_size must be even and >= 64, got {}", grid_size));
  }
  if (pad_factor < 1) throw ConfigError(fmt::format("pad_factor must be >= 1, got {}", pad_factor));
}

double OpticalConfig::psf_sample_pitch_um() const noexcept {
  // lambda [um] * d_z [mm] / (2R [mm] * pad) -> um
  return wavelength_um * propagation_distance_mm / (2.0 * pupil_radius_mm * pad_factor);
}

double OpticalConfig::cutoff_frequency_per_um() const noexcept {
  return 2.0 * pupil_radius_mm / (wavelength_um * propagation_distance_mm);
}

PupilFunction::PupilFunction(Array2D<std::complex<double>> samples, OpticalConfig config)
    : samples_(std::move(samples)), config_(config) {
  config_.validate();
  if (samples_.rows() != static_cast<std::size_t>(config_.grid_size) ||
      samples_.cols() != static_cast<std::size_t>(config_.grid_size)) {
    throw DimensionError(fmt::format("pupil is {}x{}, config expects {}x{}", samples_.rows(),
                                     samples_.cols(), config_.grid_size, config_.grid_size));
  }
  for (const auto& v : samples_.data()) {
    const double a = std::abs(v);
    if (a > 1e-9 && std::abs(a - 1.0) > 1e-9) {
      throw DomainError(fmt::format("pupil amplitude {} is neither 0 nor 1", a));
    }
  }
}

PupilFunction build_pupil(const WavefrontMap& map, const OpticalConfig& config) {
  config.validate();
  if (map.grid_size() != config.grid_size) {
    throw DimensionError(fmt::format("wavefront grid {} does not match config grid {}",
                                     map.grid_size(), config.grid_size));
  }
  if (std::abs(map.pupil_radius_mm() - config.pupil_radius_mm) >
      1e-12 * config.pupil_radius_mm) {
    throw DimensionError(fmt::format("wavefront pupil radius {} mm does not match config {} mm",
                                     map.pupil_radius_mm(), config.pupil_radius_mm));
  }
  const auto n = static_cast<std::size_t>(config.grid_size);
  Array2D<std::complex<double>> p(n, n, {0.0, 0.0});
  const double k = 2.0 * std::numbers::pi / config.wavelength_um;
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < n; ++c) {
      if (!map.inside(static_cast<int>(r), static_cast<int>(c))) continue;
      p(r, c) = std::polar(1.0, k * map(static_cast<int>(r), static_cast<int>(c)));
    }
  }
  return PupilFunction(std::move(p), config);
}

Psf compute_psf(const PupilFunction& pupil) {
  const auto& cfg = pupil.config();
  const auto n = static_cast<std::size_t>(cfg.grid_size);
  const auto m = static_cast<std::size_t>(cfg.padded_size());
  const std::size_t offset = (m - n) / 2;

  Array2D<fft::Complex> field(m, m, {0.0, 0.0});
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < n; ++c) field(r + offset, c + offset) = pupil.samples()(r, c);

  field = fft::ifftshift(field);
  fft::forward_2d(field);
  field = fft::fftshift(field);

  Psf psf;
  psf.samples = Array2D<double>(m, m);
  double total = 0.0;
  for (std::size_t i = 0; i < field.size(); ++i) {
    const double v = std::norm(field.data()[i]);
    psf.samples.data()[i] = v;
    total += v;
  }
  if (!(total > 0.0)) throw NumericError("pupil has no transmitting samples");
  for (auto& v : psf.samples.data()) v /= total;
  psf.sample_pitch_um = cfg.psf_sample_pitch_um();
  psf.pixel_pitch_um = cfg.pixel_pitch_um;
  psf.normalized = true;
  return psf;
}

std::vector<double> line_spread_function(const Psf& psf, Axis axis) {
  const auto m = psf.samples.rows();
  std::vector<double> lsf;
  if (axis == Axis::Horizontal) {
    lsf.assign(psf.samples.cols(), 0.0);
    for (std::size_t r = 0; r < m; ++r) {
      const auto row = psf.samples.row(r);
      for (std::size_t c = 0; c < row.size(); ++c) lsf[c] += row[c];
    }
  } else {
    lsf.assign(m, 0.0);
    for (std::size_t r = 0; r < m; ++r) {
      const auto row = psf.samples.row(r);
      lsf[r] = std::accumulate(row.begin(), row.end(), 0.0);
    }
  }
  return lsf;
}

namespace {

// |DFT| of the LSF over bins 0..M/2, normalized at DC. By the projection-slice
// theorem this is the central row/column of the 2D PSF spectrum.
std::vector<double> normalized_slice(const Psf& psf, Axis axis) {
  const auto lsf = line_spread_function(psf, axis);
  std::vector<double> shifted(lsf.size());
  const std::size_t m = lsf.size();
  for (std::size_t i = 0; i < m; ++i) shifted[i] = lsf[(i + m / 2) % m];
  const auto spectrum = fft::forward_1d_real(shifted);
  const double dc = std::abs(spectrum[0]);
  if (!(dc > 0.0)) throw NumericError("PSF has zero energy");
  std::vector<double> out(m / 2 + 1);
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = std::abs(spectrum[k]) / dc;
  out[0] = 1.0;
  return out;
}

}  // namespace

MtfCurve compute_mtf_unrestricted(const Psf& psf, Axis axis) {
  MtfCurve curve;
  curve.axis = axis;
  curve.value = normalized_slice(psf, axis);
  const double m = static_cast<double>(psf.samples.rows());
  curve.frequency.resize(curve.value.size());
  for (std::size_t k = 0; k < curve.frequency.size(); ++k) curve.frequency[k] = k / m;
  return curve;
}

MtfCurve compute_mtf(const Psf& psf, Axis axis) {
  if (!(psf.sample_pitch_um > 0.0) || !(psf.pixel_pitch_um > 0.0)) {
    throw DimensionError("PSF lacks sample or pixel pitch");
  }
  const auto slice = normalized_slice(psf, axis);
  const double m = static_cast<double>(psf.samples.rows());
  // cycles per PSF sample -> cycles per sensor pixel
  const double to_pixel = psf.pixel_pitch_um / psf.sample_pitch_um;
  constexpr double kNyquist = 0.5;

  MtfCurve curve;
  curve.axis = axis;
  std::size_t k = 0;
  for (; k < slice.size(); ++k) {
    const double f = k / m * to_pixel;
    if (f > kNyquist + 1e-12) break;
    curve.frequency.push_back(std::min(f, kNyquist));
    curve.value.push_back(slice[k]);
  }
  if (curve.frequency.back() < kNyquist) {
    if (k < slice.size()) {
      const double f0 = (k - 1) / m * to_pixel, f1 = k / m * to_pixel;
      const double t = (kNyquist - f0) / (f1 - f0);
      curve.value.push_back(slice[k - 1] + t * (slice[k] - slice[k - 1]));
    } else {
      // Past the last DFT bin: only valid when the MTF has already reached
      // zero, i.e. Nyquist lies beyond the diffraction cutoff.
      if (slice.back() > 1e-9) {
        throw DimensionError(
            "PSF grid too coarse to reach sensor Nyquist; increase pad_factor");
      }
      curve.value.push_back(0.0);
    }
    curve.frequency.push_back(kNyquist);
  }
  return curve;
}

Psf simulate_psf(const ZernikeSpectrum& spectrum, const OpticalConfig& config) {
  config.validate();
  const auto map = synthesize_wavefront(spectrum, config.grid_size, config.pupil_radius_mm);
  return compute_psf(build_pupil(map, config));
}

}  // namespace optithreat
