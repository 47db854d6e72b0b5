#include "optithreat/metrics.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>

#include "optithreat/fft.hpp"

namespace optithreat {

RefractivePowerField refractive_power(const WavefrontMap& map, Axis axis) {
  const int n = map.grid_size();
  if (n < kMinRefractiveGrid) {
    throw DimensionError(
        fmt::format("refractive power needs grid >= {}, got {}", kMinRefractiveGrid, n));
  }
  const auto un = static_cast<std::size_t>(n);
  RefractivePowerField field;
  field.axis = axis;
  field.dioptres = Array2D<double>(un, un, 0.0);
  field.interior = Array2D<std::uint8_t>(un, un, 0);

  const int e = kRefractiveEdgeErosion;
  auto eroded = [&](int r, int c) {
    for (int dr = -e; dr <= e; ++dr)
      for (int dc = -e; dc <= e; ++dc) {
        const int rr = r + dr, cc = c + dc;
        if (rr < 0 || cc < 0 || rr >= n || cc >= n || !map.inside(rr, cc)) return false;
      }
    return true;
  };

  const double h = map.sample_pitch_mm();
  const double scale = kDioptresPerMicronPerSquareMm / (h * h);
  double max_abs = 0.0;
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) {
      if (!map.inside(r, c) || !eroded(r, c)) continue;
      const double d = axis == Axis::Horizontal
                           ? (map(r, c + 1) - 2.0 * map(r, c) + map(r, c - 1)) * scale
                           : (map(r + 1, c) - 2.0 * map(r, c) + map(r - 1, c)) * scale;
      field.interior(r, c) = 1;
      field.dioptres(r, c) = d;
      max_abs = std::max(max_abs, std::abs(d));
    }
  }
  field.max_abs_dioptres = max_abs;
  return field;
}

double trapezoid(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw DimensionError("trapezoid: x and y differ in length");
  double s = 0.0;
  for (std::size_t i = 1; i < x.size(); ++i) s += 0.5 * (x[i] - x[i - 1]) * (y[i] + y[i - 1]);
  return s;
}

namespace {

void check_axes(const MtfCurve& a, const MtfCurve& b) {
  if (a.axis != b.axis) throw DimensionError("MTF curves are slices along different axes");
  if (a.frequency.size() != b.frequency.size() || a.value.size() != a.frequency.size() ||
      b.value.size() != b.frequency.size()) {
    throw DimensionError(fmt::format("MTF frequency axes differ in length ({} vs {})",
                                     a.frequency.size(), b.frequency.size()));
  }
  for (std::size_t i = 0; i < a.frequency.size(); ++i) {
    if (std::abs(a.frequency[i] - b.frequency[i]) > 1e-12) {
      throw DimensionError(fmt::format("MTF frequency axes differ at sample {}", i));
    }
  }
}

double area_ratio(const MtfCurve& aberrated, const MtfCurve& reference, bool squared) {
  check_axes(aberrated, reference);
  auto sq = [](const std::vector<double>& v) {
    std::vector<double> out(v.size());
    std::transform(v.begin(), v.end(), out.begin(), [](double x) { return x * x; });
    return out;
  };
  const auto ya = squared ? sq(aberrated.value) : aberrated.value;
  const auto yr = squared ? sq(reference.value) : reference.value;
  const double den = trapezoid(reference.frequency, yr);
  if (!(den > 0.0)) throw NumericError("reference MTF has zero area");
  return trapezoid(aberrated.frequency, ya) / den;
}

}  // namespace

double strehl_ratio(const MtfCurve& aberrated, const MtfCurve& reference) {
  return area_ratio(aberrated, reference, false);
}

double oig(const MtfCurve& aberrated, const MtfCurve& reference) {
  return area_ratio(aberrated, reference, true);
}

double mtf_at_half_nyquist(const MtfCurve& curve) {
  constexpr double kHalfNyquist = 0.25;
  const auto& f = curve.frequency;
  if (f.empty() || f.size() != curve.value.size()) throw DimensionError("empty MTF curve");
  if (kHalfNyquist <= f.front()) return curve.value.front();
  for (std::size_t i = 1; i < f.size(); ++i) {
    if (f[i] >= kHalfNyquist) {
      const double t = (kHalfNyquist - f[i - 1]) / (f[i] - f[i - 1]);
      return curve.value[i - 1] + t * (curve.value[i] - curve.value[i - 1]);
    }
  }
  return curve.value.back();
}

namespace {

double mtf_volume(const Psf& psf) {
  const auto m = psf.samples.rows();
  Array2D<fft::Complex> field(m, m);
  for (std::size_t i = 0; i < psf.samples.size(); ++i) field.data()[i] = psf.samples.data()[i];
  field = fft::ifftshift(field);
  fft::forward_2d(field);
  const double to_pixel = psf.pixel_pitch_um / psf.sample_pitch_um;
  const double dc = std::abs(field(0, 0));
  auto bin_frequency = [&](std::size_t k) {
    const double signed_k = k <= m / 2 ? double(k) : double(k) - double(m);
    return std::abs(signed_k) / double(m) * to_pixel;
  };
  double s = 0.0;
  for (std::size_t r = 0; r < m; ++r) {
    if (bin_frequency(r) > 0.5 + 1e-12) continue;
    for (std::size_t c = 0; c < m; ++c) {
      if (bin_frequency(c) > 0.5 + 1e-12) continue;
      s += std::abs(field(r, c));
    }
  }
  return s / dc;
}

}  // namespace

double strehl_ratio_2d(const Psf& aberrated, const Psf& reference) {
  if (aberrated.size() != reference.size()) throw DimensionError("PSF grids differ");
  return mtf_volume(aberrated) / mtf_volume(reference);
}

double strehl_peak_ratio(const Psf& aberrated, const Psf& reference) {
  if (aberrated.size() != reference.size()) throw DimensionError("PSF grids differ");
  const auto c = reference.center();
  return aberrated.samples(c, c) / reference.samples(c, c);
}

double oig_spatial(const Psf& aberrated, const Psf& reference, Axis axis) {
  if (aberrated.size() != reference.size()) throw DimensionError("PSF grids differ");
  auto energy = [axis](const Psf& p) {
    double s = 0.0;
    for (double v : line_spread_function(p, axis)) s += v * v;
    return s;
  };
  return energy(aberrated) / energy(reference);
}

std::string to_string(Merit merit) {
  switch (merit) {
    case Merit::RefractivePower: return "refractive_power";
    case Merit::MtfHalfNyquist: return "mtf_half_nyquist";
    case Merit::Strehl: return "strehl";
    case Merit::Oig: return "oig";
  }
  return "unknown";
}

Merit merit_from_string(const std::string& name) {
  if (name == "refractive_power" || name == "D") return Merit::RefractivePower;
  if (name == "mtf_half_nyquist" || name == "mtf_hn") return Merit::MtfHalfNyquist;
  if (name == "strehl" || name == "sr") return Merit::Strehl;
  if (name == "oig") return Merit::Oig;
  throw ConfigError(fmt::format(
      "unknown merit '{}' (expected refractive_power, mtf_half_nyquist, strehl or oig)", name));
}

double merit_value(const OpticalReport& r, Merit merit) {
  switch (merit) {
    case Merit::RefractivePower:
      return std::max(r.refractive_power_max_x, r.refractive_power_max_y);
    case Merit::MtfHalfNyquist: return 0.5 * (r.mtf_half_nyquist_x + r.mtf_half_nyquist_y);
    case Merit::Strehl: return 0.5 * (r.strehl_x + r.strehl_y);
    case Merit::Oig: return 0.5 * (r.oig_x + r.oig_y);
  }
  return 0.0;
}

OpticalModel::OpticalModel(OpticalConfig config) : config_(config) {
  config_.validate();
  reference_psf_ = simulate_psf(ZernikeSpectrum(config_.wavelength_um), config_);
  reference_x_ = compute_mtf(reference_psf_, Axis::Horizontal);
  reference_y_ = compute_mtf(reference_psf_, Axis::Vertical);
}

OpticalReport OpticalModel::evaluate(const ZernikeSpectrum& spectrum) const {
  const auto map = synthesize_wavefront(spectrum, config_.grid_size, config_.pupil_radius_mm);
  const auto psf = compute_psf(build_pupil(map, config_));
  return evaluate(spectrum, map, psf);
}

OpticalReport OpticalModel::evaluate(const ZernikeSpectrum& spectrum, const WavefrontMap& map,
                                     const Psf& psf) const {
  OpticalReport r;
  r.spectrum = spectrum;
  r.refractive_power_max_x = refractive_power(map, Axis::Horizontal).max_abs_dioptres;
  r.refractive_power_max_y = refractive_power(map, Axis::Vertical).max_abs_dioptres;
  const auto mx = compute_mtf(psf, Axis::Horizontal);
  const auto my = compute_mtf(psf, Axis::Vertical);
  r.mtf_half_nyquist_x = mtf_at_half_nyquist(mx);
  r.mtf_half_nyquist_y = mtf_at_half_nyquist(my);
  r.strehl_x = strehl_ratio(mx, reference_x_);
  r.strehl_y = strehl_ratio(my, reference_y_);
  r.oig_x = oig(mx, reference_x_);
  r.oig_y = oig(my, reference_y_);
  for (double v : {r.strehl_x, r.strehl_y, r.oig_x, r.oig_y, r.mtf_half_nyquist_x,
                   r.mtf_half_nyquist_y, r.refractive_power_max_x, r.refractive_power_max_y}) {
    if (!std::isfinite(v)) throw NumericError("non-finite optical metric");
  }
  return r;
}

}  // namespace optithreat
