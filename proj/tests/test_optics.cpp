#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

#include "optithreat/metrics.hpp"
#include "optithreat/optics.hpp"
#include "support.hpp"

using namespace optithreat;

namespace {

const OpticalConfig kDefault{};

Psf reference_psf() {
  static const Psf psf = simulate_psf(ZernikeSpectrum(), kDefault);
  return psf;
}

}  // namespace

TEST(OpticalConfig, DefaultsAndValidation) {
  EXPECT_DOUBLE_EQ(kDefault.psf_sample_pitch_um(), 0.55 * 25.0 / (8.0 * 2));
  EXPECT_DOUBLE_EQ(kDefault.pixel_pitch_um, kDefault.psf_sample_pitch_um());
  EXPECT_EQ(kDefault.padded_size(), 1024);
  // Nyquist of the default sensor sits on the diffraction cutoff.
  EXPECT_NEAR(kDefault.cutoff_frequency_per_um() * kDefault.pixel_pitch_um, 0.5, 1e-15);
  OpticalConfig bad = kDefault;
  bad.grid_size = 100 + 1;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = kDefault;
  bad.wavelength_um = 0.0;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = kDefault;
  bad.pad_factor = 0;
  EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(BuildPupil, ZeroWavefrontIsBinaryAperture) {
  const WavefrontMap map(512, 4.0);
  const auto p = build_pupil(map, kDefault);
  for (int r = 0; r < 512; r += 7) {
    for (int c = 0; c < 512; c += 5) {
      const auto v = p.samples()(r, c);
      EXPECT_EQ(v, map.inside(r, c) ? std::complex<double>(1.0, 0.0) : std::complex<double>(0.0, 0.0));
    }
  }
}

TEST(BuildPupil, HalfWavePistonNegatesAperture) {
  const auto map = synthesize_wavefront(ZernikeSpectrum(0.55, {{0, 0.275}}), 512, 4.0);
  const auto p = build_pupil(map, kDefault);
  for (int r = 0; r < 512; r += 3) {
    for (int c = 0; c < 512; c += 3) {
      if (!map.inside(r, c)) continue;
      EXPECT_NEAR(p.samples()(r, c).real(), -1.0, 1e-12);
      EXPECT_NEAR(p.samples()(r, c).imag(), 0.0, 1e-12);
    }
  }
}

TEST(BuildPupil, DefocusPhaseRange) {
  const double lambda = 0.55;
  const auto map = synthesize_wavefront(ZernikeSpectrum(lambda, {{4, lambda}}), 512, 4.0);
  double lo = 1e9, hi = -1e9;
  for (int r = 0; r < 512; ++r) {
    for (int c = 0; c < 512; ++c) {
      if (!map.inside(r, c)) continue;
      const double phase = 2 * std::numbers::pi * map(r, c) / lambda;
      lo = std::min(lo, phase);
      hi = std::max(hi, phase);
    }
  }
  const double bound = 2 * std::numbers::pi * std::sqrt(3.0);
  EXPECT_NEAR(lo, -bound, 1e-3 * bound);
  EXPECT_NEAR(hi, bound, 5e-3 * bound);
  const auto p = build_pupil(map, kDefault);
  for (const auto& v : p.samples().data()) {
    const double a = std::abs(v);
    EXPECT_TRUE(a == 0.0 || std::abs(a - 1.0) < 1e-12);
  }
}

TEST(BuildPupil, GridMismatch) {
  EXPECT_THROW(build_pupil(WavefrontMap(256, 4.0), kDefault), DimensionError);
  EXPECT_THROW(build_pupil(WavefrontMap(512, 3.0), kDefault), DimensionError);
}

TEST(PupilFunction, RejectsNonBinaryAmplitude) {
  Array2D<std::complex<double>> s(512, 512, {0.0, 0.0});
  s(10, 10) = {0.5, 0.0};
  EXPECT_THROW(PupilFunction(s, kDefault), DomainError);
}

TEST(ComputePsf, NormalizedNonNegativeCentred) {
  const auto psf = reference_psf();
  EXPECT_TRUE(psf.normalized);
  EXPECT_EQ(psf.size(), 1024u);
  double sum = 0.0;
  std::size_t arg = 0;
  const auto& d = psf.samples.data();
  for (std::size_t i = 0; i < d.size(); ++i) {
    EXPECT_GE(d[i], 0.0);
    sum += d[i];
    if (d[i] > d[arg]) arg = i;
  }
  EXPECT_NEAR(sum, 1.0, 1e-9);
  EXPECT_EQ(arg / 1024, psf.center());
  EXPECT_EQ(arg % 1024, psf.center());
  EXPECT_DOUBLE_EQ(psf.sample_pitch_um, kDefault.psf_sample_pitch_um());
}

TEST(ComputePsf, AiryFirstZero) {
  // Finer PSF sampling so the first dark ring spans several samples.
  OpticalConfig cfg = kDefault;
  cfg.grid_size = 256;
  cfg.pad_factor = 8;
  cfg.pixel_pitch_um = cfg.psf_sample_pitch_um();
  const auto psf = simulate_psf(ZernikeSpectrum(), cfg);
  const auto c = psf.center();
  const auto row = psf.samples.row(c);
  std::size_t k = c + 1;
  while (row[k + 1] < row[k]) ++k;
  const double measured = static_cast<double>(k - c) * psf.sample_pitch_um;
  const double airy = 1.22 * cfg.wavelength_um * cfg.propagation_distance_mm /
                      (2.0 * cfg.pupil_radius_mm);
  EXPECT_NEAR(measured, airy, psf.sample_pitch_um);
}

TEST(ComputePsf, AiryProfile) {
  const auto psf = reference_psf();
  const auto c = psf.center();
  const double first_zero = 1.22 * kDefault.wavelength_um * kDefault.propagation_distance_mm /
                            (2.0 * kDefault.pupil_radius_mm);
  for (std::size_t k = 1; k <= 6; ++k) {
    const double x = 3.8317059702 * static_cast<double>(k) * psf.sample_pitch_um / first_zero;
    const double j1 = std::cyl_bessel_j(1.0, x);
    const double expected = 4.0 * j1 * j1 / (x * x);
    EXPECT_NEAR(psf.samples(c, c + k) / psf.samples(c, c), expected, 0.02) << k;
  }
}

TEST(ComputePsf, RectangularApertureGivesSincSquared) {
  // Square aperture of w samples: the padded DFT is a product of Dirichlet
  // kernels, sinc^2-shaped near the axis.
  const int n = 128, w = 32;
  OpticalConfig cfg = kDefault;
  cfg.grid_size = n;
  cfg.pad_factor = 4;
  Array2D<std::complex<double>> s(n, n, {0.0, 0.0});
  for (int r = n / 2 - w / 2; r < n / 2 + w / 2; ++r) {
    for (int c = n / 2 - w / 2; c < n / 2 + w / 2; ++c) s(r, c) = {1.0, 0.0};
  }
  const auto psf = compute_psf(PupilFunction(s, cfg));
  const int m = n * cfg.pad_factor;
  auto dirichlet2 = [&](int k) {
    if (k == 0) return static_cast<double>(w) * w;
    const double a = std::sin(std::numbers::pi * w * k / m) / std::sin(std::numbers::pi * k / m);
    return a * a;
  };
  auto sinc2 = [&](int k) {
    if (k == 0) return 1.0;
    const double x = std::numbers::pi * w * static_cast<double>(k) / m;
    return std::sin(x) / x * std::sin(x) / x;
  };
  const double norm = std::pow(static_cast<double>(w), 4);
  const int c = static_cast<int>(psf.center());
  double total = 0.0;
  for (int k = -m / 2; k < m / 2; ++k) total += dirichlet2(k);
  for (int k = -m / 2; k < m / 2; ++k) {
    // exact discrete form along the central row
    EXPECT_NEAR(psf.samples(c, c + k), dirichlet2(k) * dirichlet2(0) / (total * total), 1e-12);
  }
  for (int k = -12; k <= 12; ++k) {
    EXPECT_NEAR(psf.samples(c, c + k) / psf.samples(c, c), sinc2(k), 5e-3) << k;
  }
  (void)norm;
}

TEST(ComputePsf, PistonInvariance) {
  const ZernikeSpectrum s(0.55, {{4, 0.2}, {5, -0.1}});
  auto with_piston = s;
  with_piston.set(0, 0.37);
  const auto a = simulate_psf(s, kDefault);
  const auto b = simulate_psf(with_piston, kDefault);
  double worst = 0.0;
  for (std::size_t i = 0; i < a.samples.size(); ++i) {
    worst = std::max(worst, std::abs(a.samples.data()[i] - b.samples.data()[i]));
  }
  EXPECT_LT(worst, 1e-12);
}

TEST(ComputeMtf, MatchesChatFunction) {
  const auto psf = reference_psf();
  for (Axis axis : {Axis::Horizontal, Axis::Vertical}) {
    const auto mtf = compute_mtf(psf, axis);
    EXPECT_EQ(mtf.axis, axis);
    EXPECT_DOUBLE_EQ(mtf.value.front(), 1.0);
    EXPECT_DOUBLE_EQ(mtf.frequency.back(), 0.5);
    const double nu_c = kDefault.cutoff_frequency_per_um() * kDefault.pixel_pitch_um;
    double worst = 0.0;
    for (std::size_t i = 0; i < mtf.value.size(); ++i) {
      worst = std::max(worst, std::abs(mtf.value[i] - oracle::chat(mtf.frequency[i] / nu_c)));
    }
    EXPECT_LT(worst, 0.01);
  }
}

TEST(ComputeMtf, TiltLeavesMtfUnchanged) {
  const auto ref = reference_psf();
  const auto tilted = simulate_psf(ZernikeSpectrum(0.55, {{1, 0.4}, {2, -0.3}}), kDefault);
  for (Axis axis : {Axis::Horizontal, Axis::Vertical}) {
    const auto a = compute_mtf(ref, axis);
    const auto b = compute_mtf(tilted, axis);
    ASSERT_EQ(a.value.size(), b.value.size());
    for (std::size_t i = 0; i < a.value.size(); ++i) EXPECT_NEAR(a.value[i], b.value[i], 1e-9);
  }
}

TEST(ComputeMtf, TiltShiftsCentroid) {
  auto centroid_x = [](const Psf& p) {
    double s = 0.0;
    for (std::size_t r = 0; r < p.size(); ++r) {
      for (std::size_t c = 0; c < p.size(); ++c) s += p.samples(r, c) * static_cast<double>(c);
    }
    return s;
  };
  const auto ref = reference_psf();
  const auto tilted = simulate_psf(ZernikeSpectrum(0.55, {{2, 0.2}}), kDefault);
  EXPECT_GT(std::abs(centroid_x(tilted) - centroid_x(ref)), 1.0);
}

TEST(ComputeMtf, BoundedByDiffractionLimit) {
  const auto ref = reference_psf();
  std::mt19937_64 rng(3);
  for (int t = 0; t < 4; ++t) {
    const auto psf = simulate_psf(oracle::random_spectrum(rng, 0.1 + 0.1 * t), kDefault);
    for (Axis axis : {Axis::Horizontal, Axis::Vertical}) {
      const auto a = compute_mtf(psf, axis);
      const auto r = compute_mtf(ref, axis);
      for (std::size_t i = 0; i < a.value.size(); ++i) {
        EXPECT_LE(a.value[i], r.value[i] + 1e-6);
        EXPECT_GE(a.value[i], 0.0);
      }
    }
  }
}

TEST(ComputeMtf, FrequencyAxisFollowsPixelPitch) {
  OpticalConfig cfg = kDefault;
  cfg.pixel_pitch_um = 2.0 * kDefault.psf_sample_pitch_um();
  const auto psf = simulate_psf(ZernikeSpectrum(), cfg);
  const auto mtf = compute_mtf(psf, Axis::Horizontal);
  EXPECT_DOUBLE_EQ(mtf.frequency.back(), 0.5);
  // sensor Nyquist is now half the cutoff: chat(0.5) at the end of the axis
  EXPECT_NEAR(mtf.value.back(), oracle::chat(0.5), 0.01);
  const auto full = compute_mtf_unrestricted(psf, Axis::Horizontal);
  EXPECT_EQ(full.value.size(), psf.size() / 2 + 1);
  EXPECT_DOUBLE_EQ(full.frequency[1], 1.0 / psf.size());
}

TEST(LineSpread, IntegratesToOne) {
  const auto lsf = line_spread_function(reference_psf(), Axis::Vertical);
  EXPECT_NEAR(std::accumulate(lsf.begin(), lsf.end(), 0.0), 1.0, 1e-9);
}
