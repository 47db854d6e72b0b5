#pragma once

// Reference implementations shared by the unit tests and the acceptance
// runner. Everything here is written from closed forms or brute force, not
// from the library code paths it is compared against.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "optithreat/evalmetrics.hpp"
#include "optithreat/optics.hpp"
#include "optithreat/shapley.hpp"
#include "optithreat/zernike.hpp"

namespace oracle {

/// Orthonormal Zernike terms j = 0..14 written out term by term.
double zernike(int j, double rho, double phi);

/// Diffraction-limited incoherent MTF of a circular pupil at nu / nu_c.
double chat(double normalized_frequency);

/// exp(-(2 pi sigma / lambda)^2).
double mahajan(double rms_um, double wavelength_um);

/// Sum of the real OTF over the full DFT plane divided by that of the
/// reference, computed with a direct FFTW call. Equals the on-axis peak
/// ratio by the DFT inversion formula.
double signed_otf_volume_ratio(const optithreat::Psf& aberrated, const optithreat::Psf& reference);

/// Random spectrum over indices 3..`max_index` scaled to the requested RMS.
optithreat::ZernikeSpectrum random_spectrum(std::mt19937_64& rng, double rms_um, int max_index = 8,
                                            double wavelength_um = 0.55);

/// ECE by explicit per-bin pixel lists.
double brute_force_ece(const std::vector<optithreat::PredictionRecord>& records, int bins,
                       int ignore_id = 255);

/// mIoU by explicit per-class pixel counting.
double brute_force_miou(const std::vector<optithreat::PredictionRecord>& records,
                        int ignore_id = 255);

/// Monte-Carlo Shapley estimate over random feature orderings, with the
/// standard error of each estimate.
struct ShapleyEstimate {
  std::vector<double> mean;
  std::vector<double> stderr_;
};
ShapleyEstimate permutation_shapley(int n, const std::function<double(std::uint32_t)>& value,
                                    std::size_t permutations, std::uint64_t seed);

/// Record whose per-pixel probabilities are given explicitly.
optithreat::PredictionRecord make_record(int height, int width, int classes,
                                         std::vector<int> labels, std::vector<float> probs,
                                         std::string id = "r");

/// Random record with Dirichlet-like probabilities.
optithreat::PredictionRecord random_record(std::mt19937_64& rng, int height, int width,
                                           int classes, double ignore_fraction = 0.0);

/// Fresh empty directory under the system temp directory.
std::filesystem::path temp_dir(const std::string& name);

std::string read_file(const std::filesystem::path& path);

}  // namespace oracle
