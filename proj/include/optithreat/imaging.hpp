#pragma once

// Threat-model application to images and slanted-edge MTF measurement.
//
// Images are linear-intensity arrays in [0, 1], stored height x width x
// channels interleaved. No gamma handling is performed.

#include <string>
#include <vector>

#include "optithreat/common.hpp"
#include "optithreat/optics.hpp"

namespace optithreat {

struct Image {
  std::string id;
  int height = 0;
  int width = 0;
  int channels = 1;
  std::vector<double> data;

  Image() = default;
  Image(int h, int w, int c, double fill = 0.0, std::string name = {});

  double& at(int r, int c, int ch = 0) {
    return data[(static_cast<std::size_t>(r) * width + c) * channels + ch];
  }
  double at(int r, int c, int ch = 0) const {
    return data[(static_cast<std::size_t>(r) * width + c) * channels + ch];
  }
  double mean() const;
  void clip();
  void validate() const;
};

/// Images of one dataset batch; all share height, width and channel count.
class ImageBatch {
 public:
  void add(Image image);
  const std::vector<Image>& images() const noexcept { return images_; }
  std::size_t size() const noexcept { return images_.size(); }
  bool empty() const noexcept { return images_.empty(); }

 private:
  std::vector<Image> images_;
};

inline constexpr double kDefaultKernelEnergy = 0.99;

/// Resamples a PSF onto the sensor pixel grid (box integration when a pixel
/// spans more than one PSF sample, bilinear interpolation otherwise), crops
/// it to the smallest centred odd square holding `energy_fraction` of the
/// energy and renormalizes to unit sum.
Array2D<double> psf_to_sensor_kernel(const Psf& psf, double energy_fraction = kDefaultKernelEnergy);

/// Per-channel convolution with reflect padding (mirror without repeating
/// the border sample), FFT-accelerated. No clipping. The kernel must be odd
/// and square and fit inside the image.
Image convolve_reflect(const Image& image, const Array2D<double>& kernel);

/// convolve_reflect followed by clipping to [0, 1].
Image perturb_image(const Image& image, const Array2D<double>& kernel);
Image perturb_image(const Image& image, const Psf& psf,
                    double energy_fraction = kDefaultKernelEnergy);

struct Roi {
  int x = 0;
  int y = 0;
  int width = 0;
  int height = 0;

  /// Parses "x,y,w,h".
  static Roi parse(const std::string& text);
  std::string to_string() const;
};

struct EdgeAnalysis {
  MtfCurve mtf;                 // cycles/pixel along the edge normal, 0..Nyquist
  Axis axis = Axis::Horizontal; // near-vertical edge -> horizontal MTF
  double edge_angle_deg = 0.0;  // slant relative to the closest image axis
  int oversampling = 4;
  Roi roi;
  std::vector<double> esf;
  std::vector<double> lsf;
};

inline constexpr double kMinEdgeAngleDeg = 2.0;
inline constexpr double kMaxEdgeAngleDeg = 10.0;
inline constexpr double kMinEdgeSnr = 10.0;

/// ISO 12233-style slanted-edge MTF: per-row gradient centroids, line fit,
/// projection onto the edge normal into 1/4-pixel bins, LSF by central
/// differences, Hann window, |DFT| normalized at DC.
/// Throws AnalysisError when no straight edge with sufficient contrast and a
/// 2-10 degree slant is found.
EdgeAnalysis slanted_edge_mtf(const Image& image, const Roi& roi);

/// Net MTF of a perturbation: perturbed edge MTF divided by the MTF of the
/// same edge in the undistorted image, on the perturbed frequency axis.
MtfCurve net_mtf(const EdgeAnalysis& perturbed, const EdgeAnalysis& undistorted);

/// Renders a straight edge through the image centre, pixel-area integrated
/// with `supersample`^2 sub-samples. Axis::Horizontal gives a near-vertical
/// edge (dark left, bright right); Axis::Vertical a near-horizontal edge
/// (dark top, bright bottom).
Image render_slanted_edge(int height, int width, double angle_deg, Axis axis, double dark,
                          double bright, int supersample = 32);

}  // namespace optithreat
