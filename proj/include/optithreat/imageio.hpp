#pragma once

// PNG (8/16-bit) and NPY array I/O plus CSV/PNG export of PSFs and MTFs.

#include <cstdint>
#include <string>
#include <vector>

#include "optithreat/imaging.hpp"
#include "optithreat/optics.hpp"

namespace optithreat::io {

/// Reads gray, gray+alpha, RGB or RGBA PNGs (alpha dropped); values scaled to
/// [0, 1] by the bit depth.
Image read_png(const std::string& path);

/// Writes 1- or 3-channel images, values clipped to [0, 1] and rounded.
void write_png(const std::string& path, const Image& image, int bit_depth = 8);

/// Raw 8-bit single-channel PNG samples (e.g. label maps).
Array2D<std::uint8_t> read_label_png(const std::string& path);
void write_label_png(const std::string& path, const Array2D<std::uint8_t>& labels);

/// NPY array as float64 values with its shape (C order). Supports
/// little-endian f4, f8, u1, u2, i4, i8 and 1-3 dimensions.
struct NpyArray {
  std::vector<std::size_t> shape;
  std::vector<double> values;
};

NpyArray read_npy(const std::string& path);
void write_npy(const std::string& path, const NpyArray& array, bool float32 = false);

/// NPY of shape (H, W) or (H, W, C) as an image.
Image read_npy_image(const std::string& path);
void write_npy_image(const std::string& path, const Image& image);

/// Dispatches on the file extension (.png or .npy).
Image read_image(const std::string& path);

/// "frequency,value" rows.
void write_mtf_csv(const std::string& path, const MtfCurve& curve);

/// "x_um,y_um,value" rows for every PSF sample within `radius` of the axis.
void write_psf_csv(const std::string& path, const Psf& psf, std::size_t radius);

/// 8-bit log-scaled PSF image: value = 1 + log10(I / I_max) / decades,
/// clipped to [0, 1], so the peak is white and `decades` below it is black.
void write_psf_png(const std::string& path, const Psf& psf, double decades = 6.0);

}  // namespace optithreat::io
