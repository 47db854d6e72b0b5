#pragma once

// Thin RAII layer over FFTW3. Forward transforms use the e^{-2 pi i k x / n}
// sign convention and are unnormalized; inverse transforms scale by 1/n.

#include <complex>
#include <span>
#include <vector>

#include "optithreat/common.hpp"

namespace optithreat::fft {

using Complex = std::complex<double>;

void forward_2d(Array2D<Complex>& data);
void inverse_2d(Array2D<Complex>& data);

std::vector<Complex> forward_1d(std::span<const Complex> input);
std::vector<Complex> forward_1d_real(std::span<const double> input);

/// Moves the element at index (0,0) to (rows/2, cols/2).
template <typename T>
Array2D<T> fftshift(const Array2D<T>& in) {
  Array2D<T> out(in.rows(), in.cols());
  const std::size_t hr = in.rows() / 2, hc = in.cols() / 2;
  for (std::size_t r = 0; r < in.rows(); ++r)
    for (std::size_t c = 0; c < in.cols(); ++c)
      out((r + hr) % in.rows(), (c + hc) % in.cols()) = in(r, c);
  return out;
}

/// Inverse of fftshift: moves (rows/2, cols/2) to (0,0).
template <typename T>
Array2D<T> ifftshift(const Array2D<T>& in) {
  Array2D<T> out(in.rows(), in.cols());
  const std::size_t hr = in.rows() - in.rows() / 2, hc = in.cols() - in.cols() / 2;
  for (std::size_t r = 0; r < in.rows(); ++r)
    for (std::size_t c = 0; c < in.cols(); ++c)
      out((r + hr) % in.rows(), (c + hc) % in.cols()) = in(r, c);
  return out;
}

}  // namespace optithreat::fft
