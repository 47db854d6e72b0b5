#include "optithreat/imaging.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>

#include "optithreat/fft.hpp"

namespace optithreat {

// --- Image -------------------------------------------------------------------

Image::Image(int h, int w, int c, double fill, std::string name)
    : id(std::move(name)), height(h), width(w), channels(c) {
  if (h <= 0 || w <= 0 || c <= 0) {
    throw DimensionError(fmt::format("invalid image shape {}x{}x{}", h, w, c));
  }
  data.assign(static_cast<std::size_t>(h) * w * c, fill);
}

double Image::mean() const {
  if (data.empty()) return 0.0;
  return std::accumulate(data.begin(), data.end(), 0.0) / static_cast<double>(data.size());
}

void Image::clip() {
  for (auto& v : data) v = std::clamp(v, 0.0, 1.0);
}

void Image::validate() const {
  if (height <= 0 || width <= 0 || channels <= 0 ||
      data.size() != static_cast<std::size_t>(height) * width * channels) {
    throw DimensionError(fmt::format("image '{}' has inconsistent shape", id));
  }
  for (double v : data) {
    if (!std::isfinite(v)) throw DataError(fmt::format("image '{}' has non-finite values", id));
  }
}

void ImageBatch::add(Image image) {
  image.validate();
  if (!images_.empty()) {
    const auto& f = images_.front();
    if (f.height != image.height || f.width != image.width || f.channels != image.channels) {
      throw DimensionError(fmt::format("image '{}' is {}x{}x{}, batch is {}x{}x{}", image.id,
                                       image.height, image.width, image.channels, f.height,
                                       f.width, f.channels));
    }
  }
  images_.push_back(std::move(image));
}

// --- PSF -> sensor kernel ----------------------------------------------------

namespace {

struct Tap {
  std::size_t index;
  double weight;
};

// Row j of the resampling operator for sensor pixel offsets -half..half.
std::vector<std::vector<Tap>> resampling_taps(std::size_t m, double scale, int half) {
  const double c = static_cast<double>(m / 2);
  std::vector<std::vector<Tap>> rows;
  rows.reserve(2 * half + 1);
  for (int j = -half; j <= half; ++j) {
    std::vector<Tap> taps;
    if (scale >= 1.0) {
      // PSF sample i covers [i - 0.5, i + 0.5]; box-integrate over the pixel.
      const double lo = c + (j - 0.5) * scale, hi = c + (j + 0.5) * scale;
      const auto first = static_cast<long>(std::floor(lo + 0.5));
      const auto last = static_cast<long>(std::ceil(hi - 0.5));
      for (long i = first; i <= last; ++i) {
        if (i < 0 || i >= static_cast<long>(m)) continue;
        const double w = std::min(hi, i + 0.5) - std::max(lo, i - 0.5);
        if (w > 0.0) taps.push_back({static_cast<std::size_t>(i), w});
      }
    } else {
      const double pos = c + j * scale;
      const auto i0 = static_cast<long>(std::floor(pos));
      const double t = pos - i0;
      if (i0 >= 0 && i0 < static_cast<long>(m)) taps.push_back({static_cast<std::size_t>(i0), 1 - t});
      if (t > 0 && i0 + 1 >= 0 && i0 + 1 < static_cast<long>(m))
        taps.push_back({static_cast<std::size_t>(i0 + 1), t});
    }
    rows.push_back(std::move(taps));
  }
  return rows;
}

}  // namespace

Array2D<double> psf_to_sensor_kernel(const Psf& psf, double energy_fraction) {
  if (!(energy_fraction > 0.0 && energy_fraction <= 1.0)) {
    throw DomainError(fmt::format("energy fraction {} outside (0, 1]", energy_fraction));
  }
  if (!(psf.sample_pitch_um > 0.0) || !(psf.pixel_pitch_um > 0.0)) {
    throw DimensionError("PSF lacks sample or pixel pitch");
  }
  const std::size_t m = psf.size();
  const double scale = psf.pixel_pitch_um / psf.sample_pitch_um;
  const int half = static_cast<int>(std::floor((static_cast<double>(m / 2) - 1.0) / scale));
  if (half < 0) throw DimensionError("PSF grid smaller than one sensor pixel");
  const std::size_t k = 2 * static_cast<std::size_t>(half) + 1;

  Array2D<double> full(k, k, 0.0);
  if (std::abs(scale - 1.0) < 1e-9) {
    const std::size_t off = m / 2 - half;
    for (std::size_t r = 0; r < k; ++r)
      for (std::size_t c = 0; c < k; ++c) full(r, c) = psf.samples(r + off, c + off);
  } else {
    const auto taps = resampling_taps(m, scale, half);
    Array2D<double> tmp(k, m, 0.0);  // rows resampled
    for (std::size_t j = 0; j < k; ++j)
      for (const auto& t : taps[j]) {
        const auto src = psf.samples.row(t.index);
        auto dst = tmp.row(j);
        for (std::size_t c = 0; c < m; ++c) dst[c] += t.weight * src[c];
      }
    for (std::size_t r = 0; r < k; ++r)
      for (std::size_t j = 0; j < k; ++j) {
        double s = 0.0;
        for (const auto& t : taps[j]) s += t.weight * tmp(r, t.index);
        full(r, j) = s;
      }
  }

  // Smallest centred square holding the requested energy fraction.
  Array2D<double> prefix(k + 1, k + 1, 0.0);
  for (std::size_t r = 0; r < k; ++r)
    for (std::size_t c = 0; c < k; ++c)
      prefix(r + 1, c + 1) = full(r, c) + prefix(r, c + 1) + prefix(r + 1, c) - prefix(r, c);
  const double total = prefix(k, k);
  if (!(total > 0.0)) throw NumericError("PSF kernel has zero energy");
  auto box = [&](std::size_t rad) {
    const std::size_t lo = half - rad, hi = half + rad + 1;
    return prefix(hi, hi) - prefix(lo, hi) - prefix(hi, lo) + prefix(lo, lo);
  };
  std::size_t rad = 0;
  while (rad < static_cast<std::size_t>(half) && box(rad) < energy_fraction * total) ++rad;

  const std::size_t out_size = 2 * rad + 1, off = half - rad;
  Array2D<double> kernel(out_size, out_size);
  double sum = 0.0;
  for (std::size_t r = 0; r < out_size; ++r)
    for (std::size_t c = 0; c < out_size; ++c) sum += kernel(r, c) = full(r + off, c + off);
  for (auto& v : kernel.data()) v /= sum;
  return kernel;
}

// --- convolution -------------------------------------------------------------

namespace {

std::size_t reflect(long i, long n) {
  while (i < 0 || i >= n) i = i < 0 ? -i : 2 * n - 2 - i;
  return static_cast<std::size_t>(i);
}

}  // namespace

Image convolve_reflect(const Image& image, const Array2D<double>& kernel) {
  image.validate();
  const auto k = kernel.rows();
  if (k == 0 || k != kernel.cols() || k % 2 == 0) {
    throw DimensionError(fmt::format("kernel must be odd and square, got {}x{}", kernel.rows(),
                                     kernel.cols()));
  }
  if (k > static_cast<std::size_t>(image.height) || k > static_cast<std::size_t>(image.width)) {
    throw DimensionError(fmt::format("PSF support {}x{} does not fit image {}x{}", k, k,
                                     image.height, image.width));
  }
  Image out = image;
  if (k == 1) {
    for (auto& v : out.data) v *= kernel(0, 0);
    return out;
  }
  const long r = static_cast<long>(k / 2);
  const long h = image.height, w = image.width;
  const auto hp = static_cast<std::size_t>(h + 2 * r), wp = static_cast<std::size_t>(w + 2 * r);

  Array2D<fft::Complex> kf(hp, wp, {0.0, 0.0});
  for (std::size_t a = 0; a < k; ++a)
    for (std::size_t b = 0; b < k; ++b)
      kf((a + hp - r) % hp, (b + wp - r) % wp) = kernel(a, b);
  fft::forward_2d(kf);

  // Two real channels per complex transform; the kernel is real, so the real
  // and imaginary parts convolve independently.
  for (int ch = 0; ch < image.channels; ch += 2) {
    const bool pair = ch + 1 < image.channels;
    Array2D<fft::Complex> field(hp, wp);
    for (std::size_t y = 0; y < hp; ++y) {
      const auto sy = static_cast<int>(reflect(static_cast<long>(y) - r, h));
      for (std::size_t x = 0; x < wp; ++x) {
        const auto sx = static_cast<int>(reflect(static_cast<long>(x) - r, w));
        field(y, x) = {image.at(sy, sx, ch), pair ? image.at(sy, sx, ch + 1) : 0.0};
      }
    }
    fft::forward_2d(field);
    for (std::size_t i = 0; i < field.size(); ++i) field.data()[i] *= kf.data()[i];
    fft::inverse_2d(field);
    for (long y = 0; y < h; ++y)
      for (long x = 0; x < w; ++x) {
        const auto v = field(y + r, x + r);
        out.at(y, x, ch) = v.real();
        if (pair) out.at(y, x, ch + 1) = v.imag();
      }
  }
  return out;
}

Image perturb_image(const Image& image, const Array2D<double>& kernel) {
  Image out = convolve_reflect(image, kernel);
  out.clip();
  return out;
}

Image perturb_image(const Image& image, const Psf& psf, double energy_fraction) {
  if (!psf.normalized) throw DomainError("perturb_image requires a normalized PSF");
  return perturb_image(image, psf_to_sensor_kernel(psf, energy_fraction));
}

// --- ROI ---------------------------------------------------------------------

Roi Roi::parse(const std::string& text) {
  Roi roi;
  char c1 = 0, c2 = 0, c3 = 0;
  std::istringstream in(text);
  if (!(in >> roi.x >> c1 >> roi.y >> c2 >> roi.width >> c3 >> roi.height) || c1 != ',' ||
      c2 != ',' || c3 != ',' || !(in >> std::ws).eof()) {
    throw ConfigError(fmt::format("ROI '{}' is not of the form x,y,w,h", text));
  }
  if (roi.x < 0 || roi.y < 0 || roi.width <= 0 || roi.height <= 0) {
    throw ConfigError(fmt::format("ROI '{}' has negative origin or empty size", text));
  }
  return roi;
}

std::string Roi::to_string() const { return fmt::format("{},{},{},{}", x, y, width, height); }

// --- slanted edge ------------------------------------------------------------

namespace {

constexpr int kOversampling = 4;

Array2D<double> luminance(const Image& image, const Roi& roi, bool transpose) {
  const auto rows = static_cast<std::size_t>(transpose ? roi.width : roi.height);
  const auto cols = static_cast<std::size_t>(transpose ? roi.height : roi.width);
  Array2D<double> g(rows, cols);
  for (int y = 0; y < roi.height; ++y)
    for (int x = 0; x < roi.width; ++x) {
      double s = 0.0;
      for (int ch = 0; ch < image.channels; ++ch) s += image.at(roi.y + y, roi.x + x, ch);
      s /= image.channels;
      if (transpose) g(x, y) = s; else g(y, x) = s;
    }
  return g;
}

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const auto mid = v.begin() + static_cast<long>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  return *mid;
}

// Interpolated resample of a one-sided curve onto [0, 0.5] truncation.
MtfCurve truncate_at_nyquist(const std::vector<double>& freq, const std::vector<double>& val,
                             Axis axis) {
  MtfCurve c;
  c.axis = axis;
  std::size_t k = 0;
  for (; k < freq.size() && freq[k] <= 0.5 + 1e-12; ++k) {
    c.frequency.push_back(std::min(freq[k], 0.5));
    c.value.push_back(val[k]);
  }
  if (c.frequency.back() < 0.5 && k < freq.size()) {
    const double t = (0.5 - freq[k - 1]) / (freq[k] - freq[k - 1]);
    c.frequency.push_back(0.5);
    c.value.push_back(val[k - 1] + t * (val[k] - val[k - 1]));
  }
  return c;
}

double interpolate(const MtfCurve& c, double f) {
  if (f <= c.frequency.front()) return c.value.front();
  for (std::size_t i = 1; i < c.frequency.size(); ++i) {
    if (c.frequency[i] >= f) {
      const double t = (f - c.frequency[i - 1]) / (c.frequency[i] - c.frequency[i - 1]);
      return c.value[i - 1] + t * (c.value[i] - c.value[i - 1]);
    }
  }
  return c.value.back();
}

}  // namespace

EdgeAnalysis slanted_edge_mtf(const Image& image, const Roi& roi) {
  image.validate();
  if (roi.x + roi.width > image.width || roi.y + roi.height > image.height) {
    throw DimensionError(fmt::format("ROI {} exceeds image {}x{}", roi.to_string(), image.width,
                                     image.height));
  }
  if (roi.width < 20 || roi.height < 20) {
    throw AnalysisError(fmt::format("ROI {} too small for edge analysis", roi.to_string()));
  }

  // Orientation: a near-vertical edge has its gradient along x.
  double gx = 0.0, gy = 0.0;
  for (int y = 0; y + 1 < roi.height; ++y)
    for (int x = 0; x + 1 < roi.width; ++x) {
      double c = 0.0, right = 0.0, down = 0.0;
      for (int ch = 0; ch < image.channels; ++ch) {
        c += image.at(roi.y + y, roi.x + x, ch);
        right += image.at(roi.y + y, roi.x + x + 1, ch);
        down += image.at(roi.y + y + 1, roi.x + x, ch);
      }
      gx += std::abs(right - c);
      gy += std::abs(down - c);
    }
  const Axis axis = gx >= gy ? Axis::Horizontal : Axis::Vertical;
  const auto g = luminance(image, roi, axis == Axis::Vertical);
  const auto rows = static_cast<long>(g.rows()), cols = static_cast<long>(g.cols());

  // Contrast against a robust noise estimate from differences along the edge.
  const long band = std::max(2L, cols / 10);
  double left = 0.0, right = 0.0;
  for (long y = 0; y < rows; ++y)
    for (long x = 0; x < band; ++x) {
      left += g(y, x);
      right += g(y, cols - 1 - x);
    }
  left /= static_cast<double>(rows * band);
  right /= static_cast<double>(rows * band);
  const double step = right - left;
  std::vector<double> diffs;
  diffs.reserve(static_cast<std::size_t>((rows - 1) * cols));
  for (long y = 0; y + 1 < rows; ++y)
    for (long x = 0; x < cols; ++x) diffs.push_back(std::abs(g(y + 1, x) - g(y, x)));
  const double noise = 1.4826 * median(diffs) / std::sqrt(2.0);
  const double snr = std::abs(step) / std::max(noise, 1e-12);
  if (!(snr >= kMinEdgeSnr)) {
    throw AnalysisError(fmt::format("no detectable edge in ROI {} (SNR {:.2f} < {})",
                                    roi.to_string(), snr, kMinEdgeSnr));
  }
  const double polarity = step > 0 ? 1.0 : -1.0;

  // Edge position per row from the centroid of the derivative.
  std::vector<double> ys, xs;
  for (long y = 0; y < rows; ++y) {
    double num = 0.0, den = 0.0;
    for (long x = 1; x + 1 < cols; ++x) {
      const double d = polarity * 0.5 * (g(y, x + 1) - g(y, x - 1));
      num += d * x;
      den += d;
    }
    if (den > 0.25 * std::abs(step)) {
      ys.push_back(static_cast<double>(y));
      xs.push_back(num / den);
    }
  }
  if (ys.size() < static_cast<std::size_t>(rows / 2) || ys.size() < 8) {
    throw AnalysisError(fmt::format("edge not traceable across ROI {}", roi.to_string()));
  }
  const double n = static_cast<double>(ys.size());
  const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / n;
  const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  double syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < ys.size(); ++i) {
    syy += (ys[i] - my) * (ys[i] - my);
    sxy += (ys[i] - my) * (xs[i] - mx);
  }
  const double slope = sxy / syy;
  const double intercept = mx - slope * my;
  double res = 0.0;
  for (std::size_t i = 0; i < ys.size(); ++i) {
    const double e = xs[i] - (intercept + slope * ys[i]);
    res += e * e;
  }
  res = std::sqrt(res / n);
  if (res > 1.0) {
    throw AnalysisError(fmt::format("edge in ROI {} is not straight (residual {:.2f} px)",
                                    roi.to_string(), res));
  }
  const double angle = std::atan(std::abs(slope)) * 180.0 / std::numbers::pi;
  if (angle < kMinEdgeAngleDeg || angle > kMaxEdgeAngleDeg) {
    throw AnalysisError(fmt::format("edge slant {:.2f} deg outside [{}, {}]", angle,
                                    kMinEdgeAngleDeg, kMaxEdgeAngleDeg));
  }

  // Project onto the edge normal, 1/4-pixel bins over a range every row covers.
  const double cos_t = std::cos(std::atan(slope));
  double reach = 1e300;
  for (long y = 0; y < rows; ++y) {
    const double xe = intercept + slope * y;
    reach = std::min({reach, xe, static_cast<double>(cols - 1) - xe});
  }
  const double half_range = (reach - 1.0) * cos_t;
  if (half_range < 8.0) {
    throw AnalysisError(fmt::format("edge too close to the border of ROI {}", roi.to_string()));
  }
  const auto nbins = static_cast<std::size_t>(2 * std::floor(half_range * kOversampling));
  const double lo = -static_cast<double>(nbins) / (2.0 * kOversampling);
  std::vector<double> sum(nbins, 0.0), count(nbins, 0.0);
  for (long y = 0; y < rows; ++y) {
    const double xe = intercept + slope * y;
    for (long x = 0; x < cols; ++x) {
      const double d = (x - xe) * cos_t;
      const double pos = (d - lo) * kOversampling;
      if (pos < 0.0) continue;
      const auto b = static_cast<std::size_t>(pos);
      if (b >= nbins) continue;
      sum[b] += g(y, x);
      count[b] += 1.0;
    }
  }
  std::vector<double> esf(nbins, 0.0);
  std::vector<std::size_t> filled;
  for (std::size_t b = 0; b < nbins; ++b)
    if (count[b] > 0) {
      esf[b] = sum[b] / count[b];
      filled.push_back(b);
    }
  if (filled.size() < nbins / 2) throw AnalysisError("edge slant too small to fill ESF bins");
  for (std::size_t b = 0, f = 0; b < nbins; ++b) {
    if (count[b] > 0) continue;
    while (f + 1 < filled.size() && filled[f + 1] < b) ++f;
    if (filled[f] > b) { esf[b] = esf[filled[f]]; continue; }
    if (f + 1 >= filled.size()) { esf[b] = esf[filled[f]]; continue; }
    const auto a = filled[f], c = filled[f + 1];
    esf[b] = esf[a] + (esf[c] - esf[a]) * double(b - a) / double(c - a);
  }

  std::vector<double> lsf(nbins, 0.0);
  for (std::size_t b = 1; b + 1 < nbins; ++b) lsf[b] = 0.5 * (esf[b + 1] - esf[b - 1]);
  for (std::size_t b = 0; b < nbins; ++b) {
    lsf[b] *= 0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * b / double(nbins)));
  }

  const auto spectrum = fft::forward_1d_real(lsf);
  const double dc = std::abs(spectrum[0]);
  if (!(dc > 0.0)) throw AnalysisError("line spread function has zero area");
  std::vector<double> freq, val;
  const double span_px = static_cast<double>(nbins) / kOversampling;
  for (std::size_t k = 0; k <= nbins / 2; ++k) {
    freq.push_back(k / span_px);
    val.push_back(std::abs(spectrum[k]) / dc);
  }
  val[0] = 1.0;

  EdgeAnalysis out;
  out.mtf = truncate_at_nyquist(freq, val, axis);
  out.axis = axis;
  out.edge_angle_deg = angle;
  out.oversampling = kOversampling;
  out.roi = roi;
  out.esf = std::move(esf);
  out.lsf = std::move(lsf);
  return out;
}

MtfCurve net_mtf(const EdgeAnalysis& perturbed, const EdgeAnalysis& undistorted) {
  if (perturbed.axis != undistorted.axis) {
    throw DimensionError("net MTF needs edge analyses along the same axis");
  }
  MtfCurve out;
  out.axis = perturbed.axis;
  out.frequency = perturbed.mtf.frequency;
  out.value.resize(out.frequency.size());
  for (std::size_t i = 0; i < out.frequency.size(); ++i) {
    const double ref = interpolate(undistorted.mtf, out.frequency[i]);
    out.value[i] = ref > 1e-6 ? perturbed.mtf.value[i] / ref : 0.0;
  }
  out.value[0] = 1.0;
  return out;
}

Image render_slanted_edge(int height, int width, double angle_deg, Axis axis, double dark,
                          double bright, int supersample) {
  if (supersample < 1) throw DomainError("supersample must be >= 1");
  // Render a near-vertical edge in (rows, cols) = (h, w), transposing for
  // the horizontal-edge case.
  const bool transpose = axis == Axis::Vertical;
  const int h = transpose ? width : height, w = transpose ? height : width;
  const double t = std::tan(angle_deg * std::numbers::pi / 180.0);
  const double cx = 0.5 * w, cy = 0.5 * h;
  Image img(height, width, 1, 0.0, "slanted_edge");
  const double inv = 1.0 / supersample;
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      int lit = 0;
      for (int i = 0; i < supersample; ++i) {
        const double y = r + (i + 0.5) * inv;
        const double boundary = cx + t * (y - cy);
        for (int j = 0; j < supersample; ++j) {
          if (c + (j + 0.5) * inv > boundary) ++lit;
        }
      }
      const double frac = static_cast<double>(lit) / (supersample * supersample);
      const double v = dark + (bright - dark) * frac;
      if (transpose) img.at(c, r) = v; else img.at(r, c) = v;
    }
  return img;
}

}  // namespace optithreat
