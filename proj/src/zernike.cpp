#include "optithreat/zernike.hpp"

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

namespace optithreat {
namespace {

double factorial(int k) {
  double r = 1.0;
  for (int i = 2; i <= k; ++i) r *= i;
  return r;
}

void check_index(int index) {
  if (index < 0 || index > kMaxBasisIndex) {
    throw DomainError(fmt::format("Zernike index {} not supported (supported range 0..{})", index,
                                  kMaxBasisIndex));
  }
}

double radial(int n, int m, double rho) {
  const int am = std::abs(m);
  double sum = 0.0;
  for (int k = 0; k <= (n - am) / 2; ++k) {
    const double c = ((k % 2) ? -1.0 : 1.0) * factorial(n - k) /
                     (factorial(k) * factorial((n + am) / 2 - k) * factorial((n - am) / 2 - k));
    sum += c * std::pow(rho, n - 2 * k);
  }
  return sum;
}

double basis_unchecked(const ZernikeOrder& o, double rho, double phi) {
  const double norm = std::sqrt((o.azimuthal == 0 ? 1.0 : 2.0) * (o.radial + 1));
  const double r = radial(o.radial, o.azimuthal, rho);
  if (o.azimuthal > 0) return norm * r * std::cos(o.azimuthal * phi);
  if (o.azimuthal < 0) return norm * r * std::sin(-o.azimuthal * phi);
  return norm * r;
}

// Polar coordinates of every pupil sample of an N x N grid, row-major.
struct PupilSamples {
  std::vector<int> row, col;
  std::vector<double> rho, phi;
};

PupilSamples pupil_samples(int n) {
  PupilSamples s;
  const double half = 0.5 * n;
  for (int r = 0; r < n; ++r) {
    const double y = (r + 0.5 - half) / half;
    for (int c = 0; c < n; ++c) {
      const double x = (c + 0.5 - half) / half;
      const double rho = std::hypot(x, y);
      if (rho > 1.0) continue;
      s.row.push_back(r);
      s.col.push_back(c);
      s.rho.push_back(rho);
      s.phi.push_back(std::atan2(y, x));
    }
  }
  return s;
}

}  // namespace

ZernikeOrder zernike_order(int index) {
  check_index(index);
  int n = 0;
  while ((n + 1) * (n + 2) / 2 <= index) ++n;
  const int m = 2 * index - n * (n + 2);
  return {n, m};
}

double evaluate_basis(int index, double rho, double phi) {
  const auto order = zernike_order(index);
  if (!(rho >= 0.0 && rho <= 1.0)) {
    throw DomainError(fmt::format("normalized radius {} outside [0, 1]", rho));
  }
  return basis_unchecked(order, rho, phi);
}

double normalization_factor(int index) {
  const auto o = zernike_order(index);
  return std::sqrt((o.azimuthal == 0 ? 1.0 : 2.0) * (o.radial + 1));
}

// --- ZernikeSpectrum ---------------------------------------------------------

ZernikeSpectrum::ZernikeSpectrum(double wavelength_um, std::map<int, double> coefficients)
    : wavelength_um_(wavelength_um), coefficients_(std::move(coefficients)) {
  validate();
}

void ZernikeSpectrum::validate() const {
  if (!(wavelength_um_ > 0.0) || !std::isfinite(wavelength_um_)) {
    throw DomainError(fmt::format("wavelength must be positive, got {}", wavelength_um_));
  }
  for (const auto& [j, w] : coefficients_) {
    check_index(j);
    if (!std::isfinite(w)) throw DomainError(fmt::format("coefficient {} is not finite", j));
  }
}

double ZernikeSpectrum::coefficient(int index) const {
  const auto it = coefficients_.find(index);
  return it == coefficients_.end() ? 0.0 : it->second;
}

void ZernikeSpectrum::set(int index, double value_um) {
  check_index(index);
  if (!std::isfinite(value_um)) throw DomainError(fmt::format("coefficient {} is not finite", index));
  coefficients_[index] = value_um;
}

bool ZernikeSpectrum::is_zero() const {
  for (const auto& [j, w] : coefficients_)
    if (w != 0.0) return false;
  return true;
}

double ZernikeSpectrum::aberration_rms_um() const {
  double s = 0.0;
  for (const auto& [j, w] : coefficients_)
    if (j >= 3) s += w * w;
  return std::sqrt(s);
}

ZernikeSpectrum ZernikeSpectrum::scaled(double factor) const {
  ZernikeSpectrum out = *this;
  for (auto& [j, w] : out.coefficients_) w *= factor;
  out.validate();
  return out;
}

ZernikeSpectrum operator+(const ZernikeSpectrum& a, const ZernikeSpectrum& b) {
  if (a.wavelength_um_ != b.wavelength_um_) {
    throw DimensionError("cannot add spectra with different design wavelengths");
  }
  ZernikeSpectrum out = a;
  for (const auto& [j, w] : b.coefficients_) out.coefficients_[j] += w;
  return out;
}

ZernikeSpectrum ZernikeSpectrum::from_unnormalized(const ZernikeSpectrum& classical) {
  ZernikeSpectrum out = classical;
  for (auto& [j, w] : out.coefficients_) w /= normalization_factor(j);
  return out;
}

ZernikeSpectrum ZernikeSpectrum::to_unnormalized() const {
  ZernikeSpectrum out = *this;
  for (auto& [j, w] : out.coefficients_) w *= normalization_factor(j);
  return out;
}

std::string ZernikeSpectrum::to_json() const {
  nlohmann::ordered_json doc;
  doc["wavelength_um"] = wavelength_um_;
  auto coeffs = nlohmann::ordered_json::object();
  for (const auto& [j, w] : coefficients_) coeffs[std::to_string(j)] = w;
  doc["coefficients"] = coeffs;
  return doc.dump();
}

ZernikeSpectrum ZernikeSpectrum::from_json(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(fmt::format("spectrum document is not valid JSON: {}", e.what()));
  }
  if (!doc.is_object()) throw ConfigError("spectrum document must be a JSON object");
  const double wavelength = doc.value("wavelength_um", kDefaultWavelengthUm);
  std::map<int, double> coeffs;
  if (doc.contains("coefficients")) {
    const auto& c = doc.at("coefficients");
    if (!c.is_object()) throw ConfigError("\"coefficients\" must be an object keyed by index");
    for (const auto& [key, value] : c.items()) {
      std::size_t used = 0;
      int index = -1;
      try {
        index = std::stoi(key, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != key.size()) throw ConfigError(fmt::format("bad Zernike index key '{}'", key));
      if (!value.is_number()) throw ConfigError(fmt::format("coefficient '{}' is not a number", key));
      if (!coeffs.emplace(index, value.get<double>()).second) {
        throw ConfigError(fmt::format("duplicate Zernike index {}", index));
      }
    }
  }
  try {
    return ZernikeSpectrum(wavelength, std::move(coeffs));
  } catch (const DomainError& e) {
    throw ConfigError(e.what());
  }
}

ZernikeSpectrum ZernikeSpectrum::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError(fmt::format("cannot open spectrum file '{}'", path));
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json(ss.str());
}

void ZernikeSpectrum::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw DataError(fmt::format("cannot write spectrum file '{}'", path));
  out << to_json() << '\n';
}

// --- WavefrontMap ------------------------------------------------------------

WavefrontMap::WavefrontMap(int grid_size, double pupil_radius_mm)
    : grid_size_(grid_size), pupil_radius_mm_(pupil_radius_mm) {
  if (grid_size < 64 || grid_size % 2 != 0) {
    throw DimensionError(fmt::format("wavefront grid must be even and >= 64, got {}", grid_size));
  }
  if (!(pupil_radius_mm > 0.0)) {
    throw DomainError(fmt::format("pupil radius must be positive, got {}", pupil_radius_mm));
  }
  const auto n = static_cast<std::size_t>(grid_size);
  values_ = Array2D<double>(n, n, 0.0);
  mask_ = Array2D<std::uint8_t>(n, n, 0);
  const double half = 0.5 * grid_size;
  for (int r = 0; r < grid_size; ++r) {
    const double y = (r + 0.5 - half) / half;
    for (int c = 0; c < grid_size; ++c) {
      const double x = (c + 0.5 - half) / half;
      if (std::hypot(x, y) <= 1.0) {
        mask_(r, c) = 1;
        ++pupil_samples_;
      }
    }
  }
}

void WavefrontMap::set(int row, int col, double value_um) {
  if (!inside(row, col)) {
    throw DomainError(fmt::format("sample ({}, {}) lies outside the pupil", row, col));
  }
  values_(row, col) = value_um;
}

WavefrontMap synthesize_wavefront(const ZernikeSpectrum& spectrum, int grid_size,
                                  double pupil_radius_mm) {
  WavefrontMap map(grid_size, pupil_radius_mm);
  if (spectrum.empty()) return map;

  std::vector<std::pair<ZernikeOrder, double>> terms;
  for (const auto& [j, w] : spectrum.coefficients()) terms.emplace_back(zernike_order(j), w);

  const auto s = pupil_samples(grid_size);
  for (std::size_t i = 0; i < s.rho.size(); ++i) {
    double w = 0.0;
    for (const auto& [order, coeff] : terms) w += coeff * basis_unchecked(order, s.rho[i], s.phi[i]);
    map.set(s.row[i], s.col[i], w);
  }
  return map;
}

ZernikeSpectrum decompose_wavefront(const WavefrontMap& map, int max_index, double wavelength_um) {
  check_index(max_index);
  constexpr std::size_t kMinSamples = 64 * 64;
  if (map.pupil_sample_count() < kMinSamples) {
    throw DimensionError(fmt::format("decomposition needs >= {} pupil samples, map has {}",
                                     kMinSamples, map.pupil_sample_count()));
  }
  const auto s = pupil_samples(map.grid_size());
  std::map<int, double> coeffs;
  for (int j = 0; j <= max_index; ++j) {
    const auto order = zernike_order(j);
    double acc = 0.0;
    for (std::size_t i = 0; i < s.rho.size(); ++i) {
      acc += map(s.row[i], s.col[i]) * basis_unchecked(order, s.rho[i], s.phi[i]);
    }
    coeffs[j] = acc / static_cast<double>(s.rho.size());
  }
  return ZernikeSpectrum(wavelength_um, std::move(coeffs));
}

double basis_inner_product(int a, int b, int grid_size) {
  const auto oa = zernike_order(a);
  const auto ob = zernike_order(b);
  const auto s = pupil_samples(grid_size);
  double acc = 0.0;
  for (std::size_t i = 0; i < s.rho.size(); ++i) {
    acc += basis_unchecked(oa, s.rho[i], s.phi[i]) * basis_unchecked(ob, s.rho[i], s.phi[i]);
  }
  return acc / static_cast<double>(s.rho.size());
}

}  // namespace optithreat
