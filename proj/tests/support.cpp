#include "support.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <numeric>
#include <sstream>

namespace oracle {

using optithreat::PredictionRecord;

double zernike(int j, double r, double t) {
  const double r2 = r * r, r3 = r2 * r, r4 = r2 * r2;
  switch (j) {
    case 0: return 1.0;
    case 1: return 2.0 * r * std::sin(t);
    case 2: return 2.0 * r * std::cos(t);
    case 3: return std::sqrt(6.0) * r2 * std::sin(2 * t);
    case 4: return std::sqrt(3.0) * (2 * r2 - 1);
    case 5: return std::sqrt(6.0) * r2 * std::cos(2 * t);
    case 6: return std::sqrt(8.0) * r3 * std::sin(3 * t);
    case 7: return std::sqrt(8.0) * (3 * r3 - 2 * r) * std::sin(t);
    case 8: return std::sqrt(8.0) * (3 * r3 - 2 * r) * std::cos(t);
    case 9: return std::sqrt(8.0) * r3 * std::cos(3 * t);
    case 10: return std::sqrt(10.0) * r4 * std::sin(4 * t);
    case 11: return std::sqrt(10.0) * (4 * r4 - 3 * r2) * std::sin(2 * t);
    case 12: return std::sqrt(5.0) * (6 * r4 - 6 * r2 + 1);
    case 13: return std::sqrt(10.0) * (4 * r4 - 3 * r2) * std::cos(2 * t);
    case 14: return std::sqrt(10.0) * r4 * std::cos(4 * t);
    default: return std::nan("");
  }
}

double chat(double v) {
  if (v >= 1.0) return 0.0;
  return 2.0 / std::numbers::pi * (std::acos(v) - v * std::sqrt(1.0 - v * v));
}

double mahajan(double rms_um, double wavelength_um) {
  const double a = 2.0 * std::numbers::pi * rms_um / wavelength_um;
  return std::exp(-a * a);
}

namespace {

// Sum of Re(OTF) / OTF(0) with the optical axis moved to index 0.
double signed_otf_volume(const optithreat::Psf& psf) {
  const int m = static_cast<int>(psf.size());
  auto* buf = fftw_alloc_complex(static_cast<std::size_t>(m) * m);
  for (int r = 0; r < m; ++r) {
    for (int c = 0; c < m; ++c) {
      const int rs = (r + m / 2) % m, cs = (c + m / 2) % m;
      buf[r * m + c][0] = psf.samples(rs, cs);
      buf[r * m + c][1] = 0.0;
    }
  }
  auto plan = fftw_plan_dft_2d(m, m, buf, buf, FFTW_FORWARD, FFTW_ESTIMATE);
  fftw_execute(plan);
  double sum = 0.0;
  for (int i = 0; i < m * m; ++i) sum += buf[i][0];
  const double dc = buf[0][0];
  fftw_destroy_plan(plan);
  fftw_free(buf);
  return sum / dc;
}

}  // namespace

double signed_otf_volume_ratio(const optithreat::Psf& aberrated, const optithreat::Psf& reference) {
  return signed_otf_volume(aberrated) / signed_otf_volume(reference);
}

optithreat::ZernikeSpectrum random_spectrum(std::mt19937_64& rng, double rms_um, int max_index,
                                            double wavelength_um) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::map<int, double> c;
  double norm = 0.0;
  for (int j = 3; j <= max_index; ++j) {
    c[j] = g(rng);
    norm += c[j] * c[j];
  }
  for (auto& [j, v] : c) v *= rms_um / std::sqrt(norm);
  return optithreat::ZernikeSpectrum(wavelength_um, c);
}

double brute_force_ece(const std::vector<PredictionRecord>& records, int bins, int ignore_id) {
  std::vector<std::vector<std::pair<double, bool>>> members(bins);
  std::size_t total = 0;
  for (const auto& r : records) {
    for (std::size_t p = 0; p < r.ground_truth.size(); ++p) {
      if (r.ground_truth[p] == ignore_id) continue;
      int best = 0;
      for (int k = 1; k < r.num_classes; ++k) {
        if (r.probabilities[p * r.num_classes + k] > r.probabilities[p * r.num_classes + best]) {
          best = k;
        }
      }
      const double conf = r.probabilities[p * r.num_classes + best];
      // bin b holds [b/B, (b+1)/B); the last bin also takes confidence 1
      int b = -1;
      for (int i = 0; i < bins; ++i) {
        const double lo = static_cast<double>(i) / bins, hi = static_cast<double>(i + 1) / bins;
        if ((conf >= lo && conf < hi) || (i == bins - 1 && conf >= lo)) {
          b = i;
          break;
        }
      }
      members[b].push_back({conf, best == r.ground_truth[p]});
      ++total;
    }
  }
  double e = 0.0;
  for (const auto& m : members) {
    if (m.empty()) continue;
    double conf = 0.0, acc = 0.0;
    for (const auto& [c, ok] : m) {
      conf += c;
      acc += ok ? 1.0 : 0.0;
    }
    e += static_cast<double>(m.size()) / total * std::abs(acc / m.size() - conf / m.size());
  }
  return e;
}

double brute_force_miou(const std::vector<PredictionRecord>& records, int ignore_id) {
  const int k = records.front().num_classes;
  std::vector<double> inter(k), uni(k);
  std::vector<bool> present(k);
  for (const auto& r : records) {
    for (std::size_t p = 0; p < r.ground_truth.size(); ++p) {
      const int t = r.ground_truth[p];
      if (t == ignore_id) continue;
      const auto* pr = r.probabilities.data() + p * k;
      const int pred = static_cast<int>(std::max_element(pr, pr + k) - pr);
      present[t] = true;
      for (int c = 0; c < k; ++c) {
        const bool in_t = t == c, in_p = pred == c;
        inter[c] += in_t && in_p;
        uni[c] += in_t || in_p;
      }
    }
  }
  double s = 0.0;
  int n = 0;
  for (int c = 0; c < k; ++c) {
    if (!present[c]) continue;
    s += inter[c] / uni[c];
    ++n;
  }
  return s / n;
}

ShapleyEstimate permutation_shapley(int n, const std::function<double(std::uint32_t)>& value,
                                    std::size_t permutations, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<double> sum(n), sum2(n);
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t p = 0; p < permutations; ++p) {
    std::shuffle(order.begin(), order.end(), rng);
    std::uint32_t mask = 0;
    double prev = value(mask);
    for (int i : order) {
      mask |= 1u << i;
      const double cur = value(mask);
      sum[i] += cur - prev;
      sum2[i] += (cur - prev) * (cur - prev);
      prev = cur;
    }
  }
  ShapleyEstimate e;
  const double np = static_cast<double>(permutations);
  for (int i = 0; i < n; ++i) {
    const double mean = sum[i] / np;
    const double var = std::max(sum2[i] / np - mean * mean, 0.0);
    e.mean.push_back(mean);
    e.stderr_.push_back(std::sqrt(var / np));
  }
  return e;
}

PredictionRecord make_record(int height, int width, int classes, std::vector<int> labels,
                             std::vector<float> probs, std::string id) {
  PredictionRecord r;
  r.id = std::move(id);
  r.height = height;
  r.width = width;
  r.num_classes = classes;
  r.ground_truth = std::move(labels);
  r.probabilities = std::move(probs);
  return r;
}

PredictionRecord random_record(std::mt19937_64& rng, int height, int width, int classes,
                               double ignore_fraction) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> cls(0, classes - 1);
  PredictionRecord r;
  r.id = "random";
  r.height = height;
  r.width = width;
  r.num_classes = classes;
  for (int p = 0; p < height * width; ++p) {
    r.ground_truth.push_back(u(rng) < ignore_fraction ? 255 : cls(rng));
    std::vector<double> w(classes);
    double s = 0.0;
    for (auto& v : w) {
      v = -std::log(u(rng) + 1e-12);
      s += v;
    }
    for (double v : w) r.probabilities.push_back(static_cast<float>(v / s));
  }
  return r;
}

std::filesystem::path temp_dir(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / ("optithreat_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace oracle
