#include "optithreat/shapley.hpp"

#include <fmt/format.h>
#include <fmt/os.h>

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <future>
#include <set>
#include <thread>

namespace optithreat {
namespace {

std::string describe(std::span<const int> features, CoalitionMask mask) {
  std::string s = "{";
  for (std::size_t i = 0; i < features.size(); ++i) {
    if (!(mask & (1u << i))) continue;
    if (s.size() > 1) s += ",";
    s += std::to_string(features[i]);
  }
  return s + "}";
}

// 1 / (n * C(n-1, k)) for every coalition size k.
std::vector<double> shapley_weights(int n) {
  std::vector<double> w(n);
  double binom = 1.0;
  for (int k = 0; k < n; ++k) {
    w[k] = 1.0 / (n * binom);
    binom = binom * (n - 1 - k) / (k + 1);
  }
  return w;
}

}  // namespace

ZernikeSpectrum coalition_spectrum(const ZernikeSpectrum& point, std::span<const int> features,
                                   CoalitionMask mask, const ZernikeSpectrum& baseline) {
  ZernikeSpectrum s = point;
  for (std::size_t i = 0; i < features.size(); ++i) {
    if (!(mask & (1u << i))) s.set(features[i], baseline.coefficient(features[i]));
  }
  return s;
}

CoalitionGame spectrum_game(const ZernikeSpectrum& point, std::vector<int> features,
                            SpectrumMerit merit, const ZernikeSpectrum& baseline) {
  CoalitionGame game;
  game.features = features;
  game.value = [point, features = std::move(features), merit = std::move(merit),
                baseline](CoalitionMask mask) {
    return merit(coalition_spectrum(point, features, mask, baseline));
  };
  return game;
}

ShapleyReport shapley_exact(const CoalitionGame& game) {
  const int n = static_cast<int>(game.features.size());
  if (n == 0 || n > kMaxShapleyFeatures) {
    throw DomainError(fmt::format("feature set size {} outside 1..{}", n, kMaxShapleyFeatures));
  }
  if (std::set<int>(game.features.begin(), game.features.end()).size() != game.features.size()) {
    throw DomainError("feature set contains duplicates");
  }
  if (!game.value) throw DomainError("coalition game has no value oracle");

  const CoalitionMask full = (1u << n) - 1;
  std::vector<double> v(full + 1);
  for (CoalitionMask m = 0; m <= full; ++m) {
    v[m] = game.value(m);
    if (!std::isfinite(v[m])) {
      throw NumericError(fmt::format("merit is {} for coalition {}", v[m],
                                     describe(game.features, m)));
    }
  }

  const auto w = shapley_weights(n);
  ShapleyReport r;
  r.features = game.features;
  r.phi.assign(n, 0.0);
  for (int i = 0; i < n; ++i) {
    const CoalitionMask bit = 1u << i;
    for (CoalitionMask s = 0; s <= full; ++s) {
      if (s & bit) continue;
      r.phi[i] += w[std::popcount(s)] * (v[s | bit] - v[s]);
    }
  }
  r.grand_value = v[full];
  r.empty_value = v[0];
  r.oracle_calls = v.size();
  normalize_report(r);
  return r;
}

void normalize_report(ShapleyReport& report) {
  report.phi_normalized.assign(report.phi.size(), std::nullopt);
  const auto it = std::find(report.features.begin(), report.features.end(), kNormalizingFeature);
  if (it == report.features.end()) return;
  const double ref = std::abs(report.phi[it - report.features.begin()]);
  if (ref < kNormalizationFloor) return;
  for (std::size_t i = 0; i < report.phi.size(); ++i) report.phi_normalized[i] = report.phi[i] / ref;
}

std::vector<FeatureSummary> ShapleyDistribution::summarize() const {
  std::vector<FeatureSummary> out;
  if (reports.empty()) return out;
  for (std::size_t i = 0; i < features.size(); ++i) {
    std::vector<double> phi, abs_phi, norm;
    for (const auto& r : reports) {
      phi.push_back(r.phi[i]);
      abs_phi.push_back(std::abs(r.phi[i]));
      if (r.phi_normalized[i]) norm.push_back(*r.phi_normalized[i]);
    }
    FeatureSummary s;
    s.feature = features[i];
    s.phi = box_stats(phi);
    s.abs_phi = box_stats(abs_phi);
    if (!norm.empty()) s.phi_normalized = box_stats(norm);
    out.push_back(s);
  }
  return out;
}

std::vector<ShapleyDistribution> shapley_distribution(std::span<const GridPoint> grid,
                                                      const std::vector<int>& features,
                                                      const std::vector<NamedMerit>& merits,
                                                      const ZernikeSpectrum& baseline,
                                                      unsigned threads) {
  const std::size_t jobs = grid.size() * merits.size();
  std::vector<std::optional<ShapleyReport>> slots(jobs);
  std::vector<std::string> errors(jobs);

  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t j; (j = next.fetch_add(1)) < jobs;) {
      const auto& point = grid[j / merits.size()];
      const auto& merit = merits[j % merits.size()];
      try {
        auto r = shapley_exact(spectrum_game(point.spectrum, features, merit.merit, baseline));
        r.merit = merit.label;
        r.point = point.spectrum;
        slots[j] = std::move(r);
      } catch (const std::exception& e) {
        errors[j] = e.what();
      }
    }
  };
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, std::max<std::size_t>(jobs, 1)));
  {
    std::vector<std::jthread> pool;
    for (unsigned t = 1; t < threads; ++t) pool.emplace_back(work);
    work();
  }

  std::vector<ShapleyDistribution> out(merits.size());
  for (std::size_t m = 0; m < merits.size(); ++m) {
    out[m].merit = merits[m].label;
    out[m].features = features;
  }
  for (std::size_t j = 0; j < jobs; ++j) {
    auto& d = out[j % merits.size()];
    const auto id = grid[j / merits.size()].id;
    if (slots[j]) {
      d.reports.push_back(std::move(*slots[j]));
      d.grid_point_ids.push_back(id);
    } else {
      d.failures.push_back({id, errors[j]});
    }
  }
  return out;
}

struct OpticalReportCache::Entry {
  std::shared_future<OpticalReport> result;
};

OpticalReport OpticalReportCache::report(const ZernikeSpectrum& spectrum) {
  std::map<int, double> key;
  for (const auto& [j, w] : spectrum.coefficients()) {
    if (w != 0.0) key.emplace(j, w);
  }
  std::promise<OpticalReport> promise;
  std::shared_ptr<Entry> entry;
  bool owner = false;
  {
    std::lock_guard lock(mutex_);
    auto& slot = entries_[key];
    if (!slot) {
      slot = std::make_shared<Entry>();
      slot->result = promise.get_future().share();
      owner = true;
      ++evaluations_;
    }
    entry = slot;
  }
  if (owner) {
    try {
      promise.set_value(model_.evaluate(spectrum));
    } catch (...) {
      promise.set_exception(std::current_exception());
    }
  }
  OpticalReport r = entry->result.get();
  r.spectrum = spectrum;
  return r;
}

SpectrumMerit OpticalReportCache::merit(Merit merit) {
  return [this, merit](const ZernikeSpectrum& s) { return merit_value(report(s), merit); };
}

std::size_t OpticalReportCache::evaluations() const {
  std::lock_guard lock(mutex_);
  return evaluations_;
}

void write_shapley_csv(const std::string& path, std::span<const ShapleyDistribution> results) {
  auto out = fmt::output_file(path);
  out.print("merit,feature,grid_point_id,w3,w4,w5,phi,phi_normalized\n");
  for (const auto& d : results) {
    for (std::size_t k = 0; k < d.reports.size(); ++k) {
      const auto& r = d.reports[k];
      for (std::size_t i = 0; i < r.features.size(); ++i) {
        const auto norm = r.phi_normalized[i] ? fmt::format("{:.17g}", *r.phi_normalized[i])
                                              : std::string();
        out.print("{},{},{},{:.17g},{:.17g},{:.17g},{:.17g},{}\n", d.merit, r.features[i],
                  d.grid_point_ids[k], r.point.coefficient(3), r.point.coefficient(4),
                  r.point.coefficient(5), r.phi[i], norm);
      }
    }
  }
}

}  // namespace optithreat
