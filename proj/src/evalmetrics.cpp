#include "optithreat/evalmetrics.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace optithreat {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

int argmax(std::span<const float> p) {
  return static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin());
}

}  // namespace

void PredictionRecord::validate(int ignore_id) const {
  if (height <= 0 || width <= 0 || num_classes <= 0) {
    throw DimensionError(fmt::format("record '{}' has invalid shape {}x{}x{}", id, height, width,
                                     num_classes));
  }
  const auto pixels = static_cast<std::size_t>(height) * width;
  if (ground_truth.size() != pixels || probabilities.size() != pixels * num_classes) {
    throw DimensionError(fmt::format("record '{}': label/probability shapes disagree", id));
  }
  for (std::size_t p = 0; p < pixels; ++p) {
    const int t = ground_truth[p];
    if (t != ignore_id && (t < 0 || t >= num_classes)) {
      throw DataError(fmt::format("record '{}': label {} outside 0..{}", id, t, num_classes - 1));
    }
    double s = 0.0;
    for (float v : pixel(p)) {
      if (!std::isfinite(v) || v < 0.0f) {
        throw DataError(fmt::format("record '{}': invalid probability at pixel {}", id, p));
      }
      s += v;
    }
    if (std::abs(s - 1.0) > 1e-4) {
      throw DataError(fmt::format("record '{}': probabilities at pixel {} sum to {}", id, p, s));
    }
  }
}

// --- IoU ---------------------------------------------------------------------

ConfusionAccumulator::ConfusionAccumulator(int num_classes, int ignore_id)
    : classes_(num_classes), ignore_(ignore_id),
      counts_(static_cast<std::size_t>(num_classes) * num_classes, 0) {
  if (num_classes <= 0) throw DimensionError("number of classes must be positive");
}

void ConfusionAccumulator::add(const PredictionRecord& record) {
  if (record.num_classes != classes_) {
    throw DimensionError(fmt::format("record '{}' has {} classes, expected {}", record.id,
                                     record.num_classes, classes_));
  }
  const auto pixels = record.ground_truth.size();
  for (std::size_t p = 0; p < pixels; ++p) {
    const int t = record.ground_truth[p];
    if (t == ignore_) continue;
    ++counts_[static_cast<std::size_t>(t) * classes_ + argmax(record.pixel(p))];
    ++valid_;
  }
}

void ConfusionAccumulator::merge(const ConfusionAccumulator& other) {
  if (other.classes_ != classes_) throw DimensionError("cannot merge different class counts");
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
  valid_ += other.valid_;
}

std::uint64_t ConfusionAccumulator::at(int truth, int predicted) const {
  return counts_[static_cast<std::size_t>(truth) * classes_ + predicted];
}

IouResult ConfusionAccumulator::result() const {
  if (valid_ == 0) throw DataError("no valid (non-ignored) pixels to evaluate");
  IouResult r;
  r.per_class.assign(classes_, kNaN);
  r.in_mean.assign(classes_, false);
  double sum = 0.0;
  int n = 0;
  for (int c = 0; c < classes_; ++c) {
    std::uint64_t gt = 0, pred = 0;
    for (int k = 0; k < classes_; ++k) {
      gt += at(c, k);
      pred += at(k, c);
    }
    const std::uint64_t tp = at(c, c);
    const std::uint64_t uni = gt + pred - tp;
    if (uni > 0) r.per_class[c] = static_cast<double>(tp) / static_cast<double>(uni);
    if (gt > 0) {
      r.in_mean[c] = true;
      sum += r.per_class[c];
      ++n;
    }
  }
  r.miou = sum / n;
  return r;
}

// --- calibration -------------------------------------------------------------

CalibrationAccumulator::CalibrationAccumulator(int num_classes, int bins, int ignore_id)
    : classes_(num_classes), bins_(bins), ignore_(ignore_id),
      overall_(static_cast<std::size_t>(std::max(bins, 0))),
      per_class_(static_cast<std::size_t>(std::max(bins, 0)) * std::max(num_classes, 0)) {
  if (bins < 1) throw DomainError(fmt::format("bin count must be >= 1, got {}", bins));
  if (num_classes <= 0) throw DimensionError("number of classes must be positive");
}

int CalibrationAccumulator::bin_of(double confidence) const {
  const int b = static_cast<int>(std::floor(confidence * bins_));
  return std::clamp(b, 0, bins_ - 1);
}

void CalibrationAccumulator::add(const PredictionRecord& record) {
  if (record.num_classes != classes_) {
    throw DimensionError(fmt::format("record '{}' has {} classes, expected {}", record.id,
                                     record.num_classes, classes_));
  }
  const auto pixels = record.ground_truth.size();
  for (std::size_t p = 0; p < pixels; ++p) {
    const int t = record.ground_truth[p];
    if (t == ignore_) continue;
    const auto probs = record.pixel(p);
    const int pred = argmax(probs);
    const double conf = probs[pred];
    const double correct = pred == t ? 1.0 : 0.0;
    const int b = bin_of(conf);
    for (Cell* cell : {&overall_[b], &per_class_[static_cast<std::size_t>(pred) * bins_ + b]}) {
      ++cell->count;
      cell->confidence += conf;
      cell->correct += correct;
    }
  }
}

void CalibrationAccumulator::merge(const CalibrationAccumulator& other) {
  if (other.classes_ != classes_ || other.bins_ != bins_) {
    throw DimensionError("cannot merge calibration accumulators of different shape");
  }
  auto add = [](std::vector<Cell>& a, const std::vector<Cell>& b) {
    for (std::size_t i = 0; i < a.size(); ++i) {
      a[i].count += b[i].count;
      a[i].confidence += b[i].confidence;
      a[i].correct += b[i].correct;
    }
  };
  add(overall_, other.overall_);
  add(per_class_, other.per_class_);
}

CalibrationResult CalibrationAccumulator::result() const {
  auto gap = [](std::span<const Cell> cells) {
    std::uint64_t n = 0;
    for (const auto& c : cells) n += c.count;
    if (n == 0) return kNaN;
    double e = 0.0;
    for (const auto& c : cells) {
      if (c.count == 0) continue;  // empty bins contribute zero
      const double k = static_cast<double>(c.count);
      e += k / static_cast<double>(n) * std::abs(c.correct / k - c.confidence / k);
    }
    return e;
  };

  CalibrationResult r;
  r.ece = gap(overall_);
  if (std::isnan(r.ece)) throw DataError("no valid (non-ignored) pixels to evaluate");
  r.per_class_ece.assign(classes_, kNaN);
  double sum = 0.0;
  int n = 0;
  for (int c = 0; c < classes_; ++c) {
    const auto cells = std::span<const Cell>(per_class_).subspan(static_cast<std::size_t>(c) * bins_, bins_);
    r.per_class_ece[c] = gap(cells);
    if (!std::isnan(r.per_class_ece[c])) {
      sum += r.per_class_ece[c];
      ++n;
    }
  }
  r.mece = sum / n;
  for (int b = 0; b < bins_; ++b) {
    ReliabilityBin bin;
    bin.lower = static_cast<double>(b) / bins_;
    bin.upper = static_cast<double>(b + 1) / bins_;
    bin.count = overall_[b].count;
    if (bin.count > 0) {
      bin.mean_confidence = overall_[b].confidence / static_cast<double>(bin.count);
      bin.mean_accuracy = overall_[b].correct / static_cast<double>(bin.count);
    }
    r.bins.push_back(bin);
  }
  return r;
}

// --- free functions ----------------------------------------------------------

namespace {

int class_count(std::span<const PredictionRecord> records) {
  if (records.empty()) throw DataError("at least one prediction record is required");
  const int c = records.front().num_classes;
  for (const auto& r : records) {
    if (r.num_classes != c) throw DimensionError("records disagree on the number of classes");
  }
  return c;
}

}  // namespace

IouResult miou(std::span<const PredictionRecord> records, int ignore_id) {
  ConfusionAccumulator acc(class_count(records), ignore_id);
  for (const auto& r : records) acc.add(r);
  return acc.result();
}

CalibrationResult ece(std::span<const PredictionRecord> records, int bins, int ignore_id) {
  CalibrationAccumulator acc(class_count(records), bins, ignore_id);
  for (const auto& r : records) acc.add(r);
  return acc.result();
}

EvalReport evaluate_records(std::span<const PredictionRecord> records, int bins, int ignore_id) {
  const int classes = class_count(records);
  ConfusionAccumulator conf(classes, ignore_id);
  CalibrationAccumulator cal(classes, bins, ignore_id);
  for (const auto& r : records) {
    r.validate(ignore_id);
    conf.add(r);
    cal.add(r);
  }
  EvalReport report;
  report.iou = conf.result();
  report.calibration = cal.result();
  report.pixel_count = conf.valid_pixels();
  return report;
}

double EvalReport::weighted_confidence() const {
  double s = 0.0, n = 0.0;
  for (const auto& b : calibration.bins) {
    s += static_cast<double>(b.count) * b.mean_confidence;
    n += static_cast<double>(b.count);
  }
  return s / n;
}

double EvalReport::weighted_accuracy() const {
  double s = 0.0, n = 0.0;
  for (const auto& b : calibration.bins) {
    s += static_cast<double>(b.count) * b.mean_accuracy;
    n += static_cast<double>(b.count);
  }
  return s / n;
}

double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw DimensionError("pearson: series differ in length");
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (!(sxx > 0.0) || !(syy > 0.0)) {
    throw NumericError("correlation undefined: a series has zero variance");
  }
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

double pearson_conf_acc(std::span<const EvalReport> sweep) {
  if (sweep.size() < 3) {
    throw DomainError(fmt::format("need >= 3 sweep points, got {}", sweep.size()));
  }
  std::vector<double> conf, acc;
  for (const auto& r : sweep) {
    conf.push_back(r.weighted_confidence());
    acc.push_back(r.weighted_accuracy());
  }
  return pearson(conf, acc);
}

}  // namespace optithreat
