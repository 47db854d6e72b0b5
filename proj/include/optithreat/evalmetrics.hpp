#pragma once

// Segmentation benchmark and calibration metrics computed from externally
// produced per-pixel class probabilities.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "optithreat/common.hpp"

namespace optithreat {

inline constexpr int kDefaultIgnoreId = 255;
inline constexpr int kDefaultReliabilityBins = 10;

/// Ground truth and per-pixel class probabilities (H x W x classes, C order).
struct PredictionRecord {
  std::string id;
  int height = 0;
  int width = 0;
  int num_classes = 0;
  std::vector<int> ground_truth;
  std::vector<float> probabilities;

  /// Shapes consistent, probabilities finite and summing to 1 +- 1e-4 per
  /// pixel. Labels must be < num_classes or equal ignore_id.
  void validate(int ignore_id = kDefaultIgnoreId) const;

  std::span<const float> pixel(std::size_t p) const {
    return {probabilities.data() + p * num_classes, static_cast<std::size_t>(num_classes)};
  }
};

struct IouResult {
  std::vector<double> per_class;    // NaN where undefined (TP + FP + FN = 0)
  std::vector<bool> in_mean;        // class present in ground truth
  double miou = 0.0;
};

struct ReliabilityBin {
  double lower = 0.0;
  double upper = 0.0;
  std::size_t count = 0;
  double mean_confidence = 0.0;
  double mean_accuracy = 0.0;
};

struct CalibrationResult {
  double ece = 0.0;                       // all evaluated pixels
  std::vector<double> per_class_ece;      // NaN for classes never argmax-assigned
  double mece = 0.0;
  std::vector<ReliabilityBin> bins;
};

struct EvalReport {
  std::string batch_id;
  std::string spectrum_id;
  IouResult iou;
  CalibrationResult calibration;
  std::size_t pixel_count = 0;

  /// Bin-cardinality-weighted mean confidence / accuracy.
  double weighted_confidence() const;
  double weighted_accuracy() const;
};

/// Confusion-matrix accumulator (rows: ground truth, cols: prediction).
class ConfusionAccumulator {
 public:
  explicit ConfusionAccumulator(int num_classes, int ignore_id = kDefaultIgnoreId);
  void add(const PredictionRecord& record);
  void merge(const ConfusionAccumulator& other);
  std::uint64_t at(int truth, int predicted) const;
  std::uint64_t valid_pixels() const noexcept { return valid_; }
  IouResult result() const;

 private:
  int classes_;
  int ignore_;
  std::vector<std::uint64_t> counts_;
  std::uint64_t valid_ = 0;
};

/// Reliability-bin accumulator for ECE over max-probability confidence.
class CalibrationAccumulator {
 public:
  CalibrationAccumulator(int num_classes, int bins, int ignore_id = kDefaultIgnoreId);
  void add(const PredictionRecord& record);
  void merge(const CalibrationAccumulator& other);
  CalibrationResult result() const;
  int bin_of(double confidence) const;

 private:
  struct Cell {
    std::uint64_t count = 0;
    double confidence = 0.0;
    double correct = 0.0;
  };
  int classes_;
  int bins_;
  int ignore_;
  std::vector<Cell> overall_;
  std::vector<Cell> per_class_;  // classes_ x bins_
};

/// Global (batch-aggregated) IoU; mIoU averages classes present in the
/// ground truth. Throws DataError when no valid pixels remain.
IouResult miou(std::span<const PredictionRecord> records, int ignore_id = kDefaultIgnoreId);

/// ECE with `bins` equal-width bins on [0, 1]; per-class ECE on pixels whose
/// argmax is that class, mECE as the unweighted mean over those classes.
CalibrationResult ece(std::span<const PredictionRecord> records, int bins = kDefaultReliabilityBins,
                      int ignore_id = kDefaultIgnoreId);

EvalReport evaluate_records(std::span<const PredictionRecord> records,
                            int bins = kDefaultReliabilityBins, int ignore_id = kDefaultIgnoreId);

/// Pearson r between weighted confidence and weighted accuracy across a
/// perturbation sweep. Needs >= 3 points; throws NumericError on zero
/// variance.
double pearson_conf_acc(std::span<const EvalReport> sweep);

/// Plain Pearson correlation of two equally long series.
double pearson(std::span<const double> x, std::span<const double> y);

}  // namespace optithreat
