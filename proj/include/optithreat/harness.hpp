#pragma once

// Sweep orchestration: configuration, reproducible spectrum sampling, batch
// perturbation, metric collection, persistence and envelope analysis.
//
// Output directory layout (all CSVs use 17 significant digits):
//
//   optical.csv                 id,w<j>...,D_x_max,D_y_max,mtf_hn_x,mtf_hn_y,sr_x,sr_y,oig_x,oig_y
//   eval.csv                    batch_id,spectrum_id,miou,ece,mece,confidence,accuracy,pixels
//   eval_per_class.csv          spectrum_id,class,iou,ece
//   reliability.csv             spectrum_id,bin,lower,upper,count,confidence,accuracy
//   failures.csv                id,error
//   config.json                 canonical configuration
//   run.json                    hash, timestamps and version (not deterministic)
//   perturbed/<id>/<image>.*    perturbed dataset images
//
// Dataset contract: <dataset>/images/<image>.png|.npy, optional
// <dataset>/labels/<image>.png (8-bit class ids, 255 = ignore). Predictions
// for a perturbed batch are read from <predictions>/<id>/<image>.npy with
// shape (H, W, classes).

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "optithreat/evalmetrics.hpp"
#include "optithreat/imaging.hpp"
#include "optithreat/metrics.hpp"
#include "optithreat/shapley.hpp"
#include "optithreat/stats.hpp"

namespace optithreat {

inline constexpr const char* kVersion = "0.1.0";
inline constexpr const char* kOutputRootEnv = "OPTITHREAT_OUTPUT_ROOT";

enum class SamplingMode { Uniform, Grid };

struct CoefficientRange {
  int index = 0;
  double min_um = 0.0;
  double max_um = 0.0;
};

struct SweepConfig {
  std::vector<CoefficientRange> ranges;  // empty -> [-lambda, lambda] for 3, 4, 5
  SamplingMode mode = SamplingMode::Uniform;
  std::size_t count = 200;               // uniform mode
  std::size_t grid_points = 9;           // per axis, grid mode
  std::uint64_t seed = 0;
  OpticalConfig optics;
  std::string dataset;
  std::string predictions;
  std::string output = "out";
  int envelope_bins = 20;
  int reliability_bins = kDefaultReliabilityBins;
  int ignore_id = kDefaultIgnoreId;
  double kernel_energy = kDefaultKernelEnergy;
  unsigned threads = 0;                  // 0 -> hardware concurrency

  /// Fills default ranges and checks every field. Throws ConfigError.
  void validate();

  /// Number of spectra the sweep visits.
  std::size_t sample_count() const;

  /// JSON with sorted keys. Excludes output and threads, which do not
  /// affect results.
  std::string canonical_json() const;
  /// SHA-256 of canonical_json(), lowercase hex.
  std::string hash() const;

  std::string to_json() const;  // full document, including output/threads
  static SweepConfig from_json(const std::string& text);
  static SweepConfig load(const std::string& path);
};

std::vector<CoefficientRange> default_ranges(double wavelength_um);

/// Stateless counter-based generator: every (seed, stream, draw) triple maps
/// to one value, independent of evaluation order.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed) : seed_(seed) {}
  std::uint64_t bits(std::uint64_t stream, std::uint64_t draw) const;
  /// Uniform on [0, 1) with 53 random bits.
  double uniform(std::uint64_t stream, std::uint64_t draw) const;

 private:
  std::uint64_t seed_;
};

/// Spectrum of sample `id`: uniform draws per range, or the id-th node of
/// the equidistant grid (last range varies fastest).
ZernikeSpectrum sample_spectrum(const SweepConfig& config, std::size_t id);
std::vector<GridPoint> sample_spectra(const SweepConfig& config);

std::string sample_name(std::size_t id);

struct DatasetImage {
  Image image;
  std::filesystem::path source;
  std::optional<Array2D<std::uint8_t>> labels;
};

struct Dataset {
  std::string name;
  std::vector<DatasetImage> images;  // sorted by id
  bool has_labels() const;
};

/// Throws DataError when the images directory is missing or empty, or a
/// label map does not match its image.
Dataset load_dataset(const std::filesystem::path& root);

/// Prediction records for every labelled image from `dir`/<image>.npy.
std::vector<PredictionRecord> load_predictions(const std::filesystem::path& dir,
                                               const Dataset& dataset);

struct SampleRow {
  std::size_t id = 0;
  ZernikeSpectrum spectrum;
  OpticalReport optical;
  std::optional<EvalReport> eval;
};

struct SampleFailure {
  std::size_t id = 0;
  std::string message;
};

struct RunMetadata {
  std::string config_hash;
  std::string started_utc;
  std::string finished_utc;
  std::string version = kVersion;
  std::size_t resumed_from = 0;  // rows already present at start
};

struct SweepResult {
  std::vector<int> indices;  // coefficient columns
  std::vector<SampleRow> rows;
  std::vector<SampleFailure> failures;
  RunMetadata metadata;
  bool has_eval() const;
};

/// Runs (or resumes) a sweep into config.output. Rows are committed in id
/// order, so an interrupted run restarts after its last complete row.
/// Throws DataError for a missing dataset, ConfigError when the output
/// directory holds a run with a different configuration hash.
SweepResult run_sweep(SweepConfig config);

/// Reads the CSVs of a finished or partial run.
SweepResult load_sweep_result(const std::filesystem::path& dir);

/// Output directory for `path`: relative paths are placed under
/// $OPTITHREAT_OUTPUT_ROOT when it is set.
std::filesystem::path resolve_output(const std::string& path);

struct EnvelopeBin {
  double lower = 0.0;
  double upper = 0.0;
  std::optional<BoxStats> stats;  // empty bins are gaps
};

/// Equal-width bins over [min x, max x]; the top edge belongs to the last
/// bin. Throws DomainError when all x coincide, on mismatched lengths,
/// non-finite values or bins < 1.
std::vector<EnvelopeBin> envelope(std::span<const double> x, std::span<const double> y, int bins);

/// Value of a named column for one row: w<j>, D (max over axes), D_x, D_y,
/// mtf_hn, sr, oig (axis means) or their _x/_y forms, and the eval columns
/// miou, ece, mece, confidence, accuracy (empty without an EvalReport).
/// Throws ConfigError for unknown names.
std::optional<double> row_value(const SampleRow& row, const std::string& name);

}  // namespace optithreat
