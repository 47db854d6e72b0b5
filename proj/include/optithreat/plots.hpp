#pragma once

// SVG figures for sweeps and Shapley distributions. File names start with
// the first 12 hex digits of the configuration hash.

#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "optithreat/harness.hpp"
#include "optithreat/shapley.hpp"

namespace optithreat {

/// Optical metrics against every sampled coefficient and, when evaluation
/// rows exist, mIoU / mECE against every optical metric with envelope and
/// per-bin boxplots, plus reliability diagrams for the best and worst
/// sample. Skipped figures are reported on `notices`. Returns the files
/// written, in a fixed order.
std::vector<std::filesystem::path> emit_plots(const SweepResult& result,
                                              const std::filesystem::path& dir,
                                              const std::string& config_hash, int envelope_bins,
                                              std::ostream& notices);

/// One boxplot figure per merit: normalized phi per feature (raw phi when no
/// grid point has a defined normalization).
std::vector<std::filesystem::path> emit_shapley_plots(std::span<const ShapleyDistribution> results,
                                                      const std::filesystem::path& dir,
                                                      const std::string& config_hash);

}  // namespace optithreat
