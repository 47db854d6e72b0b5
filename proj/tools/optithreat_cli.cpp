// optithreat: command-line front end for sweeps, Shapley analysis, edge
// validation, single-image perturbation, evaluation and plotting.
//
// Exit codes: 0 success, 1 configuration error, 2 data error, 3 numeric
// failure.

#include <CLI11.hpp>
#include <fmt/format.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "optithreat/evalmetrics.hpp"
#include "optithreat/harness.hpp"
#include "optithreat/imageio.hpp"
#include "optithreat/imaging.hpp"
#include "optithreat/metrics.hpp"
#include "optithreat/plots.hpp"
#include "optithreat/shapley.hpp"

namespace fs = std::filesystem;
using namespace optithreat;

namespace {

enum Exit { kOk = 0, kConfig = 1, kData = 2, kNumeric = 3 };

struct OpticsFlags {
  std::optional<double> wavelength, pupil_radius, distance, pixel_pitch;
  std::optional<int> grid, pad;

  void attach(CLI::App* app) {
    app->add_option("--wavelength", wavelength, "wavelength in um");
    app->add_option("--pupil-radius", pupil_radius, "pupil radius in mm");
    app->add_option("--distance", distance, "propagation distance in mm");
    app->add_option("--grid", grid, "pupil grid size N");
    app->add_option("--pad", pad, "zero-padding factor");
    app->add_option("--pixel-pitch", pixel_pitch, "sensor pixel pitch in um");
  }

  void apply(OpticalConfig& c) const {
    if (wavelength) c.wavelength_um = *wavelength;
    if (pupil_radius) c.pupil_radius_mm = *pupil_radius;
    if (distance) c.propagation_distance_mm = *distance;
    if (grid) c.grid_size = *grid;
    if (pad) c.pad_factor = *pad;
    if (pixel_pitch) c.pixel_pitch_um = *pixel_pitch;
  }
};

struct SweepFlags {
  std::string config;
  std::optional<std::size_t> count, grid_points;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> mode, dataset, predictions, output;
  std::optional<int> bins, reliability_bins;
  std::optional<unsigned> threads;
  std::vector<std::string> ranges;
  OpticsFlags optics;

  void attach(CLI::App* app) {
    app->add_option("-c,--config", config, "JSON configuration file")->check(CLI::ExistingFile);
    app->add_option("--count", count, "Monte-Carlo sample count");
    app->add_option("--grid-points", grid_points, "grid nodes per coefficient");
    app->add_option("--seed", seed, "RNG seed");
    app->add_option("--mode", mode, "uniform or grid");
    app->add_option("--dataset", dataset, "dataset directory");
    app->add_option("--predictions", predictions, "prediction root directory");
    app->add_option("-o,--output", output, "output directory");
    app->add_option("--bins", bins, "envelope bins");
    app->add_option("--reliability-bins", reliability_bins, "ECE bins");
    app->add_option("--threads", threads, "worker threads (0 = all cores)");
    app->add_option("--range", ranges, "coefficient range j:min_um:max_um (repeatable)");
    optics.attach(app);
  }

  SweepConfig build() const {
    SweepConfig c = config.empty() ? SweepConfig{} : SweepConfig::load(config);
    optics.apply(c.optics);
    if (count) c.count = *count;
    if (grid_points) c.grid_points = *grid_points;
    if (seed) c.seed = *seed;
    if (mode) {
      if (*mode == "uniform") {
        c.mode = SamplingMode::Uniform;
      } else if (*mode == "grid") {
        c.mode = SamplingMode::Grid;
      } else {
        throw ConfigError(fmt::format("unknown sampling mode '{}'", *mode));
      }
    }
    if (dataset) c.dataset = *dataset;
    if (predictions) c.predictions = *predictions;
    if (output) c.output = *output;
    if (bins) c.envelope_bins = *bins;
    if (reliability_bins) c.reliability_bins = *reliability_bins;
    if (threads) c.threads = *threads;
    if (!ranges.empty()) {
      c.ranges.clear();
      for (const auto& r : ranges) {
        const auto a = r.find(':'), b = r.rfind(':');
        if (a == std::string::npos || a == b) {
          throw ConfigError(fmt::format("range '{}' must be j:min:max", r));
        }
        try {
          c.ranges.push_back({std::stoi(r.substr(0, a)), std::stod(r.substr(a + 1, b - a - 1)),
                              std::stod(r.substr(b + 1))});
        } catch (const std::logic_error&) {
          throw ConfigError(fmt::format("range '{}' must be j:min:max", r));
        }
      }
    }
    c.validate();
    return c;
  }
};

ZernikeSpectrum load_spectrum(const std::string& path) {
  try {
    return ZernikeSpectrum::load(path);
  } catch (const DataError&) {
    throw;
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(fmt::format("{}: {}", path, e.what()));
  }
}

double rms_difference(const MtfCurve& measured, const MtfCurve& model, double fmax) {
  double s = 0.0;
  int n = 0;
  for (std::size_t i = 0; i < measured.frequency.size(); ++i) {
    const double f = measured.frequency[i];
    if (f > fmax) break;
    // model curve on its own grid, linear interpolation
    const auto& mf = model.frequency;
    const auto it = std::upper_bound(mf.begin(), mf.end(), f);
    if (it == mf.begin() || it == mf.end()) continue;
    const auto k = static_cast<std::size_t>(it - mf.begin());
    const double t = (f - mf[k - 1]) / (mf[k] - mf[k - 1]);
    const double m = model.value[k - 1] + t * (model.value[k] - model.value[k - 1]);
    s += (measured.value[i] - m) * (measured.value[i] - m);
    ++n;
  }
  if (n == 0) throw AnalysisError("no overlapping frequencies to compare");
  return std::sqrt(s / n);
}

int run_sweep_cmd(const SweepFlags& flags, bool plots) {
  const auto config = flags.build();
  fmt::print("config hash {}\n", config.hash());
  const auto t0 = std::chrono::steady_clock::now();
  const auto result = run_sweep(config);
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  fmt::print("{} rows, {} failures ({} resumed) in {:.1f} s\n", result.rows.size(),
             result.failures.size(), result.metadata.resumed_from, secs);
  if (plots) {
    const auto files = emit_plots(result, resolve_output(config.output) / "plots",
                                  result.metadata.config_hash, config.envelope_bins, std::cerr);
    fmt::print("{} plot files\n", files.size());
  }
  return result.failures.empty() ? kOk : kNumeric;
}

int run_shapley_cmd(const SweepFlags& flags, const std::vector<std::string>& merit_names) {
  auto config = flags.build();
  if (!flags.mode) config.mode = SamplingMode::Grid;
  const auto grid = sample_spectra(config);
  std::vector<int> features;
  for (const auto& r : config.ranges) features.push_back(r.index);

  const OpticalModel model(config.optics);
  OpticalReportCache cache(model);
  std::vector<NamedMerit> merits;
  for (const auto& name : merit_names) {
    const auto m = merit_from_string(name);
    merits.push_back({to_string(m), cache.merit(m)});
  }
  const auto t0 = std::chrono::steady_clock::now();
  const auto results = shapley_distribution(grid, features, merits, {}, config.threads);
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  const auto out = resolve_output(config.output);
  fs::create_directories(out);
  write_shapley_csv((out / "shapley.csv").string(), results);
  emit_shapley_plots(results, out / "plots", config.hash());
  fmt::print("{} grid points, {} optical evaluations in {:.1f} s\n", grid.size(),
             cache.evaluations(), secs);
  std::size_t failures = 0;
  for (const auto& d : results) {
    failures += d.failures.size();
    for (const auto& s : d.summarize()) {
      fmt::print("{:<8} w{}  median phi {:+.4e}  median |phi| {:.4e}\n", d.merit, s.feature,
                 s.phi.median, s.abs_phi.median);
    }
    for (const auto& f : d.failures) {
      fmt::print(stderr, "{} grid point {} failed: {}\n", d.merit, f.grid_point_id, f.message);
    }
  }
  return failures == 0 ? kOk : kNumeric;
}

struct EdgeFlags {
  std::string image, roi, reference, spectrum, output;
  bool synthetic = false;
  double angle = 5.0;
  int size = 320;
  OpticsFlags optics;
};

int run_edge_cmd(const EdgeFlags& f) {
  OpticalConfig oc;
  f.optics.apply(oc);
  oc.validate();
  std::optional<MtfCurve> measured_x, measured_y;
  std::optional<Psf> psf;
  if (!f.spectrum.empty()) psf = simulate_psf(load_spectrum(f.spectrum), oc);

  if (f.synthetic) {
    if (!psf) throw ConfigError("--synthetic needs --spectrum");
    const auto kernel = psf_to_sensor_kernel(*psf);
    const int s = f.size;
    for (Axis axis : {Axis::Horizontal, Axis::Vertical}) {
      const auto clean = render_slanted_edge(s, s, f.angle, axis, 0.2, 0.8);
      const auto blurred = perturb_image(clean, kernel);
      const Roi roi = axis == Axis::Horizontal ? Roi{s * 3 / 10, s / 8, s * 2 / 5, s * 3 / 4}
                                               : Roi{s / 8, s * 3 / 10, s * 3 / 4, s * 2 / 5};
      const auto net = net_mtf(slanted_edge_mtf(blurred, roi), slanted_edge_mtf(clean, roi));
      (axis == Axis::Horizontal ? measured_x : measured_y) = net;
    }
  } else {
    if (f.image.empty() || f.roi.empty()) throw ConfigError("need --image and --roi, or --synthetic");
    const auto img = io::read_image(f.image);
    const auto roi = Roi::parse(f.roi);
    const auto edge = slanted_edge_mtf(img, roi);
    fmt::print("edge angle {:.2f} deg, axis {}\n", edge.edge_angle_deg, to_string(edge.axis));
    MtfCurve curve = edge.mtf;
    if (!f.reference.empty()) curve = net_mtf(edge, slanted_edge_mtf(io::read_image(f.reference), roi));
    (edge.axis == Axis::Horizontal ? measured_x : measured_y) = curve;
  }

  if (!f.output.empty()) fs::create_directories(f.output);
  for (const auto* m : {&measured_x, &measured_y}) {
    if (!*m) continue;
    const auto& curve = **m;
    const auto name = to_string(curve.axis);
    if (!f.output.empty()) {
      io::write_mtf_csv((fs::path(f.output) / fmt::format("edge_mtf_{}.csv", name)).string(), curve);
    }
    if (psf) {
      const auto model = compute_mtf(*psf, curve.axis);
      const double rms = rms_difference(curve, model, 0.4);
      fmt::print("{}: RMS deviation from model MTF up to 0.8 Nyquist = {:.4f}\n", name, rms);
    } else {
      fmt::print("{}: MTF at half Nyquist = {:.4f}\n", name, mtf_at_half_nyquist(curve));
    }
  }
  return kOk;
}

int run_perturb_cmd(const std::string& spectrum, const std::string& input,
                    const std::string& output, const std::string& psf_png,
                    const std::string& mtf_csv, double energy, const OpticsFlags& of) {
  OpticalConfig oc;
  of.apply(oc);
  oc.validate();
  const auto s = load_spectrum(spectrum);
  const auto psf = simulate_psf(s, oc);
  const auto img = io::read_image(input);
  const auto out = s.is_zero() ? img : perturb_image(img, psf, energy);
  if (fs::path(output).extension() == ".npy") {
    io::write_npy_image(output, out);
  } else {
    io::write_png(output, out, 16);
  }
  if (!psf_png.empty()) io::write_psf_png(psf_png, psf);
  if (!mtf_csv.empty()) io::write_mtf_csv(mtf_csv, compute_mtf(psf, Axis::Horizontal));
  const auto report = OpticalModel(oc).evaluate(s);
  fmt::print("SR {:.4f}/{:.4f}  OIG {:.4f}/{:.4f}  MTF@hn {:.4f}/{:.4f}  D {:.4f}/{:.4f}\n",
             report.strehl_x, report.strehl_y, report.oig_x, report.oig_y,
             report.mtf_half_nyquist_x, report.mtf_half_nyquist_y, report.refractive_power_max_x,
             report.refractive_power_max_y);
  return kOk;
}

int run_eval_cmd(const std::string& dataset_dir, const std::string& predictions, int bins,
                 int ignore, const std::string& output) {
  const auto dataset = load_dataset(dataset_dir);
  const auto records = load_predictions(predictions, dataset);
  const auto r = evaluate_records(records, bins, ignore);
  fmt::print("mIoU {:.6f}  ECE {:.6f}  mECE {:.6f}  pixels {}\n", r.iou.miou, r.calibration.ece,
             r.calibration.mece, r.pixel_count);
  if (!output.empty()) {
    nlohmann::json doc;
    doc["miou"] = r.iou.miou;
    doc["ece"] = r.calibration.ece;
    doc["mece"] = r.calibration.mece;
    doc["pixels"] = r.pixel_count;
    auto per_class = nlohmann::json::array();
    for (std::size_t c = 0; c < r.iou.per_class.size(); ++c) {
      auto num = [](double v) { return std::isnan(v) ? nlohmann::json() : nlohmann::json(v); };
      per_class.push_back({{"class", c},
                           {"iou", num(r.iou.per_class[c])},
                           {"ece", num(r.calibration.per_class_ece[c])}});
    }
    doc["per_class"] = per_class;
    auto bins_json = nlohmann::json::array();
    for (const auto& b : r.calibration.bins) {
      bins_json.push_back({{"lower", b.lower},
                           {"upper", b.upper},
                           {"count", b.count},
                           {"confidence", b.mean_confidence},
                           {"accuracy", b.mean_accuracy}});
    }
    doc["bins"] = bins_json;
    std::ofstream(output) << doc.dump(2) << "\n";
  }
  return kOk;
}

int run_plot_cmd(const std::string& run_dir, int bins) {
  const fs::path dir = resolve_output(run_dir);
  const auto result = load_sweep_result(dir);
  const auto files = emit_plots(result, dir / "plots", result.metadata.config_hash, bins, std::cerr);
  for (const auto& f : files) fmt::print("{}\n", f.string());
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Optical threat model toolkit: Zernike wavefronts, PSF/MTF merit functions, "
               "Shapley sensitivity and perturbation sweeps"};
  app.require_subcommand(1);

  SweepFlags sweep_flags;
  bool no_plots = false;
  auto* sweep = app.add_subcommand("sweep", "sample spectra, perturb the dataset, collect metrics");
  sweep_flags.attach(sweep);
  sweep->add_flag("--no-plots", no_plots, "skip plot emission");

  SweepFlags shapley_flags;
  std::vector<std::string> merits{"sr", "oig", "mtf_hn", "D"};
  auto* shapley = app.add_subcommand("shapley", "exact Shapley distributions over a spectrum grid");
  shapley_flags.attach(shapley);
  shapley->add_option("--merits", merits, "merit functions")->delimiter(',');

  EdgeFlags edge;
  auto* validate = app.add_subcommand("validate-edge", "slanted-edge MTF measurement");
  validate->add_option("--image", edge.image, "image with a slanted edge");
  validate->add_option("--roi", edge.roi, "x,y,w,h");
  validate->add_option("--reference", edge.reference, "undistorted image for the net MTF");
  validate->add_option("--spectrum", edge.spectrum, "model spectrum JSON to compare against");
  validate->add_flag("--synthetic", edge.synthetic, "render and blur a synthetic edge");
  validate->add_option("--angle", edge.angle, "synthetic edge slant in degrees");
  validate->add_option("--size", edge.size, "synthetic image size");
  validate->add_option("-o,--output", edge.output, "directory for MTF CSVs");
  edge.optics.attach(validate);

  std::string spectrum, input, output, psf_png, mtf_csv;
  double energy = kDefaultKernelEnergy;
  OpticsFlags perturb_optics;
  auto* perturb = app.add_subcommand("perturb", "apply one spectrum to one image");
  perturb->add_option("--spectrum", spectrum, "spectrum JSON")->required();
  perturb->add_option("-i,--input", input, "input image (.png or .npy)")->required();
  perturb->add_option("-o,--output", output, "output image (.png or .npy)")->required();
  perturb->add_option("--psf-png", psf_png, "write the log-scaled PSF");
  perturb->add_option("--mtf-csv", mtf_csv, "write the horizontal MTF");
  perturb->add_option("--kernel-energy", energy, "kernel energy fraction");
  perturb_optics.attach(perturb);

  std::string dataset, predictions, eval_out;
  int bins = kDefaultReliabilityBins, ignore = kDefaultIgnoreId;
  auto* eval = app.add_subcommand("eval", "mIoU, ECE and mECE of one prediction set");
  eval->add_option("--dataset", dataset, "dataset directory")->required();
  eval->add_option("--predictions", predictions, "directory of <image>.npy")->required();
  eval->add_option("--bins", bins, "reliability bins");
  eval->add_option("--ignore", ignore, "ignored label id");
  eval->add_option("-o,--output", eval_out, "JSON report");

  std::string run_dir;
  int plot_bins = 20;
  auto* plot = app.add_subcommand("plot", "render SVG figures of a sweep directory");
  plot->add_option("run", run_dir, "sweep output directory")->required();
  plot->add_option("--bins", plot_bins, "envelope bins");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfig;
  }

  try {
    if (*sweep) return run_sweep_cmd(sweep_flags, !no_plots);
    if (*shapley) return run_shapley_cmd(shapley_flags, merits);
    if (*validate) return run_edge_cmd(edge);
    if (*perturb) {
      return run_perturb_cmd(spectrum, input, output, psf_png, mtf_csv, energy, perturb_optics);
    }
    if (*eval) return run_eval_cmd(dataset, predictions, bins, ignore, eval_out);
    if (*plot) return run_plot_cmd(run_dir, plot_bins);
  } catch (const ConfigError& e) {
    fmt::print(stderr, "configuration error: {}\n", e.what());
    return kConfig;
  } catch (const DomainError& e) {
    fmt::print(stderr, "configuration error: {}\n", e.what());
    return kConfig;
  } catch (const DataError& e) {
    fmt::print(stderr, "data error: {}\n", e.what());
    return kData;
  } catch (const DimensionError& e) {
    fmt::print(stderr, "data error: {}\n", e.what());
    return kData;
  } catch (const AnalysisError& e) {
    fmt::print(stderr, "data error: {}\n", e.what());
    return kData;
  } catch (const fs::filesystem_error& e) {
    fmt::print(stderr, "data error: {}\n", e.what());
    return kData;
  } catch (const NumericError& e) {
    fmt::print(stderr, "numeric failure: {}\n", e.what());
    return kNumeric;
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kData;
  }
  return kOk;
}
