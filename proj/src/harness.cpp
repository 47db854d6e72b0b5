#include "optithreat/harness.hpp"

#include <fmt/chrono.h>
#include <fmt/format.h>
#include <openssl/evp.h>

#include <nlohmann/json.hpp>

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <condition_variable>
#include <cstdlib>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "optithreat/imageio.hpp"

namespace optithreat {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

std::uint64_t splitmix64(std::uint64_t x) {
  x += kGolden;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::string g17(double v) { return fmt::format("{:.17g}", v); }

std::string utc_now() {
  return fmt::format("{:%Y-%m-%dT%H:%M:%SZ}",
                     std::chrono::floor<std::chrono::seconds>(std::chrono::system_clock::now()));
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(fmt::format("cannot read {}", path.string()));
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError(fmt::format("cannot write {}", path.string()));
  out << text;
}

std::vector<std::string> split(const std::string& line, char sep = ',') {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

// Complete lines of a file (a trailing fragment without newline is dropped).
std::vector<std::string> complete_lines(const fs::path& path) {
  std::vector<std::string> lines;
  if (!fs::exists(path)) return lines;
  const auto text = read_text(path);
  std::size_t start = 0;
  for (std::size_t nl; (nl = text.find('\n', start)) != std::string::npos; start = nl + 1) {
    lines.push_back(text.substr(start, nl - start));
  }
  return lines;
}

double parse_double(const std::string& s) {
  if (s == "nan") return std::nan("");
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw DataError(fmt::format("malformed number '{}'", s));
  }
}

std::size_t parse_size(const std::string& s) {
  try {
    std::size_t pos = 0;
    const auto v = std::stoull(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw DataError(fmt::format("malformed integer '{}'", s));
  }
}

std::string one_line(std::string s) {
  std::replace(s.begin(), s.end(), ',', ';');
  std::replace(s.begin(), s.end(), '\n', ' ');
  return s;
}

json optics_json(const OpticalConfig& c) {
  return {{"wavelength_um", c.wavelength_um},
          {"pupil_radius_mm", c.pupil_radius_mm},
          {"propagation_distance_mm", c.propagation_distance_mm},
          {"grid_size", c.grid_size},
          {"pad_factor", c.pad_factor},
          {"pixel_pitch_um", c.pixel_pitch_um}};
}

template <typename T>
void take(const json& doc, const char* key, T& field) {
  if (doc.contains(key)) field = doc.at(key).get<T>();
}

void reject_unknown(const json& doc, std::initializer_list<const char*> keys, const char* where) {
  for (const auto& [k, _] : doc.items()) {
    if (std::none_of(keys.begin(), keys.end(), [&](const char* x) { return k == x; })) {
      throw ConfigError(fmt::format("unknown {} key '{}'", where, k));
    }
  }
}

json config_json(const SweepConfig& c, bool full) {
  json ranges = json::object();
  for (const auto& r : c.ranges) ranges[std::to_string(r.index)] = {r.min_um, r.max_um};
  json doc = {{"ranges", ranges},
              {"mode", c.mode == SamplingMode::Grid ? "grid" : "uniform"},
              {"count", c.count},
              {"grid_points", c.grid_points},
              {"seed", c.seed},
              {"optics", optics_json(c.optics)},
              {"dataset", c.dataset},
              {"predictions", c.predictions},
              {"envelope_bins", c.envelope_bins},
              {"reliability_bins", c.reliability_bins},
              {"ignore_id", c.ignore_id},
              {"kernel_energy", c.kernel_energy}};
  if (full) {
    doc["output"] = c.output;
    doc["threads"] = c.threads;
  }
  return doc;
}

std::string sha256_hex(const std::string& text) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(text.data(), text.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw NumericError("SHA-256 computation failed");
  }
  std::string hex;
  for (unsigned int i = 0; i < len; ++i) hex += fmt::format("{:02x}", digest[i]);
  return hex;
}

}  // namespace

// --- configuration -----------------------------------------------------------

std::vector<CoefficientRange> default_ranges(double wavelength_um) {
  return {{3, -wavelength_um, wavelength_um},
          {4, -wavelength_um, wavelength_um},
          {5, -wavelength_um, wavelength_um}};
}

void SweepConfig::validate() {
  try {
    optics.validate();
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  if (optics.grid_size < kMinRefractiveGrid) {
    throw ConfigError(fmt::format("sweeps need a pupil grid of at least {}", kMinRefractiveGrid));
  }
  if (ranges.empty()) ranges = default_ranges(optics.wavelength_um);
  std::set<int> seen;
  for (const auto& r : ranges) {
    if (r.index < 0 || r.index > kMaxBasisIndex) {
      throw ConfigError(fmt::format("coefficient index {} outside 0..{}", r.index, kMaxBasisIndex));
    }
    if (!seen.insert(r.index).second) {
      throw ConfigError(fmt::format("coefficient {} listed twice", r.index));
    }
    if (!std::isfinite(r.min_um) || !std::isfinite(r.max_um) || r.min_um > r.max_um) {
      throw ConfigError(fmt::format("invalid range for coefficient {}", r.index));
    }
  }
  if (mode == SamplingMode::Uniform && count < 1) throw ConfigError("sample count must be >= 1");
  if (mode == SamplingMode::Grid && grid_points < 1) {
    throw ConfigError("grid points per axis must be >= 1");
  }
  if (envelope_bins < 1) throw ConfigError("envelope bins must be >= 1");
  if (reliability_bins < 1) throw ConfigError("reliability bins must be >= 1");
  if (!(kernel_energy > 0.0 && kernel_energy <= 1.0)) {
    throw ConfigError("kernel energy fraction must lie in (0, 1]");
  }
  if (!predictions.empty() && dataset.empty()) {
    throw ConfigError("predictions require a dataset with labels");
  }
}

std::size_t SweepConfig::sample_count() const {
  if (mode == SamplingMode::Uniform) return count;
  std::size_t n = 1;
  for (std::size_t i = 0; i < ranges.size(); ++i) n *= grid_points;
  return n;
}

std::string SweepConfig::canonical_json() const { return config_json(*this, false).dump(); }

std::string SweepConfig::hash() const { return sha256_hex(canonical_json()); }

std::string SweepConfig::to_json() const { return config_json(*this, true).dump(2) + "\n"; }

SweepConfig SweepConfig::from_json(const std::string& text) {
  SweepConfig c;
  try {
    const auto doc = json::parse(text);
    if (!doc.is_object()) throw ConfigError("configuration must be a JSON object");
    reject_unknown(doc,
                   {"ranges", "mode", "count", "grid_points", "seed", "optics", "dataset",
                    "predictions", "output", "envelope_bins", "reliability_bins", "ignore_id",
                    "kernel_energy", "threads"},
                   "configuration");
    if (doc.contains("ranges")) {
      for (const auto& [k, v] : doc.at("ranges").items()) {
        if (!v.is_array() || v.size() != 2) {
          throw ConfigError(fmt::format("range for '{}' must be [min, max]", k));
        }
        c.ranges.push_back({std::stoi(k), v[0].get<double>(), v[1].get<double>()});
      }
      std::sort(c.ranges.begin(), c.ranges.end(),
                [](const auto& a, const auto& b) { return a.index < b.index; });
    }
    if (doc.contains("mode")) {
      const auto m = doc.at("mode").get<std::string>();
      if (m == "uniform") {
        c.mode = SamplingMode::Uniform;
      } else if (m == "grid") {
        c.mode = SamplingMode::Grid;
      } else {
        throw ConfigError(fmt::format("unknown sampling mode '{}'", m));
      }
    }
    take(doc, "count", c.count);
    take(doc, "grid_points", c.grid_points);
    take(doc, "seed", c.seed);
    take(doc, "dataset", c.dataset);
    take(doc, "predictions", c.predictions);
    take(doc, "output", c.output);
    take(doc, "envelope_bins", c.envelope_bins);
    take(doc, "reliability_bins", c.reliability_bins);
    take(doc, "ignore_id", c.ignore_id);
    take(doc, "kernel_energy", c.kernel_energy);
    take(doc, "threads", c.threads);
    if (doc.contains("optics")) {
      const auto& o = doc.at("optics");
      reject_unknown(o,
                     {"wavelength_um", "pupil_radius_mm", "propagation_distance_mm", "grid_size",
                      "pad_factor", "pixel_pitch_um"},
                     "optics");
      take(o, "wavelength_um", c.optics.wavelength_um);
      take(o, "pupil_radius_mm", c.optics.pupil_radius_mm);
      take(o, "propagation_distance_mm", c.optics.propagation_distance_mm);
      take(o, "grid_size", c.optics.grid_size);
      take(o, "pad_factor", c.optics.pad_factor);
      take(o, "pixel_pitch_um", c.optics.pixel_pitch_um);
    }
  } catch (const json::exception& e) {
    throw ConfigError(fmt::format("invalid configuration: {}", e.what()));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(fmt::format("invalid configuration: {}", e.what()));
  }
  return c;
}

SweepConfig SweepConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot open configuration {}", path));
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json(ss.str());
}

// --- sampling ----------------------------------------------------------------

std::uint64_t CounterRng::bits(std::uint64_t stream, std::uint64_t draw) const {
  return splitmix64(splitmix64(splitmix64(seed_) ^ stream) ^ (draw * kGolden));
}

double CounterRng::uniform(std::uint64_t stream, std::uint64_t draw) const {
  return static_cast<double>(bits(stream, draw) >> 11) * 0x1.0p-53;
}

ZernikeSpectrum sample_spectrum(const SweepConfig& config, std::size_t id) {
  ZernikeSpectrum s(config.optics.wavelength_um);
  if (config.mode == SamplingMode::Uniform) {
    const CounterRng rng(config.seed);
    for (std::size_t d = 0; d < config.ranges.size(); ++d) {
      const auto& r = config.ranges[d];
      s.set(r.index, r.min_um + (r.max_um - r.min_um) * rng.uniform(id, d));
    }
    return s;
  }
  const auto p = config.grid_points;
  std::size_t rest = id;
  for (std::size_t d = config.ranges.size(); d-- > 0;) {
    const auto& r = config.ranges[d];
    const auto k = rest % p;
    rest /= p;
    const double t = p == 1 ? 0.5 : static_cast<double>(k) / static_cast<double>(p - 1);
    s.set(r.index, r.min_um + (r.max_um - r.min_um) * t);
  }
  return s;
}

std::vector<GridPoint> sample_spectra(const SweepConfig& config) {
  std::vector<GridPoint> out;
  for (std::size_t i = 0; i < config.sample_count(); ++i) out.push_back({i, sample_spectrum(config, i)});
  return out;
}

std::string sample_name(std::size_t id) { return fmt::format("{:06d}", id); }

// --- dataset -----------------------------------------------------------------

bool Dataset::has_labels() const {
  return !images.empty() &&
         std::all_of(images.begin(), images.end(), [](const auto& d) { return d.labels.has_value(); });
}

Dataset load_dataset(const fs::path& root) {
  const auto dir = root / "images";
  if (!fs::is_directory(dir)) {
    throw DataError(fmt::format("dataset image directory {} not found", dir.string()));
  }
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    const auto ext = e.path().extension();
    if (e.is_regular_file() && (ext == ".png" || ext == ".npy")) files.push_back(e.path());
  }
  if (files.empty()) throw DataError(fmt::format("no .png or .npy images in {}", dir.string()));
  std::sort(files.begin(), files.end());

  Dataset ds;
  ds.name = fs::absolute(root).lexically_normal().filename().string();
  if (ds.name.empty()) ds.name = fs::absolute(root).parent_path().filename().string();
  std::set<std::string> ids;
  for (const auto& f : files) {
    DatasetImage item;
    try {
      item.image = io::read_image(f.string());
    } catch (const std::exception& e) {
      throw DataError(fmt::format("cannot load {}: {}", f.string(), e.what()));
    }
    item.image.id = f.stem().string();
    if (!ids.insert(item.image.id).second) {
      throw DataError(fmt::format("duplicate image id '{}'", item.image.id));
    }
    item.source = f;
    const auto label = root / "labels" / (item.image.id + ".png");
    if (fs::exists(label)) {
      auto l = io::read_label_png(label.string());
      if (l.rows() != static_cast<std::size_t>(item.image.height) ||
          l.cols() != static_cast<std::size_t>(item.image.width)) {
        throw DataError(fmt::format("label map {} does not match its image", label.string()));
      }
      item.labels = std::move(l);
    }
    ds.images.push_back(std::move(item));
  }
  return ds;
}

std::vector<PredictionRecord> load_predictions(const fs::path& dir, const Dataset& dataset) {
  std::vector<PredictionRecord> records;
  for (const auto& item : dataset.images) {
    if (!item.labels) continue;
    const auto path = dir / (item.image.id + ".npy");
    if (!fs::exists(path)) throw DataError(fmt::format("missing prediction {}", path.string()));
    const auto arr = io::read_npy(path.string());
    if (arr.shape.size() != 3 || arr.shape[0] != static_cast<std::size_t>(item.image.height) ||
        arr.shape[1] != static_cast<std::size_t>(item.image.width)) {
      throw DataError(fmt::format("prediction {} must have shape ({}, {}, classes)",
                                  path.string(), item.image.height, item.image.width));
    }
    PredictionRecord r;
    r.id = item.image.id;
    r.height = item.image.height;
    r.width = item.image.width;
    r.num_classes = static_cast<int>(arr.shape[2]);
    r.ground_truth.assign(item.labels->data().begin(), item.labels->data().end());
    r.probabilities.assign(arr.values.begin(), arr.values.end());
    records.push_back(std::move(r));
  }
  if (records.empty()) throw DataError("dataset has no label maps to evaluate against");
  return records;
}

// --- persistence -------------------------------------------------------------

namespace {

const char* kOpticalFile = "optical.csv";
const char* kEvalFile = "eval.csv";
const char* kPerClassFile = "eval_per_class.csv";
const char* kReliabilityFile = "reliability.csv";
const char* kFailureFile = "failures.csv";

std::string optical_header(const std::vector<int>& indices) {
  std::string h = "id";
  for (int j : indices) h += fmt::format(",w{}", j);
  return h + ",D_x_max,D_y_max,mtf_hn_x,mtf_hn_y,sr_x,sr_y,oig_x,oig_y";
}

const char* kEvalHeader = "batch_id,spectrum_id,miou,ece,mece,confidence,accuracy,pixels";
const char* kPerClassHeader = "spectrum_id,class,iou,ece";
const char* kReliabilityHeader = "spectrum_id,bin,lower,upper,count,confidence,accuracy";
const char* kFailureHeader = "id,error";

std::string optical_line(const SampleRow& row, const std::vector<int>& indices) {
  std::string s = std::to_string(row.id);
  for (int j : indices) s += "," + g17(row.spectrum.coefficient(j));
  const auto& o = row.optical;
  for (double v : {o.refractive_power_max_x, o.refractive_power_max_y, o.mtf_half_nyquist_x,
                   o.mtf_half_nyquist_y, o.strehl_x, o.strehl_y, o.oig_x, o.oig_y}) {
    s += "," + g17(v);
  }
  return s + "\n";
}

struct EvalLines {
  std::string eval;
  std::string per_class;
  std::string reliability;
};

EvalLines eval_lines(const EvalReport& r) {
  EvalLines out;
  out.eval = fmt::format("{},{},{},{},{},{},{},{}\n", r.batch_id, r.spectrum_id, g17(r.iou.miou),
                         g17(r.calibration.ece), g17(r.calibration.mece),
                         g17(r.weighted_confidence()), g17(r.weighted_accuracy()), r.pixel_count);
  for (std::size_t c = 0; c < r.iou.per_class.size(); ++c) {
    out.per_class += fmt::format("{},{},{},{}\n", r.spectrum_id, c, g17(r.iou.per_class[c]),
                                 g17(r.calibration.per_class_ece[c]));
  }
  for (std::size_t b = 0; b < r.calibration.bins.size(); ++b) {
    const auto& bin = r.calibration.bins[b];
    out.reliability += fmt::format("{},{},{},{},{},{},{}\n", r.spectrum_id, b, g17(bin.lower),
                                   g17(bin.upper), bin.count, g17(bin.mean_confidence),
                                   g17(bin.mean_accuracy));
  }
  return out;
}

// Rewrites `path` with the header and the complete rows whose id column is
// committed.
void filter_file(const fs::path& path, const std::string& header, std::size_t id_column,
                 const std::set<std::size_t>& committed) {
  auto lines = complete_lines(path);
  std::string text = header + "\n";
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto cols = split(lines[i]);
    if (cols.size() > id_column && committed.count(parse_size(cols[id_column]))) {
      text += lines[i] + "\n";
    }
  }
  write_text(path, text);
}

struct Outcome {
  std::optional<SampleRow> row;
  std::string error;
};

}  // namespace

fs::path resolve_output(const std::string& path) {
  fs::path p(path);
  if (p.is_relative()) {
    if (const char* root = std::getenv(kOutputRootEnv); root && *root) return fs::path(root) / p;
  }
  return p;
}

bool SweepResult::has_eval() const {
  return std::any_of(rows.begin(), rows.end(), [](const auto& r) { return r.eval.has_value(); });
}

SweepResult run_sweep(SweepConfig config) {
  config.validate();
  const auto started = utc_now();
  const auto hash = config.hash();

  std::optional<Dataset> dataset;
  if (!config.dataset.empty()) {
    dataset = load_dataset(config.dataset);
    if (!config.predictions.empty() && !dataset->has_labels()) {
      throw DataError("evaluation needs a label map for every dataset image");
    }
  }
  if (!config.predictions.empty() && !fs::is_directory(config.predictions)) {
    throw DataError(fmt::format("prediction directory {} not found", config.predictions));
  }

  const fs::path out = resolve_output(config.output);
  fs::create_directories(out);
  std::vector<int> indices;
  for (const auto& r : config.ranges) indices.push_back(r.index);

  // Resume: only an identical configuration may continue an existing run.
  const auto config_path = out / "config.json";
  std::set<std::size_t> committed;
  if (fs::exists(config_path)) {
    const auto previous = SweepConfig::from_json(read_text(config_path));
    auto prev = previous;
    prev.validate();
    if (prev.hash() != hash) {
      throw ConfigError(fmt::format("{} holds a run with configuration {}, this one is {}",
                                    out.string(), prev.hash(), hash));
    }
    for (const auto* name : {kOpticalFile, kFailureFile}) {
      const auto lines = complete_lines(out / name);
      for (std::size_t i = 1; i < lines.size(); ++i) committed.insert(parse_size(split(lines[i])[0]));
    }
  }
  const auto header = optical_header(indices);
  filter_file(out / kOpticalFile, header, 0, committed);
  filter_file(out / kFailureFile, kFailureHeader, 0, committed);
  filter_file(out / kEvalFile, kEvalHeader, 1, committed);
  filter_file(out / kPerClassFile, kPerClassHeader, 0, committed);
  filter_file(out / kReliabilityFile, kReliabilityHeader, 0, committed);
  write_text(config_path, config.to_json());

  std::vector<std::size_t> pending;
  for (std::size_t i = 0; i < config.sample_count(); ++i) {
    if (!committed.count(i)) pending.push_back(i);
  }

  const OpticalModel model(config.optics);

  auto process = [&](std::size_t id) -> Outcome {
    SampleRow row;
    row.id = id;
    row.spectrum = sample_spectrum(config, id);
    try {
      const auto map = synthesize_wavefront(row.spectrum, config.optics.grid_size,
                                            config.optics.pupil_radius_mm);
      const auto psf = compute_psf(build_pupil(map, config.optics));
      row.optical = model.evaluate(row.spectrum, map, psf);
      if (dataset) {
        const auto dir = out / "perturbed" / sample_name(id);
        fs::create_directories(dir);
        std::optional<Array2D<double>> kernel;
        if (!row.spectrum.is_zero()) kernel = psf_to_sensor_kernel(psf, config.kernel_energy);
        for (const auto& item : dataset->images) {
          Image img = kernel ? perturb_image(item.image, *kernel) : item.image;
          img.clip();
          const auto ext = item.source.extension().string();
          const auto path = (dir / (item.image.id + ext)).string();
          if (ext == ".npy") {
            io::write_npy_image(path, img);
          } else {
            io::write_png(path, img, 16);
          }
        }
      }
      if (!config.predictions.empty()) {
        const auto dir = fs::path(config.predictions) / sample_name(id);
        if (fs::is_directory(dir)) {
          const auto records = load_predictions(dir, *dataset);
          auto report = evaluate_records(records, config.reliability_bins, config.ignore_id);
          report.batch_id = dataset->name;
          report.spectrum_id = sample_name(id);
          row.eval = std::move(report);
        }
      }
    } catch (const NumericError& e) {
      return {std::nullopt, e.what()};
    } catch (const DomainError& e) {
      return {std::nullopt, e.what()};
    } catch (const DimensionError& e) {
      return {std::nullopt, e.what()};
    } catch (const AnalysisError& e) {
      return {std::nullopt, e.what()};
    }
    return {std::move(row), {}};
  };

  // Workers fill `ready`; this thread commits outcomes strictly in id order.
  std::mutex mutex;
  std::condition_variable cv;
  std::map<std::size_t, Outcome> ready;
  std::exception_ptr fatal;
  std::atomic<std::size_t> next{0};
  std::atomic<bool> stop{false};
  std::size_t committed_upto = 0;  // index into pending
  const unsigned threads =
      config.threads ? config.threads : std::max(1u, std::thread::hardware_concurrency());
  const std::size_t window = 4 * static_cast<std::size_t>(threads);

  auto worker = [&] {
    for (std::size_t k; !stop && (k = next.fetch_add(1)) < pending.size();) {
      {
        std::unique_lock lock(mutex);
        cv.wait(lock, [&] { return stop || k < committed_upto + window; });
        if (stop) return;
      }
      try {
        auto o = process(pending[k]);
        std::lock_guard lock(mutex);
        ready.emplace(k, std::move(o));
      } catch (...) {
        std::lock_guard lock(mutex);
        if (!fatal) fatal = std::current_exception();
        stop = true;
      }
      cv.notify_all();
    }
  };

  {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < threads && t < pending.size(); ++t) pool.emplace_back(worker);

    std::ofstream optical(out / kOpticalFile, std::ios::binary | std::ios::app);
    std::ofstream failures(out / kFailureFile, std::ios::binary | std::ios::app);
    std::ofstream evals(out / kEvalFile, std::ios::binary | std::ios::app);
    std::ofstream per_class(out / kPerClassFile, std::ios::binary | std::ios::app);
    std::ofstream reliability(out / kReliabilityFile, std::ios::binary | std::ios::app);

    while (committed_upto < pending.size()) {
      Outcome o;
      {
        std::unique_lock lock(mutex);
        cv.wait(lock, [&] { return fatal || ready.count(committed_upto); });
        if (fatal) break;
        o = std::move(ready.at(committed_upto));
        ready.erase(committed_upto);
      }
      const auto id = pending[committed_upto];
      if (o.row) {
        if (o.row->eval) {
          const auto lines = eval_lines(*o.row->eval);
          evals << lines.eval << std::flush;
          per_class << lines.per_class << std::flush;
          reliability << lines.reliability << std::flush;
        }
        // The optical row is written last and marks the sample as committed.
        optical << optical_line(*o.row, indices) << std::flush;
      } else {
        failures << id << "," << one_line(o.error) << "\n" << std::flush;
        fmt::print(stderr, "sample {} failed: {}\n", id, o.error);
      }
      {
        std::lock_guard lock(mutex);
        ++committed_upto;
      }
      cv.notify_all();
    }
    stop = true;
    cv.notify_all();
  }
  if (fatal) std::rethrow_exception(fatal);

  auto result = load_sweep_result(out);
  result.metadata.config_hash = hash;
  result.metadata.started_utc = started;
  result.metadata.finished_utc = utc_now();
  result.metadata.resumed_from = committed.size();
  const json meta = {{"config_hash", hash},
                     {"started_utc", result.metadata.started_utc},
                     {"finished_utc", result.metadata.finished_utc},
                     {"version", kVersion},
                     {"samples", config.sample_count()},
                     {"rows", result.rows.size()},
                     {"failures", result.failures.size()},
                     {"resumed_from", committed.size()}};
  write_text(out / "run.json", meta.dump(2) + "\n");
  return result;
}

SweepResult load_sweep_result(const fs::path& dir) {
  SweepResult result;
  if (!fs::exists(dir / kOpticalFile)) {
    throw DataError(fmt::format("{} has no {}", dir.string(), kOpticalFile));
  }
  double wavelength = kDefaultWavelengthUm;
  if (fs::exists(dir / "config.json")) {
    auto cfg = SweepConfig::from_json(read_text(dir / "config.json"));
    wavelength = cfg.optics.wavelength_um;
    result.metadata.config_hash = (cfg.validate(), cfg.hash());
  }
  const auto lines = complete_lines(dir / kOpticalFile);
  if (lines.empty()) throw DataError(fmt::format("{} is empty", kOpticalFile));
  const auto header = split(lines[0]);
  for (const auto& h : header) {
    if (h.size() > 1 && h[0] == 'w') result.indices.push_back(std::stoi(h.substr(1)));
  }
  const std::size_t k = result.indices.size();
  std::map<std::size_t, std::size_t> row_of;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto c = split(lines[i]);
    if (c.size() != header.size()) throw DataError(fmt::format("malformed row {}", i));
    SampleRow row;
    row.id = parse_size(c[0]);
    row.spectrum = ZernikeSpectrum(wavelength);
    for (std::size_t j = 0; j < k; ++j) row.spectrum.set(result.indices[j], parse_double(c[1 + j]));
    auto& o = row.optical;
    o.spectrum = row.spectrum;
    double* fields[] = {&o.refractive_power_max_x, &o.refractive_power_max_y,
                        &o.mtf_half_nyquist_x,     &o.mtf_half_nyquist_y,
                        &o.strehl_x,               &o.strehl_y,
                        &o.oig_x,                  &o.oig_y};
    for (std::size_t f = 0; f < 8; ++f) *fields[f] = parse_double(c[1 + k + f]);
    row_of[row.id] = result.rows.size();
    result.rows.push_back(std::move(row));
  }

  const auto evals = complete_lines(dir / kEvalFile);
  for (std::size_t i = 1; i < evals.size(); ++i) {
    const auto c = split(evals[i]);
    if (c.size() != 8) throw DataError(fmt::format("malformed {} row {}", kEvalFile, i));
    const auto it = row_of.find(parse_size(c[1]));
    if (it == row_of.end()) continue;
    EvalReport r;
    r.batch_id = c[0];
    r.spectrum_id = c[1];
    r.iou.miou = parse_double(c[2]);
    r.calibration.ece = parse_double(c[3]);
    r.calibration.mece = parse_double(c[4]);
    r.pixel_count = parse_size(c[7]);
    result.rows[it->second].eval = std::move(r);
  }
  const auto perClass_lines = complete_lines(dir / kPerClassFile);
  for (std::size_t i = 1; i < perClass_lines.size(); ++i) {
    const auto c = split(perClass_lines[i]);
    const auto it = row_of.find(parse_size(c.at(0)));
    if (it == row_of.end() || !result.rows[it->second].eval) continue;
    auto& r = *result.rows[it->second].eval;
    r.iou.per_class.push_back(parse_double(c.at(2)));
    r.calibration.per_class_ece.push_back(parse_double(c.at(3)));
  }
  const auto reliability_lines = complete_lines(dir / kReliabilityFile);
  for (std::size_t i = 1; i < reliability_lines.size(); ++i) {
    const auto c = split(reliability_lines[i]);
    const auto it = row_of.find(parse_size(c.at(0)));
    if (it == row_of.end() || !result.rows[it->second].eval) continue;
    ReliabilityBin b;
    b.lower = parse_double(c.at(2));
    b.upper = parse_double(c.at(3));
    b.count = parse_size(c.at(4));
    b.mean_confidence = parse_double(c.at(5));
    b.mean_accuracy = parse_double(c.at(6));
    result.rows[it->second].eval->calibration.bins.push_back(b);
  }
  const auto failure_lines = complete_lines(dir / kFailureFile);
  for (std::size_t i = 1; i < failure_lines.size(); ++i) {
    const auto c = split(failure_lines[i]);
    result.failures.push_back(SampleFailure{parse_size(c.at(0)), c.size() > 1 ? c[1] : std::string()});
  }
  return result;
}

// --- analysis ----------------------------------------------------------------

std::vector<EnvelopeBin> envelope(std::span<const double> x, std::span<const double> y, int bins) {
  if (x.size() != y.size()) throw DomainError("envelope: x and y differ in length");
  if (bins < 1) throw DomainError("envelope: bin count must be >= 1");
  if (x.empty()) throw DomainError("envelope: no points");
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!std::isfinite(x[i]) || !std::isfinite(y[i])) {
      throw DomainError("envelope: non-finite point");
    }
  }
  const auto [lo_it, hi_it] = std::minmax_element(x.begin(), x.end());
  const double lo = *lo_it, hi = *hi_it;
  if (!(hi > lo)) throw DomainError("envelope: all x values coincide, range is degenerate");

  const double width = (hi - lo) / bins;
  std::vector<std::vector<double>> members(bins);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const int b = std::min(static_cast<int>((x[i] - lo) / width), bins - 1);
    members[b].push_back(y[i]);
  }
  std::vector<EnvelopeBin> out(bins);
  for (int b = 0; b < bins; ++b) {
    out[b].lower = lo + b * width;
    out[b].upper = b + 1 == bins ? hi : lo + (b + 1) * width;
    if (!members[b].empty()) out[b].stats = box_stats(members[b]);
  }
  return out;
}

std::optional<double> row_value(const SampleRow& row, const std::string& name) {
  const auto& o = row.optical;
  if (name.size() > 1 && name[0] == 'w' &&
      std::all_of(name.begin() + 1, name.end(), [](char c) { return std::isdigit(c); })) {
    return row.spectrum.coefficient(std::stoi(name.substr(1)));
  }
  if (name == "D") return std::max(o.refractive_power_max_x, o.refractive_power_max_y);
  if (name == "D_x") return o.refractive_power_max_x;
  if (name == "D_y") return o.refractive_power_max_y;
  if (name == "mtf_hn") return 0.5 * (o.mtf_half_nyquist_x + o.mtf_half_nyquist_y);
  if (name == "mtf_hn_x") return o.mtf_half_nyquist_x;
  if (name == "mtf_hn_y") return o.mtf_half_nyquist_y;
  if (name == "sr") return 0.5 * (o.strehl_x + o.strehl_y);
  if (name == "sr_x") return o.strehl_x;
  if (name == "sr_y") return o.strehl_y;
  if (name == "oig") return 0.5 * (o.oig_x + o.oig_y);
  if (name == "oig_x") return o.oig_x;
  if (name == "oig_y") return o.oig_y;
  const bool eval_column = name == "miou" || name == "ece" || name == "mece" ||
                           name == "confidence" || name == "accuracy";
  if (!eval_column) throw ConfigError(fmt::format("unknown column '{}'", name));
  if (!row.eval) return std::nullopt;
  const auto& e = *row.eval;
  if (name == "miou") return e.iou.miou;
  if (name == "ece") return e.calibration.ece;
  if (name == "mece") return e.calibration.mece;
  if (name == "confidence") return e.weighted_confidence();
  return e.weighted_accuracy();
}

}  // namespace optithreat
