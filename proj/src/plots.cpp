#include "optithreat/plots.hpp"

#include <fmt/format.h>
#include <fmt/os.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

namespace optithreat {
namespace fs = std::filesystem;

namespace {

constexpr double kWidth = 640, kHeight = 440;
constexpr double kLeft = 70, kRight = 20, kTop = 40, kBottom = 55;

struct Range {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  void add(double v) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  void pad() {
    if (!(hi > lo)) {
      const double d = std::max(std::abs(lo) * 0.1, 1e-3);
      lo -= d;
      hi += d;
    } else {
      const double d = 0.05 * (hi - lo);
      lo -= d;
      hi += d;
    }
  }
};

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '<') out += "&lt;";
    else if (c == '>') out += "&gt;";
    else if (c == '&') out += "&amp;";
    else out += c;
  }
  return out;
}

class Svg {
 public:
  Svg(const std::string& title, const std::string& xlabel, const std::string& ylabel, Range x,
      Range y)
      : x_(x), y_(y) {
    body_ += fmt::format(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" "
        "font-family=\"sans-serif\" font-size=\"12\">\n<rect width=\"100%\" height=\"100%\" "
        "fill=\"white\"/>\n",
        kWidth, kHeight);
    body_ += fmt::format("<text x=\"{}\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">{}</text>\n",
                         kWidth / 2, escape(title));
    body_ += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n",
                         (kLeft + kWidth - kRight) / 2, kHeight - 12, escape(xlabel));
    body_ += fmt::format(
        "<text x=\"16\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {})\">{}</text>\n",
        (kTop + kHeight - kBottom) / 2, (kTop + kHeight - kBottom) / 2, escape(ylabel));
    body_ += fmt::format(
        "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"black\"/>\n",
        kLeft, kTop, kWidth - kLeft - kRight, kHeight - kTop - kBottom);
    for (int i = 0; i <= 4; ++i) {
      const double xv = x_.lo + i * (x_.hi - x_.lo) / 4;
      const double yv = y_.lo + i * (y_.hi - y_.lo) / 4;
      body_ += fmt::format("<text x=\"{:.1f}\" y=\"{}\" text-anchor=\"middle\">{:.3g}</text>\n",
                           px(xv), kHeight - kBottom + 16, xv);
      body_ += fmt::format("<text x=\"{}\" y=\"{:.1f}\" text-anchor=\"end\">{:.3g}</text>\n",
                           kLeft - 4, py(yv) + 4, yv);
    }
  }

  double px(double x) const { return kLeft + (x - x_.lo) / (x_.hi - x_.lo) * (kWidth - kLeft - kRight); }
  double py(double y) const {
    return kHeight - kBottom - (y - y_.lo) / (y_.hi - y_.lo) * (kHeight - kTop - kBottom);
  }

  void point(double x, double y, const char* color) {
    body_ += fmt::format("<circle cx=\"{:.2f}\" cy=\"{:.2f}\" r=\"2.5\" fill=\"{}\" "
                         "fill-opacity=\"0.6\"/>\n", px(x), py(y), color);
  }

  void line(double x0, double y0, double x1, double y1, const char* color, double w = 1.0) {
    body_ += fmt::format("<line x1=\"{:.2f}\" y1=\"{:.2f}\" x2=\"{:.2f}\" y2=\"{:.2f}\" "
                         "stroke=\"{}\" stroke-width=\"{}\"/>\n", px(x0), py(y0), px(x1), py(y1),
                         color, w);
  }

  // Polyline broken into segments at empty entries.
  void polyline(const std::vector<std::pair<double, std::optional<double>>>& pts, const char* color) {
    std::string cur;
    auto flush = [&] {
      if (!cur.empty()) {
        body_ += fmt::format("<polyline points=\"{}\" fill=\"none\" stroke=\"{}\" "
                             "stroke-width=\"2\"/>\n", cur, color);
      }
      cur.clear();
    };
    for (const auto& [x, y] : pts) {
      if (!y) {
        flush();
        continue;
      }
      cur += fmt::format("{:.2f},{:.2f} ", px(x), py(*y));
    }
    flush();
  }

  void box(double center, double half_width, const BoxStats& s, const char* color) {
    const double l = center - half_width, r = center + half_width;
    body_ += fmt::format("<rect x=\"{:.2f}\" y=\"{:.2f}\" width=\"{:.2f}\" height=\"{:.2f}\" "
                         "fill=\"{}\" fill-opacity=\"0.25\" stroke=\"{}\"/>\n", px(l), py(s.q3),
                         px(r) - px(l), std::max(py(s.q1) - py(s.q3), 0.5), color, color);
    line(l, s.median, r, s.median, color, 2.0);
    line(center, s.min, center, s.q1, color);
    line(center, s.q3, center, s.max, color);
  }

  void label(double x, double y, const std::string& text) {
    body_ += fmt::format("<text x=\"{:.2f}\" y=\"{:.2f}\" text-anchor=\"middle\">{}</text>\n",
                         px(x), py(y), escape(text));
  }

  void save(const fs::path& path) {
    auto out = fmt::output_file(path.string());
    out.print("{}</svg>\n", body_);
  }

 private:
  Range x_, y_;
  std::string body_;
};

const char* kOpticalMetrics[] = {"sr", "oig", "mtf_hn", "D"};

std::string prefix(const std::string& hash) { return hash.substr(0, 12); }

struct Series {
  std::vector<double> x, y;
};

Series collect(const SweepResult& r, const std::string& xname, const std::string& yname) {
  Series s;
  for (const auto& row : r.rows) {
    const auto x = row_value(row, xname);
    const auto y = row_value(row, yname);
    if (x && y && std::isfinite(*x) && std::isfinite(*y)) {
      s.x.push_back(*x);
      s.y.push_back(*y);
    }
  }
  return s;
}

fs::path scatter(const Series& s, const std::string& xname, const std::string& yname,
                 const fs::path& path, int bins, bool with_envelope) {
  Range xr, yr;
  for (double v : s.x) xr.add(v);
  for (double v : s.y) yr.add(v);
  const bool distinct = xr.hi > xr.lo;
  xr.pad();
  yr.pad();
  Svg svg(fmt::format("{} vs {} ({} samples)", yname, xname, s.x.size()), xname, yname, xr, yr);
  for (std::size_t i = 0; i < s.x.size(); ++i) svg.point(s.x[i], s.y[i], "#1f77b4");
  if (with_envelope && distinct && s.x.size() > 1) {
    const auto env = envelope(s.x, s.y, bins);
    std::vector<std::pair<double, std::optional<double>>> pts;
    for (const auto& b : env) {
      const double c = 0.5 * (b.lower + b.upper);
      if (b.stats) svg.box(c, 0.3 * (b.upper - b.lower), *b.stats, "#ff7f0e");
      pts.emplace_back(c, b.stats ? std::optional<double>(b.stats->min) : std::nullopt);
    }
    svg.polyline(pts, "#d62728");
  }
  svg.save(path);
  return path;
}

fs::path reliability_diagram(const EvalReport& e, const fs::path& path) {
  Range unit;
  unit.add(0.0);
  unit.add(1.0);
  Svg svg(fmt::format("reliability, spectrum {} (ECE {:.4f})", e.spectrum_id, e.calibration.ece),
          "confidence", "accuracy", unit, unit);
  svg.line(0, 0, 1, 1, "#888888");
  std::vector<std::pair<double, std::optional<double>>> pts;
  for (const auto& b : e.calibration.bins) {
    if (b.count == 0) {
      pts.emplace_back(0.5 * (b.lower + b.upper), std::nullopt);
      continue;
    }
    svg.box(0.5 * (b.lower + b.upper), 0.4 * (b.upper - b.lower),
            {b.count, 0, 0, b.mean_accuracy, b.mean_accuracy, 0}, "#1f77b4");
    pts.emplace_back(b.mean_confidence, b.mean_accuracy);
  }
  svg.polyline(pts, "#d62728");
  svg.save(path);
  return path;
}

}  // namespace

std::vector<fs::path> emit_plots(const SweepResult& result, const fs::path& dir,
                                 const std::string& config_hash, int envelope_bins,
                                 std::ostream& notices) {
  std::vector<fs::path> files;
  if (result.rows.empty()) {
    notices << "no successful samples, nothing to plot\n";
    return files;
  }
  fs::create_directories(dir);
  const auto pre = prefix(config_hash);
  if (result.rows.size() == 1) notices << "single sample: scatter plots without envelope\n";

  for (int j : result.indices) {
    for (const char* m : kOpticalMetrics) {
      const auto x = fmt::format("w{}", j);
      files.push_back(scatter(collect(result, x, m), x, m,
                              dir / fmt::format("{}_scatter_{}_vs_{}.svg", pre, m, x),
                              envelope_bins, false));
    }
  }

  if (!result.has_eval()) {
    notices << "no evaluation rows: mIoU/mECE and reliability plots skipped\n";
    return files;
  }
  for (const char* y : {"miou", "mece"}) {
    for (const char* x : kOpticalMetrics) {
      files.push_back(scatter(collect(result, x, y), x, y,
                              dir / fmt::format("{}_envelope_{}_vs_{}.svg", pre, y, x),
                              envelope_bins, true));
    }
  }
  const SampleRow* best = nullptr;
  const SampleRow* worst = nullptr;
  for (const auto& row : result.rows) {
    if (!row.eval) continue;
    if (!best || row.eval->iou.miou > best->eval->iou.miou) best = &row;
    if (!worst || row.eval->iou.miou < worst->eval->iou.miou) worst = &row;
  }
  for (const auto* row : {best, worst}) {
    const auto path = dir / fmt::format("{}_reliability_{}.svg", pre, row->eval->spectrum_id);
    if (std::find(files.begin(), files.end(), path) == files.end()) {
      files.push_back(reliability_diagram(*row->eval, path));
    }
  }
  return files;
}

std::vector<fs::path> emit_shapley_plots(std::span<const ShapleyDistribution> results,
                                         const fs::path& dir, const std::string& config_hash) {
  std::vector<fs::path> files;
  fs::create_directories(dir);
  for (const auto& d : results) {
    const auto summary = d.summarize();
    if (summary.empty()) continue;
    const bool normalized = std::all_of(summary.begin(), summary.end(),
                                        [](const auto& s) { return s.phi_normalized.has_value(); });
    Range xr, yr;
    xr.add(-0.5);
    xr.add(static_cast<double>(summary.size()) - 0.5);
    for (const auto& s : summary) {
      const auto& b = normalized ? *s.phi_normalized : s.phi;
      yr.add(b.min);
      yr.add(b.max);
    }
    yr.add(0.0);
    yr.pad();
    Svg svg(fmt::format("Shapley values, {} ({} grid points)", d.merit, d.reports.size()),
            "feature", normalized ? "phi / |phi(w4)|" : "phi", xr, yr);
    svg.line(-0.5, 0, static_cast<double>(summary.size()) - 0.5, 0, "#888888");
    for (std::size_t i = 0; i < summary.size(); ++i) {
      const auto& b = normalized ? *summary[i].phi_normalized : summary[i].phi;
      svg.box(static_cast<double>(i), 0.25, b, "#2ca02c");
      svg.label(static_cast<double>(i), yr.lo + 0.02 * (yr.hi - yr.lo),
                fmt::format("w{}", summary[i].feature));
    }
    const auto path = dir / fmt::format("{}_shapley_{}.svg", prefix(config_hash), d.merit);
    svg.save(path);
    files.push_back(path);
  }
  return files;
}

}  // namespace optithreat
