#include "eclab/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "json.hpp"

namespace eclab {
namespace fs = std::filesystem;

namespace {

const char* const kMetrics[] = {"comacc_train", "comacc_test", "mean_log_prior_train", "mean_log_prior_test"};

double metric_value(const MetricsRecord& r, const std::string& metric) {
  if (metric == "comacc_train") return r.comacc_train;
  if (metric == "comacc_test") return r.comacc_test;
  if (metric == "mean_log_prior_train") return r.mean_log_prior_train;
  return r.mean_log_prior_test;
}

int strategy_rank(const std::string& s) {
  if (s == "learned") return 0;
  if (s == "left") return 1;
  if (s == "random") return 2;
  return 3;
}

const char* strategy_color(const std::string& s) {
  switch (strategy_rank(s)) {
    case 0: return "#d62728";
    case 1: return "#1f77b4";
    case 2: return "#ff7f0e";
    default: return "#7f7f7f";
  }
}

std::string num(double x, int precision = 2) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", precision, x);
  return buf;
}

std::string gnum(double x) {
  if (std::isnan(x)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", x);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw Error("cannot open " + p.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Round step for about `target` ticks across span.
double nice_step(double span, int target) {
  const double raw = span / target;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  for (double m : {1.0, 2.0, 2.5, 5.0, 10.0})
    if (raw <= m * mag) return m * mag;
  return 10.0 * mag;
}

}  // namespace

std::vector<LoadedRun> discover_runs(const std::vector<fs::path>& roots) {
  std::vector<fs::path> dirs;
  auto consider = [&](const fs::path& d) {
    if (fs::is_regular_file(d / "metrics.csv") && fs::is_regular_file(d / "config.json")) dirs.push_back(d);
  };
  for (const auto& root : roots) {
    if (!fs::is_directory(root)) throw Error("report: input " + root.string() + " is not a directory");
    consider(root);
    for (const auto& entry : fs::recursive_directory_iterator(root))
      if (entry.is_directory()) consider(entry.path());
  }
  std::sort(dirs.begin(), dirs.end());
  dirs.erase(std::unique(dirs.begin(), dirs.end()), dirs.end());

  std::vector<LoadedRun> runs;
  for (const auto& d : dirs) {
    LoadedRun r;
    r.dir = d;
    r.config = config_from_json(slurp(d / "config.json"));
    r.series = read_metrics_csv(d / "metrics.csv");
    if (fs::is_regular_file(d / "summary.json")) {
      auto s = nlohmann::json::parse(slurp(d / "summary.json"));
      r.kept = s.value("kept", true);
    }
    runs.push_back(std::move(r));
  }
  return runs;
}

std::vector<Plot> build_plots(const std::vector<LoadedRun>& runs, bool include_excluded) {
  // panel -> strategy -> runs, both ordered deterministically
  std::map<std::string, std::map<std::pair<int, std::string>, std::vector<const LoadedRun*>>> groups;
  for (const auto& r : runs) {
    if ((!r.kept && !include_excluded) || r.series.empty()) continue;
    groups[panel_label(r.config)][{strategy_rank(r.config.strategy), r.config.strategy}].push_back(&r);
  }
  std::vector<Plot> plots;
  for (const auto& [panel, by_strategy] : groups) {
    for (const char* metric : kMetrics) {
      Plot plot{panel, metric, {}};
      for (const auto& [key, members] : by_strategy) {
        std::map<long, std::vector<double>> at;
        for (const auto* r : members)
          for (const auto& rec : r->series) {
            const double v = metric_value(rec, metric);
            if (std::isfinite(v)) at[rec.iteration].push_back(v);
          }
        if (at.empty()) continue;
        PlotSeries series{key.second, {}};
        for (const auto& [it, values] : at) {
          SeriesPoint p;
          p.iteration = it;
          p.n = static_cast<int>(values.size());
          p.min = *std::min_element(values.begin(), values.end());
          p.max = *std::max_element(values.begin(), values.end());
          double sum = 0.0;
          for (double v : values) sum += v;
          p.mean = sum / p.n;
          series.points.push_back(p);
        }
        plot.series.push_back(std::move(series));
      }
      if (!plot.series.empty()) plots.push_back(std::move(plot));
    }
  }
  return plots;
}

std::string render_svg(const Plot& plot) {
  constexpr double W = 640, H = 400, L = 70, R = 120, T = 40, B = 50;
  const double pw = W - L - R, ph = H - T - B;

  long x_max = 1;
  double y_lo = 0.0, y_hi = 1.0;
  const bool accuracy = plot.metric.rfind("comacc", 0) == 0;
  if (!accuracy) {
    y_lo = 0.0;
    y_hi = -1e300;
    double lo = 1e300;
    for (const auto& s : plot.series)
      for (const auto& p : s.points) {
        lo = std::min(lo, p.min);
        y_hi = std::max(y_hi, p.max);
      }
    y_lo = lo;
    if (y_hi - y_lo < 1e-9) {
      y_lo -= 0.5;
      y_hi += 0.5;
    }
  }
  for (const auto& s : plot.series)
    for (const auto& p : s.points) x_max = std::max(x_max, p.iteration);

  const double y_step = nice_step(y_hi - y_lo, 5);
  if (!accuracy) {
    y_lo = std::floor(y_lo / y_step) * y_step;
    y_hi = std::ceil(y_hi / y_step) * y_step;
  }
  const double x_step = nice_step(static_cast<double>(x_max), 5);
  auto sx = [&](double x) { return L + pw * x / static_cast<double>(x_max); };
  auto sy = [&](double y) { return T + ph * (1.0 - (y - y_lo) / (y_hi - y_lo)); };

  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" viewBox=\"0 0 " << W
    << ' ' << H << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << num(L + pw / 2) << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" << plot.panel << " — "
    << plot.metric << "</text>\n";

  for (double y = y_lo; y <= y_hi + y_step * 1e-6; y += y_step) {
    o << "<line x1=\"" << num(L) << "\" x2=\"" << num(L + pw) << "\" y1=\"" << num(sy(y)) << "\" y2=\"" << num(sy(y))
      << "\" stroke=\"#e0e0e0\"/>\n";
    o << "<text x=\"" << num(L - 6) << "\" y=\"" << num(sy(y) + 4) << "\" text-anchor=\"end\">"
      << num(std::abs(y) < y_step * 1e-6 ? 0.0 : y, y_step < 1 ? 2 : 0) << "</text>\n";
  }
  for (double x = 0; x <= x_max + x_step * 1e-6; x += x_step) {
    o << "<line x1=\"" << num(sx(x)) << "\" x2=\"" << num(sx(x)) << "\" y1=\"" << num(T + ph) << "\" y2=\""
      << num(T + ph + 5) << "\" stroke=\"black\"/>\n";
    o << "<text x=\"" << num(sx(x)) << "\" y=\"" << num(T + ph + 18) << "\" text-anchor=\"middle\">" << num(x, 0)
      << "</text>\n";
  }
  o << "<rect x=\"" << num(L) << "\" y=\"" << num(T) << "\" width=\"" << num(pw) << "\" height=\"" << num(ph)
    << "\" fill=\"none\" stroke=\"black\"/>\n";
  o << "<text x=\"" << num(L + pw / 2) << "\" y=\"" << num(H - 10) << "\" text-anchor=\"middle\">iteration</text>\n";
  o << "<text transform=\"translate(16 " << num(T + ph / 2) << ") rotate(-90)\" text-anchor=\"middle\">" << plot.metric
    << "</text>\n";

  double legend_y = T + 10;
  for (const auto& s : plot.series) {
    const char* color = strategy_color(s.strategy);
    o << "<polygon fill=\"" << color << "\" fill-opacity=\"0.2\" stroke=\"none\" points=\"";
    for (const auto& p : s.points) o << num(sx(p.iteration)) << ',' << num(sy(p.max)) << ' ';
    for (auto it = s.points.rbegin(); it != s.points.rend(); ++it)
      o << num(sx(it->iteration)) << ',' << num(sy(it->min)) << ' ';
    o << "\"/>\n";
    o << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (const auto& p : s.points) o << num(sx(p.iteration)) << ',' << num(sy(p.mean)) << ' ';
    o << "\"/>\n";
    o << "<line x1=\"" << num(L + pw + 10) << "\" x2=\"" << num(L + pw + 30) << "\" y1=\"" << num(legend_y)
      << "\" y2=\"" << num(legend_y) << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    o << "<text x=\"" << num(L + pw + 35) << "\" y=\"" << num(legend_y + 4) << "\">" << s.strategy << "</text>\n";
    legend_y += 18;
  }
  o << "</svg>\n";
  return o.str();
}

std::string plot_data_csv(const std::vector<Plot>& plots) {
  std::ostringstream o;
  o << "panel,metric,strategy,iteration,mean,min,max,n\n";
  for (const auto& plot : plots)
    for (const auto& s : plot.series)
      for (const auto& p : s.points)
        o << plot.panel << ',' << plot.metric << ',' << s.strategy << ',' << p.iteration << ',' << gnum(p.mean) << ','
          << gnum(p.min) << ',' << gnum(p.max) << ',' << p.n << '\n';
  return o.str();
}

std::vector<fs::path> report(const std::vector<fs::path>& inputs, const fs::path& out_dir, bool include_excluded) {
  if (inputs.empty()) throw Error("report: no input directories");
  const auto runs = discover_runs(inputs);
  if (runs.empty()) throw Error("report: no runs (config.json + metrics.csv) found under the inputs");
  const auto plots = build_plots(runs, include_excluded);
  if (plots.empty()) throw Error("report: runs found but none kept with evaluation points (see --include-excluded)");

  fs::create_directories(out_dir);
  std::vector<fs::path> written;
  for (const auto& plot : plots) {
    const fs::path path = out_dir / (plot.panel + "__" + plot.metric + ".svg");
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!(out << render_svg(plot))) throw Error("write failed for " + path.string());
    written.push_back(path);
  }
  std::ofstream csv(out_dir / "plot_data.csv", std::ios::binary | std::ios::trunc);
  if (!(csv << plot_data_csv(plots))) throw Error("write failed for " + (out_dir / "plot_data.csv").string());
  return written;
}

}  // namespace eclab
