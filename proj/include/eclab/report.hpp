#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "eclab/runner.hpp"

namespace eclab {

struct LoadedRun {
  std::filesystem::path dir;
  RunConfig config;
  bool kept = true;
  std::vector<MetricsRecord> series;
};

/// Every directory under `roots` (recursively, roots included) holding both
/// config.json and metrics.csv, sorted by path.
std::vector<LoadedRun> discover_runs(const std::vector<std::filesystem::path>& roots);

struct SeriesPoint {
  long iteration = 0;
  double mean = 0.0;
  double min = 0.0;
  double max = 0.0;
  int n = 0;
};

struct PlotSeries {
  std::string strategy;
  std::vector<SeriesPoint> points;
};

struct Plot {
  std::string panel;
  std::string metric;
  std::vector<PlotSeries> series;  // learned, left, random, then others by name
};

/// Groups kept runs (all runs with include_excluded) by panel and metric;
/// mean with min-max band per iteration.
std::vector<Plot> build_plots(const std::vector<LoadedRun>& runs, bool include_excluded = false);

std::string render_svg(const Plot& plot);
std::string plot_data_csv(const std::vector<Plot>& plots);

/// Writes one SVG per plot plus plot_data.csv; returns the SVG paths.
/// Throws when no runs are found.
std::vector<std::filesystem::path> report(const std::vector<std::filesystem::path>& inputs,
                                          const std::filesystem::path& out_dir, bool include_excluded = false);

}  // namespace eclab
