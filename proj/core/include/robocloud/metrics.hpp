#pragma once

// Benchmark samples and report rendering: CSV with a fixed schema, simple
// SVG line plots (mean +/- stddev vs. infrastructure count, one series per
// backend), and the aggregation helpers the acceptance checks use.

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace robocloud::bench {

struct MetricSample {
  std::string metric;       // "IRDD" | "TAD"
  std::string scenario_id;  // run label; carries the receiver for TAD samples
  std::string backend;      // "presence" | "overlay" | "direct"
  int iaas_count = 0;
  double value_ms = 0;
  int rep = 0;
};

inline constexpr const char* kCsvHeader = "metric,backend,iaas_count,rep,value_ms";

struct SeriesStats {
  double mean = 0;
  double stddev = 0;
  std::size_t n = 0;
};

SeriesStats stats_of(const std::vector<double>& values);

/// Mean/stddev per (backend, iaas_count) for one metric.
std::map<std::pair<std::string, int>, SeriesStats> aggregate(
    const std::vector<MetricSample>& samples, const std::string& metric);

/// Per-scenario aggregation (used for per-receiver TAD summaries).
std::map<std::pair<std::string, std::string>, SeriesStats> aggregate_by_scenario(
    const std::vector<MetricSample>& samples, const std::string& metric);

void write_csv(const std::string& path, const std::vector<MetricSample>& samples);
std::vector<MetricSample> read_csv(const std::string& path);

/// Renders one metric as an SVG plot. Deterministic bytes for identical
/// sample sets.
std::string render_plot_svg(const std::vector<MetricSample>& samples, const std::string& metric);
void write_plot_svg(const std::string& path, const std::vector<MetricSample>& samples,
                    const std::string& metric);

}  // namespace robocloud::bench
