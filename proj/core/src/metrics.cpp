#include "robocloud/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "robocloud/util.hpp"

namespace robocloud::bench {

SeriesStats stats_of(const std::vector<double>& values) {
  SeriesStats s;
  s.n = values.size();
  if (values.empty()) return s;
  double sum = 0;
  for (double v : values) sum += v;
  s.mean = sum / static_cast<double>(values.size());
  double var = 0;
  for (double v : values) var += (v - s.mean) * (v - s.mean);
  s.stddev = values.size() > 1 ? std::sqrt(var / static_cast<double>(values.size() - 1)) : 0;
  return s;
}

std::map<std::pair<std::string, int>, SeriesStats> aggregate(
    const std::vector<MetricSample>& samples, const std::string& metric) {
  std::map<std::pair<std::string, int>, std::vector<double>> buckets;
  for (const auto& s : samples)
    if (s.metric == metric) buckets[{s.backend, s.iaas_count}].push_back(s.value_ms);
  std::map<std::pair<std::string, int>, SeriesStats> out;
  for (const auto& [k, v] : buckets) out[k] = stats_of(v);
  return out;
}

std::map<std::pair<std::string, std::string>, SeriesStats> aggregate_by_scenario(
    const std::vector<MetricSample>& samples, const std::string& metric) {
  std::map<std::pair<std::string, std::string>, std::vector<double>> buckets;
  for (const auto& s : samples)
    if (s.metric == metric) buckets[{s.backend, s.scenario_id}].push_back(s.value_ms);
  std::map<std::pair<std::string, std::string>, SeriesStats> out;
  for (const auto& [k, v] : buckets) out[k] = stats_of(v);
  return out;
}

void write_csv(const std::string& path, const std::vector<MetricSample>& samples) {
  if (samples.empty()) throw std::invalid_argument("refusing to write an empty report");
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << kCsvHeader << "\n";
  for (const auto& s : samples)
    out << s.metric << ',' << s.backend << ',' << s.iaas_count << ',' << s.rep << ','
        << util::fmt_num(s.value_ms) << "\n";
}

std::vector<MetricSample> read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::string line;
  if (!std::getline(in, line) || line != kCsvHeader)
    throw std::runtime_error("unexpected CSV header in " + path);
  std::vector<MetricSample> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto cols = util::split(line, ',');
    if (cols.size() != 5) throw std::runtime_error("bad CSV row: " + line);
    MetricSample s;
    s.metric = cols[0];
    s.backend = cols[1];
    s.iaas_count = std::stoi(cols[2]);
    s.rep = std::stoi(cols[3]);
    s.value_ms = std::stod(cols[4]);
    out.push_back(std::move(s));
  }
  return out;
}

// ---------------------------------------------------------------------------
// SVG plot

namespace {

struct PlotGeom {
  double w = 640, h = 420;
  double ml = 64, mr = 24, mt = 36, mb = 48;
  double px(double x, double x0, double x1) const {
    if (x1 <= x0) return ml + (w - ml - mr) / 2;
    return ml + (x - x0) / (x1 - x0) * (w - ml - mr);
  }
  double py(double y, double y0, double y1) const {
    if (y1 <= y0) return h - mb;
    return h - mb - (y - y0) / (y1 - y0) * (h - mt - mb);
  }
};

const char* series_color(std::size_t i) {
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd"};
  return colors[i % 4];
}

}  // namespace

std::string render_plot_svg(const std::vector<MetricSample>& samples, const std::string& metric) {
  auto agg = aggregate(samples, metric);
  if (agg.empty()) throw std::invalid_argument("no samples for metric " + metric);

  std::set<std::string> backends;
  std::set<int> counts;
  double ymax = 0;
  for (const auto& [k, st] : agg) {
    backends.insert(k.first);
    counts.insert(k.second);
    ymax = std::max(ymax, st.mean + st.stddev);
  }
  double x0 = *counts.begin(), x1 = *counts.rbegin();
  double y0 = 0, y1 = ymax * 1.15 + 1e-9;

  PlotGeom g;
  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << g.w << "\" height=\"" << g.h
      << "\" viewBox=\"0 0 " << g.w << " " << g.h << "\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<text x=\"" << g.w / 2 << "\" y=\"20\" text-anchor=\"middle\" font-family=\"sans-serif\" "
      << "font-size=\"14\">" << metric << " vs IaaS count (mean &#177; stddev)</text>\n";

  // Axes
  svg << "<line x1=\"" << g.ml << "\" y1=\"" << g.h - g.mb << "\" x2=\"" << g.w - g.mr
      << "\" y2=\"" << g.h - g.mb << "\" stroke=\"black\"/>\n";
  svg << "<line x1=\"" << g.ml << "\" y1=\"" << g.mt << "\" x2=\"" << g.ml << "\" y2=\""
      << g.h - g.mb << "\" stroke=\"black\"/>\n";
  for (int c : counts) {
    double x = g.px(c, x0, x1);
    svg << "<text x=\"" << x << "\" y=\"" << g.h - g.mb + 18
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" << c
        << "</text>\n";
  }
  for (int i = 0; i <= 4; ++i) {
    double yv = y0 + (y1 - y0) * i / 4.0;
    double y = g.py(yv, y0, y1);
    svg << "<text x=\"" << g.ml - 8 << "\" y=\"" << y + 4
        << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">"
        << util::fmt_num(yv) << "</text>\n";
    svg << "<line x1=\"" << g.ml << "\" y1=\"" << y << "\" x2=\"" << g.w - g.mr << "\" y2=\"" << y
        << "\" stroke=\"#dddddd\"/>\n";
  }
  svg << "<text x=\"" << g.w / 2 << "\" y=\"" << g.h - 10
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">IaaS count"
      << "</text>\n";
  svg << "<text x=\"16\" y=\"" << g.h / 2
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\" "
      << "transform=\"rotate(-90 16 " << g.h / 2 << ")\">" << metric << " (ms)</text>\n";

  std::size_t idx = 0;
  for (const auto& backend : backends) {
    const char* color = series_color(idx);
    std::ostringstream pts;
    for (int c : counts) {
      auto it = agg.find({backend, c});
      if (it == agg.end()) continue;
      double x = g.px(c, x0, x1), y = g.py(it->second.mean, y0, y1);
      pts << util::fmt_num(x) << "," << util::fmt_num(y) << " ";
      double e = it->second.stddev;
      if (e > 0) {
        double yl = g.py(it->second.mean - e, y0, y1), yh = g.py(it->second.mean + e, y0, y1);
        svg << "<line x1=\"" << x << "\" y1=\"" << yl << "\" x2=\"" << x << "\" y2=\"" << yh
            << "\" stroke=\"" << color << "\" stroke-width=\"1\"/>\n";
      }
      svg << "<circle cx=\"" << x << "\" cy=\"" << y << "\" r=\"3\" fill=\"" << color << "\"/>\n";
    }
    svg << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\""
        << pts.str() << "\"/>\n";
    double ly = g.mt + 16 * static_cast<double>(idx);
    svg << "<rect x=\"" << g.w - g.mr - 130 << "\" y=\"" << ly - 9
        << "\" width=\"10\" height=\"10\" fill=\"" << color << "\"/>\n";
    svg << "<text x=\"" << g.w - g.mr - 114 << "\" y=\"" << ly
        << "\" font-family=\"sans-serif\" font-size=\"12\">" << backend << "</text>\n";
    ++idx;
  }
  svg << "</svg>\n";
  return svg.str();
}

void write_plot_svg(const std::string& path, const std::vector<MetricSample>& samples,
                    const std::string& metric) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << render_plot_svg(samples, metric);
}

}  // namespace robocloud::bench
