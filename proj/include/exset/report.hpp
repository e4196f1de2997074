#pragma once

#include "exset/active_learning.hpp"
#include "exset/field.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

namespace exset {

inline constexpr const char* history_schema = "exset-history/1";
inline constexpr const char* doe_schema = "exset-doe/1";
inline constexpr const char* region_schema = "exset-region/1";
inline constexpr const char* field_schema = "exset-field/1";
inline constexpr const char* convergence_schema = "exset-convergence/1";
inline constexpr const char* chimap_schema = "exset-chimap/1";
inline constexpr const char* timing_schema = "exset-timing/1";

namespace detail {

inline void write_schema(std::ostream& os, const char* schema) { os << "# schema: " << schema << '\n'; }

/// Empty cell for NaN or missing values.
inline void write_cell(std::ostream& os, double v)
{
  if (std::isfinite(v)) write_double(os, v);
}

inline void write_cell(std::ostream& os, const std::optional<double>& v)
{
  if (v) write_cell(os, *v);
}

} // namespace detail

/// One row per iteration. `alpha_mcs` enables the relative-error column.
inline void write_history_csv(std::ostream& os, const LearningHistory& h, std::optional<double> alpha_mcs, double mesh_volume)
{
  detail::write_schema(os, history_schema);
  const Eigen::Index d = h.doe.dim();
  os << "iteration,doe_size,simulator_calls,latent_dim,rho_star,q_lo,q_hi,region_volume,alpha_hat,relative_alpha_error,"
        "symdiff_volume,symdiff_fraction,mode,chosen_index";
  for (Eigen::Index k = 0; k < d; ++k) os << ",u" << k;
  os << '\n';
  for (const auto& r : h.records) {
    os << r.iteration << ',' << r.doe_size << ',' << r.simulator_calls << ',' << r.latent_dim << ',';
    detail::write_cell(os, r.rho_star);
    os << ',';
    detail::write_cell(os, r.q_lo);
    os << ',';
    detail::write_cell(os, r.q_hi);
    os << ',';
    detail::write_cell(os, r.region_volume);
    os << ',';
    detail::write_cell(os, r.alpha_hat);
    os << ',';
    if (r.alpha_hat && alpha_mcs) detail::write_cell(os, relative_alpha_error(*r.alpha_hat, *alpha_mcs));
    os << ',';
    detail::write_cell(os, r.symdiff);
    os << ',';
    if (r.symdiff) detail::write_cell(os, *r.symdiff / mesh_volume);
    os << ',' << to_string(r.mode) << ',';
    if (r.chosen_index >= 0) os << r.chosen_index;
    for (Eigen::Index k = 0; k < d; ++k) {
      os << ',';
      if (r.chosen.size() == d) detail::write_cell(os, r.chosen[k]);
    }
    os << '\n';
  }
}

inline void write_doe_csv(std::ostream& os, const SampleSet& doe)
{
  detail::write_schema(os, doe_schema);
  write_samples_csv(os, doe);
}

inline void write_region_csv(std::ostream& os, const NodeSet& region)
{
  detail::write_schema(os, region_schema);
  write_nodeset_csv(os, region);
}

inline void write_field_report_csv(std::ostream& os, const Field& f, const std::string& value_name)
{
  detail::write_schema(os, field_schema);
  write_field_csv(os, f, value_name);
}

/// Reads the membership column written by write_region_csv.
inline NodeSet read_region_csv(std::istream& is, const MeshPtr& mesh)
{
  std::string line;
  bool header = false;
  std::vector<Eigen::Index> members;
  Eigen::Index row = 0;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (!header) {
      if (line.size() < 6 || line.compare(line.size() - 6, 6, "member") != 0) throw Error("read_region_csv: missing member column");
      header = true;
      continue;
    }
    const auto comma = line.rfind(',');
    const std::string cell = comma == std::string::npos ? line : line.substr(comma + 1);
    if (cell == "1") members.push_back(row);
    else if (cell != "0") throw Error("read_region_csv: bad membership value on row " + std::to_string(row + 1));
    ++row;
  }
  if (!header) throw Error("read_region_csv: empty file");
  if (row != mesh->size()) throw Error("read_region_csv: row count differs from the mesh size");
  return NodeSet::from_indices(mesh, members);
}

/// Per-iteration median and 0.1/0.9 quantiles across runs.
struct ConvergencePoint
{
  Eigen::Index iteration = 0;
  Eigen::Index doe_size = 0;
  std::size_t runs = 0;
  double alpha_error_median = std::numeric_limits<double>::quiet_NaN();
  double alpha_error_q10 = std::numeric_limits<double>::quiet_NaN();
  double alpha_error_q90 = std::numeric_limits<double>::quiet_NaN();
  double symdiff_median = std::numeric_limits<double>::quiet_NaN();
  double symdiff_q10 = std::numeric_limits<double>::quiet_NaN();
  double symdiff_q90 = std::numeric_limits<double>::quiet_NaN();
};

/// Quantiles use the same order statistic as every other estimate here, so
/// the median of an even count is the lower median.
inline std::vector<ConvergencePoint> convergence_table(const std::vector<const LearningHistory*>& runs, double alpha_mcs, double mesh_volume)
{
  std::vector<ConvergencePoint> out;
  if (runs.empty()) return out;
  std::size_t n = runs.front()->records.size();
  for (const auto* h : runs) n = std::min(n, h->records.size());
  for (std::size_t k = 0; k < n; ++k) {
    ConvergencePoint p;
    p.iteration = runs.front()->records[k].iteration;
    p.doe_size = runs.front()->records[k].doe_size;
    p.runs = runs.size();
    std::vector<double> a, s;
    for (const auto* h : runs) {
      const auto& r = h->records[k];
      if (r.alpha_hat) a.push_back(relative_alpha_error(*r.alpha_hat, alpha_mcs));
      if (r.symdiff) s.push_back(*r.symdiff / mesh_volume);
    }
    if (!a.empty()) {
      p.alpha_error_median = empirical_quantile(a, 0.5);
      p.alpha_error_q10 = empirical_quantile(a, 0.1);
      p.alpha_error_q90 = empirical_quantile(a, 0.9);
    }
    if (!s.empty()) {
      p.symdiff_median = empirical_quantile(s, 0.5);
      p.symdiff_q10 = empirical_quantile(s, 0.1);
      p.symdiff_q90 = empirical_quantile(s, 0.9);
    }
    out.push_back(p);
  }
  return out;
}

inline void write_convergence_csv(std::ostream& os, const std::vector<ConvergencePoint>& t)
{
  detail::write_schema(os, convergence_schema);
  os << "iteration,doe_size,runs,alpha_error_median,alpha_error_q10,alpha_error_q90,symdiff_fraction_median,symdiff_fraction_q10,"
        "symdiff_fraction_q90\n";
  for (const auto& p : t) {
    os << p.iteration << ',' << p.doe_size << ',' << p.runs;
    for (double v : {p.alpha_error_median, p.alpha_error_q10, p.alpha_error_q90, p.symdiff_median, p.symdiff_q10, p.symdiff_q90}) {
      os << ',';
      detail::write_cell(os, v);
    }
    os << '\n';
  }
}

/// Wall-clock seconds per run and iteration; kept apart from numerical outputs.
inline void write_timing_csv(std::ostream& os, const std::vector<const LearningHistory*>& runs)
{
  detail::write_schema(os, timing_schema);
  os << "run,iteration,seconds\n";
  for (std::size_t i = 0; i < runs.size(); ++i)
    for (const auto& r : runs[i]->records) {
      os << i << ',' << r.iteration << ',';
      detail::write_double(os, r.seconds);
      os << '\n';
    }
}

/// A median line with a shaded quantile band.
struct PlotSeries
{
  std::string label;
  std::string color;
  std::vector<double> x;
  std::vector<double> median;
  std::vector<double> lo;
  std::vector<double> hi;
};

/// Standalone SVG line plot with a log10 y axis. Non-positive values are dropped.
inline void write_log_plot_svg(std::ostream& os, const std::string& title, const std::string& xlabel, const std::string& ylabel,
                               const std::vector<PlotSeries>& series)
{
  const double w = 640, h = 420, ml = 70, mr = 20, mt = 40, mb = 50;
  double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin, ymin = xmin, ymax = -xmin;
  for (const auto& s : series)
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      xmin = std::min(xmin, s.x[i]);
      xmax = std::max(xmax, s.x[i]);
      for (double v : {s.median[i], s.lo[i], s.hi[i]})
        if (v > 0.0 && std::isfinite(v)) {
          ymin = std::min(ymin, v);
          ymax = std::max(ymax, v);
        }
    }
  if (!std::isfinite(xmin)) xmin = 0, xmax = 1;
  if (xmax <= xmin) xmax = xmin + 1;
  if (!std::isfinite(ymin)) ymin = 1e-3, ymax = 1;
  double lymin = std::floor(std::log10(ymin)), lymax = std::ceil(std::log10(ymax));
  if (lymax <= lymin) lymax = lymin + 1;
  auto px = [&](double x) { return ml + (x - xmin) / (xmax - xmin) * (w - ml - mr); };
  auto py = [&](double y) { return h - mb - (std::log10(y) - lymin) / (lymax - lymin) * (h - mt - mb); };
  auto num = [](double v) {
    char b[32];
    std::snprintf(b, sizeof b, "%.2f", v);
    return std::string(b);
  };

  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << w / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" << title << "</text>\n";
  os << "<line x1=\"" << ml << "\" y1=\"" << h - mb << "\" x2=\"" << w - mr << "\" y2=\"" << h - mb << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\"" << h - mb << "\" stroke=\"black\"/>\n";
  for (double e = lymin; e <= lymax + 1e-9; e += 1.0) {
    const double y = py(std::pow(10.0, e));
    os << "<line x1=\"" << ml << "\" y1=\"" << num(y) << "\" x2=\"" << w - mr << "\" y2=\"" << num(y) << "\" stroke=\"#ddd\"/>\n";
    os << "<text x=\"" << ml - 6 << "\" y=\"" << num(y + 4) << "\" text-anchor=\"end\">1e" << static_cast<int>(e) << "</text>\n";
  }
  for (int i = 0; i <= 5; ++i) {
    const double xv = xmin + (xmax - xmin) * i / 5.0;
    os << "<text x=\"" << num(px(xv)) << "\" y=\"" << h - mb + 18 << "\" text-anchor=\"middle\">" << num(xv) << "</text>\n";
  }
  os << "<text x=\"" << w / 2 << "\" y=\"" << h - 10 << "\" text-anchor=\"middle\">" << xlabel << "</text>\n";
  os << "<text x=\"16\" y=\"" << h / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 " << h / 2 << ")\">" << ylabel << "</text>\n";
  for (std::size_t si = 0; si < series.size(); ++si) {
    const auto& s = series[si];
    std::ostringstream band, line;
    std::vector<std::size_t> ok;
    for (std::size_t i = 0; i < s.x.size(); ++i)
      if (s.lo[i] > 0.0 && s.hi[i] > 0.0 && std::isfinite(s.lo[i]) && std::isfinite(s.hi[i])) ok.push_back(i);
    if (!ok.empty()) {
      for (std::size_t i : ok) band << num(px(s.x[i])) << ',' << num(py(s.hi[i])) << ' ';
      for (auto it = ok.rbegin(); it != ok.rend(); ++it) band << num(px(s.x[*it])) << ',' << num(py(s.lo[*it])) << ' ';
      os << "<polygon points=\"" << band.str() << "\" fill=\"" << s.color << "\" fill-opacity=\"0.2\" stroke=\"none\"/>\n";
    }
    for (std::size_t i = 0; i < s.x.size(); ++i)
      if (s.median[i] > 0.0 && std::isfinite(s.median[i])) line << num(px(s.x[i])) << ',' << num(py(s.median[i])) << ' ';
    os << "<polyline points=\"" << line.str() << "\" fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"2\"/>\n";
    os << "<text x=\"" << w - mr - 8 << "\" y=\"" << mt + 16 * (si + 1) << "\" text-anchor=\"end\" fill=\"" << s.color << "\">" << s.label
       << "</text>\n";
  }
  os << "</svg>\n";
}

} // namespace exset
