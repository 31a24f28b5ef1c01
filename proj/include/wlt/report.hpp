// Copyright 2026 The wlt Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "wlt/common.hpp"
#include "wlt/pipeline.hpp"

namespace wlt {

// Results CSV: one line per (series, map size, fold, measured tier).

inline void write_results_csv(std::ostream& os, const SweepResult& sweep) {
  os << "series,map_size,fold,tier_measured,N,H,S,D,I,C,A\n";
  for (const auto& r : sweep.records) {
    for (std::size_t f = 0; f < r.fold_counts.size(); ++f) {
      const auto& c = r.fold_counts[f];
      os << r.series << ',' << r.map_size << ',' << f << ',' << tier_name(r.tier) << ',' << c.N
         << ',' << c.H << ',' << c.S << ',' << c.D << ',' << c.I << ','
         << format_fixed(correctness(c), 6) << ',' << format_fixed(accuracy(c), 6) << '\n';
    }
  }
}

/// Rebuilds a sweep from its results CSV. C is recomputed from the counts, so
/// the summary does not depend on the printed precision.
inline SweepResult read_results_csv(std::istream& is, const std::string& where) {
  std::string line;
  if (!std::getline(is, line) || trim(line) != "series,map_size,fold,tier_measured,N,H,S,D,I,C,A")
    throw Error(where + ": not a results CSV (bad header)");
  SweepResult out;
  std::map<std::tuple<std::string, std::size_t, Tier>, std::size_t> index;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) f.push_back(trim(cell));
    if (f.size() != 11) throw Error(where + ":" + std::to_string(lineno) + ": expected 11 fields");
    try {
      const auto size = static_cast<std::size_t>(parse_long(f[1]));
      const Tier tier = parse_tier(f[3]);
      AlignmentCounts c{parse_long(f[4]), parse_long(f[5]), parse_long(f[6]), parse_long(f[7]),
                        parse_long(f[8])};
      if (c.N < 0 || c.H + c.S + c.D != c.N)
        throw Error("inconsistent counts (H + S + D must equal N)");
      auto key = std::make_tuple(f[0], size, tier);
      auto it = index.find(key);
      if (it == index.end()) {
        it = index.emplace(key, out.records.size()).first;
        SweepRecord rec;
        rec.series = f[0];
        rec.map_size = size;
        rec.tier = tier;
        out.records.push_back(std::move(rec));
      }
      auto& rec = out.records[it->second];
      rec.fold_counts.push_back(c);
      rec.fold_correctness.push_back(correctness(c));
    } catch (const Error& e) {
      throw Error(where + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  if (out.records.empty()) throw Error(where + ": no result rows");
  for (auto& r : out.records) std::tie(r.mean, r.std_error) = mean_and_stderr(r.fold_correctness);
  return out;
}

/// Per-size means: series, map_size, tier_measured, folds, mean_C, std_error.
inline void write_sweep_summary_csv(std::ostream& os, const SweepResult& sweep) {
  os << "series,map_size,tier_measured,folds,mean_C,std_error\n";
  for (const auto& r : sweep.records) {
    if (!r.error.empty() || r.fold_correctness.empty()) continue;
    os << r.series << ',' << r.map_size << ',' << tier_name(r.tier) << ','
       << r.fold_correctness.size() << ',' << format_fixed(r.mean, 6) << ','
       << format_fixed(r.std_error, 6) << '\n';
  }
}

/// Summary layout: name, min, max, range (empty on effect rows).
inline void write_summary_csv(std::ostream& os, const std::vector<SummaryRow>& rows) {
  os << "series,min,max,range\n";
  for (const auto& r : rows)
    os << r.name << ',' << format_fixed(r.min, 4) << ',' << format_fixed(r.max, 4) << ','
       << (r.range ? format_fixed(*r.range, 4) : std::string()) << '\n';
}

inline void write_matrix_csv(std::ostream& os, const std::vector<MatrixRow>& rows) {
  os << "classifier,network,folds,mean_C,std_error\n";
  for (const auto& r : rows)
    os << tier_name(r.classifier) << ',' << tier_name(r.network) << ','
       << r.fold_correctness.size() << ',' << format_fixed(r.mean, 6) << ','
       << format_fixed(r.std_error, 6) << '\n';
}

// ---------------------------------------------------------------------------
// Plot data: x = map size, one column per series in its classifier units.

struct PlotSeries {
  std::string name;
  std::vector<std::pair<std::size_t, double>> points;  // (map size, mean C), sizes descending
};

inline Tier classifier_tier_of(const std::string& series) {
  return series.rfind("viseme", 0) == 0 ? Tier::viseme : Tier::phoneme;
}

inline std::vector<PlotSeries> plot_series(const SweepResult& sweep) {
  std::vector<PlotSeries> out;
  for (const auto& name : sweep_series()) {
    PlotSeries s{name, {}};
    for (const auto& r : sweep.records)
      if (r.series == name && r.tier == classifier_tier_of(name) && r.error.empty() &&
          !r.fold_correctness.empty())
        s.points.emplace_back(r.map_size, r.mean);
    std::sort(s.points.begin(), s.points.end(),
              [](const auto& a, const auto& b) { return a.first > b.first; });
    if (!s.points.empty()) out.push_back(std::move(s));
  }
  return out;
}

inline void write_plot_data(std::ostream& os, const std::vector<PlotSeries>& series) {
  std::vector<std::size_t> sizes;
  for (const auto& s : series)
    for (const auto& p : s.points) sizes.push_back(p.first);
  std::sort(sizes.begin(), sizes.end(), std::greater<>());
  sizes.erase(std::unique(sizes.begin(), sizes.end()), sizes.end());
  os << "map_size";
  for (const auto& s : series) os << ',' << s.name;
  os << '\n';
  for (auto size : sizes) {
    os << size;
    for (const auto& s : series) {
      os << ',';
      for (const auto& p : s.points)
        if (p.first == size) os << format_fixed(p.second, 6);
    }
    os << '\n';
  }
}

/// Line chart of mean correctness against map size, sizes decreasing left to
/// right. One polyline per series.
inline void write_svg(std::ostream& os, const std::vector<PlotSeries>& series,
                      const std::string& title = "Mean correctness by viseme set size") {
  const double width = 640, height = 400, left = 60, right = 200, top = 40, bottom = 50;
  const double pw = width - left - right, ph = height - top - bottom;
  std::size_t xmin = 0, xmax = 0;
  bool any = false;
  for (const auto& s : series)
    for (const auto& p : s.points) {
      if (!any) xmin = xmax = p.first;
      xmin = std::min(xmin, p.first);
      xmax = std::max(xmax, p.first);
      any = true;
    }
  auto px = [&](std::size_t size) {
    if (xmax == xmin) return left + pw / 2;
    return left + pw * static_cast<double>(xmax - size) / static_cast<double>(xmax - xmin);
  };
  auto py = [&](double c) { return top + ph * (1.0 - std::clamp(c, 0.0, 1.0)); };
  auto num = [](double v) { return format_fixed(v, 2); };
  static const char* colours[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                  "#ff7f0e", "#8c564b"};

  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
     << "\" viewBox=\"0 0 " << width << ' ' << height << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << num(left) << "\" y=\"24\" font-family=\"sans-serif\" font-size=\"14\">"
     << title << "</text>\n";
  os << "<g stroke=\"black\" fill=\"none\">\n";
  os << "<line x1=\"" << num(left) << "\" y1=\"" << num(top + ph) << "\" x2=\"" << num(left + pw)
     << "\" y2=\"" << num(top + ph) << "\"/>\n";
  os << "<line x1=\"" << num(left) << "\" y1=\"" << num(top) << "\" x2=\"" << num(left)
     << "\" y2=\"" << num(top + ph) << "\"/>\n";
  os << "</g>\n<g font-family=\"sans-serif\" font-size=\"11\">\n";
  for (int k = 0; k <= 5; ++k) {
    const double c = k / 5.0;
    os << "<text x=\"" << num(left - 8) << "\" y=\"" << num(py(c) + 4)
       << "\" text-anchor=\"end\">" << format_fixed(c, 1) << "</text>\n";
  }
  if (any)
    for (std::size_t s = xmin; s <= xmax; ++s)
      os << "<text x=\"" << num(px(s)) << "\" y=\"" << num(top + ph + 16)
         << "\" text-anchor=\"middle\">" << s << "</text>\n";
  os << "<text x=\"" << num(left + pw / 2) << "\" y=\"" << num(height - 10)
     << "\" text-anchor=\"middle\">number of visemes</text>\n";
  os << "<text x=\"16\" y=\"" << num(top + ph / 2) << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
     << num(top + ph / 2) << ")\">correctness C</text>\n";
  os << "</g>\n";
  for (std::size_t i = 0; i < series.size(); ++i) {
    const char* colour = colours[i % std::size(colours)];
    os << "<polyline fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"2\" points=\"";
    for (std::size_t k = 0; k < series[i].points.size(); ++k) {
      if (k) os << ' ';
      os << num(px(series[i].points[k].first)) << ',' << num(py(series[i].points[k].second));
    }
    os << "\"/>\n";
    const double ly = top + 14 + 18 * static_cast<double>(i);
    os << "<line x1=\"" << num(left + pw + 12) << "\" y1=\"" << num(ly) << "\" x2=\""
       << num(left + pw + 32) << "\" y2=\"" << num(ly) << "\" stroke=\"" << colour
       << "\" stroke-width=\"2\"/>\n";
    os << "<text x=\"" << num(left + pw + 38) << "\" y=\"" << num(ly + 4)
       << "\" font-family=\"sans-serif\" font-size=\"11\">" << series[i].name << "</text>\n";
  }
  os << "</svg>\n";
}

}  // namespace wlt
