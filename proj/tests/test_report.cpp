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

#include <gtest/gtest.h>

#include <sstream>

#include "wlt/report.hpp"

using namespace wlt;

namespace {

SweepResult fake_sweep() {
  SweepResult sw;
  long seed = 3;
  for (const auto& s : sweep_series())
    for (std::size_t size : {4u, 3u, 2u}) {
      for (Tier t : {classifier_tier_of(s), Tier::word}) {
        if (t == Tier::word && s.find("word_net") == std::string::npos) continue;
        SweepRecord r;
        r.series = s;
        r.map_size = size;
        r.tier = t;
        for (int f = 0; f < 3; ++f) {
          seed = (seed * 1103515245 + 12345) % 2147483648L;
          const long N = 50 + seed % 20, D = seed % 7, S = seed % 11, I = seed % 5;
          AlignmentCounts c{N, N - D - S, S, D, I};
          r.fold_counts.push_back(c);
          r.fold_correctness.push_back(correctness(c));
        }
        std::tie(r.mean, r.std_error) = mean_and_stderr(r.fold_correctness);
        sw.records.push_back(r);
      }
    }
  return sw;
}

std::size_t count(const std::string& text, const std::string& what) {
  std::size_t n = 0;
  for (auto p = text.find(what); p != std::string::npos; p = text.find(what, p + 1)) ++n;
  return n;
}

}  // namespace

TEST(ResultsCsv, RoundTrip) {
  const SweepResult sw = fake_sweep();
  std::stringstream ss;
  write_results_csv(ss, sw);
  const std::string text = ss.str();
  EXPECT_EQ(text.substr(0, text.find('\n')), "series,map_size,fold,tier_measured,N,H,S,D,I,C,A");
  SweepResult back = read_results_csv(ss, "mem");
  ASSERT_EQ(back.records.size(), sw.records.size());
  for (std::size_t i = 0; i < sw.records.size(); ++i) {
    EXPECT_EQ(back.records[i].series, sw.records[i].series);
    EXPECT_EQ(back.records[i].map_size, sw.records[i].map_size);
    EXPECT_EQ(back.records[i].tier, sw.records[i].tier);
    EXPECT_EQ(back.records[i].fold_counts, sw.records[i].fold_counts);
    EXPECT_EQ(back.records[i].mean, sw.records[i].mean);
  }
  std::stringstream again;
  write_results_csv(again, back);
  EXPECT_EQ(again.str(), text);
}

TEST(ResultsCsv, RejectsMalformedInput) {
  std::stringstream bad_header("a,b\n");
  EXPECT_THROW(read_results_csv(bad_header, "x"), Error);
  std::stringstream empty("series,map_size,fold,tier_measured,N,H,S,D,I,C,A\n");
  EXPECT_THROW(read_results_csv(empty, "x"), Error);
  std::stringstream inconsistent(
      "series,map_size,fold,tier_measured,N,H,S,D,I,C,A\ns,3,0,phoneme,10,5,1,1,0,0.5,0.5\n");
  EXPECT_THROW(read_results_csv(inconsistent, "x"), Error);
  std::stringstream short_row("series,map_size,fold,tier_measured,N,H,S,D,I,C,A\ns,3,0\n");
  EXPECT_THROW(read_results_csv(short_row, "x"), Error);
}

TEST(SummaryCsv, TableLayout) {
  std::vector<SummaryRow> rows{{"WLT phonemes + phoneme net", 0.25, 0.5, 0.25},
                               {"Effect of WLT", 0.01, -0.02, std::nullopt}};
  std::ostringstream os;
  write_summary_csv(os, rows);
  EXPECT_EQ(os.str(),
            "series,min,max,range\n"
            "WLT phonemes + phoneme net,0.2500,0.5000,0.2500\n"
            "Effect of WLT,0.0100,-0.0200,\n");
}

TEST(Plot, OneColumnAndPolylinePerSeries) {
  const SweepResult sw = fake_sweep();
  auto series = plot_series(sw);
  ASSERT_EQ(series.size(), 4u);
  for (const auto& s : series) {
    ASSERT_EQ(s.points.size(), 3u);
    EXPECT_EQ(s.points.front().first, 4u);
    EXPECT_EQ(s.points.back().first, 2u);
    // classifier units, not words
    EXPECT_EQ(s.points[0].second, sw.find(s.name, 4, classifier_tier_of(s.name))->mean);
  }
  std::ostringstream data;
  write_plot_data(data, series);
  const std::string d = data.str();
  EXPECT_EQ(d.substr(0, d.find('\n')),
            "map_size,wlt_phoneme+phoneme_net,viseme+phoneme_net,wlt_phoneme+word_net,"
            "viseme+word_net");
  EXPECT_EQ(count(d, "\n"), 4u);
  std::ostringstream svg;
  write_svg(svg, series);
  EXPECT_EQ(count(svg.str(), "<polyline"), 4u);
  EXPECT_EQ(count(svg.str(), "</svg>"), 1u);

  series.pop_back();
  std::ostringstream fewer;
  write_svg(fewer, series);
  EXPECT_EQ(count(fewer.str(), "<polyline"), 3u);
}

TEST(MatrixCsv, Layout) {
  std::vector<MatrixRow> rows;
  for (const auto& [c, n] : unit_selection_pairs()) rows.push_back({c, n, {}, {0.5, 0.7}, 0.6, 0.1});
  std::ostringstream os;
  write_matrix_csv(os, rows);
  const std::string t = os.str();
  EXPECT_EQ(count(t, "\n"), 7u);
  EXPECT_NE(t.find("viseme,word,2,0.600000,0.100000\n"), std::string::npos);
}
