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

#include "oracles.hpp"
#include "wlt/scoring.hpp"

using namespace wlt;

namespace {

std::vector<std::string> random_labels(Rng& rng, std::size_t max_len, int alphabet) {
  std::vector<std::string> out(rng.below(max_len + 1));
  for (auto& l : out) l = std::string(1, static_cast<char>('a' + rng.below(static_cast<std::uint64_t>(alphabet))));
  return out;
}

oracle::Op as_oracle(EditOp op) {
  switch (op) {
    case EditOp::hit: return oracle::Op::hit;
    case EditOp::sub: return oracle::Op::sub;
    case EditOp::del: return oracle::Op::del;
    case EditOp::ins: return oracle::Op::ins;
  }
  return oracle::Op::hit;
}

void check_against_oracle(const std::vector<std::string>& ref, const std::vector<std::string>& hyp,
                          const AlignCosts& costs) {
  const Alignment a = align(ref, hyp, costs);
  const auto o = oracle::exhaustive_align(ref, hyp, costs.sub, costs.del, costs.ins);
  ASSERT_EQ(a.cost, o.cost);
  EXPECT_EQ(a.counts.N, static_cast<long>(ref.size()));
  EXPECT_EQ(a.counts.H, o.H);
  EXPECT_EQ(a.counts.S, o.S);
  EXPECT_EQ(a.counts.D, o.D);
  EXPECT_EQ(a.counts.I, o.I);
  ASSERT_EQ(a.pairs.size(), o.ops.size());
  for (std::size_t k = 0; k < o.ops.size(); ++k) EXPECT_EQ(as_oracle(a.pairs[k].op), o.ops[k]);
  // the pairs spell out both sequences
  std::vector<std::string> r, h;
  for (const auto& p : a.pairs) {
    if (!p.ref.empty()) r.push_back(p.ref);
    if (!p.hyp.empty()) h.push_back(p.hyp);
    if (p.op == EditOp::hit) {
      EXPECT_EQ(p.ref, p.hyp);
    }
    if (p.op == EditOp::sub) {
      EXPECT_NE(p.ref, p.hyp);
    }
  }
  EXPECT_EQ(r, ref);
  EXPECT_EQ(h, hyp);
}

}  // namespace

TEST(Align, MatchesExhaustiveOracleUnitCosts) {
  Rng rng(2024);
  for (int trial = 0; trial < 1500; ++trial) {
    auto ref = random_labels(rng, 5, 3);
    auto hyp = random_labels(rng, 5, 3);
    check_against_oracle(ref, hyp, {});
    if (HasFatalFailure()) return;
  }
}

TEST(Align, MatchesExhaustiveOracleHResultsCosts) {
  Rng rng(7);
  for (int trial = 0; trial < 400; ++trial) {
    auto ref = random_labels(rng, 5, 3);
    auto hyp = random_labels(rng, 5, 3);
    check_against_oracle(ref, hyp, AlignCosts::hresults());
    if (HasFatalFailure()) return;
  }
}

TEST(Align, EmptySides) {
  auto a = align({}, {"x", "y"});
  EXPECT_EQ(a.counts, (AlignmentCounts{0, 0, 0, 0, 2}));
  EXPECT_THROW(correctness(a.counts), Error);
  auto b = align({"x", "y"}, {});
  EXPECT_EQ(b.counts, (AlignmentCounts{2, 0, 0, 2, 0}));
  EXPECT_EQ(correctness(b.counts), 0.0);
}

TEST(Align, HandWorked) {
  // ref a b c d, hyp a x c: hit, sub, hit, del
  auto a = align({"a", "b", "c", "d"}, {"a", "x", "c"});
  EXPECT_EQ(a.counts, (AlignmentCounts{4, 2, 1, 1, 0}));
  EXPECT_DOUBLE_EQ(correctness(a.counts), 0.5);
  EXPECT_DOUBLE_EQ(accuracy(a.counts), 0.5);
  auto b = align({"a"}, {"a", "a", "a"});
  EXPECT_EQ(b.counts, (AlignmentCounts{1, 1, 0, 0, 2}));
  EXPECT_DOUBLE_EQ(correctness(b.counts), 1.0);
  EXPECT_DOUBLE_EQ(accuracy(b.counts), -1.0);
}

TEST(Align, CorrectnessIsHitRateAndBoundsAccuracy) {
  Rng rng(99);
  for (int trial = 0; trial < 500; ++trial) {
    auto ref = random_labels(rng, 8, 4);
    if (ref.empty()) ref.push_back("a");
    auto hyp = random_labels(rng, 8, 4);
    auto c = align(ref, hyp).counts;
    EXPECT_EQ(c.H + c.S + c.D, c.N);
    EXPECT_DOUBLE_EQ(correctness(c), static_cast<double>(c.H) / static_cast<double>(c.N));
    EXPECT_LE(accuracy(c), correctness(c));
  }
}

TEST(Project, TierConversions) {
  Lexicon lex;
  lex.add("ab", {"a", "b"});
  lex.add("ab", {"a", "c"});  // alternate pronunciation is not used
  VisemeMap map = VisemeMap::from_assignment("m", {{"a", "V"}, {"b", "W"}, {"c", "W"}});
  EXPECT_EQ(project_units({"sil", "ab", "sp", "ab"}, Tier::word, Tier::phoneme, &lex, &map),
            (std::vector<std::string>{"sil", "a", "b", "sp", "a", "b"}));
  EXPECT_EQ(project_units({"ab"}, Tier::word, Tier::viseme, &lex, &map),
            (std::vector<std::string>{"V", "W"}));
  EXPECT_EQ(project_units({"c", "a"}, Tier::phoneme, Tier::viseme, &lex, &map),
            (std::vector<std::string>{"W", "V"}));
  EXPECT_THROW(project_units({"V"}, Tier::viseme, Tier::phoneme, &lex, &map), Error);
  EXPECT_THROW(project_units({"a"}, Tier::phoneme, Tier::word, &lex, &map), Error);
  EXPECT_THROW(project_units({"zz"}, Tier::word, Tier::phoneme, &lex, &map), Error);
  EXPECT_THROW(project_units({"a"}, Tier::phoneme, Tier::viseme, &lex, nullptr), Error);
}

TEST(Confusion, TalliesEveryOperation) {
  std::vector<Alignment> al;
  al.push_back(align({"a", "b", "c"}, {"a", "c"}, {}, Tier::viseme));        // hit, del, hit
  al.push_back(align({"a", "sil"}, {"b", "sil", "c"}, {}, Tier::viseme));    // sub, pause, ins
  auto m = confusion_from_alignments(al, Tier::viseme);
  EXPECT_EQ(m.labels, (std::vector<std::string>{"a", "b", "c"}));
  EXPECT_EQ(m.counts[0][0], 1);
  EXPECT_EQ(m.counts[0][1], 1);
  EXPECT_EQ(m.counts[2][2], 1);
  EXPECT_EQ(m.deletions[1], 1);
  EXPECT_EQ(m.insertions[2], 1);
  long total = 0;
  for (const auto& row : m.counts)
    for (long v : row) total += v;
  EXPECT_EQ(total, 3);
  EXPECT_THROW(confusion_from_alignments(al, Tier::phoneme), Error);
  EXPECT_THROW(confusion_from_alignments(al, Tier::viseme, {"a", "b"}), Error);
}

TEST(Report, LayoutAndTotals) {
  std::vector<ScoredUtterance> rows{{"u1", {4, 2, 1, 1, 0}}, {"u2", {0, 0, 0, 0, 1}},
                                    {"u3", {2, 2, 0, 0, 1}}};
  std::ostringstream os;
  write_score_report(os, rows);
  EXPECT_EQ(os.str(),
            "id N H S D I C A\n"
            "u1 4 2 1 1 0 0.5000 0.5000\n"
            "u2 0 0 0 0 1 - -\n"
            "u3 2 2 0 0 1 1.0000 0.5000\n"
            "TOTAL 6 4 1 1 2 0.6667 0.3333\n");
  std::ostringstream csv;
  write_score_report(csv, rows, true);
  EXPECT_EQ(csv.str().substr(0, 16), "id,N,H,S,D,I,C,A");
}
