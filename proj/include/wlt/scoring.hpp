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

#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "wlt/common.hpp"
#include "wlt/corpus.hpp"
#include "wlt/p2v.hpp"

namespace wlt {

struct AlignmentCounts {
  long N = 0;
  long H = 0;
  long S = 0;
  long D = 0;
  long I = 0;

  AlignmentCounts& operator+=(const AlignmentCounts& o) {
    N += o.N;
    H += o.H;
    S += o.S;
    D += o.D;
    I += o.I;
    return *this;
  }
  friend bool operator==(const AlignmentCounts&, const AlignmentCounts&) = default;
};

enum class EditOp { hit, sub, del, ins };

struct AlignedPair {
  EditOp op = EditOp::hit;
  std::string ref;  // empty for insertions
  std::string hyp;  // empty for deletions
  friend bool operator==(const AlignedPair&, const AlignedPair&) = default;
};

struct Alignment {
  Tier tier = Tier::phoneme;
  AlignmentCounts counts;
  std::vector<AlignedPair> pairs;
  double cost = 0.0;
};

struct AlignCosts {
  double sub = 1.0;
  double del = 1.0;
  double ins = 1.0;
  /// The weights HResults uses.
  static AlignCosts hresults() { return {10.0, 7.0, 7.0}; }
};

/// Minimum-cost edit alignment. Among optimal alignments the traceback from
/// the end prefers a diagonal move (hit or substitution), then a deletion,
/// then an insertion.
inline Alignment align(const std::vector<std::string>& ref, const std::vector<std::string>& hyp,
                       const AlignCosts& costs = {}, Tier tier = Tier::phoneme) {
  const std::size_t n = ref.size(), m = hyp.size();
  std::vector<double> cost((n + 1) * (m + 1), 0.0);
  auto C = [&](std::size_t i, std::size_t j) -> double& { return cost[i * (m + 1) + j]; };
  for (std::size_t i = 1; i <= n; ++i) C(i, 0) = C(i - 1, 0) + costs.del;
  for (std::size_t j = 1; j <= m; ++j) C(0, j) = C(0, j - 1) + costs.ins;
  for (std::size_t i = 1; i <= n; ++i)
    for (std::size_t j = 1; j <= m; ++j) {
      const double diag = C(i - 1, j - 1) + (ref[i - 1] == hyp[j - 1] ? 0.0 : costs.sub);
      C(i, j) = std::min({diag, C(i - 1, j) + costs.del, C(i, j - 1) + costs.ins});
    }

  Alignment out;
  out.tier = tier;
  out.cost = C(n, m);
  std::size_t i = n, j = m;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0) {
      const bool same = ref[i - 1] == hyp[j - 1];
      if (C(i, j) == C(i - 1, j - 1) + (same ? 0.0 : costs.sub)) {
        out.pairs.push_back({same ? EditOp::hit : EditOp::sub, ref[i - 1], hyp[j - 1]});
        --i;
        --j;
        continue;
      }
    }
    if (i > 0 && C(i, j) == C(i - 1, j) + costs.del) {
      out.pairs.push_back({EditOp::del, ref[i - 1], {}});
      --i;
    } else {
      out.pairs.push_back({EditOp::ins, {}, hyp[j - 1]});
      --j;
    }
  }
  std::reverse(out.pairs.begin(), out.pairs.end());
  out.counts.N = static_cast<long>(n);
  for (const auto& p : out.pairs) {
    switch (p.op) {
      case EditOp::hit: ++out.counts.H; break;
      case EditOp::sub: ++out.counts.S; break;
      case EditOp::del: ++out.counts.D; break;
      case EditOp::ins: ++out.counts.I; break;
    }
  }
  return out;
}

/// C = (N - D - S) / N.
inline double correctness(const AlignmentCounts& c) {
  if (c.N <= 0) throw Error("correctness: reference is empty (N = 0)");
  return static_cast<double>(c.N - c.D - c.S) / static_cast<double>(c.N);
}

/// A = (N - D - S - I) / N; never above C and may be negative.
inline double accuracy(const AlignmentCounts& c) {
  if (c.N <= 0) throw Error("accuracy: reference is empty (N = 0)");
  return static_cast<double>(c.N - c.D - c.S - c.I) / static_cast<double>(c.N);
}

/// Converts labels between tiers: word -> phoneme via the lexicon (primary
/// pronunciations), phoneme -> viseme via the map. Coarse-to-fine directions
/// are not defined. Pause labels pass through unchanged.
inline std::vector<std::string> project_units(const std::vector<std::string>& labels, Tier from,
                                              Tier to, const Lexicon* lexicon,
                                              const VisemeMap* map) {
  if (from == to) return labels;
  if (from == Tier::viseme)
    throw Error(std::string("cannot project viseme labels to ") + tier_name(to) +
                ": the phoneme-to-viseme map is not invertible");
  if (from == Tier::phoneme && to == Tier::word)
    throw Error("cannot project phoneme labels to words");
  std::vector<std::string> phones;
  if (from == Tier::word) {
    if (!lexicon) throw Error("word projection needs a lexicon");
    for (const auto& w : labels) {
      if (is_pause(w)) {
        phones.push_back(w);
        continue;
      }
      const auto& pron = lexicon->primary(w);
      phones.insert(phones.end(), pron.begin(), pron.end());
    }
  } else {
    phones = labels;
  }
  if (to == Tier::phoneme) return phones;
  if (!map) throw Error("viseme projection needs a phoneme-to-viseme map");
  return translate_labels(phones, *map);
}

/// Hits fill the diagonal, substitutions the off-diagonal cells; deletions
/// and insertions are tallied per label beside the table. Pause labels are
/// ignored. With an empty alphabet the sorted set of seen labels is used.
inline ConfusionMatrix confusion_from_alignments(const std::vector<Alignment>& alignments,
                                                 Tier tier,
                                                 std::vector<std::string> alphabet = {}) {
  for (const auto& a : alignments)
    if (a.tier != tier)
      throw Error(std::string("confusion_from_alignments: alignment on tier ") +
                  tier_name(a.tier) + ", expected " + tier_name(tier));
  if (alphabet.empty()) {
    std::set<std::string> seen;
    for (const auto& a : alignments)
      for (const auto& p : a.pairs) {
        if (!p.ref.empty() && !is_pause(p.ref)) seen.insert(p.ref);
        if (!p.hyp.empty() && !is_pause(p.hyp)) seen.insert(p.hyp);
      }
    alphabet.assign(seen.begin(), seen.end());
  }
  ConfusionMatrix m = ConfusionMatrix::zeros(tier, std::move(alphabet));
  auto idx = [&](const std::string& l) {
    const int i = m.index_of(l);
    if (i < 0) throw Error("confusion_from_alignments: label '" + l + "' not in alphabet");
    return static_cast<std::size_t>(i);
  };
  for (const auto& a : alignments)
    for (const auto& p : a.pairs) {
      if ((!p.ref.empty() && is_pause(p.ref)) || (!p.hyp.empty() && is_pause(p.hyp))) continue;
      switch (p.op) {
        case EditOp::hit:
        case EditOp::sub: ++m.counts[idx(p.ref)][idx(p.hyp)]; break;
        case EditOp::del: ++m.deletions[idx(p.ref)]; break;
        case EditOp::ins: ++m.insertions[idx(p.hyp)]; break;
      }
    }
  return m;
}

// ---------------------------------------------------------------------------
// Score report: "id N H S D I C A" per utterance, then a TOTAL line with pooled
// counts. C and A print with 4 decimals, "-" when N = 0.

struct ScoredUtterance {
  std::string id;
  AlignmentCounts counts;
};

namespace detail {
inline std::string ratio_or_dash(const AlignmentCounts& c, bool acc) {
  if (c.N == 0) return "-";
  return format_fixed(acc ? accuracy(c) : correctness(c), 4);
}
}  // namespace detail

inline void write_score_report(std::ostream& os, const std::vector<ScoredUtterance>& rows,
                               bool csv = false) {
  const char sep = csv ? ',' : ' ';
  os << "id" << sep << "N" << sep << "H" << sep << "S" << sep << "D" << sep << "I" << sep << "C"
     << sep << "A\n";
  AlignmentCounts total;
  auto line = [&](const std::string& id, const AlignmentCounts& c) {
    os << id << sep << c.N << sep << c.H << sep << c.S << sep << c.D << sep << c.I << sep
       << detail::ratio_or_dash(c, false) << sep << detail::ratio_or_dash(c, true) << '\n';
  };
  for (const auto& r : rows) {
    line(r.id, r.counts);
    total += r.counts;
  }
  line("TOTAL", total);
}

}  // namespace wlt
