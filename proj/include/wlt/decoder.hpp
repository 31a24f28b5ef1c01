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
#include "wlt/hmm.hpp"
#include "wlt/langmodel.hpp"

namespace wlt {

struct DecodeParams {
  double grammar_scale = 1.0;
  /// Subtracted (natural-log domain) for every network unit entered.
  double transition_penalty = 0.5;
  std::optional<double> beam;

  void validate() const {
    if (!(grammar_scale >= 0.0)) throw Error("grammar scale must be >= 0");
    if (beam && !(*beam > 0.0)) throw Error("beam must be positive");
  }
};

struct LabelSpan {
  std::string label;
  int start = 0;
  int end = 0;
  double score = 0.0;
};

struct DecodeResult {
  std::vector<std::string> classifier_labels;
  std::vector<std::string> network_labels;
  std::vector<std::size_t> network_path;  // unit indices
  double score = kLogZero;
  std::vector<LabelSpan> segments;        // per classifier model, incl. boundary sil
  std::vector<LabelSpan> network_segments;
};

namespace detail {

/// A run of models decoded as one chain (a network unit or a boundary model).
struct ChainSegment {
  long unit = -1;  // network unit index; -1 for start/end models
  std::vector<Composite::Unit> models;
  std::vector<std::string> labels;
  std::size_t first_state = 0;
  std::size_t num_states = 0;
  std::size_t first_entry = 0;  // entry node k of this chain is first_entry + k
};

inline ChainSegment make_segment(const HmmSet& set, const std::vector<std::string>& labels,
                                 long unit, std::size_t& next_state, std::size_t& next_entry,
                                 std::vector<std::size_t>& pool_of) {
  Composite c = build_composite(set, labels);
  ChainSegment s;
  s.unit = unit;
  s.labels = labels;
  s.first_state = next_state;
  s.num_states = c.num_states();
  s.first_entry = next_entry;
  for (auto& m : c.units) {
    m.first += next_state;
    s.models.push_back(std::move(m));
  }
  for (auto id : c.pool_of) pool_of.push_back(id);
  next_state += s.num_states;
  next_entry += s.models.size() + 1;
  return s;
}

}  // namespace detail

/// Token-passing Viterbi over a decoding network. Maximises
///   acoustic log-likelihood + s * LM log-probability - p * (units entered).
/// Equal scores resolve toward the lower network-unit index.
inline DecodeResult viterbi_decode(const HmmSet& set, const DecodingNetwork& net,
                                   const FeatureSequence& x, const DecodeParams& params = {}) {
  params.validate();
  net.validate();
  const std::size_t T = x.num_frames();
  if (T == 0) throw Error("viterbi_decode: empty utterance");
  const std::size_t U = net.size();

  std::vector<detail::ChainSegment> segs;
  std::vector<std::size_t> pool_of;
  std::size_t ns = 0, ne = 0;
  const bool has_start = !net.start_label.empty();
  const bool has_end = !net.end_label.empty();
  // Segment layout: [start] units... [end].
  if (has_start) segs.push_back(detail::make_segment(set, {net.start_label}, -1, ns, ne, pool_of));
  const std::size_t first_unit_seg = segs.size();
  for (std::size_t u = 0; u < U; ++u)
    segs.push_back(
        detail::make_segment(set, net.expansions[u], static_cast<long>(u), ns, ne, pool_of));
  if (has_end) segs.push_back(detail::make_segment(set, {net.end_label}, -1, ns, ne, pool_of));
  const std::size_t end_seg = has_end ? segs.size() - 1 : SIZE_MAX;
  const std::size_t start_seg = has_start ? 0 : SIZE_MAX;

  EmissionCache b(set, pool_of, x, false);
  const double s = params.grammar_scale;
  const double p = params.transition_penalty;

  std::vector<double> delta(T * ns, kLogZero);
  std::vector<long> bp(T * ns, -2);
  std::vector<double> entry((T + 1) * ne, kLogZero);
  std::vector<long> ebp((T + 1) * ne, -2);
  auto D = [&](std::size_t t, std::size_t n) -> double& { return delta[t * ns + n]; };
  auto E = [&](std::size_t t, std::size_t e) -> double& { return entry[t * ne + e]; };
  auto EB = [&](std::size_t t, std::size_t e) -> long& { return ebp[t * ne + e]; };
  // Cross-segment back-pointer encoding for node 0 of a segment:
  //   -3        start of utterance
  //   -10 - g   fed by the exit of segment g
  auto chain_exit = [&](const detail::ChainSegment& g) { return g.first_entry + g.models.size(); };

  // Entry flows of models k >= 1 inside a chain, plus its exit node.
  auto inner_entries = [&](const detail::ChainSegment& g, std::size_t t) {
    for (std::size_t k = 1; k <= g.models.size(); ++k) {
      const auto& pm = g.models[k - 1];
      double best = kLogZero;
      long arg = -2;
      if (t > 0)
        for (std::size_t i = 1; i <= pm.n; ++i) {
          const double v = D(t - 1, pm.first + i - 1) + pm.log_a[i][pm.n + 1];
          if (v > best) {
            best = v;
            arg = static_cast<long>(pm.first + i - 1);
          }
        }
      const double v = E(t, g.first_entry + k - 1) + pm.log_a[0][pm.n + 1];
      if (v > best) {
        best = v;
        arg = -1 - static_cast<long>(k - 1);
      }
      E(t, g.first_entry + k) = best;
      EB(t, g.first_entry + k) = arg;
    }
  };

  auto link_units = [&](std::size_t t) {
    // Start model / utterance start feeds each unit; unit exits feed units.
    for (std::size_t u = 0; u < U; ++u) {
      const auto& g = segs[first_unit_seg + u];
      double best = kLogZero;
      long arg = -2;
      if (has_start) {
        const double v = E(t, chain_exit(segs[start_seg])) + s * net.start_weight[u];
        if (v > best) {
          best = v;
          arg = -10 - static_cast<long>(start_seg);
        }
      } else if (t == 0) {
        best = 0.0 + s * net.start_weight[u];
        arg = -3;
      }
      for (std::size_t w = 0; w < U; ++w) {
        const double v = E(t, chain_exit(segs[first_unit_seg + w])) + s * net.arc[w][u];
        if (v > best) {
          best = v;
          arg = -10 - static_cast<long>(first_unit_seg + w);
        }
      }
      E(t, g.first_entry) = best == kLogZero ? kLogZero : best - p;
      EB(t, g.first_entry) = arg;
    }
  };

  auto link_end = [&](std::size_t t) {
    if (!has_end) return;
    const auto& g = segs[end_seg];
    double best = kLogZero;
    long arg = -2;
    for (std::size_t w = 0; w < U; ++w) {
      const double v = E(t, chain_exit(segs[first_unit_seg + w])) + s * net.end_weight[w];
      if (v > best) {
        best = v;
        arg = -10 - static_cast<long>(first_unit_seg + w);
      }
    }
    E(t, g.first_entry) = best;
    EB(t, g.first_entry) = arg;
  };

  // Entry nodes at time t depend on emitting states at t-1 and on each other
  // through tee models; resolve them in chain order.
  auto resolve_entries = [&](std::size_t t) {
    if (has_start) {
      E(t, segs[start_seg].first_entry) = t == 0 ? 0.0 : kLogZero;
      EB(t, segs[start_seg].first_entry) = -3;
      inner_entries(segs[start_seg], t);
    }
    // Unit exits first (they only need frame t-1 and earlier tee flows
    // within the unit), then unit entries, then tee flows again so that a
    // tee-only path through a unit is available at the same frame.
    for (std::size_t u = 0; u < U; ++u) inner_entries(segs[first_unit_seg + u], t);
    link_units(t);
    for (std::size_t u = 0; u < U; ++u) inner_entries(segs[first_unit_seg + u], t);
    link_end(t);
    if (has_end) inner_entries(segs[end_seg], t);
  };

  for (std::size_t t = 0; t < T; ++t) {
    resolve_entries(t);
    double frame_best = kLogZero;
    for (const auto& g : segs) {
      for (std::size_t k = 0; k < g.models.size(); ++k) {
        const auto& u = g.models[k];
        const double ek = E(t, g.first_entry + k);
        for (std::size_t j = 1; j <= u.n; ++j) {
          double best = ek + u.log_a[0][j];
          long arg = -1;
          if (t > 0)
            for (std::size_t i = 1; i <= j; ++i) {
              const double v = D(t - 1, u.first + i - 1) + u.log_a[i][j];
              if (v > best) {
                best = v;
                arg = static_cast<long>(u.first + i - 1);
              }
            }
          const std::size_t n = u.first + j - 1;
          D(t, n) = best + b(t, pool_of[n]);
          bp[t * ns + n] = arg;
          frame_best = std::max(frame_best, D(t, n));
        }
      }
    }
    if (params.beam && frame_best != kLogZero) {
      const double floor = frame_best - *params.beam;
      for (std::size_t n = 0; n < ns; ++n)
        if (D(t, n) < floor) D(t, n) = kLogZero;
    }
  }
  resolve_entries(T);

  // Final node: exit of the end model, or the best unit exit plus </s>.
  DecodeResult out;
  std::size_t cur_seg;
  std::size_t cur_k;
  if (has_end) {
    cur_seg = end_seg;
    cur_k = segs[end_seg].models.size();
    out.score = E(T, chain_exit(segs[end_seg]));
  } else {
    double best = kLogZero;
    std::size_t arg = SIZE_MAX;
    for (std::size_t w = 0; w < U; ++w) {
      const double v = E(T, chain_exit(segs[first_unit_seg + w])) + s * net.end_weight[w];
      if (v > best) {
        best = v;
        arg = w;
      }
    }
    out.score = best;
    cur_seg = arg == SIZE_MAX ? 0 : first_unit_seg + arg;
    cur_k = arg == SIZE_MAX ? 0 : segs[cur_seg].models.size();
  }
  if (out.score == kLogZero || !std::isfinite(out.score))
    throw Error("viterbi_decode: no viable path for '" + x.utterance_id() + "'");

  // Trace back. Events are collected in reverse time order.
  struct ModelPiece {
    std::size_t seg, k;
    int start, end;
    double entry_score, exit_score;
  };
  std::vector<ModelPiece> pieces;
  std::vector<std::size_t> unit_seq;
  std::vector<int> unit_start;
  std::size_t t = T;
  bool at_entry = true;
  long n = -1;
  double pending_exit = 0.0;
  double trailing_skip = 0.0;
  int pending_end = static_cast<int>(T);
  auto seg_of_state = [&](std::size_t st) {
    for (std::size_t g = 0; g < segs.size(); ++g)
      if (st >= segs[g].first_state && st < segs[g].first_state + segs[g].num_states) return g;
    throw Error("viterbi_decode: internal traceback error");
  };
  while (true) {
    if (at_entry) {
      const auto& g = segs[cur_seg];
      const long e = EB(t, g.first_entry + cur_k);
      if (cur_k == 0) {
        if (g.unit >= 0) {
          unit_seq.push_back(static_cast<std::size_t>(g.unit));
          unit_start.push_back(static_cast<int>(t));
        }
        if (e == -3) break;
        if (e <= -10) {
          cur_seg = static_cast<std::size_t>(-10 - e);
          cur_k = segs[cur_seg].models.size();
          continue;
        }
        throw Error("viterbi_decode: broken back-pointer");
      }
      if (e >= 0) {
        const auto& pm = g.models[cur_k - 1];
        pending_exit = D(t - 1, static_cast<std::size_t>(e)) +
                       pm.log_a[static_cast<std::size_t>(e) - pm.first + 1][pm.n + 1];
        pending_end = static_cast<int>(t);
        n = e;
        --t;
        at_entry = false;
      } else if (e <= -1 && e > -10) {
        // Tee pass-through: the model consumed no frames. Its cost goes to
        // the next piece in time.
        const double skip = E(t, g.first_entry + cur_k) - E(t, g.first_entry + cur_k - 1);
        if (pieces.empty()) trailing_skip += skip;
        else pieces.back().entry_score -= skip;
        --cur_k;
      } else {
        throw Error("viterbi_decode: broken back-pointer");
      }
    } else {
      const long prev = bp[t * ns + static_cast<std::size_t>(n)];
      if (prev >= 0) {
        n = prev;
        --t;
        continue;
      }
      cur_seg = seg_of_state(static_cast<std::size_t>(n));
      const auto& g = segs[cur_seg];
      std::size_t k = 0;
      while (!(static_cast<std::size_t>(n) >= g.models[k].first &&
               static_cast<std::size_t>(n) < g.models[k].first + g.models[k].n))
        ++k;
      cur_k = k;
      pieces.push_back({cur_seg, k, static_cast<int>(t), pending_end,
                        E(t, g.first_entry + k) - (pieces.empty() ? trailing_skip : 0.0),
                        pending_exit});
      at_entry = true;
    }
  }
  std::reverse(pieces.begin(), pieces.end());
  std::reverse(unit_seq.begin(), unit_seq.end());
  std::reverse(unit_start.begin(), unit_start.end());

  for (const auto& pc : pieces) {
    const auto& g = segs[pc.seg];
    const std::string& label = g.labels[pc.k];
    out.segments.push_back({label, pc.start, pc.end, pc.exit_score - pc.entry_score});
    if (g.unit >= 0 && !is_pause(label)) out.classifier_labels.push_back(label);
  }
  out.network_path = unit_seq;
  for (std::size_t i = 0; i < unit_seq.size(); ++i) {
    out.network_labels.push_back(net.units[unit_seq[i]]);
    const int start = unit_start[i];
    int end = i + 1 < unit_seq.size() ? unit_start[i + 1] : -1;
    if (end < 0) {
      end = static_cast<int>(T);
      for (const auto& pc : pieces)
        if (segs[pc.seg].unit < 0 && pc.start >= start) {
          end = pc.start;
          break;
        }
    }
    double sc = 0.0;
    for (const auto& pc : pieces)
      if (pc.start >= start && pc.end <= end && segs[pc.seg].unit >= 0)
        sc += pc.exit_score - pc.entry_score;
    out.network_segments.push_back({net.units[unit_seq[i]], start, end, sc});
  }
  return out;
}

/// Best state-path log score through the fixed label sequence.
inline double score_forced_path(const HmmSet& set, const std::vector<std::string>& labels,
                                const FeatureSequence& x) {
  for (const auto& l : labels)
    if (!set.has(l)) throw Error("no model for label '" + l + "'");
  return viterbi_chain(set, labels, x).score;
}

/// Recognition output: the transcription format with a score column.
inline void write_recognition_mlf(std::ostream& os, const std::vector<std::string>& ids,
                                  const std::vector<DecodeResult>& results, bool network_tier) {
  os << "#!MLF!#\n";
  for (std::size_t i = 0; i < results.size(); ++i) {
    os << '"' << ids[i] << "\"\n";
    const auto& segs = network_tier ? results[i].network_segments : results[i].segments;
    for (const auto& s : segs)
      os << s.label << ' ' << s.start << ' ' << s.end << ' ' << format_fixed(s.score, 6) << '\n';
    os << ".\n";
  }
}

}  // namespace wlt
