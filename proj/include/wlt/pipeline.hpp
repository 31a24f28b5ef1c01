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
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "wlt/common.hpp"
#include "wlt/corpus.hpp"
#include "wlt/decoder.hpp"
#include "wlt/hmm.hpp"
#include "wlt/langmodel.hpp"
#include "wlt/p2v.hpp"
#include "wlt/scoring.hpp"

namespace wlt {

// ---------------------------------------------------------------------------
// Training schedule.

struct TrainSchedule {
  int reestimations = 11;
  int tie_after = 3;
  int align_after = 7;

  void validate() const {
    if (!(1 <= tie_after && tie_after < align_after && align_after < reestimations))
      throw Error("schedule needs 1 <= tie_after < align_after < reestimations");
  }
};

struct TrainLog {
  std::vector<double> loglik;  // one pre-update total per re-estimation
  int tie_events = 0;
  int align_events = 0;
  std::size_t skipped = 0;
  std::set<std::string> zero_occupancy;
};

struct TrainedSystem {
  HmmSet set;
  TrainLog log;
  std::vector<Transcription> alignment;  // from the forced-alignment step
};

/// Training labels for one utterance: sil, the words projected to `tier`, sil.
inline Transcription tier_transcription(const Utterance& u, Tier tier, const Lexicon& lexicon,
                                        const VisemeMap* map) {
  std::vector<std::string> words;
  for (const auto& s : u.words.entries)
    if (!is_pause(s.label)) words.push_back(s.label);
  std::vector<std::string> labels{kSil};
  for (auto& l : project_units(words, Tier::word, tier, &lexicon, map)) labels.push_back(l);
  labels.push_back(kSil);
  return Transcription::from_labels(u.words.utterance_id, tier, labels);
}

/// Records which utterances each stage reads, for leakage checks.
class AccessLog {
 public:
  enum class Use { train, lm, test };
  struct Entry {
    int fold;
    Use use;
    std::size_t utterance;
  };
  void record(int fold, Use use, std::size_t utt) {
    std::lock_guard<std::mutex> lock(mu_);
    entries_.push_back({fold, use, utt});
  }
  std::vector<Entry> entries() const {
    std::lock_guard<std::mutex> lock(mu_);
    return entries_;
  }

 private:
  mutable std::mutex mu_;
  std::vector<Entry> entries_;
};

inline std::vector<TrainItem> make_items(const Corpus& corpus,
                                         const std::vector<std::size_t>& indices, Tier tier,
                                         const VisemeMap* map, AccessLog* log = nullptr,
                                         int fold = -1) {
  std::vector<TrainItem> items;
  items.reserve(indices.size());
  for (auto i : indices) {
    if (log) log->record(fold, AccessLog::Use::train, i);
    const Utterance& u = corpus.utterances.at(i);
    items.push_back({&u.features, tier_transcription(u, tier, corpus.lexicon, map)});
  }
  return items;
}

/// Alphabet of HMM labels for a classifier tier (pauses excluded).
inline std::vector<std::string> classifier_alphabet(Tier tier, const Lexicon& lexicon,
                                                    const VisemeMap* map) {
  switch (tier) {
    case Tier::word: return lexicon.words();
    case Tier::phoneme: {
      if (map) return map->phonemes();
      auto ph = lexicon.phonemes();
      return {ph.begin(), ph.end()};
    }
    case Tier::viseme:
      if (!map) throw Error("viseme classifiers need a phoneme-to-viseme map");
      return map->visemes();
  }
  return {};
}

/// Runs the re-estimation schedule: tying after step `tie_after`, forced
/// alignment after step `align_after`. Flat start is not part of it.
inline TrainedSystem run_schedule(HmmSet set, std::vector<TrainItem> items,
                                  const TrainSchedule& schedule, int jobs = 1) {
  schedule.validate();
  TrainedSystem out;
  for (int step = 1; step <= schedule.reestimations; ++step) {
    ReestimateResult r = embedded_reestimate(set, items, {jobs});
    out.log.loglik.push_back(r.loglik);
    out.log.skipped = std::max(out.log.skipped, r.skipped);
    for (auto& l : r.zero_occupancy) out.log.zero_occupancy.insert(l);
    set = std::move(r.set);
    info("re-estimation " + std::to_string(step) + ": log-likelihood " +
         format_double(out.log.loglik.back()));
    if (step == schedule.tie_after) {
      set = tie_short_pause(set);
      ++out.log.tie_events;
    }
    if (step == schedule.align_after) {
      out.alignment = force_align(set, items, jobs);
      for (std::size_t i = 0; i < items.size(); ++i) items[i].transcription = out.alignment[i];
      ++out.log.align_events;
    }
  }
  out.set = std::move(set);
  return out;
}

inline FlatStartOptions word_flat_start(const Lexicon& lexicon, FlatStartOptions opt) {
  for (const auto& w : lexicon.words())
    opt.state_overrides[w] = opt.states * lexicon.primary(w).size();
  return opt;
}

/// Flat start on one tier followed by the schedule.
inline TrainedSystem train_flat(const std::vector<TrainItem>& items, Tier tier,
                                const Lexicon& lexicon, const VisemeMap* map,
                                const TrainSchedule& schedule, FlatStartOptions flat = {},
                                int jobs = 1) {
  auto labels = classifier_alphabet(tier, lexicon, map);
  labels.push_back(kSil);
  if (tier == Tier::word) flat = word_flat_start(lexicon, flat);
  HmmSet init = flat_start_init(items, labels, flat);
  return run_schedule(std::move(init), items, schedule, jobs);
}

/// Pass one: viseme HMMs from a flat start. `items` are on the viseme tier.
inline TrainedSystem train_viseme_pass(const std::vector<TrainItem>& items, const VisemeMap& map,
                                       const Lexicon& lexicon, const TrainSchedule& schedule,
                                       const FlatStartOptions& flat = {}, int jobs = 1) {
  return train_flat(items, Tier::viseme, lexicon, &map, schedule, flat, jobs);
}

/// Each phoneme starts as an independent copy of its viseme's HMM; sil is
/// copied and sp is re-tied to the copied sil centre when the source was tied.
inline HmmSet wlt_init_phonemes(const HmmSet& visemes, const VisemeMap& map) {
  HmmSet out(visemes.dim(), visemes.var_floor());
  for (const auto& ph : map.phonemes()) {
    const std::string& v = map.viseme_of(ph);
    if (!visemes.has(v))
      throw Error("wlt_init_phonemes: no trained model for viseme '" + v + "' (phoneme '" + ph +
                  "')");
    out.clone_model(visemes, v, ph);
  }
  if (visemes.has(kSil)) out.clone_model(visemes, kSil, kSil);
  if (visemes.has(kSp)) {
    if (visemes.has(kSil) && visemes.tied(kSp, 0, kSil, 1)) {
      out = tie_short_pause(out);
      out.model(kSp).trans = visemes.model(kSp).trans;
    } else {
      out.clone_model(visemes, kSp, kSp);
    }
  }
  return out;
}

/// Pass two: the schedule again, without a flat start. `items` are on the
/// phoneme tier.
inline TrainedSystem train_phoneme_pass(HmmSet phonemes, const std::vector<TrainItem>& items,
                                        const TrainSchedule& schedule, int jobs = 1) {
  return run_schedule(std::move(phonemes), items, schedule, jobs);
}

// ---------------------------------------------------------------------------
// Evaluation.

enum class Method { plain, wlt };

inline const char* method_name(Method m) { return m == Method::wlt ? "wlt" : "plain"; }

struct EvalOptions {
  DecodeParams decode;
  NetworkOptions network;
  double lm_discount = 0.5;
  int jobs = 1;
};

struct EvalOutput {
  AlignmentCounts counts;
  std::vector<Alignment> alignments;
  std::vector<DecodeResult> results;
};

/// Bigram on the network tier from the training utterances only.
inline BigramModel train_bigram(const Corpus& corpus, const std::vector<std::size_t>& train,
                                Tier network_tier, const VisemeMap* map, double discount,
                                AccessLog* log = nullptr, int fold = -1) {
  std::vector<std::vector<std::string>> sentences;
  for (auto i : train) {
    if (log) log->record(fold, AccessLog::Use::lm, i);
    std::vector<std::string> words;
    for (const auto& s : corpus.utterances.at(i).words.entries)
      if (!is_pause(s.label)) words.push_back(s.label);
    sentences.push_back(project_units(words, Tier::word, network_tier, &corpus.lexicon, map));
  }
  std::vector<std::string> alphabet;
  if (network_tier == Tier::word) alphabet = corpus.lexicon.words();
  else alphabet = classifier_alphabet(network_tier, corpus.lexicon, map);
  return estimate_bigram(sentences, network_tier, discount, alphabet);
}

/// Decodes the test utterances and scores them in `measure` units, which must
/// be the classifier tier or the network tier.
inline EvalOutput evaluate(const HmmSet& set, const DecodingNetwork& net, const Corpus& corpus,
                           const std::vector<std::size_t>& test, Tier measure,
                           const VisemeMap* map, const EvalOptions& opt,
                           AccessLog* log = nullptr, int fold = -1) {
  if (measure != net.classifier_tier && measure != net.network_tier)
    throw Error("measurement tier must be the classifier or the network tier");
  EvalOutput out;
  out.results.resize(test.size());
  out.alignments.resize(test.size());
  parallel_for(test.size(), opt.jobs, [&](std::size_t k) {
    const std::size_t i = test[k];
    if (log) log->record(fold, AccessLog::Use::test, i);
    const Utterance& u = corpus.utterances.at(i);
    DecodeResult r = viterbi_decode(set, net, u.features, opt.decode);
    std::vector<std::string> words;
    for (const auto& s : u.words.entries)
      if (!is_pause(s.label)) words.push_back(s.label);
    const auto ref = project_units(words, Tier::word, measure, &corpus.lexicon, map);
    const auto& hyp = measure == net.classifier_tier ? r.classifier_labels : r.network_labels;
    out.alignments[k] = align(ref, hyp, {}, measure);
    out.results[k] = std::move(r);
  });
  for (const auto& a : out.alignments) out.counts += a.counts;
  return out;
}

// ---------------------------------------------------------------------------
// Bootstrap folds ("cross-validation with replacement").

struct FoldSplit {
  std::vector<std::size_t> train;  // n draws with replacement
  std::vector<std::size_t> test;   // out-of-bag, ascending
};

inline std::vector<FoldSplit> bootstrap_folds(std::size_t n, int folds, std::uint64_t seed) {
  if (folds < 2) throw Error("need at least 2 folds");
  if (n < static_cast<std::size_t>(folds))
    throw Error("corpus of " + std::to_string(n) + " utterances is smaller than " +
                std::to_string(folds) + " folds");
  if (n < 2) throw Error("corpus too small for a non-empty out-of-bag set");
  std::vector<FoldSplit> out;
  for (int f = 0; f < folds; ++f) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(f)));
    for (int attempt = 0;; ++attempt) {
      if (attempt == 10000) throw Error("could not draw a non-empty out-of-bag set");
      FoldSplit s;
      std::vector<bool> in_bag(n, false);
      for (std::size_t k = 0; k < n; ++k) {
        const auto i = static_cast<std::size_t>(rng.below(n));
        s.train.push_back(i);
        in_bag[i] = true;
      }
      for (std::size_t i = 0; i < n; ++i)
        if (!in_bag[i]) s.test.push_back(i);
      if (s.test.empty()) continue;
      std::sort(s.train.begin(), s.train.end());
      out.push_back(std::move(s));
      break;
    }
  }
  return out;
}

struct ExperimentConfig {
  Tier classifier_tier = Tier::phoneme;
  Tier network_tier = Tier::phoneme;
  /// Measurement tier; defaults to the classifier tier.
  std::optional<Tier> measure_tier;
  Method method = Method::plain;
  std::optional<VisemeMap> map;
  int folds = 10;
  TrainSchedule schedule;
  FlatStartOptions flat;
  EvalOptions eval;
  std::uint64_t seed = 1;
  /// Workers across folds; inner stages use eval.jobs.
  int jobs = 1;

  void validate() const {
    bool ok = false;
    for (const auto& [c, n] : unit_selection_pairs())
      if (c == classifier_tier && n == network_tier) ok = true;
    if (!ok) throw Error("tier pair is not one of the six unit-selection rows");
    if (method == Method::wlt && classifier_tier != Tier::phoneme)
      throw Error("WLT training produces phoneme classifiers");
    if (folds < 2) throw Error("folds must be >= 2");
    schedule.validate();
  }
};

struct FoldResult {
  AlignmentCounts counts;
  double correctness = 0.0;
  double accuracy = 0.0;
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

struct CrossValidationResult {
  std::vector<FoldResult> folds;
  double mean = 0.0;
  double std_error = 0.0;
};

inline std::pair<double, double> mean_and_stderr(const std::vector<double>& v) {
  if (v.empty()) return {0.0, 0.0};
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  if (v.size() < 2) return {mean, 0.0};
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  const double sd = std::sqrt(ss / static_cast<double>(v.size() - 1));
  return {mean, sd / std::sqrt(static_cast<double>(v.size()))};
}

/// Trains the configured classifier on the given items' utterances.
inline HmmSet train_classifier(const Corpus& corpus, const std::vector<std::size_t>& train,
                               const ExperimentConfig& cfg, AccessLog* log = nullptr,
                               int fold = -1) {
  const VisemeMap* map = cfg.map ? &*cfg.map : nullptr;
  const int jobs = cfg.eval.jobs;
  if (cfg.method == Method::wlt) {
    if (!map) throw Error("WLT training needs a phoneme-to-viseme map");
    auto vis_items = make_items(corpus, train, Tier::viseme, map, log, fold);
    auto vis = train_viseme_pass(vis_items, *map, corpus.lexicon, cfg.schedule, cfg.flat, jobs);
    auto ph_items = make_items(corpus, train, Tier::phoneme, map, log, fold);
    return train_phoneme_pass(wlt_init_phonemes(vis.set, *map), ph_items, cfg.schedule, jobs).set;
  }
  auto items = make_items(corpus, train, cfg.classifier_tier, map, log, fold);
  return train_flat(items, cfg.classifier_tier, corpus.lexicon, map, cfg.schedule, cfg.flat, jobs)
      .set;
}

/// Bootstrap rounds: train and estimate the LM on the draw, test on the
/// out-of-bag utterances, pool counts per round.
inline CrossValidationResult cross_validate(const ExperimentConfig& cfg, const Corpus& corpus,
                                            AccessLog* log = nullptr) {
  cfg.validate();
  const VisemeMap* map = cfg.map ? &*cfg.map : nullptr;
  const Tier measure = cfg.measure_tier.value_or(cfg.classifier_tier);
  auto splits = bootstrap_folds(corpus.size(), cfg.folds, cfg.seed);
  CrossValidationResult out;
  out.folds.resize(splits.size());
  parallel_for(splits.size(), cfg.jobs, [&](std::size_t f) {
    const int fold = static_cast<int>(f);
    HmmSet set = train_classifier(corpus, splits[f].train, cfg, log, fold);
    BigramModel lm =
        train_bigram(corpus, splits[f].train, cfg.network_tier, map, cfg.eval.lm_discount, log, fold);
    DecodingNetwork net = build_network(lm, cfg.classifier_tier, &corpus.lexicon, map, cfg.eval.network);
    EvalOutput ev = evaluate(set, net, corpus, splits[f].test, measure, map, cfg.eval, log, fold);
    FoldResult r;
    r.counts = ev.counts;
    r.correctness = correctness(ev.counts);
    r.accuracy = accuracy(ev.counts);
    r.train = splits[f].train;
    r.test = splits[f].test;
    out.folds[f] = std::move(r);
  });
  std::vector<double> cs;
  for (const auto& f : out.folds) cs.push_back(f.correctness);
  std::tie(out.mean, out.std_error) = mean_and_stderr(cs);
  return out;
}

// ---------------------------------------------------------------------------
// Unit-selection matrix.

struct MatrixRow {
  Tier classifier;
  Tier network;
  std::vector<AlignmentCounts> fold_counts;
  std::vector<double> fold_correctness;
  double mean = 0.0;
  double std_error = 0.0;
};

/// The six classifier/network rows, each measured in classifier units.
/// Classifiers are trained once per fold and shared across their rows.
inline std::vector<MatrixRow> run_unit_selection_matrix(const Corpus& corpus, const VisemeMap& map,
                                                        const ExperimentConfig& base) {
  base.schedule.validate();
  auto splits = bootstrap_folds(corpus.size(), base.folds, base.seed);
  const auto& pairs = unit_selection_pairs();
  std::vector<MatrixRow> rows;
  for (const auto& [c, n] : pairs) rows.push_back({c, n, {}, {}, 0.0, 0.0});
  std::vector<std::vector<AlignmentCounts>> per_fold(splits.size(),
                                                     std::vector<AlignmentCounts>(pairs.size()));
  parallel_for(splits.size(), base.jobs, [&](std::size_t f) {
    std::map<Tier, HmmSet> systems;
    for (Tier t : {Tier::viseme, Tier::phoneme, Tier::word}) {
      ExperimentConfig cfg = base;
      cfg.classifier_tier = t;
      cfg.method = Method::plain;
      cfg.map = map;
      systems[t] = train_classifier(corpus, splits[f].train, cfg);
    }
    std::map<Tier, BigramModel> lms;
    for (Tier t : {Tier::viseme, Tier::phoneme, Tier::word})
      lms[t] = train_bigram(corpus, splits[f].train, t, &map, base.eval.lm_discount);
    for (std::size_t r = 0; r < pairs.size(); ++r) {
      const auto [c, n] = pairs[r];
      DecodingNetwork net = build_network(lms.at(n), c, &corpus.lexicon, &map, base.eval.network);
      per_fold[f][r] =
          evaluate(systems.at(c), net, corpus, splits[f].test, c, &map, base.eval).counts;
    }
  });
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t f = 0; f < splits.size(); ++f) {
      rows[r].fold_counts.push_back(per_fold[f][r]);
      rows[r].fold_correctness.push_back(correctness(per_fold[f][r]));
    }
    std::tie(rows[r].mean, rows[r].std_error) = mean_and_stderr(rows[r].fold_correctness);
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Viseme-size sweep.

inline const std::string kSeriesWltPhonemeNet = "wlt_phoneme+phoneme_net";
inline const std::string kSeriesVisemePhonemeNet = "viseme+phoneme_net";
inline const std::string kSeriesWltWordNet = "wlt_phoneme+word_net";
inline const std::string kSeriesVisemeWordNet = "viseme+word_net";

inline const std::vector<std::string>& sweep_series() {
  static const std::vector<std::string> s = {kSeriesWltPhonemeNet, kSeriesVisemePhonemeNet,
                                             kSeriesWltWordNet, kSeriesVisemeWordNet};
  return s;
}

/// One measurement of one series at one map size.
struct SweepRecord {
  std::string series;
  std::size_t map_size = 0;
  Tier tier = Tier::phoneme;
  std::vector<AlignmentCounts> fold_counts;
  std::vector<double> fold_correctness;
  double mean = 0.0;
  double std_error = 0.0;
  std::string error;  // non-empty when this size failed
};

struct SweepResult {
  std::vector<SweepRecord> records;  // sizes in family order

  std::vector<std::size_t> sizes() const {
    std::vector<std::size_t> out;
    for (const auto& r : records)
      if (std::find(out.begin(), out.end(), r.map_size) == out.end()) out.push_back(r.map_size);
    return out;
  }

  const SweepRecord* find(const std::string& series, std::size_t size, Tier tier) const {
    for (const auto& r : records)
      if (r.series == series && r.map_size == size && r.tier == tier) return &r;
    return nullptr;
  }
};

/// For each map of a nested family: plain viseme classifiers and WLT phoneme
/// classifiers initialised from them, decoded with phoneme and word bigram
/// networks. Each series is measured in its classifier units; word-net series
/// are also measured in words.
inline SweepResult run_viseme_sweep(const Corpus& corpus, const std::vector<VisemeMap>& family,
                                    const ExperimentConfig& base) {
  base.schedule.validate();
  if (family.empty()) throw Error("sweep: empty map family");
  for (std::size_t i = 1; i < family.size(); ++i)
    if (!(family[i].size() < family[i - 1].size()) || !family[i - 1].refines(family[i]))
      throw Error("sweep: map family is not nested with strictly decreasing sizes");
  auto splits = bootstrap_folds(corpus.size(), base.folds, base.seed);

  struct Job {
    std::size_t size_index, fold;
  };
  std::vector<Job> jobs;
  for (std::size_t m = 0; m < family.size(); ++m)
    for (std::size_t f = 0; f < splits.size(); ++f) jobs.push_back({m, f});

  // Per job: counts for the six measurements below, or an error.
  struct Measure {
    std::string series;
    Tier classifier, network, measure;
  };
  const std::vector<Measure> measures = {
      {kSeriesWltPhonemeNet, Tier::phoneme, Tier::phoneme, Tier::phoneme},
      {kSeriesVisemePhonemeNet, Tier::viseme, Tier::phoneme, Tier::viseme},
      {kSeriesWltWordNet, Tier::phoneme, Tier::word, Tier::phoneme},
      {kSeriesWltWordNet, Tier::phoneme, Tier::word, Tier::word},
      {kSeriesVisemeWordNet, Tier::viseme, Tier::word, Tier::viseme},
      {kSeriesVisemeWordNet, Tier::viseme, Tier::word, Tier::word},
  };
  std::vector<std::vector<AlignmentCounts>> counts(jobs.size());
  std::vector<std::string> errors(jobs.size());
  parallel_for(jobs.size(), base.jobs, [&](std::size_t j) {
    const VisemeMap& map = family[jobs[j].size_index];
    const FoldSplit& split = splits[jobs[j].fold];
    try {
      auto vis_items = make_items(corpus, split.train, Tier::viseme, &map);
      auto vis = train_viseme_pass(vis_items, map, corpus.lexicon, base.schedule, base.flat,
                                   base.eval.jobs);
      auto ph_items = make_items(corpus, split.train, Tier::phoneme, &map);
      auto wlt = train_phoneme_pass(wlt_init_phonemes(vis.set, map), ph_items, base.schedule,
                                    base.eval.jobs);
      const BigramModel phone_lm =
          train_bigram(corpus, split.train, Tier::phoneme, &map, base.eval.lm_discount);
      const BigramModel word_lm =
          train_bigram(corpus, split.train, Tier::word, &map, base.eval.lm_discount);
      std::map<std::pair<Tier, Tier>, EvalOutput> cache;
      for (const auto& m : measures) {
        const HmmSet& set = m.classifier == Tier::viseme ? vis.set : wlt.set;
        const BigramModel& lm = m.network == Tier::word ? word_lm : phone_lm;
        DecodingNetwork net = build_network(lm, m.classifier, &corpus.lexicon, &map,
                                            base.eval.network);
        counts[j].push_back(
            evaluate(set, net, corpus, split.test, m.measure, &map, base.eval).counts);
      }
    } catch (const Error& e) {
      errors[j] = e.what();
    }
  });

  SweepResult out;
  for (std::size_t m = 0; m < family.size(); ++m) {
    for (std::size_t k = 0; k < measures.size(); ++k) {
      SweepRecord rec{measures[k].series, family[m].size(), measures[k].measure, {}, {}, 0.0,
                      0.0, ""};
      for (std::size_t j = 0; j < jobs.size(); ++j) {
        if (jobs[j].size_index != m) continue;
        if (!errors[j].empty()) {
          rec.error = errors[j];
          continue;
        }
        rec.fold_counts.push_back(counts[j][k]);
        rec.fold_correctness.push_back(correctness(counts[j][k]));
      }
      if (!rec.error.empty()) {
        warn("sweep size " + std::to_string(family[m].size()) + " failed: " + rec.error);
        rec.fold_counts.clear();
        rec.fold_correctness.clear();
      }
      std::tie(rec.mean, rec.std_error) = mean_and_stderr(rec.fold_correctness);
      out.records.push_back(std::move(rec));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Min/max/range summary.

struct SummaryRow {
  std::string name;
  double min = 0.0;
  double max = 0.0;
  std::optional<double> range;  // absent on effect rows
};

struct SummaryBlock {
  std::string wlt_series;
  std::string viseme_series;
  Tier wlt_tier;
  Tier viseme_tier;
};

/// Min, max and range of the per-size mean series, plus effect rows holding
/// the WLT minus viseme differences at the min and at the max points.
inline std::vector<SummaryRow> summarize_min_max_range(const SweepResult& sweep) {
  const std::vector<std::pair<std::string, std::pair<std::string, std::string>>> names = {
      {kSeriesWltPhonemeNet, {"WLT phonemes + phoneme net", "phoneme"}},
      {kSeriesVisemePhonemeNet, {"Visemes + phoneme net", "viseme"}},
      {kSeriesWltWordNet, {"WLT phonemes + word net", "word"}},
      {kSeriesVisemeWordNet, {"Visemes + word net", "word"}},
  };
  auto stats = [&](const std::string& series, Tier tier, const std::string& name) {
    SummaryRow row{name, 0.0, 0.0, 0.0};
    bool any = false;
    for (const auto& r : sweep.records) {
      if (r.series != series || r.tier != tier || !r.error.empty() || r.fold_correctness.empty())
        continue;
      if (!any) {
        row.min = row.max = r.mean;
        any = true;
      } else {
        row.min = std::min(row.min, r.mean);
        row.max = std::max(row.max, r.mean);
      }
    }
    if (!any) throw Error("summary: no results for series '" + series + "'");
    row.range = row.max - row.min;
    return row;
  };
  std::vector<SummaryRow> out;
  for (std::size_t block = 0; block < 2; ++block) {
    const auto& w = names[2 * block];
    const auto& v = names[2 * block + 1];
    SummaryRow rw = stats(w.first, parse_tier(w.second.second), w.second.first);
    SummaryRow rv = stats(v.first, parse_tier(v.second.second), v.second.first);
    SummaryRow eff{"Effect of WLT", rw.min - rv.min, rw.max - rv.max, std::nullopt};
    out.push_back(rw);
    out.push_back(rv);
    out.push_back(eff);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Family derivation driver.

/// Confusion matrix for `map`: viseme classifiers trained on `train`, decoded
/// on `test` with a viseme bigram network, aligned in viseme units.
inline ConfusionMatrix viseme_confusion(const Corpus& corpus, const std::vector<std::size_t>& train,
                                        const std::vector<std::size_t>& test,
                                        const VisemeMap& map, const ExperimentConfig& cfg) {
  auto items = make_items(corpus, train, Tier::viseme, &map);
  auto vis = train_viseme_pass(items, map, corpus.lexicon, cfg.schedule, cfg.flat, cfg.eval.jobs);
  BigramModel lm = train_bigram(corpus, train, Tier::viseme, &map, cfg.eval.lm_discount);
  DecodingNetwork net = build_network(lm, Tier::viseme, &corpus.lexicon, &map, cfg.eval.network);
  EvalOutput ev = evaluate(vis.set, net, corpus, test, Tier::viseme, &map, cfg.eval);
  return confusion_from_alignments(ev.alignments, Tier::viseme, map.visemes());
}

/// Fixed held-out split for family derivation: every fourth utterance tests.
inline std::pair<std::vector<std::size_t>, std::vector<std::size_t>> holdout_split(std::size_t n) {
  std::vector<std::size_t> train, test;
  for (std::size_t i = 0; i < n; ++i) (i % 4 == 3 ? test : train).push_back(i);
  if (train.empty() || test.empty()) throw Error("corpus too small for a held-out split");
  return {train, test};
}

inline std::vector<VisemeMap> derive_family_from_corpus(const Corpus& corpus,
                                                        const VisemeMap& initial,
                                                        const ExperimentConfig& cfg) {
  auto [train, test] = holdout_split(corpus.size());
  return derive_family(initial, [&](const VisemeMap& m) {
    return viseme_confusion(corpus, train, test, m, cfg);
  });
}

}  // namespace wlt
