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

// Acceptance suite: one line per criterion, exit status 0 only when all pass.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

#include "oracles.hpp"
#include "wlt/decoder.hpp"
#include "wlt/pipeline.hpp"
#include "wlt/synth.hpp"

using namespace wlt;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int number;
  std::string name;
  double limit_seconds;  // 0: no runtime bound
  std::function<Outcome()> run;
};

std::string fmt(double v, int digits = 4) { return format_fixed(v, digits); }

bool bit_equal(double a, double b) { return std::memcmp(&a, &b, sizeof a) == 0; }

// ---------------------------------------------------------------------------
// 1. EM log-likelihood is non-decreasing within each uninterrupted run.

Outcome em_monotonicity() {
  const TrainSchedule schedule;  // 11 updates, tie after 3, align after 7
  const std::vector<std::pair<int, int>> runs = {{1, 3}, {4, 7}, {8, 11}};
  int good = 0;
  double worst = 0.0;
  std::string first_bad;
  for (int seed = 1; seed <= 20; ++seed) {
    SynthSpec spec;
    spec.phoneme_count = 12;
    spec.viseme_count = 4;
    spec.utterance_count = 100;
    spec.dim = 10;
    spec.seed = static_cast<std::uint64_t>(seed);
    const SynthCorpus sc = synth_generate(spec);
    std::vector<std::size_t> all(sc.corpus.size());
    std::iota(all.begin(), all.end(), 0);
    auto items = make_items(sc.corpus, all, Tier::phoneme, &sc.true_map);
    auto sys = train_flat(items, Tier::phoneme, sc.corpus.lexicon, &sc.true_map, schedule);
    const auto& ll = sys.log.loglik;
    bool ok = ll.size() == 11;
    for (const auto& [a, b] : runs)
      for (int s = a; ok && s < b; ++s) {
        const double before = ll[static_cast<std::size_t>(s - 1)];
        const double after = ll[static_cast<std::size_t>(s)];
        const double drop = (before - after) / std::abs(before);
        worst = std::max(worst, drop);
        if (drop > 1e-6) {
          ok = false;
          if (first_bad.empty())
            first_bad = "; seed " + std::to_string(seed) + " step " + std::to_string(s) + "->" +
                        std::to_string(s + 1);
        }
      }
    if (ok) ++good;
  }
  return {good == 20, std::to_string(good) + "/20 corpora monotone, worst relative drop " +
                          format_double(std::max(0.0, worst)) + first_bad};
}

// ---------------------------------------------------------------------------
// 2. Decoder against exhaustive enumeration of unit sequences and state paths.

Outcome decoder_oracle() {
  Rng rng(2020);
  int checked = 0, label_match = 0;
  double worst = 0.0;
  while (checked < 120) {
    const std::size_t U = 1 + rng.below(3);
    const bool with_sp = rng.uniform() < 0.5;
    std::vector<std::string> models{"a", "b", "c"};
    HmmSet set = oracle::random_set(rng, {"a", "b", "c", kSil}, 2, 1, 3, rng.uniform() < 0.3,
                                    with_sp);
    DecodingNetwork net;
    for (std::size_t u = 0; u < U; ++u) {
      net.units.push_back("w" + std::to_string(u));
      std::vector<std::string> e;
      const std::size_t len = 1 + rng.below(2);
      for (std::size_t k = 0; k < len; ++k) e.push_back(models[rng.below(3)]);
      if (with_sp && rng.uniform() < 0.5) e.push_back(kSp);
      net.expansions.push_back(e);
      net.start_weight.push_back(std::log(0.05 + rng.uniform()));
      net.end_weight.push_back(std::log(0.05 + rng.uniform()));
    }
    net.arc.assign(U, std::vector<double>(U));
    for (auto& row : net.arc)
      for (auto& w : row) w = std::log(0.05 + rng.uniform());
    if (rng.uniform() < 0.3) net.start_label = net.end_label = "";
    DecodeParams p;
    p.grammar_scale = 2.0 * rng.uniform();
    p.transition_penalty = -0.5 + 2.0 * rng.uniform();
    const std::size_t T = 2 + rng.below(5);
    FeatureSequence x = oracle::random_features(rng, T, 2);

    // Enumerate every unit sequence that fits in T frames.
    auto labels_of = [&](const std::vector<std::size_t>& seq) {
      std::vector<std::string> l;
      if (!net.start_label.empty()) l.push_back(net.start_label);
      for (auto u : seq) l.insert(l.end(), net.expansions[u].begin(), net.expansions[u].end());
      if (!net.end_label.empty()) l.push_back(net.end_label);
      return l;
    };
    std::vector<std::pair<double, std::vector<std::size_t>>> scored;
    std::vector<std::size_t> seq;
    std::function<void()> rec = [&]() {
      if (!seq.empty()) {
        const double ac = oracle::all_paths(set, labels_of(seq), x).best;
        if (ac != oracle::kNegInf)
          scored.emplace_back(ac + p.grammar_scale * net.path_weight(seq) -
                                  p.transition_penalty * static_cast<double>(seq.size()),
                              seq);
      }
      if (seq.size() >= T) return;
      for (std::size_t u = 0; u < U; ++u) {
        seq.push_back(u);
        if (oracle::min_chain_frames(set, labels_of(seq)) <= T) rec();
        seq.pop_back();
      }
    };
    rec();
    if (scored.empty()) continue;
    std::sort(scored.begin(), scored.end(),
              [](const auto& a, const auto& b) { return a.first > b.first; });
    // Instances whose optimum is not unique have no single correct label output.
    if (scored.size() > 1 && scored[0].first - scored[1].first < 1e-9) continue;
    std::vector<std::string> expect_labels;
    for (auto u : scored[0].second) expect_labels.push_back(net.units[u]);
    std::vector<std::string> expect_classifier;
    for (auto u : scored[0].second)
      for (const auto& l : net.expansions[u])
        if (!is_pause(l)) expect_classifier.push_back(l);

    const DecodeResult r = viterbi_decode(set, net, x, p);
    ++checked;
    worst = std::max(worst, std::abs(r.score - scored[0].first));
    if (r.network_labels == expect_labels && r.classifier_labels == expect_classifier)
      ++label_match;
  }
  return {label_match == checked && worst <= 1e-8,
          std::to_string(label_match) + "/" + std::to_string(checked) +
              " label sequences equal, max score difference " + format_double(worst)};
}

// ---------------------------------------------------------------------------
// 3. Forward-backward against all-paths summation.

Outcome forward_backward_oracle() {
  Rng rng(303);
  int checked = 0;
  double worst_ll = 0.0, worst_sum = 0.0;
  while (checked < 150) {
    const std::size_t dim = 1 + rng.below(2);
    HmmSet set = oracle::random_set(rng, {"a", "b", kSil}, dim, 1 + rng.below(2), 3,
                                    rng.uniform() < 0.5, true);
    std::vector<std::string> chain;
    const std::size_t len = 1 + rng.below(3);
    for (std::size_t k = 0; k < len; ++k) {
      const double r = rng.uniform();
      chain.push_back(r < 0.4 ? "a" : (r < 0.8 ? "b" : kSp));
    }
    if (chain.front() == kSp) chain.front() = kSil;
    const std::size_t T = 1 + rng.below(5);
    if (oracle::min_chain_frames(set, chain) > T) continue;
    FeatureSequence x = oracle::random_features(rng, T, dim);
    const auto expect = oracle::all_paths(set, chain, x);
    const Composite comp = build_composite(set, chain);
    const auto got = forward_backward(set, comp, x);
    worst_ll = std::max(worst_ll, std::abs(got.loglik - expect.loglik));
    for (std::size_t t = 0; t < T; ++t) {
      double sum = 0.0;
      for (std::size_t n = 0; n < comp.num_states(); ++n) sum += got.posterior(t, n);
      worst_sum = std::max(worst_sum, std::abs(sum - 1.0));
    }
    ++checked;
  }
  return {worst_ll <= 1e-8 && worst_sum <= 1e-9,
          std::to_string(checked) + " instances, max |dLL| " + format_double(worst_ll) +
              ", max |sum posteriors - 1| " + format_double(worst_sum)};
}

// ---------------------------------------------------------------------------
// 4. Edit-distance counts against exhaustive alignment.

Outcome correctness_oracle() {
  Rng rng(404);
  int match = 0, identity = 0;
  const int pairs = 1200;
  for (int k = 0; k < pairs; ++k) {
    const int alphabet = 2 + static_cast<int>(rng.below(4));
    auto draw = [&](bool nonempty) {
      std::vector<std::string> v(rng.below(9));
      if (nonempty && v.empty()) v.resize(1);
      for (auto& s : v) s = std::string(1, static_cast<char>('a' + rng.below(alphabet)));
      return v;
    };
    const auto ref = draw(true), hyp = draw(false);
    const auto c = align(ref, hyp).counts;
    const auto o = oracle::exhaustive_align(ref, hyp);
    if (c.N == static_cast<long>(ref.size()) && c.H == o.H && c.S == o.S && c.D == o.D &&
        c.I == o.I)
      ++match;
    if (correctness(c) == static_cast<double>(c.H) / static_cast<double>(c.N)) ++identity;
  }
  return {match == pairs && identity == pairs,
          std::to_string(match) + "/" + std::to_string(pairs) + " count tuples equal, C = H/N in " +
              std::to_string(identity) + "/" + std::to_string(pairs)};
}

// ---------------------------------------------------------------------------
// 5. Every bigram history is a proper distribution with positive backoff mass.

Outcome bigram_normalization() {
  std::vector<BigramModel> models;
  Rng rng(505);
  for (int k = 0; k < 200; ++k) {
    std::vector<std::vector<std::string>> sents;
    const int vocab = 2 + static_cast<int>(rng.below(8));
    const int n = 1 + static_cast<int>(rng.below(15));
    for (int s = 0; s < n; ++s) {
      std::vector<std::string> sent(1 + rng.below(6));
      for (auto& w : sent) w = "u" + std::to_string(rng.below(static_cast<std::uint64_t>(vocab)));
      sents.push_back(sent);
    }
    std::vector<std::string> alphabet;
    for (int i = 0; i < vocab; ++i) alphabet.push_back("u" + std::to_string(i));
    models.push_back(estimate_bigram(sents, Tier::phoneme, 0.1 + 0.8 * rng.uniform(), alphabet));
  }
  for (int seed = 1; seed <= 3; ++seed) {
    SynthSpec spec;
    spec.utterance_count = 60;
    spec.seed = static_cast<std::uint64_t>(seed);
    const SynthCorpus sc = synth_generate(spec);
    std::vector<std::size_t> all(sc.corpus.size());
    std::iota(all.begin(), all.end(), 0);
    for (Tier t : {Tier::viseme, Tier::phoneme, Tier::word})
      models.push_back(train_bigram(sc.corpus, all, t, &sc.true_map, 0.5));
  }
  double worst = 0.0;
  bool positive = true;
  for (const auto& lm : models) {
    const auto& v = lm.vocabulary();
    for (std::size_t h = 0; h < v.size(); ++h) {
      if (v[h] == kSentEnd) continue;
      double sum = 0.0;
      for (std::size_t w = 1; w < v.size(); ++w) {
        const double p = std::exp(lm.log_prob(static_cast<int>(h), static_cast<int>(w)));
        if (!(p > 0.0)) positive = false;
        sum += p;
      }
      worst = std::max(worst, std::abs(sum - 1.0));
    }
  }
  return {worst <= 1e-9 && positive,
          std::to_string(models.size()) + " models, max |sum - 1| " + format_double(worst) +
              (positive ? ", all successors positive" : ", a successor has zero probability")};
}

// ---------------------------------------------------------------------------
// 6. Phonemes start as independent replicas of their viseme.

bool same_model(const HmmSet& x, const std::string& a, const HmmSet& y, const std::string& b) {
  const auto& ma = x.model(a);
  const auto& mb = y.model(b);
  if (ma.num_states() != mb.num_states() || ma.trans.size() != mb.trans.size()) return false;
  for (std::size_t i = 0; i < ma.trans.size(); ++i)
    for (std::size_t j = 0; j < ma.trans[i].size(); ++j)
      if (!bit_equal(ma.trans[i][j], mb.trans[i][j])) return false;
  for (std::size_t s = 0; s < ma.num_states(); ++s) {
    const auto& sa = x.state(a, s);
    const auto& sb = y.state(b, s);
    if (sa.mix.size() != sb.mix.size()) return false;
    for (std::size_t m = 0; m < sa.mix.size(); ++m) {
      if (!bit_equal(sa.mix[m].weight, sb.mix[m].weight)) return false;
      for (std::size_t d = 0; d < sa.mix[m].mean.size(); ++d)
        if (!bit_equal(sa.mix[m].mean[d], sb.mix[m].mean[d]) ||
            !bit_equal(sa.mix[m].var[d], sb.mix[m].var[d]))
          return false;
    }
  }
  return true;
}

Outcome wlt_replica() {
  const VisemeMap map = VisemeMap::from_assignment(
      "two", {{"p1", "v1"}, {"p2", "v1"}, {"p3", "v2"}, {"p4", "v1"}, {"p5", "v2"}});
  SynthSpec spec;
  spec.phoneme_count = 5;
  spec.viseme_count = 2;
  spec.true_map = map;
  spec.utterance_count = 40;
  spec.dim = 4;
  spec.vocab_size = 10;
  spec.seed = 6;
  const SynthCorpus sc = synth_generate(spec);
  std::vector<std::size_t> all(sc.corpus.size());
  std::iota(all.begin(), all.end(), 0);
  auto items = make_items(sc.corpus, all, Tier::viseme, &map);
  const HmmSet vis = train_viseme_pass(items, map, sc.corpus.lexicon, TrainSchedule{}).set;
  const HmmSet vis_copy = vis;
  const HmmSet ph = wlt_init_phonemes(vis, map);

  int replicas = 0;
  for (const auto& p : map.phonemes())
    if (same_model(ph, p, vis, map.viseme_of(p))) ++replicas;
  const bool sil_ok = same_model(ph, kSil, vis, kSil) && same_model(ph, kSp, vis, kSp) &&
                      ph.tied(kSp, 0, kSil, 1);

  int isolated = 0;
  for (const auto& target : map.phonemes()) {
    HmmSet mutated = ph;
    for (std::size_t s = 0; s < mutated.model(target).num_states(); ++s)
      for (auto& c : mutated.state(target, s).mix) {
        c.weight *= 0.5;
        for (auto& m : c.mean) m += 1.0;
        for (auto& v : c.var) v *= 3.0;
      }
    mutated.model(target).trans[1][1] *= 0.5;
    bool ok = !same_model(mutated, target, ph, target);
    for (const auto& other : mutated.labels())
      if (other != target && !same_model(mutated, other, ph, other)) ok = false;
    for (const auto& v : vis.labels())
      if (!same_model(vis, v, vis_copy, v)) ok = false;
    if (ok) ++isolated;
  }
  return {replicas == 5 && sil_ok && isolated == 5,
          std::to_string(replicas) + "/5 phonemes bit-equal to their viseme, sil/sp " +
              (sil_ok ? "copied and tied" : "NOT copied") + ", " + std::to_string(isolated) +
              "/5 mutations isolated"};
}

// ---------------------------------------------------------------------------
// 7. WLT beats its baselines in most seeds.

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

Outcome wlt_direction() {
  std::vector<double> wlt_ph, flat_ph, wlt_word, vis_word;
  for (int seed = 1; seed <= 10; ++seed) {
    SynthSpec spec;
    spec.phoneme_count = 12;
    spec.viseme_count = 4;
    spec.utterance_count = 200;
    spec.emission_separation = 2.0;
    spec.seed = static_cast<std::uint64_t>(100 + seed);
    const SynthCorpus sc = synth_generate(spec);
    const Corpus& corpus = sc.corpus;
    const VisemeMap& map = sc.true_map;
    std::vector<std::size_t> train(150), test(50);
    std::iota(train.begin(), train.end(), 0);
    std::iota(test.begin(), test.end(), 150);
    const TrainSchedule schedule;
    const EvalOptions eval;

    auto vis_items = make_items(corpus, train, Tier::viseme, &map);
    auto ph_items = make_items(corpus, train, Tier::phoneme, &map);
    const HmmSet vis = train_viseme_pass(vis_items, map, corpus.lexicon, schedule).set;
    const HmmSet wlt = train_phoneme_pass(wlt_init_phonemes(vis, map), ph_items, schedule).set;
    const HmmSet flat =
        train_flat(ph_items, Tier::phoneme, corpus.lexicon, &map, schedule).set;
    const BigramModel phone_lm = train_bigram(corpus, train, Tier::phoneme, &map, 0.5);
    const BigramModel word_lm = train_bigram(corpus, train, Tier::word, &map, 0.5);
    auto C = [&](const HmmSet& set, const BigramModel& lm, Tier classifier, Tier measure) {
      auto net = build_network(lm, classifier, &corpus.lexicon, &map);
      return correctness(evaluate(set, net, corpus, test, measure, &map, eval).counts);
    };
    wlt_ph.push_back(C(wlt, phone_lm, Tier::phoneme, Tier::phoneme));
    flat_ph.push_back(C(flat, phone_lm, Tier::phoneme, Tier::phoneme));
    wlt_word.push_back(C(wlt, word_lm, Tier::phoneme, Tier::word));
    vis_word.push_back(C(vis, word_lm, Tier::viseme, Tier::word));
  }
  int ph_wins = 0, word_wins = 0;
  for (std::size_t i = 0; i < wlt_ph.size(); ++i) {
    if (wlt_ph[i] >= flat_ph[i]) ++ph_wins;
    if (wlt_word[i] >= vis_word[i]) ++word_wins;
  }
  const bool medians = median(wlt_ph) >= median(flat_ph) && median(wlt_word) >= median(vis_word);
  return {medians && ph_wins >= 7 && word_wins >= 7,
          "phoneme net: median WLT " + fmt(median(wlt_ph)) + " vs flat " + fmt(median(flat_ph)) +
              " (" + std::to_string(ph_wins) + "/10 seeds); word net: median WLT " +
              fmt(median(wlt_word)) + " vs visemes " + fmt(median(vis_word)) + " (" +
              std::to_string(word_wins) + "/10 seeds)"};
}

// ---------------------------------------------------------------------------
// 8. Words that differ only inside one viseme class score identically.

Outcome homophones() {
  SynthSpec spec;
  spec.utterance_count = 80;
  spec.seed = 8;
  SynthCorpus sc = synth_generate(spec);
  // "p" and "b" are p1 and p2; the map puts them in one class.
  std::vector<std::pair<std::string, std::string>> pairs;
  const std::string pb_class = sc.true_map.viseme_of("p1");
  for (const auto& p : sc.true_map.phonemes())
    pairs.emplace_back(p, p == "p2" ? pb_class : sc.true_map.viseme_of(p));
  const VisemeMap map = VisemeMap::from_assignment("pb", pairs);
  Corpus corpus = sc.corpus;
  corpus.lexicon.add("pat", {"p1", "p5", "p7"});
  corpus.lexicon.add("bat", {"p2", "p5", "p7"});

  std::vector<std::size_t> train, test;
  for (std::size_t i = 0; i < corpus.size(); ++i) (i % 4 == 3 ? test : train).push_back(i);
  auto items = make_items(corpus, train, Tier::viseme, &map);
  const HmmSet vis = train_viseme_pass(items, map, corpus.lexicon, TrainSchedule{}).set;

  std::vector<std::vector<std::string>> sents{{"pat", "bat"}, {"bat", "pat"}};
  for (auto i : train) {
    std::vector<std::string> w;
    for (const auto& l : corpus.utterances[i].words.labels())
      if (!is_pause(l)) w.push_back(l);
    sents.push_back(w);
  }
  const BigramModel lm = estimate_bigram(sents, Tier::word);
  const DecodingNetwork net = build_network(lm, Tier::viseme, &corpus.lexicon, &map);
  const auto ip = std::find(net.units.begin(), net.units.end(), "pat") - net.units.begin();
  const auto ib = std::find(net.units.begin(), net.units.end(), "bat") - net.units.begin();
  const bool same_expansion = net.expansions[static_cast<std::size_t>(ip)] ==
                              net.expansions[static_cast<std::size_t>(ib)];

  int identical = 0;
  for (auto i : test) {
    const auto& x = corpus.utterances[i].features;
    std::vector<std::size_t> ref;
    for (const auto& l : corpus.utterances[i].words.labels())
      if (!is_pause(l))
        ref.push_back(static_cast<std::size_t>(
            std::find(net.units.begin(), net.units.end(), l) - net.units.begin()));
    auto chain = [&](std::size_t first) {
      std::vector<std::string> labels{net.start_label};
      for (std::size_t k = 0; k < ref.size(); ++k) {
        const auto& e = net.expansions[k == 0 ? first : ref[k]];
        labels.insert(labels.end(), e.begin(), e.end());
      }
      labels.push_back(net.end_label);
      return labels;
    };
    const double a = score_forced_path(vis, chain(static_cast<std::size_t>(ip)), x);
    const double b = score_forced_path(vis, chain(static_cast<std::size_t>(ib)), x);
    if (bit_equal(a, b)) ++identical;
  }
  return {same_expansion && identical == static_cast<int>(test.size()),
          std::string(same_expansion ? "pat/bat share one viseme expansion, " : "expansions differ, ") +
              std::to_string(identical) + "/" + std::to_string(test.size()) +
              " test utterances with bit-identical acoustic scores"};
}

// ---------------------------------------------------------------------------
// 9, 10. Command-line recipes.

const fs::path kTmp = WLT_TEST_TMP;

int cli(const std::string& args) {
  const std::string cmd = std::string("\"") + WLT_CLI_PATH + "\" -q " + args;
  return std::system(cmd.c_str());
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
  std::vector<std::vector<std::string>> rows;
  std::stringstream ss(slurp(p));
  for (std::string line; std::getline(ss, line);) {
    std::vector<std::string> cells;
    std::stringstream ls(line);
    for (std::string c; std::getline(ls, c, ',');) cells.push_back(c);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    rows.push_back(cells);
  }
  return rows;
}

std::string q(const fs::path& p) { return "\"" + p.string() + "\""; }

const std::string kSynthSmall = "--phonemes 8 --visemes 4 --utts 60 --dim 6 --vocab 15";

bool recipe(const fs::path& dir, std::string& why) {
  fs::remove_all(dir);
  if (cli("synth " + kSynthSmall + " --seed 11 --out " + q(dir / "corpus")) != 0) {
    why = "synth failed";
    return false;
  }
  if (cli("sweep --corpus " + q(dir / "corpus") + " --map " + q(dir / "corpus" / "true_map.txt") +
          " --folds 3 --seed 4 --out " + q(dir / "sweep")) != 0) {
    why = "sweep failed";
    return false;
  }
  if (cli("report --results " + q(dir / "sweep" / "results.csv") + " --out " + q(dir / "report")) !=
      0) {
    why = "report failed";
    return false;
  }
  return true;
}

Outcome matrix_and_report() {
  const fs::path dir = kTmp / "c9";
  std::string why;
  if (!recipe(dir, why)) return {false, why};
  if (cli("matrix --corpus " + q(dir / "corpus") + " --map " + q(dir / "corpus" / "true_map.txt") +
          " --folds 3 --seed 4 --out " + q(dir / "matrix.csv")) != 0)
    return {false, "matrix failed"};

  const auto m = read_csv(dir / "matrix.csv");
  const std::vector<std::pair<std::string, std::string>> order = {
      {"viseme", "viseme"},   {"viseme", "phoneme"}, {"viseme", "word"},
      {"phoneme", "phoneme"}, {"phoneme", "word"},   {"word", "word"}};
  bool matrix_ok = m.size() == 7;
  for (std::size_t r = 1; matrix_ok && r < m.size(); ++r) {
    const double c = std::stod(m[r][3]);
    matrix_ok = m[r][0] == order[r - 1].first && m[r][1] == order[r - 1].second && c >= 0.0 &&
                c <= 1.0;
  }

  const auto s = read_csv(dir / "report" / "summary.csv");
  const std::vector<std::string> names = {"WLT phonemes + phoneme net", "Visemes + phoneme net",
                                          "Effect of WLT", "WLT phonemes + word net",
                                          "Visemes + word net", "Effect of WLT"};
  bool summary_ok = s.size() == 7 && s[0] == std::vector<std::string>{"series", "min", "max", "range"};
  for (std::size_t r = 1; summary_ok && r < s.size(); ++r) {
    const bool effect = names[r - 1] == "Effect of WLT";
    summary_ok = s[r].size() == 4 && s[r][0] == names[r - 1] && (s[r][3].empty() == effect);
    if (summary_ok && !effect)
      summary_ok = std::abs(std::stod(s[r][2]) - std::stod(s[r][1]) - std::stod(s[r][3])) < 2e-4;
  }
  return {matrix_ok && summary_ok,
          std::string("matrix ") + (matrix_ok ? "has the six rows in order" : "is malformed") +
              ", summary " + (summary_ok ? "has min/max/range rows plus two effect rows" : "is malformed")};
}

Outcome determinism() {
  std::string why;
  if (!recipe(kTmp / "c10a", why) || !recipe(kTmp / "c10b", why)) return {false, why};
  int same = 0, total = 0;
  for (const char* sub : {"sweep", "report"})
    for (const auto& e : fs::recursive_directory_iterator(kTmp / "c10a" / sub)) {
      if (!e.is_regular_file()) continue;
      ++total;
      const fs::path rel = fs::relative(e.path(), kTmp / "c10a");
      const fs::path other = kTmp / "c10b" / rel;
      if (fs::exists(other) && slurp(e.path()) == slurp(other) && !slurp(other).empty()) ++same;
    }
  if (total < 5) return {false, "expected sweep and report outputs are missing"};
  return {same == total, std::to_string(same) + "/" + std::to_string(total) +
                             " outputs byte-identical across two runs"};
}

}  // namespace

int main() {
  verbosity() = 0;
  fs::create_directories(kTmp);
  const std::vector<Criterion> criteria = {
      {1, "EM monotonicity", 60, em_monotonicity},
      {2, "decoder oracle equivalence", 30, decoder_oracle},
      {3, "forward-backward oracle", 0, forward_backward_oracle},
      {4, "correctness oracle", 0, correctness_oracle},
      {5, "bigram normalization", 0, bigram_normalization},
      {6, "WLT replica contract", 0, wlt_replica},
      {7, "WLT directional effect", 480, wlt_direction},
      {8, "homophone inseparability", 0, homophones},
      {9, "experiment-matrix structure", 0, matrix_and_report},
      {10, "end-to-end determinism", 0, determinism},
  };
  int passed = 0;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    bool ok = o.pass;
    std::string detail = o.detail;
    if (c.limit_seconds > 0 && secs > c.limit_seconds) {
      ok = false;
      detail += "; over the " + fmt(c.limit_seconds, 0) + " s limit";
    }
    if (ok) ++passed;
    std::cout << (ok ? "PASS" : "FAIL") << " [" << c.number << "] " << c.name << ": " << detail
              << " (" << fmt(secs, 1) << " s)" << std::endl;
  }
  std::cout << passed << "/" << criteria.size() << " criteria passed" << std::endl;
  return passed == static_cast<int>(criteria.size()) ? 0 : 1;
}
