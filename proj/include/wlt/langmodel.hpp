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

#include <cmath>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "wlt/common.hpp"
#include "wlt/corpus.hpp"
#include "wlt/hmm.hpp"
#include "wlt/p2v.hpp"

namespace wlt {

inline const std::string kSentStart = "<s>";
inline const std::string kSentEnd = "</s>";

/// Backoff bigram with absolute discounting. Probabilities are natural logs.
///
///   seen (h, v):   P(v|h) = (c(h,v) - b) / c(h)
///   unseen v:      P(v|h) = beta(h) * Pu(v), beta(h) = (b * n(h) / c(h)) / sum_unseen Pu
///   Pu(v)        = (c(v) + 1) / (tokens + |V| - 1)   (add-one unigram, no <s>)
///
/// Histories never seen back off entirely (beta = 1).
class BigramModel {
 public:
  BigramModel() = default;

  Tier tier() const { return tier_; }
  /// Index 0 is <s>, index 1 is </s>, units follow in sorted order.
  const std::vector<std::string>& vocabulary() const { return vocab_; }
  std::vector<std::string> units() const { return {vocab_.begin() + 2, vocab_.end()}; }

  int index(const std::string& sym) const {
    auto it = index_.find(sym);
    return it == index_.end() ? -1 : it->second;
  }

  double unigram(int v) const { return unigram_[static_cast<std::size_t>(v)]; }
  double backoff(int h) const { return backoff_[static_cast<std::size_t>(h)]; }
  const std::map<std::pair<int, int>, double>& bigrams() const { return bigrams_; }

  double log_prob(int h, int v) const {
    auto it = bigrams_.find({h, v});
    if (it != bigrams_.end()) return it->second;
    return backoff_[static_cast<std::size_t>(h)] + unigram_[static_cast<std::size_t>(v)];
  }

  double log_prob(const std::string& h, const std::string& v) const {
    const int hi = index(h), vi = index(v);
    if (hi < 0 || vi < 0) throw Error("bigram: unknown symbol in (" + h + ", " + v + ")");
    return log_prob(hi, vi);
  }

  /// Log probability of a whole sentence including both boundary symbols.
  double sentence_log_prob(const std::vector<std::string>& units) const {
    double lp = 0.0;
    std::string prev = kSentStart;
    for (const auto& u : units) {
      lp += log_prob(prev, u);
      prev = u;
    }
    return lp + log_prob(prev, kSentEnd);
  }

  friend BigramModel estimate_bigram(const std::vector<std::vector<std::string>>&, Tier, double,
                                     const std::vector<std::string>&);
  friend BigramModel read_arpa(std::istream&, Tier, const std::string&);

 private:
  void set_vocab(std::vector<std::string> units) {
    vocab_ = {kSentStart, kSentEnd};
    vocab_.insert(vocab_.end(), units.begin(), units.end());
    index_.clear();
    for (std::size_t i = 0; i < vocab_.size(); ++i) index_[vocab_[i]] = static_cast<int>(i);
    unigram_.assign(vocab_.size(), kLogZero);
    backoff_.assign(vocab_.size(), 0.0);
  }

  Tier tier_ = Tier::word;
  std::vector<std::string> vocab_;
  std::map<std::string, int> index_;
  std::vector<double> unigram_;
  std::vector<double> backoff_;
  std::map<std::pair<int, int>, double> bigrams_;
};

/// Estimates a bigram over sentences of one tier. Pause labels are ignored.
/// `alphabet` adds units that may not occur in the training sentences.
inline BigramModel estimate_bigram(const std::vector<std::vector<std::string>>& sentences,
                                   Tier tier, double discount = 0.5,
                                   const std::vector<std::string>& alphabet = {}) {
  if (sentences.empty()) throw Error("estimate_bigram: empty corpus");
  if (!(discount > 0.0 && discount < 1.0))
    throw Error("estimate_bigram: discount must lie in (0, 1)");
  std::set<std::string> units(alphabet.begin(), alphabet.end());
  for (const auto& s : sentences)
    for (const auto& u : s)
      if (!is_pause(u)) units.insert(u);
  for (const auto& u : units)
    if (u == kSentStart || u == kSentEnd) throw Error("estimate_bigram: reserved symbol in data");
  if (units.size() < 2) throw Error("estimate_bigram: vocabulary of size < 2");

  BigramModel lm;
  lm.tier_ = tier;
  lm.set_vocab({units.begin(), units.end()});
  const std::size_t v = lm.vocab_.size();

  std::vector<double> uni_count(v, 0.0);
  std::map<std::pair<int, int>, double> pair_count;
  std::vector<double> hist_count(v, 0.0);
  double tokens = 0.0;
  for (const auto& s : sentences) {
    int prev = 0;
    auto step = [&](int cur) {
      pair_count[{prev, cur}] += 1.0;
      hist_count[static_cast<std::size_t>(prev)] += 1.0;
      uni_count[static_cast<std::size_t>(cur)] += 1.0;
      tokens += 1.0;
      prev = cur;
    };
    for (const auto& u : s)
      if (!is_pause(u)) step(lm.index(u));
    step(1);
  }

  const double denom = tokens + static_cast<double>(v - 1);
  std::vector<double> pu(v, 0.0);
  for (std::size_t i = 1; i < v; ++i) {
    pu[i] = (uni_count[i] + 1.0) / denom;
    lm.unigram_[i] = std::log(pu[i]);
  }

  std::vector<double> seen_pu(v, 0.0);
  std::vector<double> distinct(v, 0.0);
  for (const auto& [hv, c] : pair_count) {
    seen_pu[static_cast<std::size_t>(hv.first)] += pu[static_cast<std::size_t>(hv.second)];
    distinct[static_cast<std::size_t>(hv.first)] += 1.0;
  }
  std::vector<bool> no_discount(v, false);
  for (std::size_t h = 0; h < v; ++h) {
    if (h == 1) continue;  // </s> is never a history
    if (hist_count[h] == 0.0) {
      lm.backoff_[h] = 0.0;
      continue;
    }
    // Unseen mass, summed directly to avoid cancellation in 1 - seen.
    double unseen = 0.0;
    for (std::size_t w = 1; w < v; ++w)
      if (!pair_count.count({static_cast<int>(h), static_cast<int>(w)})) unseen += pu[w];
    if (unseen > 0.0) {
      const double mass = discount * distinct[h] / hist_count[h];
      lm.backoff_[h] = std::log(mass / unseen);
    } else {
      lm.backoff_[h] = kLogZero;
      no_discount[h] = true;
    }
  }
  for (const auto& [hv, c] : pair_count) {
    const auto h = static_cast<std::size_t>(hv.first);
    const double b = no_discount[h] ? 0.0 : discount;
    lm.bigrams_[hv] = std::log((c - b) / hist_count[h]);
  }
  return lm;
}

// ---------------------------------------------------------------------------
// ARPA-style text: log10 values with 6 decimals; -99 stands for zero.

namespace detail {
inline std::string arpa_num(double ln) {
  if (ln == kLogZero) return "-99";
  return format_fixed(ln / std::log(10.0), 6);
}
inline double arpa_parse(const std::string& s) {
  const double v = parse_double(s);
  return v <= -99.0 ? kLogZero : v * std::log(10.0);
}
}  // namespace detail

inline void write_arpa(std::ostream& os, const BigramModel& lm) {
  const auto& vocab = lm.vocabulary();
  os << "\\data\\\nngram 1=" << vocab.size() << "\nngram 2=" << lm.bigrams().size() << "\n\n";
  os << "\\1-grams:\n";
  for (std::size_t i = 0; i < vocab.size(); ++i) {
    os << detail::arpa_num(lm.unigram(static_cast<int>(i))) << '\t' << vocab[i];
    if (i != 1) os << '\t' << detail::arpa_num(lm.backoff(static_cast<int>(i)));
    os << '\n';
  }
  os << "\n\\2-grams:\n";
  for (const auto& [hv, lp] : lm.bigrams())
    os << detail::arpa_num(lp) << '\t' << vocab[static_cast<std::size_t>(hv.first)] << ' '
       << vocab[static_cast<std::size_t>(hv.second)] << '\n';
  os << "\n\\end\\\n";
}

inline BigramModel read_arpa(std::istream& is, Tier tier, const std::string& where) {
  std::string line;
  std::vector<std::vector<std::string>> uni, bi;
  int section = 0;
  while (std::getline(is, line)) {
    const std::string t = trim(line);
    if (t.empty() || t == "\\data\\" || t.rfind("ngram ", 0) == 0) continue;
    if (t == "\\1-grams:") {
      section = 1;
      continue;
    }
    if (t == "\\2-grams:") {
      section = 2;
      continue;
    }
    if (t == "\\end\\") break;
    auto tok = split_ws(t);
    if (section == 1) {
      if (tok.size() != 2 && tok.size() != 3) throw Error(where + ": bad 1-gram line");
      uni.push_back(std::move(tok));
    } else if (section == 2) {
      if (tok.size() != 3) throw Error(where + ": bad 2-gram line");
      bi.push_back(std::move(tok));
    } else {
      throw Error(where + ": text outside a section");
    }
  }
  BigramModel lm;
  lm.tier_ = tier;
  std::vector<std::string> units;
  for (const auto& u : uni)
    if (u[1] != kSentStart && u[1] != kSentEnd) units.push_back(u[1]);
  lm.set_vocab(units);
  if (lm.vocab_.size() != uni.size()) throw Error(where + ": missing boundary symbols");
  for (const auto& u : uni) {
    const int i = lm.index(u[1]);
    lm.unigram_[static_cast<std::size_t>(i)] = detail::arpa_parse(u[0]);
    if (u.size() == 3) lm.backoff_[static_cast<std::size_t>(i)] = detail::arpa_parse(u[2]);
  }
  for (const auto& b : bi) {
    const int h = lm.index(b[1]), v = lm.index(b[2]);
    if (h < 0 || v < 0) throw Error(where + ": 2-gram over unknown symbol");
    lm.bigrams_[{h, v}] = detail::arpa_parse(b[0]);
  }
  return lm;
}

inline void save_arpa(const std::filesystem::path& p, const BigramModel& lm) {
  auto os = detail::open_out(p);
  write_arpa(os, lm);
}

inline BigramModel load_arpa(const std::filesystem::path& p, Tier tier) {
  auto is = detail::open_in(p);
  return read_arpa(is, tier, p.string());
}

// ---------------------------------------------------------------------------
// Decoding networks.

/// Classifier/network tier pairs that can be compiled, in reporting order.
inline const std::vector<std::pair<Tier, Tier>>& unit_selection_pairs() {
  static const std::vector<std::pair<Tier, Tier>> pairs = {
      {Tier::viseme, Tier::viseme},   {Tier::viseme, Tier::phoneme}, {Tier::viseme, Tier::word},
      {Tier::phoneme, Tier::phoneme}, {Tier::phoneme, Tier::word},   {Tier::word, Tier::word}};
  return pairs;
}

/// A bigram over network-tier units, each unit expanded into a chain of
/// classifier-tier HMM labels. Paths run start label, units, end label.
struct DecodingNetwork {
  Tier classifier_tier = Tier::phoneme;
  Tier network_tier = Tier::phoneme;
  std::vector<std::string> units;
  std::vector<std::vector<std::string>> expansions;
  std::vector<double> start_weight;  // log P(u | <s>)
  Matrix arc;                        // arc[w][u] = log P(u | w)
  std::vector<double> end_weight;    // log P(</s> | u)
  std::string start_label = kSil;    // empty: no leading model
  std::string end_label = kSil;      // empty: no trailing model

  std::size_t size() const { return units.size(); }

  /// LM log weight of a unit-index path.
  double path_weight(const std::vector<std::size_t>& path) const {
    if (path.empty()) throw Error("empty network path");
    double w = start_weight[path.front()];
    for (std::size_t i = 1; i < path.size(); ++i) w += arc[path[i - 1]][path[i]];
    return w + end_weight[path.back()];
  }

  void validate() const {
    const std::size_t n = units.size();
    if (n == 0) throw Error("decoding network has no units");
    if (expansions.size() != n || start_weight.size() != n || end_weight.size() != n ||
        arc.size() != n)
      throw Error("decoding network: inconsistent sizes");
    for (std::size_t i = 0; i < n; ++i) {
      if (expansions[i].empty()) throw Error("decoding network: empty expansion");
      if (arc[i].size() != n) throw Error("decoding network: arc matrix not square");
      for (double w : arc[i])
        if (!std::isfinite(w)) throw Error("decoding network: non-finite arc weight");
      if (!std::isfinite(start_weight[i]) || !std::isfinite(end_weight[i]))
        throw Error("decoding network: non-finite boundary weight");
    }
  }
};

struct NetworkOptions {
  std::size_t word_classifier_limit = 100;
  bool with_silence = true;
  bool sp_between_words = false;
};

/// Expands the bigram's units down to classifier-tier HMM chains.
inline DecodingNetwork build_network(const BigramModel& lm, Tier classifier_tier,
                                     const Lexicon* lexicon, const VisemeMap* map,
                                     const NetworkOptions& opt = {}) {
  const Tier net = lm.tier();
  bool allowed = false;
  for (const auto& [c, n] : unit_selection_pairs())
    if (c == classifier_tier && n == net) allowed = true;
  if (!allowed)
    throw Error(std::string("unsupported unit pair: ") + tier_name(classifier_tier) +
                " classifier with " + tier_name(net) + " network");
  if (net == Tier::word && classifier_tier != Tier::word && !lexicon)
    throw Error("word network needs a lexicon");
  if (classifier_tier == Tier::viseme && net != Tier::viseme && !map)
    throw Error("viseme classifier with a " + std::string(tier_name(net)) +
                " network needs a phoneme-to-viseme map");

  DecodingNetwork g;
  g.classifier_tier = classifier_tier;
  g.network_tier = net;
  g.units = lm.units();
  if (classifier_tier == Tier::word && g.units.size() > opt.word_classifier_limit)
    throw Error("word classifiers rejected: vocabulary of " + std::to_string(g.units.size()) +
                " exceeds the limit of " + std::to_string(opt.word_classifier_limit));
  if (!opt.with_silence) g.start_label = g.end_label = "";
  for (const auto& u : g.units) {
    std::vector<std::string> chain;
    if (net == classifier_tier) {
      chain = {u};
    } else if (net == Tier::phoneme) {
      chain = {map->viseme_of(u)};
    } else {
      chain = lexicon->primary(u);
      if (classifier_tier == Tier::viseme) chain = translate_labels(chain, *map);
    }
    if (opt.sp_between_words && net == Tier::word) chain.push_back(kSp);
    g.expansions.push_back(std::move(chain));
  }
  const std::size_t n = g.units.size();
  g.arc.assign(n, std::vector<double>(n, 0.0));
  g.start_weight.resize(n);
  g.end_weight.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int ui = static_cast<int>(i) + 2;
    g.start_weight[i] = lm.log_prob(0, ui);
    g.end_weight[i] = lm.log_prob(ui, 1);
    for (std::size_t j = 0; j < n; ++j) g.arc[i][j] = lm.log_prob(ui, static_cast<int>(j) + 2);
  }
  g.validate();
  return g;
}

}  // namespace wlt
