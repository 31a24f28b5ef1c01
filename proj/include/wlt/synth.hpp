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
#include <string>
#include <vector>

#include "wlt/common.hpp"
#include "wlt/corpus.hpp"
#include "wlt/hmm.hpp"
#include "wlt/p2v.hpp"

namespace wlt {

/// Parameters of the synthetic corpus generator.
///
/// Emission geometry, every length scaled by `emission_separation`:
///   - each true viseme class c has a centre sep/sqrt(2) * u_c with unit
///     directions u_c (orthogonal while the classes and silence fit in dim),
///     so distinct class centres sit exactly `sep` apart;
///   - each class has per-state offsets of length `state_scale * sep`
///     shared by its phonemes;
///   - each phoneme adds its own offset of length `phoneme_scale * sep`;
///   - each state is a two-component mixture, components displaced by
///     +-`mixture_scale * sep` along a random direction, unit variance.
/// With sep = 0 every class is statistically identical.
struct SynthSpec {
  int phoneme_count = 12;
  int viseme_count = 4;
  std::optional<VisemeMap> true_map;
  int dim = 10;
  double frames_per_state_mean = 3.0;
  double frames_per_state_spread = 1.0;
  int utterance_count = 200;
  int sentence_min = 2;
  int sentence_max = 5;
  int vocab_size = 40;
  int word_min = 2;
  int word_max = 4;
  double emission_separation = 3.0;
  double phoneme_scale = 0.35;
  double state_scale = 0.3;
  double mixture_scale = 0.25;
  std::uint64_t seed = 1;
  /// Separation 0 is the documented chance-level case; it must be requested.
  bool allow_zero_separation = false;

  void validate() const {
    if (phoneme_count < 2) throw Error("synth: need at least 2 phonemes");
    if (viseme_count < 2 || viseme_count > phoneme_count)
      throw Error("synth: need 2 <= visemes <= phonemes (got " + std::to_string(viseme_count) +
                  " visemes, " + std::to_string(phoneme_count) + " phonemes)");
    if (utterance_count < 1) throw Error("synth: utterance_count must be >= 1");
    if (emission_separation < 0.0 || !std::isfinite(emission_separation) ||
        (emission_separation == 0.0 && !allow_zero_separation))
      throw Error("synth: emission_separation must be positive");
    if (dim < 1) throw Error("synth: dim must be positive");
    if (sentence_min < 1 || sentence_max < sentence_min) throw Error("synth: bad sentence range");
    if (word_min < 1 || word_max < word_min) throw Error("synth: bad word length range");
    if (vocab_size < 1) throw Error("synth: vocab_size must be positive");
    if (frames_per_state_mean < 1.0 || frames_per_state_spread < 0.0)
      throw Error("synth: bad frames-per-state distribution");
    if (true_map) {
      if (static_cast<int>(true_map->phonemes().size()) != phoneme_count ||
          static_cast<int>(true_map->size()) != viseme_count)
        throw Error("synth: true_map does not match phoneme/viseme counts");
    }
  }
};

struct SynthCorpus {
  Corpus corpus;
  HmmSet truth;
  VisemeMap true_map;
  std::vector<Transcription> phone_truth;  // timed, sil-flanked phoneme tier
};

inline std::vector<std::string> synth_phoneme_names(int n) {
  std::vector<std::string> out;
  for (int i = 1; i <= n; ++i) out.push_back("p" + std::to_string(i));
  return out;
}

namespace detail {
inline std::vector<double> random_unit(Rng& rng, int dim) {
  std::vector<double> v(static_cast<std::size_t>(dim));
  double norm = 0.0;
  do {
    norm = 0.0;
    for (auto& x : v) {
      x = rng.normal();
      norm += x * x;
    }
  } while (norm == 0.0);
  norm = std::sqrt(norm);
  for (auto& x : v) x /= norm;
  return v;
}

inline std::string pad_index(int i, int width) {
  std::string s = std::to_string(i);
  while (static_cast<int>(s.size()) < width) s.insert(s.begin(), '0');
  return s;
}
}  // namespace detail

/// Samples a corpus from known ground-truth HMMs. A pure function of `spec`.
inline SynthCorpus synth_generate(const SynthSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  const auto phonemes = synth_phoneme_names(spec.phoneme_count);
  const int np = spec.phoneme_count;
  const int nv = spec.viseme_count;
  const int dim = spec.dim;
  const double sep = spec.emission_separation;

  // True map: a random surjection onto nv classes unless given.
  VisemeMap true_map;
  if (spec.true_map) {
    true_map = *spec.true_map;
  } else {
    std::vector<int> order(static_cast<std::size_t>(np));
    std::iota(order.begin(), order.end(), 0);
    for (int i = np - 1; i > 0; --i)
      std::swap(order[static_cast<std::size_t>(i)],
                order[rng.below(static_cast<std::uint64_t>(i) + 1)]);
    std::vector<int> cls(static_cast<std::size_t>(np));
    for (int i = 0; i < np; ++i)
      cls[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])] =
          i < nv ? i : static_cast<int>(rng.below(static_cast<std::uint64_t>(nv)));
    true_map = VisemeMap::from_classes("true", phonemes, cls);
  }

  // Directions: orthogonal axes while they fit, random unit vectors beyond.
  auto direction = [&](int k) {
    if (k < dim) {
      std::vector<double> e(static_cast<std::size_t>(dim), 0.0);
      e[static_cast<std::size_t>(k)] = 1.0;
      return e;
    }
    return detail::random_unit(rng, dim);
  };
  const double centre_scale = sep / std::sqrt(2.0);
  std::vector<std::vector<double>> class_centre;
  for (int c = 0; c < nv; ++c) {
    auto u = direction(c);
    for (auto& x : u) x *= centre_scale;
    class_centre.push_back(std::move(u));
  }
  auto sil_centre = direction(nv);
  for (auto& x : sil_centre) x *= centre_scale;

  constexpr int kStates = 3;
  auto scaled_unit = [&](double len) {
    auto u = detail::random_unit(rng, dim);
    for (auto& x : u) x *= len;
    return u;
  };
  // Per-class state offsets (index nv is silence).
  std::vector<std::vector<std::vector<double>>> state_offset(static_cast<std::size_t>(nv + 1));
  for (auto& per_class : state_offset)
    for (int s = 0; s < kStates; ++s) per_class.push_back(scaled_unit(spec.state_scale * sep));

  auto make_state = [&](const std::vector<double>& centre) {
    const auto w = scaled_unit(spec.mixture_scale * sep);
    GmmState st;
    for (int sign : {1, -1}) {
      MixtureComponent c;
      c.weight = 0.5;
      c.mean = centre;
      for (int d = 0; d < dim; ++d)
        c.mean[static_cast<std::size_t>(d)] += sign * w[static_cast<std::size_t>(d)];
      c.var.assign(static_cast<std::size_t>(dim), 1.0);
      st.mix.push_back(std::move(c));
    }
    return st;
  };

  const double self_loop = 1.0 - 1.0 / spec.frames_per_state_mean;
  Matrix trans(kStates + 2, std::vector<double>(kStates + 2, 0.0));
  trans[0][1] = 1.0;
  for (int i = 1; i <= kStates; ++i) {
    trans[static_cast<std::size_t>(i)][static_cast<std::size_t>(i)] = self_loop;
    trans[static_cast<std::size_t>(i)][static_cast<std::size_t>(i + 1)] = 1.0 - self_loop;
  }

  HmmSet truth(static_cast<std::size_t>(dim),
               std::vector<double>(static_cast<std::size_t>(dim), 1e-4));
  for (int p = 0; p < np; ++p) {
    const int c = true_map.class_of(phonemes[static_cast<std::size_t>(p)]);
    const auto poff = scaled_unit(spec.phoneme_scale * sep);
    std::vector<GmmState> states;
    for (int s = 0; s < kStates; ++s) {
      auto centre = class_centre[static_cast<std::size_t>(c)];
      for (int d = 0; d < dim; ++d)
        centre[static_cast<std::size_t>(d)] +=
            state_offset[static_cast<std::size_t>(c)][static_cast<std::size_t>(s)]
                        [static_cast<std::size_t>(d)] +
            poff[static_cast<std::size_t>(d)];
      states.push_back(make_state(centre));
    }
    truth.add_model(phonemes[static_cast<std::size_t>(p)], std::move(states), trans);
  }
  {
    std::vector<GmmState> states;
    for (int s = 0; s < kStates; ++s) {
      auto centre = sil_centre;
      for (int d = 0; d < dim; ++d)
        centre[static_cast<std::size_t>(d)] +=
            state_offset[static_cast<std::size_t>(nv)][static_cast<std::size_t>(s)]
                        [static_cast<std::size_t>(d)];
      states.push_back(make_state(centre));
    }
    truth.add_model(kSil, std::move(states), trans);
  }

  // Lexicon with distinct pronunciations covering every phoneme.
  Lexicon lexicon;
  {
    const int width = static_cast<int>(std::to_string(spec.vocab_size).size());
    std::set<Pronunciation> used;
    std::vector<Pronunciation> prons;
    std::vector<int> cover(static_cast<std::size_t>(np));
    std::iota(cover.begin(), cover.end(), 0);
    std::size_t next_cover = 0;
    for (int w = 0; w < spec.vocab_size; ++w) {
      Pronunciation pron;
      for (int attempt = 0;; ++attempt) {
        pron.clear();
        const int len = rng.range(spec.word_min, spec.word_max);
        for (int i = 0; i < len; ++i) {
          int p;
          if (next_cover < cover.size() && attempt == 0) {
            p = cover[next_cover++];
          } else {
            p = static_cast<int>(rng.below(static_cast<std::uint64_t>(np)));
          }
          pron.push_back(phonemes[static_cast<std::size_t>(p)]);
        }
        if (!used.count(pron)) break;
        if (attempt > 1000) throw Error("synth: cannot draw distinct pronunciations");
      }
      used.insert(pron);
      lexicon.add("w" + detail::pad_index(w + 1, width), pron);
    }
  }
  const auto words = lexicon.words();

  SynthCorpus out{Corpus{}, truth, true_map, {}};
  out.corpus.lexicon = lexicon;
  const int id_width = std::max(4, static_cast<int>(std::to_string(spec.utterance_count).size()));
  const int dur_lo = std::max(
      1, static_cast<int>(std::lround(spec.frames_per_state_mean - spec.frames_per_state_spread)));
  const int dur_hi = std::max(
      dur_lo,
      static_cast<int>(std::lround(spec.frames_per_state_mean + spec.frames_per_state_spread)));
  for (int u = 0; u < spec.utterance_count; ++u) {
    const std::string id = "u" + detail::pad_index(u + 1, id_width);
    const int nwords = rng.range(spec.sentence_min, spec.sentence_max);
    std::vector<std::string> sentence;
    for (int i = 0; i < nwords; ++i)
      sentence.push_back(words[rng.below(words.size())]);
    Transcription wtr = Transcription::from_labels(id, Tier::word, sentence);

    std::vector<std::string> labels{kSil};
    for (const auto& w : sentence)
      for (const auto& ph : lexicon.primary(w)) labels.push_back(ph);
    labels.push_back(kSil);

    std::vector<double> data;
    Transcription ptr{id, Tier::phoneme, {}};
    int t = 0;
    for (const auto& l : labels) {
      const int start = t;
      const HmmModel& m = truth.model(l);
      for (std::size_t s = 0; s < m.num_states(); ++s) {
        const GmmState& st = truth.pool()[m.states[s]];
        const int dur = rng.range(dur_lo, dur_hi);
        for (int f = 0; f < dur; ++f) {
          const std::size_t k = rng.uniform() < st.mix[0].weight ? 0 : 1;
          const auto& c = st.mix[k];
          for (int d = 0; d < dim; ++d)
            data.push_back(c.mean[static_cast<std::size_t>(d)] +
                           std::sqrt(c.var[static_cast<std::size_t>(d)]) * rng.normal());
          ++t;
        }
      }
      ptr.entries.push_back({l, start, t});
    }
    out.corpus.utterances.push_back(
        {FeatureSequence(id, static_cast<std::size_t>(dim), std::move(data)), std::move(wtr)});
    out.phone_truth.push_back(std::move(ptr));
  }
  return out;
}

}  // namespace wlt
