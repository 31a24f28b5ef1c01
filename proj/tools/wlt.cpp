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

// wlt: command-line front end for the weak-learning-transfer lip-reading toolkit.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "wlt/corpus.hpp"
#include "wlt/decoder.hpp"
#include "wlt/hmm.hpp"
#include "wlt/langmodel.hpp"
#include "wlt/p2v.hpp"
#include "wlt/pipeline.hpp"
#include "wlt/report.hpp"
#include "wlt/scoring.hpp"
#include "wlt/synth.hpp"

namespace fs = std::filesystem;
using namespace wlt;

namespace {

Corpus open_corpus(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw Error("corpus directory not found: " + dir.string());
  return load_corpus(dir / "features", dir / "words.mlf", dir / "lexicon.txt");
}

/// Utterance subsets selected by --holdout-every: every k-th utterance
/// (1-based positions k, 2k, ...) is held out; 0 keeps everything in training.
struct Split {
  std::vector<std::size_t> train, test;
};

Split split_corpus(std::size_t n, int every) {
  Split s;
  for (std::size_t i = 0; i < n; ++i) {
    const bool held = every > 0 && (i + 1) % static_cast<std::size_t>(every) == 0;
    (held ? s.test : s.train).push_back(i);
  }
  return s;
}

VisemeMap map_or_identity(const std::string& path, const Corpus& corpus) {
  if (!path.empty()) return load_map(path);
  const auto ph = corpus.lexicon.phonemes();
  return VisemeMap::identity("identity", {ph.begin(), ph.end()});
}

void ensure_parent(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
}

// Options shared by the experiment commands.
struct ExperimentFlags {
  int folds = 10;
  int reestimations = 11, tie_after = 3, align_after = 7;
  int mixtures = 5, states = 3;
  double grammar_scale = 1.0, penalty = 0.5, beam = 0.0;
  double discount = 0.5;

  void add(CLI::App* app) {
    app->add_option("--folds", folds, "bootstrap rounds")->check(CLI::Range(2, 1000));
    app->add_option("--reestimations", reestimations, "EM updates per pass");
    app->add_option("--tie-after", tie_after, "tie sp to sil after this step");
    app->add_option("--align-after", align_after, "force-align after this step");
    app->add_option("--mixtures", mixtures, "Gaussians per state")->check(CLI::PositiveNumber);
    app->add_option("--states", states, "emitting states per model")->check(CLI::PositiveNumber);
    app->add_option("--grammar-scale", grammar_scale, "LM weight");
    app->add_option("--penalty", penalty, "per-unit insertion penalty");
    app->add_option("--beam", beam, "pruning beam (0 disables)");
    app->add_option("--discount", discount, "absolute discount of the bigram");
  }

  ExperimentConfig config(std::uint64_t seed, int jobs) const {
    ExperimentConfig cfg;
    cfg.folds = folds;
    cfg.schedule = {reestimations, tie_after, align_after};
    cfg.flat.mixtures = static_cast<std::size_t>(mixtures);
    cfg.flat.states = static_cast<std::size_t>(states);
    cfg.eval.decode = decode();
    cfg.eval.lm_discount = discount;
    cfg.seed = seed;
    cfg.jobs = jobs;
    return cfg;
  }

  DecodeParams decode() const {
    DecodeParams p;
    p.grammar_scale = grammar_scale;
    p.transition_penalty = penalty;
    if (beam > 0.0) p.beam = beam;
    p.validate();
    return p;
  }
};

std::string one_line(std::string s) {
  for (auto& c : s)
    if (c == '\n' || c == '\r') c = ' ';
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Weak learning transfer for HMM lip-reading"};
  app.set_config("--config", "", "key=value configuration file; flags override it");
  app.require_subcommand(1);
  app.fallthrough();
  int jobs = 1;
  bool quiet = false, verbose = false;
  app.add_option("--jobs", jobs, "worker cap")->check(CLI::PositiveNumber);
  app.add_flag("-q,--quiet", quiet, "errors only");
  app.add_flag("-v,--verbose", verbose, "progress messages");

  // synth -------------------------------------------------------------------
  auto* synth = app.add_subcommand("synth", "generate a synthetic corpus from known HMMs");
  SynthSpec spec;
  std::string synth_out;
  std::string synth_map;
  synth->add_option("--phonemes", spec.phoneme_count, "phoneme alphabet size");
  synth->add_option("--visemes", spec.viseme_count, "true viseme classes");
  synth->add_option("--map", synth_map, "true phoneme-to-viseme map file");
  synth->add_option("--utts", spec.utterance_count, "utterances");
  synth->add_option("--dim", spec.dim, "feature dimension");
  synth->add_option("--vocab", spec.vocab_size, "vocabulary size");
  synth->add_option("--separation", spec.emission_separation, "distance between class centres");
  synth->add_flag("--allow-zero-separation", spec.allow_zero_separation,
                  "permit separation 0 (chance-level data)");
  synth->add_option("--frames-per-state", spec.frames_per_state_mean, "mean state duration");
  synth->add_option("--seed", spec.seed, "random seed")->required();
  synth->add_option("--out", synth_out, "output directory")->required();

  // train -------------------------------------------------------------------
  auto* train = app.add_subcommand("train", "train a classifier HMM set");
  std::string train_corpus, train_map, train_out, train_tier = "phoneme", train_method = "plain";
  std::uint64_t train_seed = 0;
  int train_holdout = 0;
  ExperimentFlags train_flags;
  train->add_option("--corpus", train_corpus, "corpus directory")->required();
  train->add_option("--tier", train_tier, "classifier tier: viseme|phoneme|word");
  train->add_option("--method", train_method, "plain|wlt");
  train->add_option("--map", train_map, "phoneme-to-viseme map file");
  train->add_option("--holdout-every", train_holdout, "hold out every k-th utterance");
  train->add_option("--seed", train_seed, "run seed (recorded)")->required();
  train->add_option("--out", train_out, "output directory")->required();
  train_flags.add(train);

  // decode ------------------------------------------------------------------
  auto* decode = app.add_subcommand("decode", "recognise utterances with a bigram network");
  std::string dec_corpus, dec_models, dec_map, dec_lm, dec_save_lm, dec_out;
  std::string dec_classifier = "phoneme", dec_network = "phoneme", dec_emit = "network";
  int dec_holdout = 0;
  ExperimentFlags dec_flags;
  decode->add_option("--corpus", dec_corpus, "corpus directory")->required();
  decode->add_option("--models", dec_models, "trained model file")->required();
  decode->add_option("--classifier-tier", dec_classifier, "viseme|phoneme|word");
  decode->add_option("--network-tier", dec_network, "viseme|phoneme|word");
  decode->add_option("--map", dec_map, "phoneme-to-viseme map file");
  decode->add_option("--lm", dec_lm, "ARPA bigram (default: estimate from training part)");
  decode->add_option("--save-lm", dec_save_lm, "write the bigram used");
  decode->add_option("--emit", dec_emit, "output labels: classifier|network");
  decode->add_option("--holdout-every", dec_holdout, "decode only every k-th utterance");
  decode->add_option("--out", dec_out, "recognition MLF")->required();
  dec_flags.add(decode);

  // score -------------------------------------------------------------------
  auto* score = app.add_subcommand("score", "align hypotheses with references");
  std::string sc_corpus, sc_hyp, sc_map, sc_tier = "phoneme", sc_out;
  bool sc_csv = false;
  score->add_option("--corpus", sc_corpus, "corpus directory (references)")->required();
  score->add_option("--hyp", sc_hyp, "recognition MLF")->required();
  score->add_option("--tier", sc_tier, "tier of the hypotheses");
  score->add_option("--map", sc_map, "phoneme-to-viseme map file");
  score->add_flag("--csv", sc_csv, "comma-separated output");
  score->add_option("--out", sc_out, "report file (default stdout)");

  // matrix ------------------------------------------------------------------
  auto* matrix = app.add_subcommand("matrix", "unit-selection matrix (six rows)");
  std::string mx_corpus, mx_map, mx_out;
  std::uint64_t mx_seed = 0;
  ExperimentFlags mx_flags;
  matrix->add_option("--corpus", mx_corpus, "corpus directory")->required();
  matrix->add_option("--map", mx_map, "phoneme-to-viseme map file")->required();
  matrix->add_option("--seed", mx_seed, "fold seed")->required();
  matrix->add_option("--out", mx_out, "matrix CSV")->required();
  mx_flags.add(matrix);

  // sweep -------------------------------------------------------------------
  auto* sweep = app.add_subcommand("sweep", "viseme-size sweep over a nested map family");
  std::string sw_corpus, sw_family, sw_map, sw_out;
  std::uint64_t sw_seed = 0;
  ExperimentFlags sw_flags;
  sweep->add_option("--corpus", sw_corpus, "corpus directory")->required();
  sweep->add_option("--family", sw_family, "family index file (default: derive)");
  sweep->add_option("--map", sw_map, "initial map when deriving (default: identity)");
  sweep->add_option("--seed", sw_seed, "fold seed")->required();
  sweep->add_option("--out", sw_out, "output directory")->required();
  sw_flags.add(sweep);

  // report ------------------------------------------------------------------
  auto* report = app.add_subcommand("report", "summary tables, plot data and SVG chart");
  std::string rp_results, rp_out;
  report->add_option("--results", rp_results, "results CSV from sweep")->required();
  report->add_option("--out", rp_out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }
  verbosity() = quiet ? 0 : (verbose ? 2 : 1);

  try {
    if (*synth) {
      if (!synth_map.empty()) spec.true_map = load_map(synth_map);
      SynthCorpus sc = synth_generate(spec);
      const fs::path out(synth_out);
      save_corpus(out, sc.corpus);
      save_mlf(out / "phones.mlf", sc.phone_truth);
      save_map(out / "true_map.txt", sc.true_map);
      save_hmm_set(out / "truth.hmm", sc.truth);
      auto os = detail::open_out(out / "manifest.txt");
      os << "seed=" << spec.seed << "\nphonemes=" << spec.phoneme_count
         << "\nvisemes=" << spec.viseme_count << "\nutterances=" << spec.utterance_count
         << "\ndim=" << spec.dim << "\nvocab=" << spec.vocab_size
         << "\nseparation=" << format_double(spec.emission_separation)
         << "\nframes_per_state=" << format_double(spec.frames_per_state_mean)
         << "\nfeatures=features\nwords=words.mlf\nphones=phones.mlf\nlexicon=lexicon.txt"
            "\nmap=true_map.txt\ntruth=truth.hmm\n";
    } else if (*train) {
      Corpus corpus = open_corpus(train_corpus);
      const Tier tier = parse_tier(train_tier);
      const Split split = split_corpus(corpus.size(), train_holdout);
      ExperimentConfig cfg = train_flags.config(train_seed, jobs);
      cfg.eval.jobs = jobs;
      cfg.classifier_tier = tier;
      std::optional<VisemeMap> map;
      if (!train_map.empty()) map = load_map(train_map);
      else if (tier != Tier::word) map = map_or_identity("", corpus);
      const VisemeMap* mp = map ? &*map : nullptr;
      const fs::path out(train_out);
      fs::create_directories(out);
      auto write_log = [&](const fs::path& p, const TrainLog& log) {
        auto os = detail::open_out(p);
        for (std::size_t i = 0; i < log.loglik.size(); ++i)
          os << (i + 1) << ' ' << format_double(log.loglik[i]) << '\n';
      };
      if (train_method == "wlt") {
        if (tier != Tier::phoneme) throw Error("--method wlt trains phoneme classifiers");
        if (train_map.empty()) throw Error("--method wlt needs --map");
        auto vis_items = make_items(corpus, split.train, Tier::viseme, mp);
        auto vis = train_viseme_pass(vis_items, *map, corpus.lexicon, cfg.schedule, cfg.flat, jobs);
        save_hmm_set(out / "visemes.hmm", vis.set);
        write_log(out / "visemes.log", vis.log);
        auto ph_items = make_items(corpus, split.train, Tier::phoneme, mp);
        auto ph = train_phoneme_pass(wlt_init_phonemes(vis.set, *map), ph_items, cfg.schedule, jobs);
        save_hmm_set(out / "models.hmm", ph.set);
        write_log(out / "train.log", ph.log);
      } else if (train_method == "plain") {
        auto items = make_items(corpus, split.train, tier, mp);
        auto sys = train_flat(items, tier, corpus.lexicon, mp, cfg.schedule, cfg.flat, jobs);
        save_hmm_set(out / "models.hmm", sys.set);
        write_log(out / "train.log", sys.log);
      } else {
        throw Error("unknown method '" + train_method + "' (expected plain or wlt)");
      }
    } else if (*decode) {
      Corpus corpus = open_corpus(dec_corpus);
      const Tier ct = parse_tier(dec_classifier), nt = parse_tier(dec_network);
      const Split split = split_corpus(corpus.size(), dec_holdout);
      const auto& test = dec_holdout > 0 ? split.test : split.train;
      const auto& lm_utts = split.train;
      std::optional<VisemeMap> map;
      if (!dec_map.empty()) map = load_map(dec_map);
      else if (ct != Tier::word) map = map_or_identity("", corpus);
      const VisemeMap* mp = map ? &*map : nullptr;
      HmmSet set = load_hmm_set(dec_models);
      BigramModel lm = dec_lm.empty() ? train_bigram(corpus, lm_utts, nt, mp, dec_flags.discount)
                                      : load_arpa(dec_lm, nt);
      if (!dec_save_lm.empty()) {
        ensure_parent(dec_save_lm);
        save_arpa(dec_save_lm, lm);
      }
      DecodingNetwork net = build_network(lm, ct, &corpus.lexicon, mp);
      const DecodeParams params = dec_flags.decode();
      const bool classifier_out = dec_emit == "classifier";
      if (!classifier_out && dec_emit != "network")
        throw Error("--emit must be classifier or network");
      std::vector<std::string> ids(test.size());
      std::vector<DecodeResult> results(test.size());
      parallel_for(test.size(), jobs, [&](std::size_t k) {
        const auto& u = corpus.utterances[test[k]];
        ids[k] = u.words.utterance_id;
        results[k] = viterbi_decode(set, net, u.features, params);
      });
      ensure_parent(dec_out);
      auto os = detail::open_out(dec_out);
      write_recognition_mlf(os, ids, results, !classifier_out);
    } else if (*score) {
      Corpus corpus = open_corpus(sc_corpus);
      const Tier tier = parse_tier(sc_tier);
      std::optional<VisemeMap> map;
      if (!sc_map.empty()) map = load_map(sc_map);
      auto hyps = load_mlf(sc_hyp, tier);
      std::map<std::string, const Utterance*> by_id;
      for (const auto& u : corpus.utterances) by_id[u.words.utterance_id] = &u;
      std::vector<ScoredUtterance> rows;
      for (const auto& h : hyps) {
        auto it = by_id.find(h.utterance_id);
        if (it == by_id.end()) throw Error("hypothesis for unknown utterance '" + h.utterance_id + "'");
        std::vector<std::string> words, hyp;
        for (const auto& s : it->second->words.entries)
          if (!is_pause(s.label)) words.push_back(s.label);
        for (const auto& s : h.entries)
          if (!is_pause(s.label)) hyp.push_back(s.label);
        auto ref = project_units(words, Tier::word, tier, &corpus.lexicon, map ? &*map : nullptr);
        rows.push_back({h.utterance_id, align(ref, hyp, {}, tier).counts});
      }
      if (sc_out.empty()) {
        write_score_report(std::cout, rows, sc_csv);
      } else {
        ensure_parent(sc_out);
        auto os = detail::open_out(sc_out);
        write_score_report(os, rows, sc_csv);
      }
    } else if (*matrix) {
      Corpus corpus = open_corpus(mx_corpus);
      VisemeMap map = load_map(mx_map);
      ExperimentConfig cfg = mx_flags.config(mx_seed, jobs);
      auto rows = run_unit_selection_matrix(corpus, map, cfg);
      ensure_parent(mx_out);
      auto os = detail::open_out(mx_out);
      write_matrix_csv(os, rows);
    } else if (*sweep) {
      Corpus corpus = open_corpus(sw_corpus);
      ExperimentConfig cfg = sw_flags.config(sw_seed, jobs);
      const fs::path out(sw_out);
      fs::create_directories(out);
      std::vector<VisemeMap> family;
      if (!sw_family.empty()) {
        family = load_family(sw_family);
      } else {
        family = derive_family_from_corpus(corpus, map_or_identity(sw_map, corpus), cfg);
        save_family(out / "family", family);
      }
      SweepResult result = run_viseme_sweep(corpus, family, cfg);
      auto os = detail::open_out(out / "results.csv");
      write_results_csv(os, result);
    } else if (*report) {
      auto is = detail::open_in(rp_results);
      SweepResult result = read_results_csv(is, rp_results);
      const fs::path out(rp_out);
      fs::create_directories(out);
      {
        auto os = detail::open_out(out / "sweep_summary.csv");
        write_sweep_summary_csv(os, result);
      }
      {
        auto os = detail::open_out(out / "summary.csv");
        write_summary_csv(os, summarize_min_max_range(result));
      }
      const auto series = plot_series(result);
      {
        auto os = detail::open_out(out / "plot.csv");
        write_plot_data(os, series);
      }
      auto os = detail::open_out(out / "plot.svg");
      write_svg(os, series);
    }
  } catch (const std::exception& e) {
    std::cerr << "wlt: error: " << one_line(e.what()) << '\n';
    return 1;
  }
  return 0;
}
