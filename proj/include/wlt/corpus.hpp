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
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "wlt/common.hpp"

namespace wlt {

enum class Tier { word, phoneme, viseme };

inline const char* tier_name(Tier t) {
  switch (t) {
    case Tier::word: return "word";
    case Tier::phoneme: return "phoneme";
    case Tier::viseme: return "viseme";
  }
  return "?";
}

inline Tier parse_tier(std::string_view s) {
  if (s == "word") return Tier::word;
  if (s == "phoneme") return Tier::phoneme;
  if (s == "viseme") return Tier::viseme;
  throw Error("unknown tier '" + std::string(s) + "'");
}

/// Silence and short-pause labels. They live outside every unit alphabet.
inline const std::string kSil = "sil";
inline const std::string kSp = "sp";

inline bool is_pause(std::string_view label) { return label == kSil || label == kSp; }

// ---------------------------------------------------------------------------

/// One utterance's observation frames, stored row-major (T x dim).
class FeatureSequence {
 public:
  FeatureSequence() = default;
  FeatureSequence(std::string id, std::size_t dim, std::vector<double> data)
      : utterance_id_(std::move(id)), dim_(dim), data_(std::move(data)) {
    validate();
  }

  const std::string& utterance_id() const { return utterance_id_; }
  std::size_t dim() const { return dim_; }
  std::size_t num_frames() const { return dim_ == 0 ? 0 : data_.size() / dim_; }
  std::span<const double> frame(std::size_t t) const {
    return {data_.data() + t * dim_, dim_};
  }
  const std::vector<double>& data() const { return data_; }

  void validate() const {
    if (dim_ == 0) throw Error("feature sequence '" + utterance_id_ + "': dim must be positive");
    if (data_.empty() || data_.size() % dim_ != 0)
      throw Error("feature sequence '" + utterance_id_ + "': needs T >= 1 whole frames");
    for (double v : data_)
      if (!std::isfinite(v)) throw Error("non-finite feature in '" + utterance_id_ + "'");
  }

  friend bool operator==(const FeatureSequence&, const FeatureSequence&) = default;

 private:
  std::string utterance_id_;
  std::size_t dim_ = 0;
  std::vector<double> data_;
};

struct Segment {
  std::string label;
  std::optional<int> start;
  std::optional<int> end;
  friend bool operator==(const Segment&, const Segment&) = default;
};

struct Transcription {
  std::string utterance_id;
  Tier tier = Tier::word;
  std::vector<Segment> entries;

  std::vector<std::string> labels() const {
    std::vector<std::string> out;
    out.reserve(entries.size());
    for (const auto& e : entries) out.push_back(e.label);
    return out;
  }

  bool timed() const {
    return !entries.empty() && std::all_of(entries.begin(), entries.end(), [](const Segment& s) {
      return s.start.has_value() && s.end.has_value();
    });
  }

  static Transcription from_labels(std::string id, Tier tier,
                                   const std::vector<std::string>& labels) {
    Transcription t{std::move(id), tier, {}};
    for (const auto& l : labels) t.entries.push_back({l, std::nullopt, std::nullopt});
    return t;
  }

  friend bool operator==(const Transcription&, const Transcription&) = default;
};

/// Checks timing invariants and, when given, alphabet membership.
inline void validate(const Transcription& tr, const std::set<std::string>* alphabet = nullptr) {
  int last_end = 0;
  for (const auto& s : tr.entries) {
    if (s.label.empty()) throw Error("empty label in '" + tr.utterance_id + "'");
    if (alphabet && !alphabet->count(s.label) && !is_pause(s.label))
      throw Error("label '" + s.label + "' not in " + tier_name(tr.tier) + " alphabet");
    if (s.start.has_value() != s.end.has_value())
      throw Error("segment in '" + tr.utterance_id + "' has only one time");
    if (s.start) {
      if (*s.start < 0 || *s.start >= *s.end)
        throw Error("segment times out of order in '" + tr.utterance_id + "'");
      if (*s.start < last_end)
        throw Error("overlapping segments in '" + tr.utterance_id + "'");
      last_end = *s.end;
    }
  }
}

using Pronunciation = std::vector<std::string>;

/// Word to pronunciations. The first pronunciation added for a word is primary.
class Lexicon {
 public:
  void add(const std::string& word, Pronunciation pron) {
    if (pron.empty()) throw Error("empty pronunciation for word '" + word + "'");
    entries_[word].push_back(std::move(pron));
  }

  bool contains(const std::string& word) const { return entries_.count(word) > 0; }

  const Pronunciation& primary(const std::string& word) const {
    auto it = entries_.find(word);
    if (it == entries_.end()) throw Error("word not in lexicon: '" + word + "'");
    return it->second.front();
  }

  const std::vector<Pronunciation>& pronunciations(const std::string& word) const {
    auto it = entries_.find(word);
    if (it == entries_.end()) throw Error("word not in lexicon: '" + word + "'");
    return it->second;
  }

  std::vector<std::string> words() const {
    std::vector<std::string> out;
    for (const auto& [w, _] : entries_) out.push_back(w);
    return out;
  }

  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }

  /// Every phoneme used by any pronunciation, sorted.
  std::set<std::string> phonemes() const {
    std::set<std::string> out;
    for (const auto& [_, prons] : entries_)
      for (const auto& p : prons) out.insert(p.begin(), p.end());
    return out;
  }

  const std::map<std::string, std::vector<Pronunciation>>& entries() const { return entries_; }

  friend bool operator==(const Lexicon&, const Lexicon&) = default;

 private:
  std::map<std::string, std::vector<Pronunciation>> entries_;
};

struct Utterance {
  FeatureSequence features;
  Transcription words;  // word tier
};

struct Corpus {
  std::vector<Utterance> utterances;
  Lexicon lexicon;

  std::size_t size() const { return utterances.size(); }
  std::size_t dim() const { return utterances.empty() ? 0 : utterances.front().features.dim(); }
};

/// Concatenates the primary pronunciation of each word; times are dropped.
inline Transcription expand_to_phonemes(const Transcription& words, const Lexicon& lexicon) {
  Transcription out{words.utterance_id, Tier::phoneme, {}};
  for (const auto& seg : words.entries) {
    if (is_pause(seg.label)) {
      out.entries.push_back({seg.label, std::nullopt, std::nullopt});
      continue;
    }
    if (!lexicon.contains(seg.label))
      throw Error("word not in lexicon: '" + seg.label + "'");
    for (const auto& ph : lexicon.primary(seg.label))
      out.entries.push_back({ph, std::nullopt, std::nullopt});
  }
  return out;
}

// ---------------------------------------------------------------------------
// File formats.
//
// Feature file: "utt <id> <dim> <T>" followed by T lines of dim numbers. A file
// may hold several blocks.

inline void write_features(std::ostream& os, const FeatureSequence& seq) {
  os << "utt " << seq.utterance_id() << ' ' << seq.dim() << ' ' << seq.num_frames() << '\n';
  for (std::size_t t = 0; t < seq.num_frames(); ++t) {
    auto f = seq.frame(t);
    for (std::size_t d = 0; d < f.size(); ++d) {
      if (d) os << ' ';
      os << format_double(f[d]);
    }
    os << '\n';
  }
}

inline std::vector<FeatureSequence> read_features(std::istream& is, const std::string& where) {
  std::vector<FeatureSequence> out;
  std::string line;
  while (std::getline(is, line)) {
    auto tok = split_ws(line);
    if (tok.empty()) continue;
    if (tok.size() != 4 || tok[0] != "utt")
      throw Error(where + ": expected 'utt <id> <dim> <T>' header");
    const std::string id = tok[1];
    const long dim = parse_long(tok[2]);
    const long frames = parse_long(tok[3]);
    if (dim <= 0 || frames <= 0) throw Error(where + ": bad dimensions for '" + id + "'");
    std::vector<double> data;
    data.reserve(static_cast<std::size_t>(dim * frames));
    for (long t = 0; t < frames; ++t) {
      if (!std::getline(is, line)) throw Error(where + ": truncated utterance '" + id + "'");
      auto vals = split_ws(line);
      if (static_cast<long>(vals.size()) != dim)
        throw Error(where + ": frame " + std::to_string(t) + " of '" + id + "' has " +
                    std::to_string(vals.size()) + " values, expected " + std::to_string(dim));
      for (const auto& v : vals) {
        if (v == "nan" || v == "NaN" || v == "-nan" || v == "inf" || v == "-inf")
          throw Error("non-finite feature in '" + id + "'");
        data.push_back(parse_double(v));
      }
    }
    out.emplace_back(id, static_cast<std::size_t>(dim), std::move(data));
  }
  return out;
}

// Transcription file (master-label style):
//   #!MLF!#            (optional)
//   "<id>"
//   label [start end] [score]
//   .

inline void write_mlf(std::ostream& os, const std::vector<Transcription>& trs) {
  os << "#!MLF!#\n";
  for (const auto& tr : trs) {
    os << '"' << tr.utterance_id << "\"\n";
    for (const auto& s : tr.entries) {
      os << s.label;
      if (s.start) os << ' ' << *s.start << ' ' << *s.end;
      os << '\n';
    }
    os << ".\n";
  }
}

inline std::vector<Transcription> read_mlf(std::istream& is, Tier tier, const std::string& where) {
  std::vector<Transcription> out;
  std::string line;
  Transcription* cur = nullptr;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t == "#!MLF!#") continue;
    if (!cur) {
      if (t.size() < 2 || t.front() != '"' || t.back() != '"')
        throw Error(where + ":" + std::to_string(lineno) + ": expected quoted utterance id");
      out.push_back({t.substr(1, t.size() - 2), tier, {}});
      cur = &out.back();
      continue;
    }
    if (t == ".") {
      validate(*cur);
      cur = nullptr;
      continue;
    }
    auto tok = split_ws(t);
    Segment seg{tok[0], std::nullopt, std::nullopt};
    // Trailing score columns are tolerated and ignored.
    if (tok.size() >= 3) {
      seg.start = static_cast<int>(parse_long(tok[1]));
      seg.end = static_cast<int>(parse_long(tok[2]));
    } else if (tok.size() == 2) {
      throw Error(where + ":" + std::to_string(lineno) + ": label with a single time");
    }
    cur->entries.push_back(std::move(seg));
  }
  if (cur) throw Error(where + ": unterminated block for '" + cur->utterance_id + "'");
  return out;
}

// Lexicon file: "WORD ph1 ph2 ..." per line. Repeated words add variants.

inline void write_lexicon(std::ostream& os, const Lexicon& lex) {
  for (const auto& [w, prons] : lex.entries()) {
    for (const auto& p : prons) {
      os << w;
      for (const auto& ph : p) os << ' ' << ph;
      os << '\n';
    }
  }
}

inline Lexicon read_lexicon(std::istream& is, const std::string& where) {
  Lexicon lex;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    auto tok = split_ws(line);
    if (tok.empty()) continue;
    if (tok.size() < 2)
      throw Error(where + ":" + std::to_string(lineno) + ": word without pronunciation");
    lex.add(tok[0], Pronunciation(tok.begin() + 1, tok.end()));
  }
  return lex;
}

// ---------------------------------------------------------------------------

namespace detail {
inline std::ifstream open_in(const std::filesystem::path& p) {
  std::ifstream is(p);
  if (!is) throw Error("cannot open '" + p.string() + "' for reading");
  return is;
}
inline std::ofstream open_out(const std::filesystem::path& p) {
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream os(p);
  if (!os) throw Error("cannot open '" + p.string() + "' for writing");
  return os;
}
}  // namespace detail

inline std::vector<Transcription> load_mlf(const std::filesystem::path& p, Tier tier) {
  auto is = detail::open_in(p);
  return read_mlf(is, tier, p.string());
}

inline void save_mlf(const std::filesystem::path& p, const std::vector<Transcription>& trs) {
  auto os = detail::open_out(p);
  write_mlf(os, trs);
}

inline Lexicon load_lexicon(const std::filesystem::path& p) {
  auto is = detail::open_in(p);
  return read_lexicon(is, p.string());
}

/// Reads every "*.feat" file under a directory (sorted by name), or one file.
inline std::vector<FeatureSequence> load_features(const std::filesystem::path& p) {
  namespace fs = std::filesystem;
  std::vector<fs::path> files;
  if (fs::is_directory(p)) {
    for (const auto& e : fs::directory_iterator(p))
      if (e.is_regular_file() && e.path().extension() == ".feat") files.push_back(e.path());
    std::sort(files.begin(), files.end());
  } else {
    files.push_back(p);
  }
  std::vector<FeatureSequence> out;
  for (const auto& f : files) {
    auto is = detail::open_in(f);
    auto seqs = read_features(is, f.string());
    for (auto& s : seqs) out.push_back(std::move(s));
  }
  return out;
}

/// Pairs features with word transcriptions (transcription file order is kept).
inline Corpus load_corpus(const std::filesystem::path& features_path,
                          const std::filesystem::path& transcription_path,
                          const std::filesystem::path& lexicon_path) {
  Corpus corpus;
  corpus.lexicon = load_lexicon(lexicon_path);
  auto feats = load_features(features_path);
  auto trs = load_mlf(transcription_path, Tier::word);
  std::map<std::string, std::size_t> by_id;
  for (std::size_t i = 0; i < feats.size(); ++i) {
    if (!by_id.emplace(feats[i].utterance_id(), i).second)
      throw Error("duplicate feature block for '" + feats[i].utterance_id() + "'");
  }
  if (feats.size() != trs.size())
    throw Error("missing utterance pairing: " + std::to_string(feats.size()) +
                " feature blocks vs " + std::to_string(trs.size()) + " transcriptions");
  for (auto& tr : trs) {
    auto it = by_id.find(tr.utterance_id);
    if (it == by_id.end())
      throw Error("missing utterance pairing: no features for '" + tr.utterance_id + "'");
    for (const auto& s : tr.entries)
      if (!is_pause(s.label) && !corpus.lexicon.contains(s.label))
        throw Error("word not in lexicon: '" + s.label + "'");
    corpus.utterances.push_back({std::move(feats[it->second]), std::move(tr)});
  }
  const std::size_t dim = corpus.dim();
  for (const auto& u : corpus.utterances)
    if (u.features.dim() != dim)
      throw Error("dimension mismatch across utterances at '" + u.features.utterance_id() + "'");
  return corpus;
}

/// Writes features/<id>.feat, words.mlf and lexicon.txt under dir.
inline void save_corpus(const std::filesystem::path& dir, const Corpus& corpus) {
  std::filesystem::create_directories(dir / "features");
  std::vector<Transcription> trs;
  for (const auto& u : corpus.utterances) {
    auto os = detail::open_out(dir / "features" / (u.features.utterance_id() + ".feat"));
    write_features(os, u.features);
    trs.push_back(u.words);
  }
  save_mlf(dir / "words.mlf", trs);
  auto os = detail::open_out(dir / "lexicon.txt");
  write_lexicon(os, corpus.lexicon);
}

}  // namespace wlt
