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

#include <filesystem>
#include <functional>
#include <map>
#include <numeric>
#include <string>
#include <unordered_map>
#include <vector>

#include "wlt/corpus.hpp"

namespace wlt {

/// Surjective phoneme -> viseme assignment.
///
/// Phonemes keep the order they were declared in; that order defines
/// "smallest member". Classes are stored in ascending order of their
/// smallest member, so class index 0 always holds the first phoneme.
class VisemeMap {
 public:
  VisemeMap() = default;

  /// Builds a map from (phoneme, viseme symbol) pairs in phoneme order.
  static VisemeMap from_assignment(std::string id,
                                   const std::vector<std::pair<std::string, std::string>>& pairs) {
    std::vector<std::string> phonemes;
    std::vector<std::string> names;
    std::vector<int> cls;
    std::map<std::string, int> seen;
    for (const auto& [ph, vis] : pairs) {
      auto [it, fresh] = seen.emplace(vis, static_cast<int>(names.size()));
      if (fresh) names.push_back(vis);
      phonemes.push_back(ph);
      cls.push_back(it->second);
    }
    return VisemeMap(std::move(id), std::move(phonemes), cls, std::move(names));
  }

  /// Builds a map from class indices; visemes are named v1..vK canonically.
  static VisemeMap from_classes(std::string id, std::vector<std::string> phonemes,
                                const std::vector<int>& class_of) {
    return VisemeMap(std::move(id), std::move(phonemes), class_of, {});
  }

  /// One class per phoneme.
  static VisemeMap identity(std::string id, std::vector<std::string> phonemes) {
    std::vector<int> cls(phonemes.size());
    std::iota(cls.begin(), cls.end(), 0);
    return from_classes(std::move(id), std::move(phonemes), cls);
  }

  const std::string& id() const { return id_; }
  void set_id(std::string id) { id_ = std::move(id); }
  std::size_t size() const { return names_.size(); }
  const std::vector<std::string>& phonemes() const { return phonemes_; }
  const std::vector<std::string>& visemes() const { return names_; }
  const std::vector<int>& class_indices() const { return class_of_; }

  bool has_phoneme(const std::string& ph) const { return index_.count(ph) > 0; }

  std::size_t phoneme_index(const std::string& ph) const {
    auto it = index_.find(ph);
    if (it == index_.end()) throw Error("phoneme missing from map: '" + ph + "'");
    return it->second;
  }

  int class_of(const std::string& ph) const { return class_of_[phoneme_index(ph)]; }

  const std::string& viseme_of(const std::string& ph) const {
    return names_[static_cast<std::size_t>(class_of(ph))];
  }

  int viseme_index(const std::string& vis) const {
    for (std::size_t i = 0; i < names_.size(); ++i)
      if (names_[i] == vis) return static_cast<int>(i);
    throw Error("viseme not in map: '" + vis + "'");
  }

  std::vector<std::string> members(int cls) const {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < phonemes_.size(); ++i)
      if (class_of_[i] == cls) out.push_back(phonemes_[i]);
    return out;
  }

  /// True when every class of `coarser` is a union of classes of this map.
  bool refines(const VisemeMap& coarser) const {
    if (coarser.phonemes_ != phonemes_) return false;
    std::vector<int> image(names_.size(), -1);
    for (std::size_t i = 0; i < phonemes_.size(); ++i) {
      int& img = image[static_cast<std::size_t>(class_of_[i])];
      if (img == -1) img = coarser.class_of_[i];
      if (img != coarser.class_of_[i]) return false;
    }
    return true;
  }

  /// Partition equality, ignoring symbol names.
  bool same_partition(const VisemeMap& other) const {
    return refines(other) && other.refines(*this);
  }

  friend bool operator==(const VisemeMap& a, const VisemeMap& b) {
    return a.phonemes_ == b.phonemes_ && a.class_of_ == b.class_of_ && a.names_ == b.names_;
  }

 private:
  VisemeMap(std::string id, std::vector<std::string> phonemes, const std::vector<int>& class_of,
            std::vector<std::string> names)
      : id_(std::move(id)), phonemes_(std::move(phonemes)) {
    if (phonemes_.size() != class_of.size()) throw Error("viseme map: size mismatch");
    for (std::size_t i = 0; i < phonemes_.size(); ++i) {
      if (is_pause(phonemes_[i])) throw Error("viseme map: sil/sp cannot be mapped");
      if (!index_.emplace(phonemes_[i], i).second)
        throw Error("viseme map: duplicate phoneme '" + phonemes_[i] + "'");
    }
    // Renumber classes by first appearance in phoneme order.
    std::map<int, int> renumber;
    class_of_.resize(class_of.size());
    std::vector<std::string> ordered_names;
    for (std::size_t i = 0; i < class_of.size(); ++i) {
      auto [it, fresh] = renumber.emplace(class_of[i], static_cast<int>(renumber.size()));
      if (fresh && !names.empty()) {
        const auto src = static_cast<std::size_t>(class_of[i]);
        if (src >= names.size()) throw Error("viseme map: class index out of range");
        ordered_names.push_back(names[src]);
      }
      class_of_[i] = it->second;
    }
    if (names.empty()) {
      for (std::size_t k = 0; k < renumber.size(); ++k)
        ordered_names.push_back("v" + std::to_string(k + 1));
    }
    names_ = std::move(ordered_names);
    for (std::size_t i = 0; i < names_.size(); ++i)
      for (std::size_t j = i + 1; j < names_.size(); ++j)
        if (names_[i] == names_[j]) throw Error("viseme map: duplicate viseme symbol");
    if (names_.size() < 2 || names_.size() > phonemes_.size())
      throw Error("viseme map: need 2 <= V <= |phonemes|, got V = " +
                  std::to_string(names_.size()));
  }

  std::string id_;
  std::vector<std::string> phonemes_;
  std::vector<int> class_of_;
  std::vector<std::string> names_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Square count table; rows are reference classes, columns hypotheses.
/// Deletions and insertions are tallied beside the table.
struct ConfusionMatrix {
  Tier tier = Tier::viseme;
  std::vector<std::string> labels;
  std::vector<std::vector<long>> counts;
  std::vector<long> deletions;
  std::vector<long> insertions;

  static ConfusionMatrix zeros(Tier tier, std::vector<std::string> labels) {
    ConfusionMatrix m;
    m.tier = tier;
    const std::size_t n = labels.size();
    m.labels = std::move(labels);
    m.counts.assign(n, std::vector<long>(n, 0));
    m.deletions.assign(n, 0);
    m.insertions.assign(n, 0);
    return m;
  }

  int index_of(const std::string& label) const {
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (labels[i] == label) return static_cast<int>(i);
    return -1;
  }

  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;
};

/// Label-for-label substitution; sil/sp pass through, times are kept.
inline Transcription translate(const Transcription& phonemes, const VisemeMap& map) {
  Transcription out{phonemes.utterance_id, Tier::viseme, {}};
  out.entries.reserve(phonemes.entries.size());
  for (const auto& s : phonemes.entries) {
    Segment seg = s;
    if (!is_pause(s.label)) seg.label = map.viseme_of(s.label);
    out.entries.push_back(std::move(seg));
  }
  return out;
}

inline std::vector<std::string> translate_labels(const std::vector<std::string>& phonemes,
                                                 const VisemeMap& map) {
  std::vector<std::string> out;
  out.reserve(phonemes.size());
  for (const auto& p : phonemes) out.push_back(is_pause(p) ? p : map.viseme_of(p));
  return out;
}

/// Unions the pair of classes with the largest symmetric confusion.
/// Ties go to the smallest (i, j) in class order.
inline VisemeMap merge_step(const VisemeMap& map, const ConfusionMatrix& confusion) {
  const std::size_t v = map.size();
  if (v < 3) throw Error("merge_step: map must have at least 3 classes");
  if (confusion.labels != map.visemes())
    throw Error("merge_step: confusion alphabet does not match the map's visemes");
  std::size_t bi = 0, bj = 1;
  long best = -1;
  for (std::size_t i = 0; i < v; ++i) {
    for (std::size_t j = i + 1; j < v; ++j) {
      const long c = confusion.counts[i][j] + confusion.counts[j][i];
      if (c > best) {
        best = c;
        bi = i;
        bj = j;
      }
    }
  }
  std::vector<int> cls = map.class_indices();
  for (int& c : cls)
    if (c == static_cast<int>(bj)) c = static_cast<int>(bi);
  return VisemeMap::from_classes(map.id(), map.phonemes(), cls);
}

/// Produces maps of every size from the initial size down to 2. `train_fn`
/// returns a viseme-tier confusion matrix for the map it is given.
inline std::vector<VisemeMap> derive_family(
    const VisemeMap& initial, const std::function<ConfusionMatrix(const VisemeMap&)>& train_fn) {
  std::vector<VisemeMap> family{initial};
  while (family.back().size() > 2) {
    const VisemeMap& cur = family.back();
    ConfusionMatrix conf = train_fn(cur);
    family.push_back(merge_step(cur, conf));
  }
  for (auto& m : family) m.set_id(initial.id() + "_" + std::to_string(m.size()));
  return family;
}

/// Groups of two or more words whose primary pronunciations translate to the
/// same viseme string. Groups and their members are sorted.
inline std::vector<std::vector<std::string>> find_homophones(const Lexicon& lexicon,
                                                             const VisemeMap& map) {
  std::map<std::vector<std::string>, std::vector<std::string>> buckets;
  for (const auto& [word, prons] : lexicon.entries())
    buckets[translate_labels(prons.front(), map)].push_back(word);
  std::vector<std::vector<std::string>> groups;
  for (auto& [_, words] : buckets)
    if (words.size() >= 2) groups.push_back(std::move(words));
  std::sort(groups.begin(), groups.end());
  return groups;
}

// ---------------------------------------------------------------------------
// Map file: "phoneme<TAB>viseme" per line, in phoneme order.

inline void write_map(std::ostream& os, const VisemeMap& map) {
  for (const auto& ph : map.phonemes()) os << ph << '\t' << map.viseme_of(ph) << '\n';
}

inline VisemeMap read_map(std::istream& is, std::string id, const std::string& where) {
  std::vector<std::pair<std::string, std::string>> pairs;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    auto tok = split_ws(line);
    if (tok.empty()) continue;
    if (tok.size() != 2)
      throw Error(where + ":" + std::to_string(lineno) + ": expected 'phoneme<TAB>viseme'");
    pairs.emplace_back(tok[0], tok[1]);
  }
  return VisemeMap::from_assignment(std::move(id), pairs);
}

inline void save_map(const std::filesystem::path& p, const VisemeMap& map) {
  auto os = detail::open_out(p);
  write_map(os, map);
}

inline VisemeMap load_map(const std::filesystem::path& p) {
  auto is = detail::open_in(p);
  return read_map(is, p.stem().string(), p.string());
}

/// Writes map_<V>.txt per member and index.txt listing "<V> <file>" lines.
inline void save_family(const std::filesystem::path& dir, const std::vector<VisemeMap>& family) {
  std::filesystem::create_directories(dir);
  auto index = detail::open_out(dir / "index.txt");
  for (const auto& m : family) {
    const std::string name = "map_" + std::to_string(m.size()) + ".txt";
    save_map(dir / name, m);
    index << m.size() << ' ' << name << '\n';
  }
}

inline std::vector<VisemeMap> load_family(const std::filesystem::path& index_path) {
  auto is = detail::open_in(index_path);
  std::vector<VisemeMap> family;
  std::string line;
  while (std::getline(is, line)) {
    auto tok = split_ws(line);
    if (tok.empty()) continue;
    if (tok.size() != 2) throw Error(index_path.string() + ": expected '<size> <file>'");
    auto m = load_map(index_path.parent_path() / tok[1]);
    if (static_cast<long>(m.size()) != parse_long(tok[0]))
      throw Error(index_path.string() + ": size mismatch for " + tok[1]);
    family.push_back(std::move(m));
  }
  return family;
}

}  // namespace wlt
