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
#include <map>
#include <numeric>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "wlt/common.hpp"
#include "wlt/corpus.hpp"

namespace wlt {

// ---------------------------------------------------------------------------
// Parameters.

struct MixtureComponent {
  double weight = 1.0;
  std::vector<double> mean;
  std::vector<double> var;
  friend bool operator==(const MixtureComponent&, const MixtureComponent&) = default;
};

/// Diagonal-covariance Gaussian mixture emitting state.
struct GmmState {
  std::vector<MixtureComponent> mix;

  std::size_t dim() const { return mix.empty() ? 0 : mix.front().mean.size(); }

  void validate(std::span<const double> var_floor) const {
    if (mix.empty()) throw Error("GMM state with no mixture components");
    double total = 0.0;
    for (const auto& c : mix) {
      if (!(c.weight >= 0.0) || !std::isfinite(c.weight)) throw Error("bad mixture weight");
      total += c.weight;
      if (c.mean.size() != dim() || c.var.size() != dim()) throw Error("GMM dimension mismatch");
      for (std::size_t d = 0; d < dim(); ++d) {
        if (!std::isfinite(c.mean[d]) || !std::isfinite(c.var[d]))
          throw Error("non-finite GMM parameter");
        const double floor = var_floor.empty() ? 0.0 : var_floor[d];
        if (!(c.var[d] > 0.0) || c.var[d] < floor) throw Error("variance below floor");
      }
    }
    if (std::abs(total - 1.0) > 1e-9) throw Error("mixture weights do not sum to 1");
  }

  friend bool operator==(const GmmState&, const GmmState&) = default;
};

/// Precomputed log-density evaluator for one GmmState.
class GmmScorer {
 public:
  GmmScorer() = default;
  explicit GmmScorer(const GmmState& s) {
    const std::size_t dim = s.dim();
    for (const auto& c : s.mix) {
      Comp k;
      k.mean = c.mean;
      k.inv_var.resize(dim);
      double log_det = 0.0;
      for (std::size_t d = 0; d < dim; ++d) {
        k.inv_var[d] = 1.0 / c.var[d];
        log_det += std::log(c.var[d]);
      }
      k.gconst = safe_log(c.weight) - 0.5 * (static_cast<double>(dim) * kLog2Pi + log_det);
      comps_.push_back(std::move(k));
    }
  }

  std::size_t num_components() const { return comps_.size(); }

  /// Weighted log-density of component m (log w + log N).
  double component(std::size_t m, std::span<const double> x) const {
    const Comp& k = comps_[m];
    if (k.gconst == kLogZero) return kLogZero;
    double q = 0.0;
    for (std::size_t d = 0; d < x.size(); ++d) {
      const double diff = x[d] - k.mean[d];
      q += diff * diff * k.inv_var[d];
    }
    return k.gconst - 0.5 * q;
  }

  double log_likelihood(std::span<const double> x) const {
    double acc = kLogZero;
    for (std::size_t m = 0; m < comps_.size(); ++m) acc = log_add(acc, component(m, x));
    return acc;
  }

 private:
  struct Comp {
    std::vector<double> mean;
    std::vector<double> inv_var;
    double gconst = 0.0;
  };
  std::vector<Comp> comps_;
};

using Matrix = std::vector<std::vector<double>>;

/// Left-to-right HMM. Row/column 0 is the non-emitting entry and S+1 the
/// non-emitting exit; `states` index the owning set's parameter pool.
struct HmmModel {
  std::string label;
  std::vector<std::size_t> states;
  Matrix trans;

  std::size_t num_states() const { return states.size(); }
  std::size_t exit_index() const { return states.size() + 1; }
  bool is_tee() const { return trans[0][exit_index()] > 0.0; }
};

/// Topology used by flat start: entry -> 1, self 0.6 / next 0.4.
inline Matrix left_to_right_transitions(std::size_t num_states) {
  const std::size_t n = num_states + 2;
  Matrix a(n, std::vector<double>(n, 0.0));
  a[0][1] = 1.0;
  for (std::size_t i = 1; i <= num_states; ++i) {
    a[i][i] = 0.6;
    a[i][i + 1] = 0.4;
  }
  return a;
}

/// Short-pause topology: one emitting state plus an entry->exit skip.
inline Matrix tee_transitions() {
  Matrix a(3, std::vector<double>(3, 0.0));
  a[0][1] = 0.7;
  a[0][2] = 0.3;
  a[1][1] = 0.6;
  a[1][2] = 0.4;
  return a;
}

inline void validate_transitions(const HmmModel& m) {
  const std::size_t n = m.num_states() + 2;
  if (m.trans.size() != n) throw Error("model '" + m.label + "': transition matrix size");
  for (std::size_t i = 0; i < n; ++i) {
    if (m.trans[i].size() != n) throw Error("model '" + m.label + "': transition matrix size");
    double row = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double a = m.trans[i][j];
      if (!(a >= 0.0) || !std::isfinite(a)) throw Error("model '" + m.label + "': bad transition");
      if (a > 0.0) {
        const bool self_or_forward = j >= i && j <= i + 2;
        const bool entry_to_exit = i == 0 && j == n - 1;
        if (i == n - 1 || !(self_or_forward || entry_to_exit) || (i == 0 && j == 0) ||
            (entry_to_exit && m.label != kSp))
          throw Error("model '" + m.label + "': transition " + std::to_string(i) + "->" +
                      std::to_string(j) + " breaks left-to-right topology");
      }
      row += a;
    }
    if (i + 1 < n && std::abs(row - 1.0) > 1e-9)
      throw Error("model '" + m.label + "': transition row " + std::to_string(i) +
                  " does not sum to 1");
  }
}

/// Minimum number of frames any path through the model consumes.
inline std::size_t min_frames(const HmmModel& m) {
  const std::size_t n = m.num_states() + 2;
  constexpr std::size_t kInf = std::numeric_limits<std::size_t>::max() / 2;
  std::vector<std::size_t> dist(n, kInf);
  dist[0] = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (dist[i] == kInf) continue;
    for (std::size_t j = i + 1; j < n; ++j)
      if (m.trans[i][j] > 0.0) dist[j] = std::min(dist[j], dist[i] + (j + 1 < n ? 1 : 0));
  }
  return dist[n - 1];
}

/// A family of HMMs sharing one parameter pool. Tied states reference the
/// same pool entry, so they are parameter-identical by construction.
class HmmSet {
 public:
  HmmSet() = default;
  HmmSet(std::size_t dim, std::vector<double> var_floor)
      : dim_(dim), var_floor_(std::move(var_floor)) {}

  std::size_t dim() const { return dim_; }
  const std::vector<double>& var_floor() const { return var_floor_; }
  void set_var_floor(std::vector<double> f) { var_floor_ = std::move(f); }

  bool has(const std::string& label) const { return models_.count(label) > 0; }
  const HmmModel& model(const std::string& label) const {
    auto it = models_.find(label);
    if (it == models_.end()) throw Error("no model for label '" + label + "'");
    return it->second;
  }
  HmmModel& model(const std::string& label) {
    auto it = models_.find(label);
    if (it == models_.end()) throw Error("no model for label '" + label + "'");
    return it->second;
  }
  const std::map<std::string, HmmModel>& models() const { return models_; }
  std::vector<std::string> labels() const {
    std::vector<std::string> out;
    for (const auto& [l, _] : models_) out.push_back(l);
    return out;
  }

  const std::vector<GmmState>& pool() const { return pool_; }
  std::vector<GmmState>& pool() { return pool_; }

  const GmmState& state(const std::string& label, std::size_t i) const {
    return pool_[model(label).states.at(i)];
  }
  GmmState& state(const std::string& label, std::size_t i) {
    return pool_[model(label).states.at(i)];
  }

  std::size_t add_state(GmmState s) {
    pool_.push_back(std::move(s));
    return pool_.size() - 1;
  }

  /// Adds a model whose states are fresh pool entries.
  void add_model(const std::string& label, std::vector<GmmState> states, Matrix trans) {
    if (has(label)) throw Error("duplicate model '" + label + "'");
    HmmModel m{label, {}, std::move(trans)};
    for (auto& s : states) m.states.push_back(add_state(std::move(s)));
    validate_transitions(m);
    models_.emplace(label, std::move(m));
  }

  /// Adds a model referencing existing pool entries (used for tying).
  void add_model_raw(HmmModel m) {
    if (has(m.label)) throw Error("duplicate model '" + m.label + "'");
    for (auto id : m.states)
      if (id >= pool_.size()) throw Error("model '" + m.label + "' references missing state");
    validate_transitions(m);
    models_.emplace(m.label, std::move(m));
  }

  void remove_model(const std::string& label) { models_.erase(label); }

  /// Deep copy of `src` under a new label: no pool entry is shared.
  void clone_model(const HmmSet& from, const std::string& src, const std::string& label) {
    const HmmModel& m = from.model(src);
    std::vector<GmmState> states;
    for (auto id : m.states) states.push_back(from.pool_[id]);
    add_model(label, std::move(states), m.trans);
  }

  /// Groups of (label, 0-based state index) that share one pool entry.
  std::vector<std::vector<std::pair<std::string, std::size_t>>> tie_groups() const {
    std::map<std::size_t, std::vector<std::pair<std::string, std::size_t>>> users;
    for (const auto& [l, m] : models_)
      for (std::size_t i = 0; i < m.states.size(); ++i) users[m.states[i]].emplace_back(l, i);
    std::vector<std::vector<std::pair<std::string, std::size_t>>> out;
    for (auto& [_, u] : users)
      if (u.size() > 1) out.push_back(std::move(u));
    return out;
  }

  bool tied(const std::string& a, std::size_t ia, const std::string& b, std::size_t ib) const {
    return model(a).states.at(ia) == model(b).states.at(ib);
  }

  /// Drops pool entries no model references; renumbers in model order.
  void compact() {
    std::vector<std::size_t> remap(pool_.size(), SIZE_MAX);
    std::vector<GmmState> fresh;
    for (auto& [_, m] : models_) {
      for (auto& id : m.states) {
        if (remap[id] == SIZE_MAX) {
          remap[id] = fresh.size();
          fresh.push_back(std::move(pool_[id]));
        }
        id = remap[id];
      }
    }
    pool_ = std::move(fresh);
  }

  void validate() const {
    for (const auto& [l, m] : models_) {
      if (l != m.label) throw Error("model key/label mismatch");
      validate_transitions(m);
      for (auto id : m.states) {
        if (id >= pool_.size()) throw Error("dangling state reference");
        if (pool_[id].dim() != dim_) throw Error("model '" + l + "': dimension mismatch");
        pool_[id].validate(var_floor_);
      }
    }
  }

 private:
  std::size_t dim_ = 0;
  std::vector<double> var_floor_;
  std::vector<GmmState> pool_;
  std::map<std::string, HmmModel> models_;
};

/// Parameter equality by label, including tie structure; ignores pool order.
inline bool equivalent(const HmmSet& a, const HmmSet& b) {
  if (a.dim() != b.dim() || a.var_floor() != b.var_floor()) return false;
  if (a.labels() != b.labels()) return false;
  for (const auto& [l, ma] : a.models()) {
    const HmmModel& mb = b.model(l);
    if (ma.trans != mb.trans || ma.states.size() != mb.states.size()) return false;
    for (std::size_t i = 0; i < ma.states.size(); ++i)
      if (!(a.pool()[ma.states[i]] == b.pool()[mb.states[i]])) return false;
  }
  return a.tie_groups() == b.tie_groups();
}

// ---------------------------------------------------------------------------
// Training data.

/// An utterance prepared for one tier: its frames and a label sequence.
struct TrainItem {
  const FeatureSequence* features = nullptr;
  Transcription transcription;
};

struct GlobalStats {
  std::vector<double> mean;
  std::vector<double> var;
  std::size_t frames = 0;
};

/// Two-pass global mean and (population) variance.
inline GlobalStats global_stats(std::span<const TrainItem> items) {
  GlobalStats g;
  if (items.empty()) throw Error("flat start: empty corpus");
  const std::size_t dim = items.front().features->dim();
  g.mean.assign(dim, 0.0);
  g.var.assign(dim, 0.0);
  for (const auto& it : items) {
    if (it.features->dim() != dim) throw Error("flat start: dimension mismatch");
    for (std::size_t t = 0; t < it.features->num_frames(); ++t) {
      auto f = it.features->frame(t);
      for (std::size_t d = 0; d < dim; ++d) g.mean[d] += f[d];
    }
    g.frames += it.features->num_frames();
  }
  if (g.frames == 0) throw Error("flat start: empty corpus");
  for (auto& m : g.mean) m /= static_cast<double>(g.frames);
  for (const auto& it : items) {
    for (std::size_t t = 0; t < it.features->num_frames(); ++t) {
      auto f = it.features->frame(t);
      for (std::size_t d = 0; d < dim; ++d) {
        const double c = f[d] - g.mean[d];
        g.var[d] += c * c;
      }
    }
  }
  for (auto& v : g.var) v /= static_cast<double>(g.frames);
  return g;
}

struct FlatStartOptions {
  std::size_t mixtures = 5;
  std::size_t states = 3;
  /// Per-label emitting-state counts overriding `states`.
  std::map<std::string, std::size_t> state_overrides;
  double floor_scale = 1e-4;
};

/// Every state gets the global mean/variance; component k (1-based) of M has
/// its mean shifted by (k - (M+1)/2) * 0.2 * stddev in every coordinate.
inline HmmSet flat_start_init(std::span<const TrainItem> items,
                              const std::vector<std::string>& labels,
                              const FlatStartOptions& opt = {}) {
  if (labels.empty()) throw Error("flat start: no labels");
  if (opt.mixtures == 0 || opt.states == 0) throw Error("flat start: M and S must be positive");
  GlobalStats g = global_stats(items);
  const std::size_t dim = g.mean.size();
  for (std::size_t d = 0; d < dim; ++d)
    if (!(g.var[d] > 0.0))
      throw Error("flat start: zero-variance coordinate " + std::to_string(d));

  std::vector<double> floor(dim);
  for (std::size_t d = 0; d < dim; ++d) floor[d] = opt.floor_scale * g.var[d];

  GmmState proto;
  const double m_count = static_cast<double>(opt.mixtures);
  for (std::size_t k = 1; k <= opt.mixtures; ++k) {
    MixtureComponent c;
    c.weight = 1.0 / m_count;
    c.mean = g.mean;
    c.var = g.var;
    const double shift = (static_cast<double>(k) - (m_count + 1.0) / 2.0) * 0.2;
    if (shift != 0.0)
      for (std::size_t d = 0; d < dim; ++d) c.mean[d] += shift * std::sqrt(g.var[d]);
    proto.mix.push_back(std::move(c));
  }

  HmmSet set(dim, floor);
  for (const auto& l : labels) {
    auto it = opt.state_overrides.find(l);
    const std::size_t s = it != opt.state_overrides.end() ? it->second : opt.states;
    set.add_model(l, std::vector<GmmState>(s, proto), left_to_right_transitions(s));
  }
  return set;
}

// ---------------------------------------------------------------------------
// Composite models and emission caches.

/// A concatenation of models for one label sequence with log transitions.
struct Composite {
  struct Unit {
    const HmmModel* model = nullptr;
    std::size_t first = 0;  // first flat emitting-state index
    std::size_t n = 0;      // emitting states
    Matrix log_a;
    bool tee = false;
  };
  std::vector<Unit> units;
  std::vector<std::size_t> pool_of;  // flat state -> pool id
  std::size_t min_frames = 0;

  std::size_t num_states() const { return pool_of.size(); }
};

inline Composite build_composite(const HmmSet& set, const std::vector<std::string>& labels) {
  Composite c;
  for (const auto& l : labels) {
    const HmmModel& m = set.model(l);
    Composite::Unit u;
    u.model = &m;
    u.first = c.pool_of.size();
    u.n = m.num_states();
    u.log_a.assign(u.n + 2, std::vector<double>(u.n + 2, kLogZero));
    for (std::size_t i = 0; i < u.n + 2; ++i)
      for (std::size_t j = 0; j < u.n + 2; ++j) u.log_a[i][j] = safe_log(m.trans[i][j]);
    u.tee = m.is_tee();
    for (auto id : m.states) c.pool_of.push_back(id);
    c.min_frames += min_frames(m);
    c.units.push_back(std::move(u));
  }
  return c;
}

/// Per-frame log-likelihoods for a subset of pool states. Component terms are
/// kept when requested (training needs them).
class EmissionCache {
 public:
  EmissionCache(const HmmSet& set, std::span<const std::size_t> pool_ids,
                const FeatureSequence& x, bool keep_components) {
    local_.assign(set.pool().size(), SIZE_MAX);
    for (auto id : pool_ids) {
      if (local_[id] == SIZE_MAX) {
        local_[id] = ids_.size();
        ids_.push_back(id);
      }
    }
    frames_ = x.num_frames();
    const std::size_t ns = ids_.size();
    loglik_.assign(frames_ * ns, kLogZero);
    if (keep_components) {
      mixes_ = set.pool()[ids_.empty() ? 0 : ids_.front()].mix.size();
      for (auto id : ids_) mixes_ = std::max(mixes_, set.pool()[id].mix.size());
      comp_.assign(frames_ * ns * mixes_, kLogZero);
    }
    for (std::size_t s = 0; s < ns; ++s) {
      GmmScorer scorer(set.pool()[ids_[s]]);
      for (std::size_t t = 0; t < frames_; ++t) {
        auto f = x.frame(t);
        double acc = kLogZero;
        for (std::size_t m = 0; m < scorer.num_components(); ++m) {
          const double v = scorer.component(m, f);
          if (keep_components) comp_[(t * ns + s) * mixes_ + m] = v;
          acc = log_add(acc, v);
        }
        loglik_[t * ns + s] = acc;
      }
    }
  }

  double operator()(std::size_t t, std::size_t pool_id) const {
    return loglik_[t * ids_.size() + local_[pool_id]];
  }
  double component(std::size_t t, std::size_t pool_id, std::size_t m) const {
    return comp_[(t * ids_.size() + local_[pool_id]) * mixes_ + m];
  }

 private:
  std::vector<std::size_t> local_;
  std::vector<std::size_t> ids_;
  std::vector<double> loglik_;
  std::vector<double> comp_;
  std::size_t frames_ = 0;
  std::size_t mixes_ = 0;
};

// ---------------------------------------------------------------------------
// Accumulators.

struct StateAccum {
  std::vector<double> occ;                // per component
  std::vector<std::vector<double>> sx;    // per component, per dim
  std::vector<std::vector<double>> sx2;

  void resize(std::size_t mixes, std::size_t dim) {
    occ.assign(mixes, 0.0);
    sx.assign(mixes, std::vector<double>(dim, 0.0));
    sx2.assign(mixes, std::vector<double>(dim, 0.0));
  }
  double total() const { return std::accumulate(occ.begin(), occ.end(), 0.0); }
};

/// Sufficient statistics for one EM update. Addition is elementwise, so the
/// sum over utterances is the same whichever worker accumulated them as long
/// as partial sums are combined in a fixed order.
struct Accumulators {
  std::vector<StateAccum> states;       // indexed by pool id
  std::map<std::string, Matrix> trans;  // expected transition counts
  double loglik = 0.0;
  std::size_t frames = 0;
  std::size_t utterances = 0;

  static Accumulators zeros(const HmmSet& set) {
    Accumulators a;
    a.states.resize(set.pool().size());
    for (std::size_t i = 0; i < set.pool().size(); ++i)
      a.states[i].resize(set.pool()[i].mix.size(), set.dim());
    for (const auto& [l, m] : set.models())
      a.trans[l] = Matrix(m.num_states() + 2, std::vector<double>(m.num_states() + 2, 0.0));
    return a;
  }

  void add(const Accumulators& o) {
    for (std::size_t i = 0; i < states.size(); ++i) {
      auto& s = states[i];
      const auto& r = o.states[i];
      for (std::size_t m = 0; m < s.occ.size(); ++m) {
        s.occ[m] += r.occ[m];
        for (std::size_t d = 0; d < s.sx[m].size(); ++d) {
          s.sx[m][d] += r.sx[m][d];
          s.sx2[m][d] += r.sx2[m][d];
        }
      }
    }
    for (auto& [l, mat] : trans) {
      const auto& om = o.trans.at(l);
      for (std::size_t i = 0; i < mat.size(); ++i)
        for (std::size_t j = 0; j < mat[i].size(); ++j) mat[i][j] += om[i][j];
    }
    loglik += o.loglik;
    frames += o.frames;
    utterances += o.utterances;
  }
};

struct ForwardBackwardResult {
  double loglik = kLogZero;
  std::size_t num_frames = 0;
  std::size_t num_states = 0;
  std::vector<double> posteriors;  // T x N state occupation probabilities

  double posterior(std::size_t t, std::size_t n) const { return posteriors[t * num_states + n]; }
};

/// Baum-Welch forward/backward over a composite. Non-emitting entry/exit
/// states are handled through per-unit entry flows, so tee models work.
/// When `acc` is non-null the utterance's statistics are added to it.
inline ForwardBackwardResult forward_backward(const HmmSet& set, const Composite& comp,
                                              const FeatureSequence& x,
                                              Accumulators* acc = nullptr) {
  const std::size_t T = x.num_frames();
  const std::size_t N = comp.num_states();
  const std::size_t K = comp.units.size();
  if (K == 0) throw Error("forward_backward: empty composite");
  if (T < comp.min_frames)
    throw Error("utterance '" + x.utterance_id() + "' (" + std::to_string(T) +
                " frames) is shorter than the minimum path length " +
                std::to_string(comp.min_frames));

  EmissionCache b(set, comp.pool_of, x, acc != nullptr);
  auto B = [&](std::size_t t, std::size_t n) { return b(t, comp.pool_of[n]); };

  // entry[k][t]: log prob of being at unit k's entry having emitted frames < t.
  std::vector<std::vector<double>> entry(K + 1, std::vector<double>(T + 1, kLogZero));
  std::vector<double> alpha(T * N, kLogZero);
  auto A = [&](std::size_t t, std::size_t n) -> double& { return alpha[t * N + n]; };

  for (std::size_t t = 0; t < T; ++t) {
    // Entry flows at time t, left to right (tee units pass flow along).
    for (std::size_t k = 0; k <= K; ++k) {
      double e = kLogZero;
      if (k == 0) {
        e = t == 0 ? 0.0 : kLogZero;
      } else {
        const auto& p = comp.units[k - 1];
        if (t > 0)
          for (std::size_t i = 1; i <= p.n; ++i)
            e = log_add(e, A(t - 1, p.first + i - 1) + p.log_a[i][p.n + 1]);
        e = log_add(e, entry[k - 1][t] + p.log_a[0][p.n + 1]);
      }
      entry[k][t] = e;
    }
    for (std::size_t k = 0; k < K; ++k) {
      const auto& u = comp.units[k];
      for (std::size_t j = 1; j <= u.n; ++j) {
        double v = entry[k][t] + u.log_a[0][j];
        if (t > 0)
          for (std::size_t i = 1; i <= j; ++i)
            v = log_add(v, A(t - 1, u.first + i - 1) + u.log_a[i][j]);
        A(t, u.first + j - 1) = v + B(t, u.first + j - 1);
      }
    }
  }
  // Flow into the final exit at time T.
  for (std::size_t k = 1; k <= K; ++k) {
    const auto& p = comp.units[k - 1];
    double e = kLogZero;
    for (std::size_t i = 1; i <= p.n; ++i)
      e = log_add(e, A(T - 1, p.first + i - 1) + p.log_a[i][p.n + 1]);
    e = log_add(e, entry[k - 1][T] + p.log_a[0][p.n + 1]);
    entry[k][T] = e;
  }
  const double total = entry[K][T];
  if (total == kLogZero || !std::isfinite(total))
    throw Error("forward_backward: no valid path for '" + x.utterance_id() + "'");

  // Backward. bentry[k][t]: log prob of emitting frames >= t from unit k's entry.
  std::vector<std::vector<double>> bentry(K + 1, std::vector<double>(T + 1, kLogZero));
  std::vector<double> beta(T * N, kLogZero);
  auto Be = [&](std::size_t t, std::size_t n) -> double& { return beta[t * N + n]; };
  bentry[K][T] = 0.0;
  for (std::size_t tt = T + 1; tt-- > 0;) {
    // beta at frame tt (needs bentry at tt + 1 and beta at tt + 1).
    if (tt < T) {
      for (std::size_t k = K; k-- > 0;) {
        const auto& u = comp.units[k];
        for (std::size_t i = u.n; i >= 1; --i) {
          double v = u.log_a[i][u.n + 1] + bentry[k + 1][tt + 1];
          if (tt + 1 < T)
            for (std::size_t j = i; j <= u.n; ++j)
              v = log_add(v, u.log_a[i][j] + B(tt + 1, u.first + j - 1) +
                                 Be(tt + 1, u.first + j - 1));
          Be(tt, u.first + i - 1) = v;
        }
      }
    }
    // bentry at tt, right to left.
    for (std::size_t k = K; k-- > 0;) {
      const auto& u = comp.units[k];
      double v = u.log_a[0][u.n + 1] + bentry[k + 1][tt];
      if (tt < T)
        for (std::size_t j = 1; j <= u.n; ++j)
          v = log_add(v, u.log_a[0][j] + B(tt, u.first + j - 1) + Be(tt, u.first + j - 1));
      bentry[k][tt] = v;
    }
  }

  ForwardBackwardResult r;
  r.loglik = total;
  r.num_frames = T;
  r.num_states = N;
  r.posteriors.assign(T * N, 0.0);
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t n = 0; n < N; ++n) {
      const double lg = A(t, n) + Be(t, n) - total;
      r.posteriors[t * N + n] = lg == kLogZero ? 0.0 : std::exp(lg);
    }

  if (acc) {
    acc->loglik += total;
    acc->frames += T;
    acc->utterances += 1;
    const std::size_t dim = set.dim();
    for (std::size_t t = 0; t < T; ++t) {
      auto f = x.frame(t);
      for (std::size_t n = 0; n < N; ++n) {
        const double g = r.posteriors[t * N + n];
        if (g == 0.0) continue;
        const std::size_t id = comp.pool_of[n];
        auto& sa = acc->states[id];
        const double bt = B(t, n);
        for (std::size_t m = 0; m < sa.occ.size(); ++m) {
          const double lc = b.component(t, id, m);
          if (lc == kLogZero) continue;
          const double post = g * std::exp(lc - bt);
          sa.occ[m] += post;
          auto& sx = sa.sx[m];
          auto& sx2 = sa.sx2[m];
          for (std::size_t d = 0; d < dim; ++d) {
            sx[d] += post * f[d];
            sx2[d] += post * f[d] * f[d];
          }
        }
      }
    }
    for (std::size_t k = 0; k < K; ++k) {
      const auto& u = comp.units[k];
      Matrix& c = acc->trans.at(u.model->label);
      const std::size_t ex = u.n + 1;
      for (std::size_t t = 0; t <= T; ++t) {
        if (entry[k][t] != kLogZero) {
          if (t < T)
            for (std::size_t j = 1; j <= u.n; ++j) {
              const double lg = entry[k][t] + u.log_a[0][j] + B(t, u.first + j - 1) +
                                Be(t, u.first + j - 1) - total;
              if (lg != kLogZero) c[0][j] += std::exp(lg);
            }
          const double lt = entry[k][t] + u.log_a[0][ex] + bentry[k + 1][t] - total;
          if (lt != kLogZero) c[0][ex] += std::exp(lt);
        }
        if (t == T) continue;
        for (std::size_t i = 1; i <= u.n; ++i) {
          const double ai = A(t, u.first + i - 1);
          if (ai == kLogZero) continue;
          if (t + 1 < T)
            for (std::size_t j = i; j <= u.n; ++j) {
              const double lg = ai + u.log_a[i][j] + B(t + 1, u.first + j - 1) +
                                Be(t + 1, u.first + j - 1) - total;
              if (lg != kLogZero) c[i][j] += std::exp(lg);
            }
          const double le = ai + u.log_a[i][ex] + bentry[k + 1][t + 1] - total;
          if (le != kLogZero) c[i][ex] += std::exp(le);
        }
      }
    }
  }
  return r;
}

// ---------------------------------------------------------------------------
// Embedded re-estimation.

struct ReestimateOptions {
  int jobs = 1;
};

struct ReestimateResult {
  HmmSet set;
  double loglik = 0.0;  // total before the update
  std::size_t used = 0;
  std::size_t skipped = 0;
  std::vector<std::string> zero_occupancy;
};

/// Accumulates statistics for every item. Items are processed in fixed blocks
/// whose partial sums are added in block order, so the result does not depend
/// on the number of workers.
inline Accumulators accumulate(const HmmSet& set, std::span<const TrainItem> items, int jobs,
                               std::size_t* skipped = nullptr) {
  constexpr std::size_t kBlock = 8;
  const std::size_t blocks = (items.size() + kBlock - 1) / kBlock;
  std::vector<Accumulators> partial(blocks);
  std::vector<std::size_t> skips(blocks, 0);
  parallel_for(blocks, jobs, [&](std::size_t bi) {
    Accumulators a = Accumulators::zeros(set);
    for (std::size_t i = bi * kBlock; i < std::min(items.size(), (bi + 1) * kBlock); ++i) {
      const TrainItem& it = items[i];
      Composite comp = build_composite(set, it.transcription.labels());
      if (it.features->num_frames() < comp.min_frames) {
        warn("skipping '" + it.features->utterance_id() + "': " +
             std::to_string(it.features->num_frames()) + " frames < minimum path " +
             std::to_string(comp.min_frames));
        ++skips[bi];
        continue;
      }
      forward_backward(set, comp, *it.features, &a);
    }
    partial[bi] = std::move(a);
  });
  Accumulators total = Accumulators::zeros(set);
  std::size_t sk = 0;
  for (std::size_t bi = 0; bi < blocks; ++bi) {
    total.add(partial[bi]);
    sk += skips[bi];
  }
  if (skipped) *skipped = sk;
  return total;
}

/// M-step: means, variances (floored), weights and transitions from pooled
/// statistics. States or rows without occupancy keep their old values.
inline HmmSet apply_update(const HmmSet& set, const Accumulators& acc,
                           std::vector<std::string>* zero_occupancy = nullptr) {
  HmmSet out = set;
  const std::size_t dim = set.dim();
  const auto& floor = set.var_floor();
  for (std::size_t id = 0; id < out.pool().size(); ++id) {
    const StateAccum& sa = acc.states[id];
    const double occ = sa.total();
    if (!(occ > 0.0)) continue;
    GmmState& s = out.pool()[id];
    for (std::size_t m = 0; m < s.mix.size(); ++m) {
      auto& c = s.mix[m];
      c.weight = sa.occ[m] / occ;
      if (!(sa.occ[m] > 0.0)) continue;
      for (std::size_t d = 0; d < dim; ++d) {
        const double mu = sa.sx[m][d] / sa.occ[m];
        double v = sa.sx2[m][d] / sa.occ[m] - mu * mu;
        const double fl = floor.empty() ? 0.0 : floor[d];
        if (!(v >= fl)) v = fl;
        c.mean[d] = mu;
        c.var[d] = v;
      }
    }
    double wsum = 0.0;
    for (const auto& c : s.mix) wsum += c.weight;
    for (auto& c : s.mix) c.weight /= wsum;
  }
  for (const auto& [label, model] : set.models()) {
    const Matrix& c = acc.trans.at(label);
    HmmModel& m = out.model(label);
    double entry_total = 0.0;
    for (double v : c[0]) entry_total += v;
    if (!(entry_total > 0.0)) {
      if (zero_occupancy) zero_occupancy->push_back(label);
      continue;
    }
    for (std::size_t i = 0; i + 1 < c.size(); ++i) {
      double row = 0.0;
      for (double v : c[i]) row += v;
      if (!(row > 0.0)) continue;
      for (std::size_t j = 0; j < c.size(); ++j) m.trans[i][j] = c[i][j] / row;
    }
  }
  return out;
}

/// One Baum-Welch update over all items. Returns the pre-update likelihood.
inline ReestimateResult embedded_reestimate(const HmmSet& set, std::span<const TrainItem> items,
                                            const ReestimateOptions& opt = {}) {
  for (const auto& it : items)
    for (const auto& s : it.transcription.entries)
      if (!set.has(s.label)) throw Error("no model for label '" + s.label + "'");
  ReestimateResult r;
  Accumulators acc = accumulate(set, items, opt.jobs, &r.skipped);
  r.used = acc.utterances;
  r.loglik = acc.loglik;
  r.set = apply_update(set, acc, &r.zero_occupancy);
  for (const auto& l : r.zero_occupancy)
    if (l != kSp) warn("model '" + l + "' received no occupancy; parameters kept");
  return r;
}

// ---------------------------------------------------------------------------
// Short-pause tying.

/// Ties a one-state `sp` (created if absent) to the centre state of `sil`.
/// Applying it to an already tied set changes nothing.
inline HmmSet tie_short_pause(const HmmSet& set) {
  if (!set.has(kSil)) throw Error("tie_short_pause: set has no 'sil' model");
  const HmmModel& sil = set.model(kSil);
  if (sil.num_states() != 3) throw Error("tie_short_pause: 'sil' must have 3 emitting states");
  HmmSet out = set;
  const std::size_t centre = sil.states[1];
  if (out.has(kSp)) {
    HmmModel sp = out.model(kSp);
    if (sp.num_states() != 1) throw Error("tie_short_pause: existing 'sp' must have 1 state");
    sp.states[0] = centre;
    if (!(sp.trans[0][2] > 0.0)) sp.trans = tee_transitions();
    out.remove_model(kSp);
    out.add_model_raw(std::move(sp));
  } else {
    out.add_model_raw(HmmModel{kSp, {centre}, tee_transitions()});
  }
  out.compact();
  return out;
}

// ---------------------------------------------------------------------------
// Viterbi through a fixed label sequence.

struct ChainAlignment {
  double score = kLogZero;
  struct Piece {
    std::size_t unit = 0;
    int start = 0;
    int end = 0;
    double score = 0.0;  // log score from the previous piece's exit to this one's
  };
  std::vector<Piece> pieces;  // units that consumed at least one frame
};

/// Best state path through the composite for `labels`. Tee units traversed
/// without frames do not appear in `pieces`.
inline ChainAlignment viterbi_chain(const HmmSet& set, const std::vector<std::string>& labels,
                                    const FeatureSequence& x) {
  Composite comp = build_composite(set, labels);
  const std::size_t T = x.num_frames();
  const std::size_t N = comp.num_states();
  const std::size_t K = comp.units.size();
  if (K == 0 || T < comp.min_frames)
    throw Error("no viable path: " + std::to_string(labels.size()) + " labels, " +
                std::to_string(T) + " frames in '" + x.utterance_id() + "'");
  EmissionCache b(set, comp.pool_of, x, false);

  // Back-pointers: for emitting states, the previous flat state or -1 when
  // entered from the unit entry. For entries, the flat state that exited
  // into it at t-1, or -1 - k' for a tee pass-through from unit k'.
  std::vector<double> delta(T * N, kLogZero);
  std::vector<long> bp(T * N, -2);
  std::vector<double> entry((K + 1) * (T + 1), kLogZero);
  std::vector<long> ebp((K + 1) * (T + 1), -2);
  auto D = [&](std::size_t t, std::size_t n) -> double& { return delta[t * N + n]; };
  auto E = [&](std::size_t k, std::size_t t) -> double& { return entry[k * (T + 1) + t]; };
  auto EB = [&](std::size_t k, std::size_t t) -> long& { return ebp[k * (T + 1) + t]; };

  auto fill_entries = [&](std::size_t t) {
    for (std::size_t k = 0; k <= K; ++k) {
      if (k == 0) {
        E(0, t) = t == 0 ? 0.0 : kLogZero;
        EB(0, t) = -2;
        continue;
      }
      const auto& p = comp.units[k - 1];
      double best = kLogZero;
      long arg = -2;
      if (t > 0)
        for (std::size_t i = 1; i <= p.n; ++i) {
          const double v = D(t - 1, p.first + i - 1) + p.log_a[i][p.n + 1];
          if (v > best) {
            best = v;
            arg = static_cast<long>(p.first + i - 1);
          }
        }
      const double v = E(k - 1, t) + p.log_a[0][p.n + 1];
      if (v > best) {
        best = v;
        arg = -1 - static_cast<long>(k - 1);
      }
      E(k, t) = best;
      EB(k, t) = arg;
    }
  };

  for (std::size_t t = 0; t < T; ++t) {
    fill_entries(t);
    for (std::size_t k = 0; k < K; ++k) {
      const auto& u = comp.units[k];
      for (std::size_t j = 1; j <= u.n; ++j) {
        double best = E(k, t) + u.log_a[0][j];
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
        D(t, n) = best + b(t, comp.pool_of[n]);
        bp[t * N + n] = arg;
      }
    }
  }
  fill_entries(T);

  ChainAlignment out;
  out.score = E(K, T);
  if (out.score == kLogZero)
    throw Error("no viable path through " + std::to_string(labels.size()) + " labels in '" +
                x.utterance_id() + "'");

  std::vector<std::size_t> unit_of(N);
  for (std::size_t k = 0; k < K; ++k)
    for (std::size_t j = 0; j < comp.units[k].n; ++j) unit_of[comp.units[k].first + j] = k;

  std::vector<double> unit_exit(K, 0.0);
  std::vector<long> path(T, -1);
  std::size_t k = K, t = T;
  long n = -1;
  bool at_entry = true;
  while (true) {
    if (at_entry) {
      if (k == 0) break;
      const long e = EB(k, t);
      if (e >= 0) {
        const auto& p = comp.units[k - 1];
        unit_exit[k - 1] = D(t - 1, static_cast<std::size_t>(e)) +
                           p.log_a[static_cast<std::size_t>(e) - p.first + 1][p.n + 1];
        n = e;
        --t;
        at_entry = false;
      } else {
        --k;  // tee pass-through
      }
    } else {
      path[t] = n;
      const long p = bp[t * N + static_cast<std::size_t>(n)];
      if (p >= 0) {
        n = p;
        --t;
      } else {
        k = unit_of[static_cast<std::size_t>(n)];
        at_entry = true;
      }
    }
  }
  for (std::size_t tt = 0; tt < T; ++tt) {
    const std::size_t u = unit_of[static_cast<std::size_t>(path[tt])];
    if (out.pieces.empty() || out.pieces.back().unit != u)
      out.pieces.push_back({u, static_cast<int>(tt), static_cast<int>(tt) + 1, 0.0});
    else
      out.pieces.back().end = static_cast<int>(tt) + 1;
  }
  // Pieces telescope: each runs from the previous piece's exit to its own, so
  // skipped tee models are charged to the piece after them (a trailing skip
  // to the last piece) and the scores sum to the path score.
  double prev = 0.0;
  for (auto& pc : out.pieces) {
    pc.score = unit_exit[pc.unit] - prev;
    prev = unit_exit[pc.unit];
  }
  if (!out.pieces.empty()) out.pieces.back().score += out.score - prev;
  return out;
}

/// Per-utterance Viterbi through each fixed label sequence; labels keep their
/// order and receive frame times tiling [0, T). Tee labels (sp) that consume
/// no frames are dropped from the output.
inline std::vector<Transcription> force_align(const HmmSet& set, std::span<const TrainItem> items,
                                              int jobs = 1) {
  std::vector<Transcription> out(items.size());
  parallel_for(items.size(), jobs, [&](std::size_t i) {
    const auto labels = items[i].transcription.labels();
    ChainAlignment al = viterbi_chain(set, labels, *items[i].features);
    Transcription tr{items[i].transcription.utterance_id, items[i].transcription.tier, {}};
    for (const auto& pc : al.pieces) tr.entries.push_back({labels[pc.unit], pc.start, pc.end});
    out[i] = std::move(tr);
  });
  return out;
}

// ---------------------------------------------------------------------------
// Model file.
//
//   ~o <DIM> d <FLOOR>
//    f_1 ... f_d
//   ~h "label"
//   <NUMSTATES> S
//   <STATE> i <NUMMIXES> M          (i = 1..S)
//   <MIXTURE> m weight              (m = 1..M)
//   <MEAN> mu_1 ... mu_d
//   <VARIANCE> v_1 ... v_d
//   <TRANSP> S+2
//    row_0
//    ...
//    row_{S+1}
//   <ENDHMM>
//   ~t
//   <TIE> n "label" i "label" i ...  (one line per tie group, i = 1..S)
//
// Numbers are written in shortest round-trip form, so write -> read -> write
// reproduces the file byte for byte.

inline void write_hmm_set(std::ostream& os, const HmmSet& set) {
  os << "~o <DIM> " << set.dim() << " <FLOOR>\n";
  for (std::size_t d = 0; d < set.var_floor().size(); ++d)
    os << ' ' << format_double(set.var_floor()[d]);
  os << '\n';
  for (const auto& [label, m] : set.models()) {
    os << "~h \"" << label << "\"\n<NUMSTATES> " << m.num_states() << '\n';
    for (std::size_t i = 0; i < m.num_states(); ++i) {
      const GmmState& s = set.pool()[m.states[i]];
      os << "<STATE> " << i + 1 << " <NUMMIXES> " << s.mix.size() << '\n';
      for (std::size_t k = 0; k < s.mix.size(); ++k) {
        os << "<MIXTURE> " << k + 1 << ' ' << format_double(s.mix[k].weight) << "\n<MEAN>";
        for (double v : s.mix[k].mean) os << ' ' << format_double(v);
        os << "\n<VARIANCE>";
        for (double v : s.mix[k].var) os << ' ' << format_double(v);
        os << '\n';
      }
    }
    os << "<TRANSP> " << m.trans.size() << '\n';
    for (const auto& row : m.trans) {
      for (double v : row) os << ' ' << format_double(v);
      os << '\n';
    }
    os << "<ENDHMM>\n";
  }
  os << "~t\n";
  for (const auto& g : set.tie_groups()) {
    os << "<TIE> " << g.size();
    for (const auto& [label, idx] : g) os << " \"" << label << "\" " << idx + 1;
    os << '\n';
  }
}

namespace detail {
class TokenReader {
 public:
  TokenReader(std::istream& is, std::string where) : where_(std::move(where)) {
    std::string line;
    while (std::getline(is, line))
      for (auto& t : split_ws(line)) toks_.push_back(std::move(t));
  }
  bool done() const { return pos_ >= toks_.size(); }
  const std::string& peek() const {
    if (done()) fail("unexpected end of file");
    return toks_[pos_];
  }
  std::string next() {
    const std::string& t = peek();
    ++pos_;
    return t;
  }
  void expect(const std::string& t) {
    if (next() != t) fail("expected '" + t + "'");
  }
  double number() { return parse_double(next()); }
  std::size_t count() {
    const long v = parse_long(next());
    if (v < 0) fail("negative count");
    return static_cast<std::size_t>(v);
  }
  std::string quoted() {
    std::string t = next();
    if (t.size() < 2 || t.front() != '"' || t.back() != '"') fail("expected quoted label");
    return t.substr(1, t.size() - 2);
  }
  [[noreturn]] void fail(const std::string& msg) const {
    throw Error(where_ + ": " + msg + " (token " + std::to_string(pos_) + ")");
  }

 private:
  std::string where_;
  std::vector<std::string> toks_;
  std::size_t pos_ = 0;
};
}  // namespace detail

inline HmmSet read_hmm_set(std::istream& is, const std::string& where) {
  detail::TokenReader r(is, where);
  r.expect("~o");
  r.expect("<DIM>");
  const std::size_t dim = r.count();
  r.expect("<FLOOR>");
  std::vector<double> floor(dim);
  for (auto& f : floor) f = r.number();
  HmmSet set(dim, floor);
  while (!r.done() && r.peek() == "~h") {
    r.next();
    const std::string label = r.quoted();
    r.expect("<NUMSTATES>");
    const std::size_t ns = r.count();
    std::vector<GmmState> states(ns);
    for (std::size_t i = 0; i < ns; ++i) {
      r.expect("<STATE>");
      if (r.count() != i + 1) r.fail("state index out of order");
      r.expect("<NUMMIXES>");
      const std::size_t nm = r.count();
      for (std::size_t k = 0; k < nm; ++k) {
        r.expect("<MIXTURE>");
        if (r.count() != k + 1) r.fail("mixture index out of order");
        MixtureComponent c;
        c.weight = r.number();
        r.expect("<MEAN>");
        c.mean.resize(dim);
        for (auto& v : c.mean) v = r.number();
        r.expect("<VARIANCE>");
        c.var.resize(dim);
        for (auto& v : c.var) v = r.number();
        states[i].mix.push_back(std::move(c));
      }
    }
    r.expect("<TRANSP>");
    const std::size_t n = r.count();
    if (n != ns + 2) r.fail("transition matrix size mismatch for '" + label + "'");
    Matrix a(n, std::vector<double>(n));
    for (auto& row : a)
      for (auto& v : row) v = r.number();
    r.expect("<ENDHMM>");
    set.add_model(label, std::move(states), std::move(a));
  }
  r.expect("~t");
  // Each member of a tie group is redirected to the first member's record
  // once the written parameters are checked to agree bit for bit.
  while (!r.done()) {
    r.expect("<TIE>");
    const std::size_t n = r.count();
    if (n < 2) r.fail("tie group needs at least two members");
    std::vector<std::pair<std::string, std::size_t>> group;
    for (std::size_t g = 0; g < n; ++g) {
      std::string label = r.quoted();
      const std::size_t idx = r.count();
      if (idx == 0) r.fail("state indices are 1-based");
      group.emplace_back(std::move(label), idx - 1);
    }
    const std::size_t keep = set.model(group[0].first).states.at(group[0].second);
    for (std::size_t g = 1; g < group.size(); ++g) {
      HmmModel m = set.model(group[g].first);
      std::size_t& id = m.states.at(group[g].second);
      if (!(set.pool()[id] == set.pool()[keep])) r.fail("tied states differ");
      id = keep;
      set.remove_model(m.label);
      set.add_model_raw(std::move(m));
    }
  }
  set.compact();
  set.validate();
  return set;
}

inline void save_hmm_set(const std::filesystem::path& p, const HmmSet& set) {
  auto os = detail::open_out(p);
  write_hmm_set(os, set);
}

inline HmmSet load_hmm_set(const std::filesystem::path& p) {
  auto is = detail::open_in(p);
  return read_hmm_set(is, p.string());
}

}  // namespace wlt
