// seqtrain/synthetic.hpp

// Copyright 2026  The seqtrain Authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <random>
#include <string>
#include <vector>

#include "seqtrain/criteria.hpp"

namespace seqtrain {

// Synthetic recognition task. Symbols play the role of phones; each symbol
// owns a left-to-right run of states_per_symbol() consecutive output states.
// State i emits a Gaussian bump centred at i*(D-1)/(S-1) along the feature
// axis plus white noise, so neighbouring states (and hence neighbouring
// symbols) are acoustically confusable.
//
// Denominator lattices are built around the reference segmentation from
// independent add-ons:
//   * substitution of segment k by symbol s-1 or s+1 (same span), each kept
//     with probability `confusion`,
//   * shift of internal boundary k by -1 or +1 frame (reference symbols),
//     each kept with probability `confusion * shift_ratio`.
// Add-ons are dropped from the end of the list until the path count is at
// most max_paths.
struct SyntheticTaskConfig {
  int num_states = 12;
  int num_symbols = 6;
  int feature_dim = 8;
  int min_frames = 20;
  int max_frames = 40;
  int min_segment = 3;
  int max_segment = 6;
  int train_utterances = 256;
  int validation_utterances = 64;
  double confusion = 0.6;
  double shift_ratio = 0.1;
  double bump_width = 0.6;
  double noise = 0.9;
  double max_paths = 150;
  std::uint64_t seed = 1;

  int states_per_symbol() const { return num_states / num_symbols; }

  /// Small task with well separated states, used to check CE training.
  static SyntheticTaskConfig separable() {
    SyntheticTaskConfig c;
    c.num_states = 4;
    c.num_symbols = 2;
    c.feature_dim = 4;
    c.min_frames = 12;
    c.max_frames = 20;
    c.min_segment = 3;
    c.max_segment = 5;
    c.train_utterances = 64;
    c.validation_utterances = 32;
    c.confusion = 0.0;
    c.bump_width = 0.3;
    c.noise = 0.1;
    return c;
  }

  void validate() const {
    if (num_states < 1 || num_symbols < 1 || feature_dim < 1)
      throw ConfigError("task sizes must be positive");
    if (num_states % num_symbols != 0)
      throw ConfigError("num_states must be a multiple of num_symbols");
    if (min_segment < states_per_symbol())
      throw ConfigError("min_segment must cover every state of a symbol");
    if (max_segment < min_segment) throw ConfigError("max_segment < min_segment");
    if (min_frames < min_segment || max_frames < min_frames)
      throw ConfigError("frame range must be ordered and admit one segment");
    if (train_utterances < 1 || validation_utterances < 1)
      throw ConfigError("utterance counts must be positive");
    if (!(confusion >= 0.0 && confusion <= 1.0)) throw ConfigError("confusion must lie in [0, 1]");
    if (!(shift_ratio >= 0.0 && confusion * shift_ratio <= 1.0))
      throw ConfigError("shift_ratio must be >= 0 with confusion * shift_ratio <= 1");
    if (!(bump_width > 0.0) || !(noise >= 0.0)) throw ConfigError("bad feature parameters");
    if (!(max_paths >= 1.0)) throw ConfigError("max_paths must be >= 1");
  }
};

struct Dataset {
  SyntheticTaskConfig config;
  std::vector<UtteranceExample> train;
  std::vector<UtteranceExample> validation;
};

namespace detail {

/// States of symbol `sym` spread over `len` frames, left to right.
inline std::vector<int> spread_states(int sym, int len, int per_symbol) {
  std::vector<int> s(static_cast<std::size_t>(len));
  for (int j = 0; j < len; ++j) s[static_cast<std::size_t>(j)] = sym * per_symbol + j * per_symbol / len;
  return s;
}

struct TaskModel {
  Eigen::MatrixXd means;         // num_states x feature_dim
  Matrix transitions;            // symbol bigram, row-major
  std::vector<double> prior;     // stationary symbol distribution
  std::vector<double> log_prior;
};

inline TaskModel make_task_model(const SyntheticTaskConfig& cfg, std::mt19937_64& rng) {
  TaskModel m;
  m.means.resize(cfg.num_states, cfg.feature_dim);
  const double step =
      cfg.num_states > 1 ? static_cast<double>(cfg.feature_dim - 1) / (cfg.num_states - 1) : 0.0;
  for (int i = 0; i < cfg.num_states; ++i)
    for (int d = 0; d < cfg.feature_dim; ++d) {
      const double x = (d - i * step) / cfg.bump_width;
      m.means(i, d) = std::exp(-0.5 * x * x);
    }
  std::gamma_distribution<double> g(1.0, 1.0);
  m.transitions.resize(cfg.num_symbols, cfg.num_symbols);
  for (int a = 0; a < cfg.num_symbols; ++a) {
    for (int b = 0; b < cfg.num_symbols; ++b) m.transitions(a, b) = g(rng) + 0.1;
    m.transitions.row(a) /= m.transitions.row(a).sum();
  }
  Eigen::RowVectorXd pi = Eigen::RowVectorXd::Constant(cfg.num_symbols, 1.0 / cfg.num_symbols);
  for (int it = 0; it < 200; ++it) pi = pi * m.transitions;
  for (int s = 0; s < cfg.num_symbols; ++s) {
    m.prior.push_back(pi[s]);
    m.log_prior.push_back(std::log(pi[s]));
  }
  return m;
}

inline Reference sample_reference(const SyntheticTaskConfig& cfg, const TaskModel& m,
                                  std::mt19937_64& rng) {
  const int per = cfg.states_per_symbol();
  std::uniform_int_distribution<int> length(cfg.min_frames, cfg.max_frames);
  const int total = length(rng);
  Reference ref;
  int t = 0;
  int sym = -1;
  while (t < total) {
    const int remain = total - t;
    int len = remain;
    if (remain > cfg.max_segment) {
      const int hi = std::min(cfg.max_segment, remain - cfg.min_segment);
      len = std::uniform_int_distribution<int>(cfg.min_segment, hi)(rng);
    }
    std::discrete_distribution<int> next =
        sym < 0 ? std::discrete_distribution<int>(m.prior.begin(), m.prior.end())
                : std::discrete_distribution<int>(m.transitions.row(sym).data(),
                                                  m.transitions.row(sym).data() + cfg.num_symbols);
    sym = next(rng);
    ref.segments.push_back({t, t + len, sym});
    const auto st = spread_states(sym, len, per);
    ref.states.insert(ref.states.end(), st.begin(), st.end());
    t += len;
  }
  return ref;
}

inline Matrix sample_features(const SyntheticTaskConfig& cfg, const TaskModel& m,
                              const Reference& ref, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix f(ref.num_frames(), cfg.feature_dim);
  for (int t = 0; t < ref.num_frames(); ++t)
    for (int d = 0; d < cfg.feature_dim; ++d)
      f(t, d) = m.means(ref.states[static_cast<std::size_t>(t)], d) + cfg.noise * n(rng);
  return f;
}

struct AddOn {
  enum class Kind { substitute, shift } kind;
  int segment;  // segment index, or the boundary index for shifts
  int value;    // substituted symbol, or the shift in frames
};

inline Lattice build_lattice(const SyntheticTaskConfig& cfg, const TaskModel& m,
                             const Reference& ref, const std::vector<AddOn>& addons) {
  const int per = cfg.states_per_symbol();
  const auto& segs = ref.segments;
  const int k = static_cast<int>(segs.size());
  std::vector<int> times;
  for (const auto& s : segs) times.push_back(s.start);
  times.push_back(ref.num_frames());  // node i sits at boundary i
  std::vector<LatticeArc> arcs;
  auto add_arc = [&](int src, int dst, int sym) {
    const int len = times[static_cast<std::size_t>(dst)] - times[static_cast<std::size_t>(src)];
    arcs.push_back({src, dst, sym, m.log_prior[static_cast<std::size_t>(sym)],
                    spread_states(sym, len, per), 0.0});
  };
  for (int i = 0; i < k; ++i) add_arc(i, i + 1, segs[static_cast<std::size_t>(i)].symbol);
  for (const auto& a : addons) {
    if (a.kind == AddOn::Kind::substitute) {
      add_arc(a.segment, a.segment + 1, a.value);
    } else {
      const int b = a.segment;
      times.push_back(times[static_cast<std::size_t>(b)] + a.value);
      const int node = static_cast<int>(times.size()) - 1;
      add_arc(b - 1, node, segs[static_cast<std::size_t>(b - 1)].symbol);
      add_arc(node, b + 1, segs[static_cast<std::size_t>(b)].symbol);
    }
  }
  return Lattice(ref.num_frames(), std::move(times), 0, k, std::move(arcs));
}

inline std::vector<AddOn> sample_addons(const SyntheticTaskConfig& cfg, const Reference& ref,
                                        std::mt19937_64& rng) {
  std::bernoulli_distribution keep(cfg.confusion);
  std::bernoulli_distribution keep_shift(cfg.confusion * cfg.shift_ratio);
  const int per = cfg.states_per_symbol();
  const auto& segs = ref.segments;
  std::vector<AddOn> out;
  for (std::size_t i = 0; i < segs.size(); ++i) {
    for (int d : {-1, 1}) {
      const int alt = segs[i].symbol + d;
      const bool ok = alt >= 0 && alt < cfg.num_symbols;
      if (keep(rng) && ok) out.push_back({AddOn::Kind::substitute, static_cast<int>(i), alt});
    }
  }
  for (std::size_t b = 1; b < segs.size(); ++b) {
    for (int d : {-1, 1}) {
      const int left = segs[b - 1].end - segs[b - 1].start + d;
      const int right = segs[b].end - segs[b].start - d;
      const bool ok = left >= per && right >= per;
      if (keep_shift(rng) && ok) out.push_back({AddOn::Kind::shift, static_cast<int>(b), d});
    }
  }
  return out;
}

inline UtteranceExample make_utterance(const SyntheticTaskConfig& cfg, const TaskModel& m,
                                       const std::string& id, std::mt19937_64& rng) {
  Reference ref = sample_reference(cfg, m, rng);
  FrameBatch feats{sample_features(cfg, m, ref, rng), id};
  std::vector<AddOn> addons = sample_addons(cfg, ref, rng);
  Lattice lat = build_lattice(cfg, m, ref, addons);
  while (lat.count_paths() > cfg.max_paths && !addons.empty()) {
    addons.pop_back();
    lat = build_lattice(cfg, m, ref, addons);
  }
  return UtteranceExample::make(std::move(feats), std::move(ref), lat);
}

inline std::string utterance_id(const char* prefix, int i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s-%04d", prefix, i);
  return buf;
}

}  // namespace detail

/// Training and validation utterances drawn from one task model; the two
/// sets are generated independently, so they share no utterance.
inline Dataset generate_task(const SyntheticTaskConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  const detail::TaskModel model = detail::make_task_model(cfg, rng);
  Dataset ds;
  ds.config = cfg;
  for (int i = 0; i < cfg.train_utterances; ++i)
    ds.train.push_back(detail::make_utterance(cfg, model, detail::utterance_id("train", i), rng));
  for (int i = 0; i < cfg.validation_utterances; ++i)
    ds.validation.push_back(
        detail::make_utterance(cfg, model, detail::utterance_id("valid", i), rng));
  return ds;
}

}  // namespace seqtrain
