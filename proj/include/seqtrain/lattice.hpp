// seqtrain/lattice.hpp

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
#include <fstream>
#include <istream>
#include <numeric>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "seqtrain/checkpoint.hpp"
#include "seqtrain/common.hpp"

namespace seqtrain {

enum class LossLevel { none, phone, state };

inline const char* to_string(LossLevel level) {
  switch (level) {
    case LossLevel::phone: return "phone";
    case LossLevel::state: return "state";
    default: return "none";
  }
}

inline LossLevel parse_loss_level(const std::string& s) {
  if (s == "none") return LossLevel::none;
  if (s == "phone") return LossLevel::phone;
  if (s == "state") return LossLevel::state;
  throw DataError(detail::cat("unknown loss level '", s, "'"));
}

/// One hypothesis arc. It spans frames [time(src), time(dst)) and carries one
/// output-node label per frame spanned. `symbol` is the token the arc emits
/// (a phone at desk scale).
struct LatticeArc {
  int src = 0;
  int dst = 0;
  int symbol = 0;
  double log_weight = 0.0;  // log transition weight, log t_q
  std::vector<int> labels;
  double loss = 0.0;  // local loss L(q, q^r); meaningful only when annotated
};

/// Timed acyclic hypothesis graph. Immutable after construction.
class Lattice {
 public:
  Lattice() = default;

  Lattice(int num_frames, std::vector<int> node_times, int start, int end,
          std::vector<LatticeArc> arcs, LossLevel loss_level = LossLevel::none)
      : num_frames_(num_frames),
        times_(std::move(node_times)),
        start_(start),
        end_(end),
        arcs_(std::move(arcs)),
        level_(loss_level) {
    validate();
  }

  int num_frames() const { return num_frames_; }
  int num_nodes() const { return static_cast<int>(times_.size()); }
  int num_arcs() const { return static_cast<int>(arcs_.size()); }
  int start() const { return start_; }
  int end() const { return end_; }
  int time(int node) const { return times_.at(static_cast<std::size_t>(node)); }
  const std::vector<int>& node_times() const { return times_; }
  const LatticeArc& arc(int q) const { return arcs_.at(static_cast<std::size_t>(q)); }
  const std::vector<LatticeArc>& arcs() const { return arcs_; }
  LossLevel loss_level() const { return level_; }
  bool has_losses() const { return level_ != LossLevel::none; }

  /// Nodes sorted by time. Arcs always move forward in time, so this is a
  /// topological order.
  const std::vector<int>& topological_order() const { return order_; }
  const std::vector<int>& incoming(int node) const { return in_.at(static_cast<std::size_t>(node)); }
  const std::vector<int>& outgoing(int node) const { return out_.at(static_cast<std::size_t>(node)); }

  /// Number of complete start->end paths (as a double; may be large).
  double count_paths() const {
    std::vector<double> n(times_.size(), 0.0);
    n[static_cast<std::size_t>(start_)] = 1.0;
    for (int u : order_)
      for (int q : out_[static_cast<std::size_t>(u)])
        n[static_cast<std::size_t>(arcs_[static_cast<std::size_t>(q)].dst)] +=
            n[static_cast<std::size_t>(u)];
    return n[static_cast<std::size_t>(end_)];
  }

  /// Path loss: sum of the local losses of the arcs on `path`.
  double path_loss(const std::vector<int>& path) const {
    double l = 0.0;
    for (int q : path) l += arc(q).loss;
    return l;
  }

  Lattice with_losses(std::vector<double> losses, LossLevel level) const {
    if (losses.size() != arcs_.size()) throw UsageError("one loss per arc required");
    std::vector<LatticeArc> arcs = arcs_;
    for (std::size_t q = 0; q < arcs.size(); ++q) arcs[q].loss = losses[q];
    return Lattice(num_frames_, times_, start_, end_, std::move(arcs), level);
  }

  Lattice without_losses() const {
    std::vector<LatticeArc> arcs = arcs_;
    for (auto& a : arcs) a.loss = 0.0;
    return Lattice(num_frames_, times_, start_, end_, std::move(arcs), LossLevel::none);
  }

 private:
  void validate() {
    if (times_.empty() || arcs_.empty()) throw UsageError("empty lattice");
    if (num_frames_ < 1) throw DataError("lattice must span at least one frame");
    const int n = num_nodes();
    if (start_ < 0 || start_ >= n || end_ < 0 || end_ >= n)
      throw DataError("start/end node out of range");
    if (time(start_) != 0) throw DataError("start node must be at time 0");
    if (time(end_) != num_frames_) throw DataError("end node must be at the final frame boundary");
    for (int t : times_)
      if (t < 0 || t > num_frames_) throw DataError(detail::cat("node time ", t, " out of range"));
    in_.assign(times_.size(), {});
    out_.assign(times_.size(), {});
    for (std::size_t q = 0; q < arcs_.size(); ++q) {
      const auto& a = arcs_[q];
      if (a.src < 0 || a.src >= n || a.dst < 0 || a.dst >= n)
        throw DataError(detail::cat("arc ", q, " references a missing node"));
      const int span = time(a.dst) - time(a.src);
      if (span < 1) throw DataError(detail::cat("arc ", q, " spans no frames"));
      if (static_cast<int>(a.labels.size()) != span)
        throw DataError(detail::cat("arc ", q, " has ", a.labels.size(), " labels for ", span,
                                    " frames"));
      for (int s : a.labels)
        if (s < 0) throw DataError(detail::cat("arc ", q, " has a negative state label"));
      if (!std::isfinite(a.log_weight))
        throw DataError(detail::cat("arc ", q, " has a non-finite transition weight"));
      if (level_ != LossLevel::none && !(std::isfinite(a.loss) && a.loss >= 0.0))
        throw DataError(detail::cat("arc ", q, " has an invalid local loss"));
      out_[static_cast<std::size_t>(a.src)].push_back(static_cast<int>(q));
      in_[static_cast<std::size_t>(a.dst)].push_back(static_cast<int>(q));
    }
    order_.resize(times_.size());
    std::iota(order_.begin(), order_.end(), 0);
    std::stable_sort(order_.begin(), order_.end(),
                     [&](int a, int b) { return times_[static_cast<std::size_t>(a)] <
                                                times_[static_cast<std::size_t>(b)]; });
    if (count_paths() < 1.0) throw DataError("lattice has no complete start-to-end path");
  }

  int num_frames_ = 0;
  std::vector<int> times_;
  int start_ = 0;
  int end_ = 0;
  std::vector<LatticeArc> arcs_;
  LossLevel level_ = LossLevel::none;
  std::vector<int> order_;
  std::vector<std::vector<int>> in_, out_;
};

/// Time-aligned reference: one state per frame plus the symbol segmentation.
struct Segment {
  int start = 0;  // first frame
  int end = 0;    // one past the last frame
  int symbol = 0;
};

struct Reference {
  std::vector<int> states;
  std::vector<Segment> segments;

  int num_frames() const { return static_cast<int>(states.size()); }

  std::vector<int> symbols() const {
    std::vector<int> s;
    for (const auto& seg : segments) s.push_back(seg.symbol);
    return s;
  }

  /// Symbol of the reference segment covering each frame.
  std::vector<int> frame_symbols() const {
    std::vector<int> s(states.size(), -1);
    for (const auto& seg : segments)
      for (int t = seg.start; t < seg.end; ++t) s[static_cast<std::size_t>(t)] = seg.symbol;
    return s;
  }

  void validate() const {
    if (states.empty()) throw DataError("reference has no frames");
    int t = 0;
    for (const auto& seg : segments) {
      if (seg.start != t || seg.end <= seg.start)
        throw DataError("reference segments must tile the utterance");
      t = seg.end;
    }
    if (t != num_frames()) throw DataError("reference segments do not cover every frame");
  }
};

/// Attach local losses L(q, q^r). State level counts per-frame label
/// mismatches against the reference states. Phone level scores each arc as
/// one unit: 0 when its symbol matches the time-overlapping reference symbol
/// on more than half of its frames, else 1.
inline Lattice annotate_local_loss(const Lattice& lat, const Reference& ref, LossLevel level) {
  if (level == LossLevel::none) return lat.without_losses();
  ref.validate();
  if (ref.num_frames() != lat.num_frames())
    throw DataError(detail::cat("reference spans ", ref.num_frames(), " frames, lattice spans ",
                                lat.num_frames()));
  const std::vector<int> ref_sym = ref.frame_symbols();
  std::vector<double> losses;
  losses.reserve(static_cast<std::size_t>(lat.num_arcs()));
  for (const auto& a : lat.arcs()) {
    const int t0 = lat.time(a.src);
    const int span = static_cast<int>(a.labels.size());
    int mismatches = 0, matches = 0;
    for (int j = 0; j < span; ++j) {
      const auto t = static_cast<std::size_t>(t0 + j);
      if (a.labels[static_cast<std::size_t>(j)] != ref.states[t]) ++mismatches;
      if (ref_sym[t] == a.symbol) ++matches;
    }
    if (level == LossLevel::state)
      losses.push_back(mismatches);
    else
      losses.push_back(2 * matches > span ? 0.0 : 1.0);
  }
  return lat.with_losses(std::move(losses), level);
}

// Lattice text format, version 1 (whitespace separated, one record per line):
//
//   seqlat 1
//   nodes <N> arcs <A> frames <T>
//   start <node> end <node>
//   loss none|phone|state
//   node <id> <time>                                         (N lines, ids 0..N-1)
//   arc <src> <dst> <symbol> <log_weight> <loss|-> <label>...  (A lines)
//
// The arc line carries exactly time(dst) - time(src) labels. The loss field is
// '-' when the lattice is unannotated. Numbers use hexadecimal floats on
// output; any strtod-readable form is accepted on input.

inline void write_lattice(std::ostream& out, const Lattice& lat) {
  out << "seqlat 1\n";
  out << "nodes " << lat.num_nodes() << " arcs " << lat.num_arcs() << " frames "
      << lat.num_frames() << "\n";
  out << "start " << lat.start() << " end " << lat.end() << "\n";
  out << "loss " << to_string(lat.loss_level()) << "\n";
  for (int n = 0; n < lat.num_nodes(); ++n) out << "node " << n << ' ' << lat.time(n) << "\n";
  for (const auto& a : lat.arcs()) {
    out << "arc " << a.src << ' ' << a.dst << ' ' << a.symbol << ' '
        << detail::hexfloat(a.log_weight) << ' '
        << (lat.has_losses() ? detail::hexfloat(a.loss) : std::string("-"));
    for (int s : a.labels) out << ' ' << s;
    out << "\n";
  }
}

inline Lattice read_lattice(std::istream& in) {
  using detail::expect_token;
  expect_token(in, "seqlat");
  int version = 0;
  if (!(in >> version) || version != 1)
    throw DataError(detail::cat("unsupported lattice version ", version));
  int n = 0, a = 0, t = 0, start = 0, end = 0;
  expect_token(in, "nodes");
  in >> n;
  expect_token(in, "arcs");
  in >> a;
  expect_token(in, "frames");
  in >> t;
  expect_token(in, "start");
  in >> start;
  expect_token(in, "end");
  in >> end;
  if (!in || n < 1 || a < 1) throw DataError("bad lattice header");
  expect_token(in, "loss");
  std::string level_str;
  in >> level_str;
  const LossLevel level = parse_loss_level(level_str);
  std::vector<int> times(static_cast<std::size_t>(n), -1);
  for (int i = 0; i < n; ++i) {
    expect_token(in, "node");
    int id = -1, time = -1;
    if (!(in >> id >> time) || id < 0 || id >= n) throw DataError("bad node line");
    times[static_cast<std::size_t>(id)] = time;
  }
  std::vector<LatticeArc> arcs(static_cast<std::size_t>(a));
  for (auto& arc : arcs) {
    expect_token(in, "arc");
    std::string w, l;
    if (!(in >> arc.src >> arc.dst >> arc.symbol >> w >> l)) throw DataError("bad arc line");
    if (arc.src < 0 || arc.src >= n || arc.dst < 0 || arc.dst >= n)
      throw DataError("arc references a missing node");
    arc.log_weight = detail::parse_double(w);
    if (level != LossLevel::none) {
      if (l == "-") throw DataError("annotated lattice has an arc without a loss");
      arc.loss = detail::parse_double(l);
    } else if (l != "-") {
      throw DataError("unannotated lattice has an arc with a loss");
    }
    const int span = times[static_cast<std::size_t>(arc.dst)] - times[static_cast<std::size_t>(arc.src)];
    if (span < 1) throw DataError("arc spans no frames");
    arc.labels.resize(static_cast<std::size_t>(span));
    for (auto& s : arc.labels)
      if (!(in >> s)) throw DataError("truncated arc labels");
  }
  return Lattice(t, std::move(times), start, end, std::move(arcs), level);
}

inline void save_lattice(const std::string& path, const Lattice& lat) {
  std::ofstream out(path);
  if (!out) throw DataError(detail::cat("cannot open '", path, "' for writing"));
  write_lattice(out, lat);
}

inline Lattice load_lattice(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError(detail::cat("cannot open '", path, "'"));
  return read_lattice(in);
}

}  // namespace seqtrain
