// seqtrain/dataset_io.hpp

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

// On-disk dataset layout:
//
//   <dir>/dataset.txt            manifest
//   <dir>/<id>.feat              features
//   <dir>/<id>.ref               time-aligned reference
//   <dir>/<id>.lat               denominator lattice (lattice text format)
//
// Manifest:   seqdata 1 / train <N> / <id> x N / validation <M> / <id> x M
// Features:   seqfeat 1 / frames <T> dim <D> / T lines of D hexfloats
// Reference:  seqref 1 / frames <T> segments <K> /
//             seg <start> <end> <symbol>  (K lines) / states <s_0> ... <s_{T-1}>

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "seqtrain/checkpoint.hpp"
#include "seqtrain/synthetic.hpp"

namespace seqtrain {

inline void write_features(std::ostream& out, const FrameBatch& f) {
  out << "seqfeat 1\nframes " << f.frames.rows() << " dim " << f.frames.cols() << '\n';
  for (Eigen::Index t = 0; t < f.frames.rows(); ++t) {
    for (Eigen::Index d = 0; d < f.frames.cols(); ++d)
      out << (d ? " " : "") << detail::hexfloat(f.frames(t, d));
    out << '\n';
  }
}

inline FrameBatch read_features(std::istream& in, std::string id) {
  detail::expect_token(in, "seqfeat");
  detail::expect_token(in, "1");
  Eigen::Index t = 0, d = 0;
  detail::expect_token(in, "frames");
  in >> t;
  detail::expect_token(in, "dim");
  in >> d;
  if (!in || t < 1 || d < 1) throw DataError("bad feature header");
  FrameBatch f{Matrix(t, d), std::move(id)};
  std::string tok;
  for (Eigen::Index i = 0; i < t; ++i)
    for (Eigen::Index j = 0; j < d; ++j) {
      if (!(in >> tok)) throw DataError("truncated feature file");
      f.frames(i, j) = detail::parse_double(tok);
    }
  f.validate();
  return f;
}

inline void write_reference(std::ostream& out, const Reference& ref) {
  out << "seqref 1\nframes " << ref.num_frames() << " segments " << ref.segments.size() << '\n';
  for (const auto& s : ref.segments) out << "seg " << s.start << ' ' << s.end << ' ' << s.symbol << '\n';
  out << "states";
  for (int s : ref.states) out << ' ' << s;
  out << '\n';
}

inline Reference read_reference(std::istream& in) {
  detail::expect_token(in, "seqref");
  detail::expect_token(in, "1");
  int t = 0, k = 0;
  detail::expect_token(in, "frames");
  in >> t;
  detail::expect_token(in, "segments");
  in >> k;
  if (!in || t < 1 || k < 1) throw DataError("bad reference header");
  Reference ref;
  for (int i = 0; i < k; ++i) {
    detail::expect_token(in, "seg");
    Segment s;
    in >> s.start >> s.end >> s.symbol;
    if (!in) throw DataError("truncated reference segment");
    ref.segments.push_back(s);
  }
  detail::expect_token(in, "states");
  ref.states.resize(static_cast<std::size_t>(t));
  for (auto& s : ref.states)
    if (!(in >> s)) throw DataError("truncated reference states");
  ref.validate();
  return ref;
}

namespace detail {

inline std::ofstream open_out(const std::filesystem::path& p) {
  std::ofstream out(p);
  if (!out) throw DataError("cannot write " + p.string());
  return out;
}

inline std::ifstream open_in(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) throw DataError("cannot read " + p.string());
  return in;
}

}  // namespace detail

inline void save_dataset(const std::filesystem::path& dir, const Dataset& ds) {
  std::filesystem::create_directories(dir);
  auto manifest = detail::open_out(dir / "dataset.txt");
  manifest << "seqdata 1\n";
  auto save_set = [&](const char* name, const std::vector<UtteranceExample>& set) {
    manifest << name << ' ' << set.size() << '\n';
    for (const auto& u : set) {
      const std::string& id = u.features.utterance_id;
      manifest << id << '\n';
      auto f = detail::open_out(dir / (id + ".feat"));
      write_features(f, u.features);
      auto r = detail::open_out(dir / (id + ".ref"));
      write_reference(r, u.reference);
      save_lattice((dir / (id + ".lat")).string(), u.denominator);
    }
  };
  save_set("train", ds.train);
  save_set("validation", ds.validation);
  if (!manifest) throw DataError("failed writing dataset manifest");
}

/// Loads a dataset directory. The task configuration is not stored; the
/// returned config carries only the utterance counts.
inline Dataset load_dataset(const std::filesystem::path& dir) {
  auto manifest = detail::open_in(dir / "dataset.txt");
  detail::expect_token(manifest, "seqdata");
  detail::expect_token(manifest, "1");
  Dataset ds;
  auto load_set = [&](const char* name, std::vector<UtteranceExample>& set) {
    detail::expect_token(manifest, name);
    std::size_t n = 0;
    if (!(manifest >> n)) throw DataError("bad dataset manifest");
    for (std::size_t i = 0; i < n; ++i) {
      std::string id;
      if (!(manifest >> id)) throw DataError("truncated dataset manifest");
      auto f = detail::open_in(dir / (id + ".feat"));
      auto r = detail::open_in(dir / (id + ".ref"));
      set.push_back(UtteranceExample::make(read_features(f, id), read_reference(r),
                                           load_lattice((dir / (id + ".lat")).string())));
    }
  };
  load_set("train", ds.train);
  load_set("validation", ds.validation);
  ds.config.train_utterances = static_cast<int>(ds.train.size());
  ds.config.validation_utterances = static_cast<int>(ds.validation.size());
  return ds;
}

}  // namespace seqtrain
