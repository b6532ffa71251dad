// seqtrain/checkpoint.hpp

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

#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>

#include "seqtrain/tensor_net.hpp"

// Checkpoint text container, version 1:
//
//   seqtrain-checkpoint 1
//   layers <n> <d_0> ... <d_{n-1}>
//   params <P>
//   <value>            (P lines, each a C99 hexadecimal float, e.g. 0x1.8p-3)
//
// Hex floats make the round trip bit-exact.

namespace seqtrain {

inline constexpr int kCheckpointVersion = 1;

namespace detail {

inline std::string hexfloat(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%a", x);
  return buf;
}

inline double parse_double(const std::string& s) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || *end != '\0') throw DataError(cat("cannot parse number '", s, "'"));
  return v;
}

inline void expect_token(std::istream& in, const std::string& want) {
  std::string tok;
  if (!(in >> tok) || tok != want)
    throw DataError(cat("expected '", want, "', found '", tok, "'"));
}

}  // namespace detail

inline void write_checkpoint(std::ostream& out, const Network& net, const ParameterVector& theta) {
  net.check_parameters(theta);
  out << "seqtrain-checkpoint " << kCheckpointVersion << "\n";
  out << "layers " << net.layer_dims().size();
  for (int d : net.layer_dims()) out << ' ' << d;
  out << "\nparams " << theta.size() << "\n";
  for (Eigen::Index i = 0; i < theta.size(); ++i) out << detail::hexfloat(theta[i]) << "\n";
}

inline std::pair<Network, ParameterVector> read_checkpoint(std::istream& in) {
  detail::expect_token(in, "seqtrain-checkpoint");
  int version = 0;
  if (!(in >> version) || version != kCheckpointVersion)
    throw DataError(detail::cat("unsupported checkpoint version ", version));
  detail::expect_token(in, "layers");
  std::size_t n = 0;
  if (!(in >> n) || n < 2) throw DataError("bad layer count in checkpoint");
  std::vector<int> dims(n);
  for (auto& d : dims)
    if (!(in >> d)) throw DataError("truncated layer list in checkpoint");
  Network net(dims);
  detail::expect_token(in, "params");
  Eigen::Index p = 0;
  if (!(in >> p) || p != net.num_params())
    throw DataError("checkpoint parameter count does not match its layers");
  ParameterVector theta(p);
  std::string tok;
  for (Eigen::Index i = 0; i < p; ++i) {
    if (!(in >> tok)) throw DataError("truncated parameter list in checkpoint");
    theta[i] = detail::parse_double(tok);
  }
  return {std::move(net), std::move(theta)};
}

inline void save_checkpoint(const std::string& path, const Network& net,
                            const ParameterVector& theta) {
  std::ofstream out(path);
  if (!out) throw DataError(detail::cat("cannot open '", path, "' for writing"));
  write_checkpoint(out, net, theta);
}

inline std::pair<Network, ParameterVector> load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError(detail::cat("cannot open '", path, "'"));
  return read_checkpoint(in);
}

}  // namespace seqtrain
