// seqtrain/forward_backward.hpp

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
#include <vector>

#include "seqtrain/common.hpp"
#include "seqtrain/lattice.hpp"

namespace seqtrain {

/// Forward-backward quantities, all in the log domain except the
/// occupancies. For arc q:
///   arc_alpha[q] = alpha(src) + s_q   (forward score including the arc)
///   arc_beta[q]  = beta(dst)          (backward score after the arc)
/// where s_q = kappa * (log t_q + sum_t loglike[t][label_t]).
struct PosteriorSet {
  std::vector<double> node_alpha, node_beta;
  std::vector<double> arc_alpha, arc_beta;
  std::vector<double> arc_score;
  std::vector<double> arc_posterior;
  double log_z = kLogZero;           // from the final alpha
  double log_z_backward = kLogZero;  // from the initial beta
  Matrix gamma;                      // T x D occupancies
};

namespace detail {

inline void check_loglikes(const Lattice& lat, const Matrix& loglikes) {
  if (loglikes.rows() != lat.num_frames())
    throw UsageError(cat("log-likelihoods have ", loglikes.rows(), " frames, lattice has ",
                         lat.num_frames()));
  if (!loglikes.allFinite()) throw NumericError("non-finite acoustic log-likelihoods");
  for (const auto& a : lat.arcs())
    for (int s : a.labels)
      if (s >= loglikes.cols())
        throw DataError(cat("arc label ", s, " exceeds output dimension ", loglikes.cols()));
}

}  // namespace detail

/// kappa-scaled score of every arc.
inline std::vector<double> arc_scores(const Lattice& lat, const Matrix& loglikes, double kappa) {
  std::vector<double> s(static_cast<std::size_t>(lat.num_arcs()));
  for (int q = 0; q < lat.num_arcs(); ++q) {
    const auto& a = lat.arc(q);
    const int t0 = lat.time(a.src);
    double acoustic = 0.0;
    for (std::size_t j = 0; j < a.labels.size(); ++j)
      acoustic += loglikes(t0 + static_cast<Eigen::Index>(j), a.labels[j]);
    s[static_cast<std::size_t>(q)] = kappa * (a.log_weight + acoustic);
  }
  return s;
}

inline PosteriorSet forward_backward(const Lattice& lat, const Matrix& loglikes, double kappa) {
  if (!(kappa > 0.0)) throw UsageError("acoustic scale must be positive");
  detail::check_loglikes(lat, loglikes);
  const auto n = static_cast<std::size_t>(lat.num_nodes());
  const auto m = static_cast<std::size_t>(lat.num_arcs());
  PosteriorSet ps;
  ps.arc_score = arc_scores(lat, loglikes, kappa);
  ps.node_alpha.assign(n, kLogZero);
  ps.node_beta.assign(n, kLogZero);
  ps.arc_alpha.assign(m, kLogZero);
  ps.arc_beta.assign(m, kLogZero);
  ps.arc_posterior.assign(m, 0.0);

  const auto& order = lat.topological_order();
  ps.node_alpha[static_cast<std::size_t>(lat.start())] = 0.0;
  for (int u : order) {
    const double au = ps.node_alpha[static_cast<std::size_t>(u)];
    for (int q : lat.outgoing(u)) {
      const auto qi = static_cast<std::size_t>(q);
      ps.arc_alpha[qi] = au + ps.arc_score[qi];
      auto& dst = ps.node_alpha[static_cast<std::size_t>(lat.arc(q).dst)];
      dst = log_add(dst, ps.arc_alpha[qi]);
    }
  }
  ps.node_beta[static_cast<std::size_t>(lat.end())] = 0.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    const int u = *it;
    if (u == lat.end()) continue;
    double b = kLogZero;
    for (int q : lat.outgoing(u)) {
      const auto qi = static_cast<std::size_t>(q);
      ps.arc_beta[qi] = ps.node_beta[static_cast<std::size_t>(lat.arc(q).dst)];
      b = log_add(b, ps.arc_score[qi] + ps.arc_beta[qi]);
    }
    ps.node_beta[static_cast<std::size_t>(u)] = b;
  }
  ps.log_z = ps.node_alpha[static_cast<std::size_t>(lat.end())];
  ps.log_z_backward = ps.node_beta[static_cast<std::size_t>(lat.start())];
  if (!std::isfinite(ps.log_z)) throw NumericError("lattice partition value is not finite");

  ps.gamma = Matrix::Zero(loglikes.rows(), loglikes.cols());
  for (int q = 0; q < lat.num_arcs(); ++q) {
    const auto qi = static_cast<std::size_t>(q);
    if (ps.arc_alpha[qi] == kLogZero || ps.arc_beta[qi] == kLogZero) continue;
    const double p = std::exp(ps.arc_alpha[qi] + ps.arc_beta[qi] - ps.log_z);
    ps.arc_posterior[qi] = p;
    const auto& a = lat.arc(q);
    const int t0 = lat.time(a.src);
    for (std::size_t j = 0; j < a.labels.size(); ++j)
      ps.gamma(t0 + static_cast<Eigen::Index>(j), a.labels[j]) += p;
  }
  return ps;
}

/// Expected-loss statistics of an annotated lattice under a posterior set.
///   arc_expected_loss[q] = E[path loss | path uses q]
///   average = E[path loss] (c_avg)
///   gamma_hat(t, i) = gamma_t(i) * (E[loss | state i at t] - c_avg)
struct LossStatistics {
  std::vector<double> arc_expected_loss;
  double average = 0.0;
  Matrix gamma_hat;
};

inline LossStatistics loss_statistics(const Lattice& lat, const PosteriorSet& ps) {
  if (!lat.has_losses()) throw DataError("lattice carries no local-loss annotation");
  const auto n = static_cast<std::size_t>(lat.num_nodes());
  // fwd[u]: expected loss of the partial path start->u given the path reaches u.
  // bwd[u]: expected loss of u->end given the path passes u.
  std::vector<double> fwd(n, 0.0), bwd(n, 0.0);
  const auto& order = lat.topological_order();
  for (int u : order) {
    const double au = ps.node_alpha[static_cast<std::size_t>(u)];
    if (u == lat.start() || au == kLogZero) continue;
    double acc = 0.0;
    for (int q : lat.incoming(u)) {
      const auto& a = lat.arc(q);
      const double w = std::exp(ps.arc_alpha[static_cast<std::size_t>(q)] - au);
      acc += w * (fwd[static_cast<std::size_t>(a.src)] + a.loss);
    }
    fwd[static_cast<std::size_t>(u)] = acc;
  }
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    const int u = *it;
    const double bu = ps.node_beta[static_cast<std::size_t>(u)];
    if (u == lat.end() || bu == kLogZero) continue;
    double acc = 0.0;
    for (int q : lat.outgoing(u)) {
      const auto qi = static_cast<std::size_t>(q);
      const auto& a = lat.arc(q);
      const double w = std::exp(ps.arc_score[qi] + ps.arc_beta[qi] - bu);
      acc += w * (a.loss + bwd[static_cast<std::size_t>(a.dst)]);
    }
    bwd[static_cast<std::size_t>(u)] = acc;
  }
  LossStatistics st;
  st.average = fwd[static_cast<std::size_t>(lat.end())];
  st.arc_expected_loss.assign(static_cast<std::size_t>(lat.num_arcs()), 0.0);
  st.gamma_hat = Matrix::Zero(ps.gamma.rows(), ps.gamma.cols());
  for (int q = 0; q < lat.num_arcs(); ++q) {
    const auto qi = static_cast<std::size_t>(q);
    const auto& a = lat.arc(q);
    const double c = fwd[static_cast<std::size_t>(a.src)] + a.loss + bwd[static_cast<std::size_t>(a.dst)];
    st.arc_expected_loss[qi] = c;
    const double p = ps.arc_posterior[qi];
    if (p == 0.0) continue;
    const int t0 = lat.time(a.src);
    for (std::size_t j = 0; j < a.labels.size(); ++j)
      st.gamma_hat(t0 + static_cast<Eigen::Index>(j), a.labels[j]) += p * (c - st.average);
  }
  return st;
}

struct ViterbiResult {
  std::vector<int> arcs;
  std::vector<int> symbols;
  double score = kLogZero;  // kappa-scaled log score of the path
};

inline ViterbiResult viterbi_decode(const Lattice& lat, const Matrix& loglikes, double kappa) {
  if (!(kappa > 0.0)) throw UsageError("acoustic scale must be positive");
  detail::check_loglikes(lat, loglikes);
  const auto s = arc_scores(lat, loglikes, kappa);
  const auto n = static_cast<std::size_t>(lat.num_nodes());
  std::vector<double> best(n, kLogZero);
  std::vector<int> back(n, -1);
  best[static_cast<std::size_t>(lat.start())] = 0.0;
  for (int u : lat.topological_order()) {
    const double bu = best[static_cast<std::size_t>(u)];
    if (bu == kLogZero) continue;
    for (int q : lat.outgoing(u)) {
      const auto d = static_cast<std::size_t>(lat.arc(q).dst);
      const double cand = bu + s[static_cast<std::size_t>(q)];
      if (cand > best[d]) {
        best[d] = cand;
        back[d] = q;
      }
    }
  }
  ViterbiResult r;
  r.score = best[static_cast<std::size_t>(lat.end())];
  for (int u = lat.end(); u != lat.start();) {
    const int q = back[static_cast<std::size_t>(u)];
    r.arcs.push_back(q);
    u = lat.arc(q).src;
  }
  std::reverse(r.arcs.begin(), r.arcs.end());
  for (int q : r.arcs) r.symbols.push_back(lat.arc(q).symbol);
  return r;
}

}  // namespace seqtrain
