// seqtrain/criteria.hpp

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

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "seqtrain/forward_backward.hpp"
#include "seqtrain/lattice.hpp"
#include "seqtrain/tensor_net.hpp"

namespace seqtrain {

enum class Criterion { ce, mmi, mpe, smbr };

inline const char* to_string(Criterion c) {
  switch (c) {
    case Criterion::ce: return "ce";
    case Criterion::mmi: return "mmi";
    case Criterion::mpe: return "mpe";
    default: return "smbr";
  }
}

inline Criterion parse_criterion(const std::string& s) {
  if (s == "ce") return Criterion::ce;
  if (s == "mmi") return Criterion::mmi;
  if (s == "mpe") return Criterion::mpe;
  if (s == "smbr") return Criterion::smbr;
  throw ConfigError("unknown criterion '" + s + "'");
}

inline LossLevel loss_level_for(Criterion c) {
  if (c == Criterion::mpe) return LossLevel::phone;
  if (c == Criterion::smbr) return LossLevel::state;
  return LossLevel::none;
}

/// The training code minimises objective = sign * criterion value. MMI is a
/// log-probability to be maximised; the loss-form criteria are minimised as is.
inline double objective_sign(Criterion c) { return c == Criterion::mmi ? -1.0 : 1.0; }

/// One training utterance: features, the time-aligned reference and the
/// denominator lattice. The numerator is stored as the denominator arcs that
/// spell the reference, which makes MMI <= 0 hold by construction.
struct UtteranceExample {
  FrameBatch features;
  Reference reference;
  Lattice denominator;      // unannotated
  Lattice phone_lattice;    // same arcs, phone-level local losses
  Lattice state_lattice;    // same arcs, state-level local losses
  std::vector<int> numerator;

  static UtteranceExample make(FrameBatch features, Reference reference, const Lattice& lattice) {
    features.validate();
    reference.validate();
    if (features.num_frames() != reference.num_frames() ||
        lattice.num_frames() != reference.num_frames())
      throw DataError("features, reference and lattice disagree on the number of frames");
    UtteranceExample u;
    u.numerator = find_reference_path(lattice, reference);
    u.denominator = lattice.without_losses();
    u.phone_lattice = annotate_local_loss(u.denominator, reference, LossLevel::phone);
    u.state_lattice = annotate_local_loss(u.denominator, reference, LossLevel::state);
    u.features = std::move(features);
    u.reference = std::move(reference);
    return u;
  }

  const Lattice& lattice_for(LossLevel level) const {
    switch (level) {
      case LossLevel::phone: return phone_lattice;
      case LossLevel::state: return state_lattice;
      default: return denominator;
    }
  }

  int num_frames() const { return reference.num_frames(); }

  /// Denominator arcs whose boundaries, symbols and labels follow the reference
  /// segmentation. Throws DataError when the lattice does not contain it.
  static std::vector<int> find_reference_path(const Lattice& lat, const Reference& ref) {
    std::vector<int> path;
    int node = lat.start();
    for (const auto& seg : ref.segments) {
      if (lat.time(node) != seg.start) break;
      int found = -1;
      for (int q : lat.outgoing(node)) {
        const auto& a = lat.arc(q);
        if (a.symbol != seg.symbol || lat.time(a.dst) != seg.end) continue;
        bool same = true;
        for (int t = seg.start; t < seg.end && same; ++t)
          same = a.labels[static_cast<std::size_t>(t - seg.start)] ==
                 ref.states[static_cast<std::size_t>(t)];
        if (same) {
          found = q;
          break;
        }
      }
      if (found < 0) break;
      path.push_back(found);
      node = lat.arc(found).dst;
    }
    if (path.size() != ref.segments.size() || node != lat.end())
      throw DataError("reference path is not present in the denominator lattice");
    return path;
  }
};

/// Per-utterance criterion statistics (no 1/R scaling).
struct UtteranceStats {
  double value = 0.0;          // log P(H^r|O^r), expected loss, or summed frame CE
  Matrix activation_gradient;  // d value / d a_t
  Matrix gamma;                // denominator occupancies (softmax outputs for CE)
  Matrix gamma_hat;            // MBR only: gamma * (L(i) - c_avg)
  double average_loss = 0.0;   // MBR only: c_avg
};

struct CriterionOutput {
  double value = 0.0;  // (1/R) sum_r value_r  (CE: mean over frames)
  std::vector<Matrix> activation_gradient;
  std::vector<Matrix> gamma;
  std::vector<Matrix> gamma_hat;
  std::vector<double> average_loss;
};

/// Acoustic log-likelihoods from output activations: log-softmax of a_t, i.e.
/// scaled likelihoods with a uniform state prior.
inline Matrix acoustic_loglikes(const Matrix& activations) { return log_softmax_rows(activations); }

namespace detail {

// Chain a derivative w.r.t. log-softmax outputs back to the activations.
inline Matrix through_log_softmax(const Matrix& d_loglike, const Matrix& activations) {
  const Matrix y = softmax_rows(activations);
  Matrix d = d_loglike;
  for (Eigen::Index t = 0; t < d.rows(); ++t) d.row(t) -= d_loglike.row(t).sum() * y.row(t);
  return d;
}

inline Matrix one_hot(const std::vector<int>& states, Eigen::Index dim) {
  Matrix m = Matrix::Zero(static_cast<Eigen::Index>(states.size()), dim);
  for (std::size_t t = 0; t < states.size(); ++t) {
    if (states[t] < 0 || states[t] >= dim) throw DataError("reference state out of range");
    m(static_cast<Eigen::Index>(t), states[t]) = 1.0;
  }
  return m;
}

inline void check_activations(const UtteranceExample& utt, const Matrix& activations) {
  if (activations.rows() != utt.num_frames())
    throw UsageError("activations do not match the utterance length");
}

}  // namespace detail

inline UtteranceStats mmi_utterance(const UtteranceExample& utt, const Matrix& activations,
                                    double kappa) {
  detail::check_activations(utt, activations);
  const Matrix ll = acoustic_loglikes(activations);
  const PosteriorSet ps = forward_backward(utt.denominator, ll, kappa);
  double num_score = 0.0;
  for (int q : utt.numerator) num_score += ps.arc_score[static_cast<std::size_t>(q)];
  UtteranceStats st;
  st.value = num_score - ps.log_z;
  const Matrix num_gamma = detail::one_hot(utt.reference.states, activations.cols());
  st.activation_gradient = detail::through_log_softmax(kappa * (num_gamma - ps.gamma), activations);
  st.gamma = ps.gamma;
  return st;
}

inline UtteranceStats mbr_utterance(const UtteranceExample& utt, const Matrix& activations,
                                    double kappa, LossLevel level) {
  if (level == LossLevel::none) throw DataError("MBR criterion needs a loss level");
  detail::check_activations(utt, activations);
  const Lattice& lat = utt.lattice_for(level);
  const Matrix ll = acoustic_loglikes(activations);
  const PosteriorSet ps = forward_backward(lat, ll, kappa);
  const LossStatistics ls = loss_statistics(lat, ps);
  UtteranceStats st;
  for (int q = 0; q < lat.num_arcs(); ++q)
    st.value += ps.arc_posterior[static_cast<std::size_t>(q)] * lat.arc(q).loss;
  st.activation_gradient = detail::through_log_softmax(kappa * ls.gamma_hat, activations);
  st.gamma = ps.gamma;
  st.gamma_hat = ls.gamma_hat;
  st.average_loss = ls.average;
  return st;
}

/// Summed frame cross entropy of softmax(a_t) against the reference states.
inline UtteranceStats ce_utterance(const UtteranceExample& utt, const Matrix& activations) {
  detail::check_activations(utt, activations);
  const Matrix ll = log_softmax_rows(activations);
  const Matrix target = detail::one_hot(utt.reference.states, activations.cols());
  UtteranceStats st;
  st.value = -(ll.array() * target.array()).sum();
  st.gamma = ll.array().exp().matrix();
  st.activation_gradient = st.gamma - target;
  return st;
}

inline UtteranceStats criterion_utterance(Criterion c, const UtteranceExample& utt,
                                          const Matrix& activations, double kappa) {
  switch (c) {
    case Criterion::ce: return ce_utterance(utt, activations);
    case Criterion::mmi: return mmi_utterance(utt, activations, kappa);
    default: return mbr_utterance(utt, activations, kappa, loss_level_for(c));
  }
}

namespace detail {

inline CriterionOutput reduce(std::span<const UtteranceExample> batch,
                              std::span<const Matrix> activations,
                              const std::function<UtteranceStats(const UtteranceExample&,
                                                                 const Matrix&)>& per_utt,
                              double normalizer) {
  if (batch.empty()) throw UsageError("empty batch");
  if (batch.size() != activations.size())
    throw UsageError("one activation matrix per utterance required");
  CriterionOutput out;
  for (std::size_t r = 0; r < batch.size(); ++r) {
    UtteranceStats st = per_utt(batch[r], activations[r]);
    out.value += st.value / normalizer;
    out.activation_gradient.push_back(st.activation_gradient / normalizer);
    out.gamma.push_back(std::move(st.gamma));
    out.gamma_hat.push_back(std::move(st.gamma_hat));
    out.average_loss.push_back(st.average_loss);
  }
  return out;
}

}  // namespace detail

/// F_MMI = (1/R) sum_r log P(H^r|O^r); gradient (kappa/R)(gamma_num - gamma_den)
/// per frame, w.r.t. the log-likelihoods.
inline CriterionOutput mmi_criterion(std::span<const UtteranceExample> batch,
                                     std::span<const Matrix> activations, double kappa) {
  return detail::reduce(
      batch, activations,
      [kappa](const UtteranceExample& u, const Matrix& a) { return mmi_utterance(u, a, kappa); },
      static_cast<double>(batch.size()));
}

/// F_MBR = (1/R) sum_r sum_q P(q|O^r) L(q, q^r).
inline CriterionOutput mbr_criterion(std::span<const UtteranceExample> batch,
                                     std::span<const Matrix> activations, double kappa,
                                     LossLevel level) {
  return detail::reduce(
      batch, activations,
      [kappa, level](const UtteranceExample& u, const Matrix& a) {
        return mbr_utterance(u, a, kappa, level);
      },
      static_cast<double>(batch.size()));
}

/// Mean frame cross entropy over every frame of the batch.
inline CriterionOutput ce_criterion(std::span<const UtteranceExample> batch,
                                    std::span<const Matrix> activations) {
  double frames = 0.0;
  for (const auto& u : batch) frames += u.num_frames();
  return detail::reduce(
      batch, activations, [](const UtteranceExample& u, const Matrix& a) { return ce_utterance(u, a); },
      frames);
}

}  // namespace seqtrain
