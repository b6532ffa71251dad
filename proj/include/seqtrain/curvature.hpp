// seqtrain/curvature.hpp

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
#include <ranges>
#include <span>
#include <utility>
#include <variant>
#include <vector>

#include "seqtrain/criteria.hpp"
#include "seqtrain/tensor_net.hpp"

namespace seqtrain {

// Matrix-free curvature products. Every operator exposes
//   Eigen::Index dim() const;
//   ParameterVector apply(const ParameterVector& v) const;
// and is read-only after construction.

/// Action of the MBR loss Hessian w.r.t. the output activations of one frame,
///   (kappa^2 / R) [diag(gamma_hat) - gamma_hat gamma^T],
/// with gamma_hat = gamma * L(s). The printed matrix is not symmetric, so by
/// default the symmetric part is applied; pass symmetrize = false for the raw
/// form.
inline Vector loss_hessian_apply(const Vector& gamma, const Vector& gamma_hat, double kappa,
                                 double num_utterances, const Vector& u, bool symmetrize = true) {
  if (gamma.size() != gamma_hat.size() || gamma.size() != u.size())
    throw UsageError("loss Hessian operands disagree in dimension");
  const double scale = kappa * kappa / num_utterances;
  Vector out = gamma_hat.cwiseProduct(u);
  if (symmetrize)
    out -= 0.5 * (gamma_hat * gamma.dot(u) + gamma * gamma_hat.dot(u));
  else
    out -= gamma_hat * gamma.dot(u);
  return scale * out;
}

/// Per-frame loss Hessians of one utterance, applied row by row.
struct FrameLossHessian {
  enum class Kind {
    mbr,                 // symmetrised MBR form
    mbr_unsymmetrized,   // diagnostic only; breaks CG's symmetry contract
    softmax,             // diag(p) - p p^T (cross entropy, per-frame MMI block)
    identity             // diagnostic: J^T J
  };

  Kind kind = Kind::identity;
  Matrix gamma;      // p for softmax
  Matrix gamma_hat;  // mbr only
  double scale = 1.0;

  Matrix apply(const Matrix& u) const {
    Matrix out(u.rows(), u.cols());
    switch (kind) {
      case Kind::identity:
        out = u;
        break;
      case Kind::softmax:
        for (Eigen::Index t = 0; t < u.rows(); ++t) {
          const double pu = gamma.row(t).dot(u.row(t));
          out.row(t) = gamma.row(t).cwiseProduct(u.row(t)) - pu * gamma.row(t);
        }
        break;
      case Kind::mbr:
      case Kind::mbr_unsymmetrized:
        for (Eigen::Index t = 0; t < u.rows(); ++t) {
          const double gu = gamma.row(t).dot(u.row(t));
          out.row(t) = gamma_hat.row(t).cwiseProduct(u.row(t));
          if (kind == Kind::mbr) {
            const double hu = gamma_hat.row(t).dot(u.row(t));
            out.row(t) -= 0.5 * (gu * gamma_hat.row(t) + hu * gamma.row(t));
          } else {
            out.row(t) -= gu * gamma_hat.row(t);
          }
        }
        break;
    }
    return scale * out;
  }
};

/// sum_r sum_t J_t^T H_t J_t v + damping * v over a cached curvature batch.
class GaussNewtonOperator {
 public:
  GaussNewtonOperator(Network net, ParameterVector theta, std::vector<ActivationRecord> records,
                      std::vector<FrameLossHessian> hessians, double damping)
      : net_(std::move(net)),
        theta_(std::move(theta)),
        records_(std::move(records)),
        hessians_(std::move(hessians)),
        damping_(damping) {
    if (records_.size() != hessians_.size())
      throw UsageError("one loss Hessian per cached utterance required");
    if (damping_ < 0.0) throw UsageError("damping must be non-negative");
  }

  Eigen::Index dim() const { return net_.num_params(); }
  double damping() const { return damping_; }
  std::size_t num_utterances() const { return records_.size(); }
  const Network& network() const { return net_; }
  const ParameterVector& parameters() const { return theta_; }

  /// Called once per apply(); used for cost accounting.
  void set_apply_hook(std::function<void()> hook) { hook_ = std::move(hook); }

  ParameterVector apply(const ParameterVector& v) const {
    if (v.size() != dim()) throw UsageError("vector length does not match the operator");
    if (hook_) hook_();
    ParameterVector out = damping_ * v;
    for (std::size_t r = 0; r < records_.size(); ++r) {
      const Matrix jv = rop(net_, theta_, records_[r], v);
      out += rop_transpose(net_, theta_, records_[r], hessians_[r].apply(jv));
    }
    return out;
  }

 private:
  Network net_;
  ParameterVector theta_;
  std::vector<ActivationRecord> records_;
  std::vector<FrameLossHessian> hessians_;
  double damping_;
  std::function<void()> hook_;
};

/// Which loss Hessian the Gauss-Newton operator uses.
enum class GaussNewtonLoss {
  criterion,   // the true loss of the training criterion (MBR form for MPE/sMBR)
  identity     // diagnostic
};

struct GaussNewtonOptions {
  GaussNewtonLoss loss = GaussNewtonLoss::criterion;
  bool symmetrize = true;
};

/// Builds the Gauss-Newton operator for `criterion` on `batch`, caching the
/// activation records and per-frame loss Hessians under theta. R is the size
/// of the curvature batch.
/// `batch` is any range of UtteranceExample (or reference_wrapper thereof).
template <std::ranges::sized_range Batch>
GaussNewtonOperator build_gauss_newton(const Network& net, const ParameterVector& theta,
                                       const Batch& batch, Criterion criterion, double kappa,
                                       double damping, GaussNewtonOptions opts = {}) {
  if (std::ranges::empty(batch)) throw UsageError("empty curvature batch");
  const double r = static_cast<double>(std::ranges::size(batch));
  double frames = 0.0;
  for (const UtteranceExample& u : batch) frames += u.num_frames();
  std::vector<ActivationRecord> records;
  std::vector<FrameLossHessian> hessians;
  for (const UtteranceExample& utt : batch) {
    ActivationRecord rec = forward(net, theta, utt.features);
    FrameLossHessian h;
    if (opts.loss == GaussNewtonLoss::identity) {
      h.kind = FrameLossHessian::Kind::identity;
    } else if (criterion == Criterion::ce) {
      h.kind = FrameLossHessian::Kind::softmax;
      h.gamma = softmax_rows(rec.output);
      h.scale = 1.0 / frames;
    } else if (criterion == Criterion::mmi) {
      UtteranceStats st = mmi_utterance(utt, rec.output, kappa);
      h.kind = FrameLossHessian::Kind::softmax;
      h.gamma = std::move(st.gamma);
      h.scale = kappa * kappa / r;
    } else {
      UtteranceStats st = mbr_utterance(utt, rec.output, kappa, loss_level_for(criterion));
      h.kind = opts.symmetrize ? FrameLossHessian::Kind::mbr
                               : FrameLossHessian::Kind::mbr_unsymmetrized;
      h.gamma = std::move(st.gamma);
      h.gamma_hat = std::move(st.gamma_hat);
      h.scale = kappa * kappa / r;
    }
    records.push_back(std::move(rec));
    hessians.push_back(std::move(h));
  }
  return GaussNewtonOperator(net, theta, std::move(records), std::move(hessians), damping);
}

/// scale * (1/R) sum_r g_r g_r^T v + damping * v. Stores only the R gradients.
class FisherOperator {
 public:
  FisherOperator(std::vector<ParameterVector> grads, double scale, double damping)
      : grads_(std::move(grads)), scale_(scale), damping_(damping) {
    if (grads_.empty()) throw UsageError("empirical Fisher needs at least one gradient");
    for (const auto& g : grads_)
      if (g.size() != grads_.front().size()) throw UsageError("Fisher gradients differ in length");
    if (damping_ < 0.0 || scale_ < 0.0) throw UsageError("Fisher scale and damping must be >= 0");
  }

  Eigen::Index dim() const { return grads_.front().size(); }
  const std::vector<ParameterVector>& gradients() const { return grads_; }
  double scale() const { return scale_; }
  double damping() const { return damping_; }
  void set_apply_hook(std::function<void()> hook) { hook_ = std::move(hook); }

  /// trace of (1/R) sum_r g_r g_r^T
  double trace() const {
    double t = 0.0;
    for (const auto& g : grads_) t += g.squaredNorm();
    return t / static_cast<double>(grads_.size());
  }

  ParameterVector apply(const ParameterVector& v) const {
    if (v.size() != dim()) throw UsageError("vector length does not match the operator");
    if (hook_) hook_();
    ParameterVector out = damping_ * v;
    const double w = scale_ / static_cast<double>(grads_.size());
    for (const auto& g : grads_) out += (w * g.dot(v)) * g;
    return out;
  }

 private:
  std::vector<ParameterVector> grads_;
  double scale_;
  double damping_;
  std::function<void()> hook_;
};

inline ParameterVector fisher_apply(const std::vector<ParameterVector>& grads, double damping,
                                    const ParameterVector& v) {
  return FisherOperator(grads, 1.0, damping).apply(v);
}

/// Per-utterance gradients of log P(H^r|O^r) (kappa applied, no 1/R).
template <std::ranges::sized_range Batch>
std::vector<ParameterVector> build_fisher_gradients(const Network& net,
                                                    const ParameterVector& theta,
                                                    const Batch& batch, double kappa) {
  if (std::ranges::empty(batch)) throw UsageError("empty curvature batch");
  std::vector<ParameterVector> grads;
  grads.reserve(std::ranges::size(batch));
  for (const UtteranceExample& utt : batch) {
    const ActivationRecord rec = forward(net, theta, utt.features);
    const UtteranceStats st = mmi_utterance(utt, rec.output, kappa);
    grads.push_back(backward(net, theta, rec, st.activation_gradient));
  }
  return grads;
}

/// Explicit dense symmetric operator plus damping; oracle and test use.
class DenseOperator {
 public:
  explicit DenseOperator(Eigen::MatrixXd m, double damping = 0.0)
      : m_(std::move(m)), damping_(damping) {
    if (m_.rows() != m_.cols()) throw UsageError("dense operator must be square");
    if (!m_.allFinite()) throw NumericError("dense operator has non-finite entries");
  }
  Eigen::Index dim() const { return m_.rows(); }
  const Eigen::MatrixXd& matrix() const { return m_; }
  double damping() const { return damping_; }
  ParameterVector apply(const ParameterVector& v) const {
    if (v.size() != dim()) throw UsageError("vector length does not match the operator");
    return m_ * v + damping_ * v;
  }

 private:
  Eigen::MatrixXd m_;
  double damping_;
};

/// Type-erased curvature operator: Gauss-Newton, empirical Fisher, or an
/// explicit matrix.
class CurvatureOperator {
 public:
  enum class Kind { gauss_newton, empirical_fisher, explicit_oracle };

  CurvatureOperator(GaussNewtonOperator op) : op_(std::move(op)) {}
  CurvatureOperator(FisherOperator op) : op_(std::move(op)) {}
  CurvatureOperator(DenseOperator op) : op_(std::move(op)) {}

  Kind kind() const { return static_cast<Kind>(op_.index()); }
  Eigen::Index dim() const {
    return std::visit([](const auto& o) { return o.dim(); }, op_);
  }
  double damping() const {
    return std::visit([](const auto& o) { return o.damping(); }, op_);
  }
  ParameterVector apply(const ParameterVector& v) const {
    return std::visit([&](const auto& o) { return o.apply(v); }, op_);
  }
  template <typename T>
  const T& get() const { return std::get<T>(op_); }

 private:
  std::variant<GaussNewtonOperator, FisherOperator, DenseOperator> op_;
};

}  // namespace seqtrain
