// seqtrain/sequence_problem.hpp

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
#include <numeric>
#include <span>
#include <utility>
#include <vector>

#include "seqtrain/curvature.hpp"
#include "seqtrain/optim.hpp"

namespace seqtrain {

/// A criterion on a fixed utterance set, exposed through the TrainingProblem
/// interface. The objective is minimised: objective_sign(criterion) * F.
///
/// Cost is counted in frame passes: a forward pass costs 1 per frame, a
/// gradient 3 (forward plus backward), a curvature product 4 per cached frame
/// (R-op plus backward). compute_used() divides by the cost of one full
/// training-set gradient, so one gradient epoch is 1.0.
class SequenceProblem {
 public:
  SequenceProblem(Network net, std::span<const UtteranceExample> data, Criterion criterion,
                  double kappa, GaussNewtonOptions gn_options = {})
      : net_(std::move(net)), data_(data), criterion_(criterion), kappa_(kappa), gn_(gn_options) {
    if (data_.empty()) throw UsageError("training problem needs at least one utterance");
    if (!(kappa_ > 0.0)) throw ConfigError("acoustic scale must be positive");
    for (const auto& u : data_) total_frames_ += u.num_frames();
  }

  const Network& network() const { return net_; }
  Criterion criterion() const { return criterion_; }
  double kappa() const { return kappa_; }
  std::span<const UtteranceExample> data() const { return data_; }

  Eigen::Index dim() const { return net_.num_params(); }
  std::size_t num_examples() const { return data_.size(); }

  std::vector<std::size_t> all_indices() const {
    std::vector<std::size_t> idx(data_.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    return idx;
  }

  double objective(const ParameterVector& theta, std::span<const std::size_t> batch) const {
    double sum = 0.0;
    for (std::size_t i : batch) {
      const UtteranceExample& u = example(i);
      const ActivationRecord rec = forward(net_, theta, u.features);
      sum += criterion_utterance(criterion_, u, rec.output, kappa_).value;
      charge(u.num_frames());
    }
    return objective_sign(criterion_) * sum / normalizer(batch);
  }

  Evaluation evaluate(const ParameterVector& theta, std::span<const std::size_t> batch) const {
    Evaluation ev;
    ev.gradient = ParameterVector::Zero(dim());
    for (std::size_t i : batch) {
      const UtteranceExample& u = example(i);
      const ActivationRecord rec = forward(net_, theta, u.features);
      const UtteranceStats st = criterion_utterance(criterion_, u, rec.output, kappa_);
      ev.objective += st.value;
      ev.gradient += backward(net_, theta, rec, st.activation_gradient);
      charge(3.0 * u.num_frames());
    }
    const double s = objective_sign(criterion_) / normalizer(batch);
    ev.objective *= s;
    ev.gradient *= s;
    return ev;
  }

  CurvatureOperator gauss_newton(const ParameterVector& theta, std::span<const std::size_t> batch,
                                 double damping) const {
    GaussNewtonOperator op =
        build_gauss_newton(net_, theta, select(batch), criterion_, kappa_, damping, gn_);
    const double frames = frames_of(batch);
    op.set_apply_hook([this, frames] { charge(4.0 * frames); });
    return op;
  }

  std::vector<ParameterVector> fisher_gradients(const ParameterVector& theta,
                                                std::span<const std::size_t> batch) const {
    charge(3.0 * frames_of(batch));
    return build_fisher_gradients(net_, theta, select(batch), kappa_);
  }

  /// Fisher product cost: 2R length-P vector operations, about 2R frame passes.
  FisherOperator fisher_operator(std::vector<ParameterVector> grads, double scale,
                                 double damping) const {
    FisherOperator op(std::move(grads), scale, damping);
    const double r = static_cast<double>(op.gradients().size());
    op.set_apply_hook([this, r] { charge(2.0 * r); });
    return op;
  }

  std::vector<std::pair<Eigen::Index, Eigen::Index>> parameter_blocks() const {
    std::vector<std::pair<Eigen::Index, Eigen::Index>> out;
    for (const auto& b : net_.blocks()) out.emplace_back(b.offset, b.size());
    return out;
  }

  double compute_used() const { return frame_passes_ / (3.0 * total_frames_); }
  void reset_compute() { frame_passes_ = 0.0; }

 private:
  const UtteranceExample& example(std::size_t i) const {
    if (i >= data_.size()) throw UsageError("utterance index out of range");
    return data_[i];
  }

  std::vector<std::reference_wrapper<const UtteranceExample>> select(
      std::span<const std::size_t> batch) const {
    std::vector<std::reference_wrapper<const UtteranceExample>> out;
    out.reserve(batch.size());
    for (std::size_t i : batch) out.emplace_back(example(i));
    return out;
  }

  double frames_of(std::span<const std::size_t> batch) const {
    double f = 0.0;
    for (std::size_t i : batch) f += example(i).num_frames();
    return f;
  }

  double normalizer(std::span<const std::size_t> batch) const {
    if (batch.empty()) throw UsageError("empty batch");
    return criterion_ == Criterion::ce ? frames_of(batch) : static_cast<double>(batch.size());
  }

  void charge(double frame_passes) const { frame_passes_ += frame_passes; }

  Network net_;
  std::span<const UtteranceExample> data_;
  Criterion criterion_;
  double kappa_;
  GaussNewtonOptions gn_;
  double total_frames_ = 0.0;
  mutable double frame_passes_ = 0.0;
};

static_assert(TrainingProblem<SequenceProblem>);

}  // namespace seqtrain
