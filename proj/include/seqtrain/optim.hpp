// seqtrain/optim.hpp

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
#include <chrono>
#include <cmath>
#include <concepts>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Eigenvalues>

#include "seqtrain/cg.hpp"
#include "seqtrain/curvature.hpp"

namespace seqtrain {

enum class Method { sgd, hf, dsag_hf, ng };

inline const char* to_string(Method m) {
  switch (m) {
    case Method::sgd: return "sgd";
    case Method::hf: return "hf";
    case Method::dsag_hf: return "dsag_hf";
    default: return "ng";
  }
}

inline Method parse_method(const std::string& s) {
  if (s == "sgd") return Method::sgd;
  if (s == "hf") return Method::hf;
  if (s == "dsag_hf" || s == "dsag-hf") return Method::dsag_hf;
  if (s == "ng") return Method::ng;
  throw ConfigError("unknown optimiser '" + s + "'");
}

struct OptimizerConfig {
  Method method = Method::ng;

  // sgd
  double learning_rate = 1e-4;
  double clip_threshold = 1.0;  // per-layer gradient norm bound
  int sgd_batch_utterances = 1;

  // hf / dsag_hf / ng
  double lambda = 1.0;
  double lambda_min = 1e-6;
  double lambda_max = 1e6;
  double lambda_factor = 1.5;  // Levenberg-Marquardt step
  double batch_fraction = 0.25;
  double curvature_fraction = 0.01;
  int curvature_min_utterances = 4;
  int max_backtracks = 3;
  CGConfig cg;
  double dsag_mu = 0.5;
  double fisher_floor = 1e-8;
  // ng: the ridge added to lambda * I_hat is
  //   max(fisher_floor, lambda * fisher_smoothing * trace(I_hat) / dim).
  double fisher_smoothing = 1.0;

  /// Per-method defaults: CG budgets of 5 (HF variants) and 8 (NG)
  /// iterations; NG starts from a larger lambda since it scales I_hat.
  static OptimizerConfig defaults(Method m) {
    OptimizerConfig c;
    c.method = m;
    c.cg.max_iters = m == Method::ng ? 8 : 5;
    if (m == Method::ng) c.lambda = 10.0;
    c.cg.init = m == Method::dsag_hf ? CgInit::blended : CgInit::gradient;
    c.cg.blend_weight = c.dsag_mu;
    return c;
  }

  void validate() const {
    if (method == Method::sgd) {
      if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
      if (!(clip_threshold > 0.0)) throw ConfigError("clip_threshold must be positive");
      if (sgd_batch_utterances < 1) throw ConfigError("sgd_batch_utterances must be >= 1");
      return;
    }
    if (!(lambda > 0.0) || !(lambda_min > 0.0) || !(lambda_max >= lambda_min))
      throw ConfigError("lambda bounds must be positive and ordered");
    if (!(lambda_factor > 1.0)) throw ConfigError("lambda_factor must exceed 1");
    if (!(batch_fraction > 0.0 && batch_fraction <= 1.0))
      throw ConfigError("batch_fraction must lie in (0, 1]");
    if (!(curvature_fraction > 0.0 && curvature_fraction <= 1.0))
      throw ConfigError("curvature_fraction must lie in (0, 1]");
    if (curvature_min_utterances < 1) throw ConfigError("curvature_min_utterances must be >= 1");
    if (max_backtracks < 0) throw ConfigError("max_backtracks must be >= 0");
    if (!(dsag_mu >= 0.0 && dsag_mu <= 1.0)) throw ConfigError("dsag_mu must lie in [0, 1]");
    if (method == Method::ng && !(fisher_floor > 0.0))
      throw ConfigError("fisher_floor must be positive");
    if (fisher_smoothing < 0.0) throw ConfigError("fisher_smoothing must be >= 0");
    cg.validate();
  }
};

enum class UpdateStatus { accepted, rejected, skipped };

inline const char* to_string(UpdateStatus s) {
  switch (s) {
    case UpdateStatus::accepted: return "accepted";
    case UpdateStatus::rejected: return "rejected";
    default: return "skipped";
  }
}

struct UpdateRecord {
  long index = 0;
  double objective_before = 0.0;
  double objective_after = 0.0;
  double step_norm = 0.0;
  double lambda = 0.0;        // damping of the final CG run
  int cg_iterations = 0;
  int cg_restarts = 0;        // CG aborts that forced a larger lambda
  int backtracks = 0;
  double reduction_ratio = 0.0;
  UpdateStatus status = UpdateStatus::accepted;
  double compute = 0.0;       // gradient-equivalent cost of this update
  double wall_seconds = 0.0;
};

struct Evaluation {
  double objective = 0.0;
  ParameterVector gradient;
};

/// What an optimiser needs from a training problem. Batches are lists of
/// example indices; reductions happen in index order.
template <typename P>
concept TrainingProblem =
    requires(const P& p, const ParameterVector& theta, std::span<const std::size_t> batch,
             double damping) {
      { p.dim() } -> std::convertible_to<Eigen::Index>;
      { p.num_examples() } -> std::convertible_to<std::size_t>;
      { p.objective(theta, batch) } -> std::convertible_to<double>;
      { p.evaluate(theta, batch) } -> std::same_as<Evaluation>;
      { p.gauss_newton(theta, batch, damping) } -> std::convertible_to<CurvatureOperator>;
      { p.fisher_gradients(theta, batch) } -> std::same_as<std::vector<ParameterVector>>;
      { p.parameter_blocks() } -> std::convertible_to<std::vector<std::pair<Eigen::Index, Eigen::Index>>>;
      { p.compute_used() } -> std::convertible_to<double>;
    };

/// Mutable optimiser state carried across updates.
struct OptimizerState {
  double lambda = 1.0;
  ParameterVector blend;  // DSAG-HF direction buffer; empty when cold
  long updates = 0;
  std::mt19937_64 rng;

  OptimizerState() = default;
  OptimizerState(const OptimizerConfig& cfg, std::uint64_t seed) : lambda(cfg.lambda), rng(seed) {}

  void reset_blend() { blend.resize(0); }
};

namespace detail {

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

inline double adapt_lambda(double lambda, double rho, const OptimizerConfig& cfg) {
  if (rho > 0.75)
    lambda /= cfg.lambda_factor;
  else if (rho < 0.25)
    lambda *= cfg.lambda_factor;
  return std::clamp(lambda, cfg.lambda_min, cfg.lambda_max);
}

}  // namespace detail

/// Uniform sample without replacement from `batch`, returned in index order.
inline std::vector<std::size_t> sample_curvature_batch(std::span<const std::size_t> batch,
                                                       std::size_t num_examples,
                                                       const OptimizerConfig& cfg,
                                                       std::mt19937_64& rng) {
  auto want = static_cast<std::size_t>(
      std::llround(cfg.curvature_fraction * static_cast<double>(num_examples)));
  want = std::max(want, static_cast<std::size_t>(cfg.curvature_min_utterances));
  want = std::min(want, batch.size());
  std::vector<std::size_t> pool(batch.begin(), batch.end());
  for (std::size_t i = 0; i < want; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
    std::swap(pool[i], pool[pick(rng)]);
  }
  pool.resize(want);
  std::sort(pool.begin(), pool.end());
  return pool;
}

/// Curvature operator used by the second-order methods at damping lambda.
template <TrainingProblem P>
CurvatureOperator build_curvature(const P& problem, Method method, const ParameterVector& theta,
                                  std::span<const std::size_t> curvature_batch, double lambda,
                                  const OptimizerConfig& cfg,
                                  const std::vector<ParameterVector>* fisher_grads) {
  if (method != Method::ng) return problem.gauss_newton(theta, curvature_batch, lambda);
  FisherOperator probe(*fisher_grads, 1.0, 0.0);
  const double ridge = std::max(
      cfg.fisher_floor,
      lambda * cfg.fisher_smoothing * probe.trace() / static_cast<double>(probe.dim()));
  if constexpr (requires { problem.fisher_operator(*fisher_grads, lambda, ridge); })
    return problem.fisher_operator(*fisher_grads, lambda, ridge);
  else
    return FisherOperator(*fisher_grads, lambda, ridge);
}

/// Shared body of hf_update, dsag_hf_update and ng_update:
///   b = -grad F, solve (B + damping) delta = b with truncated CG, then
///   backtrack on the batch objective and adapt lambda.
template <TrainingProblem P>
std::pair<ParameterVector, UpdateRecord> second_order_update(
    const P& problem, const ParameterVector& theta, std::span<const std::size_t> batch,
    const OptimizerConfig& cfg, OptimizerState& state) {
  if (batch.empty()) throw UsageError("empty update batch");
  detail::Stopwatch clock;
  const double compute0 = problem.compute_used();
  UpdateRecord rec;
  rec.index = ++state.updates;

  const Evaluation ev = problem.evaluate(theta, batch);
  rec.objective_before = ev.objective;
  rec.objective_after = ev.objective;
  const ParameterVector b = -ev.gradient;

  auto finish = [&](ParameterVector out) {
    rec.step_norm = (out - theta).norm();
    rec.compute = problem.compute_used() - compute0;
    rec.wall_seconds = clock.seconds();
    return std::make_pair(std::move(out), rec);
  };

  if (b.squaredNorm() == 0.0) {
    rec.lambda = state.lambda;
    rec.reduction_ratio = 1.0;
    return finish(theta);
  }

  const std::vector<std::size_t> curv =
      sample_curvature_batch(batch, problem.num_examples(), cfg, state.rng);
  std::vector<ParameterVector> fisher_grads;
  if (cfg.method == Method::ng) fisher_grads = problem.fisher_gradients(theta, curv);

  std::optional<ParameterVector> init;
  if (cfg.method == Method::dsag_hf && cfg.cg.init == CgInit::blended)
    init = blend_direction(state.blend, b, cfg.dsag_mu);

  std::optional<CGResult> cg;
  double lambda = state.lambda;
  for (int attempt = 0; attempt < 2 && !cg; ++attempt) {
    const CurvatureOperator op =
        build_curvature(problem, cfg.method, theta, curv, lambda, cfg, &fisher_grads);
    try {
      cg = cg_solve(op, b, cfg.cg, init);
    } catch (const CgAbort&) {
      ++rec.cg_restarts;
      lambda = std::min(lambda * 10.0, cfg.lambda_max);
    }
  }
  if (!cg) {
    state.lambda = lambda;
    rec.lambda = lambda;
    rec.status = UpdateStatus::skipped;
    return finish(theta);
  }
  rec.cg_iterations = cg->iterations;

  const ParameterVector& delta = cg->delta;
  rec.lambda = lambda;

  bool accepted = false;
  double first_f = std::numeric_limits<double>::infinity();
  ParameterVector candidate;
  for (int k = 0; k <= cfg.max_backtracks; ++k) {
    candidate = theta + std::ldexp(1.0, -k) * delta;
    double f = std::numeric_limits<double>::infinity();
    try {
      f = problem.objective(candidate, batch);
    } catch (const NumericError&) {
    }
    if (k == 0) first_f = f;
    rec.backtracks = k;
    if (f <= ev.objective) {
      rec.objective_after = f;
      accepted = true;
      break;
    }
  }
  // Quadratic model decrease for the full step.
  const double predicted = cg->delta_dot_b - 0.5 * cg->delta_b_delta;
  rec.reduction_ratio = predicted > 0.0 ? (ev.objective - first_f) / predicted : -1.0;
  if (!std::isfinite(rec.reduction_ratio)) rec.reduction_ratio = -1.0;
  state.lambda = detail::adapt_lambda(lambda, rec.reduction_ratio, cfg);
  if (cfg.method == Method::dsag_hf) state.blend = init ? *init : b;

  if (!accepted) {
    rec.status = UpdateStatus::rejected;
    return finish(theta);
  }
  return finish(std::move(candidate));
}

/// Hessian-free update: Gauss-Newton curvature on a subsample of the batch.
template <TrainingProblem P>
std::pair<ParameterVector, UpdateRecord> hf_update(const P& problem, const ParameterVector& theta,
                                                   std::span<const std::size_t> batch,
                                                   const OptimizerConfig& cfg,
                                                   OptimizerState& state) {
  OptimizerConfig c = cfg;
  c.method = Method::hf;
  if (c.cg.init == CgInit::blended) c.cg.init = CgInit::gradient;
  return second_order_update(problem, theta, batch, c, state);
}

/// DSAG-HF: HF with CG started from a blend of the previous and current
/// gradient directions. The first update (empty buffer) is an HF update.
template <TrainingProblem P>
std::pair<ParameterVector, UpdateRecord> dsag_hf_update(const P& problem,
                                                        const ParameterVector& theta,
                                                        std::span<const std::size_t> batch,
                                                        const OptimizerConfig& cfg,
                                                        OptimizerState& state) {
  OptimizerConfig c = cfg;
  c.method = Method::dsag_hf;
  c.cg.init = CgInit::blended;
  return second_order_update(problem, theta, batch, c, state);
}

/// Natural gradient: lambda * I_hat + ridge, with I_hat the empirical Fisher
/// of per-utterance MMI gradients, whatever the training criterion.
template <TrainingProblem P>
std::pair<ParameterVector, UpdateRecord> ng_update(const P& problem, const ParameterVector& theta,
                                                   std::span<const std::size_t> batch,
                                                   const OptimizerConfig& cfg,
                                                   OptimizerState& state) {
  OptimizerConfig c = cfg;
  c.method = Method::ng;
  if (c.cg.init == CgInit::blended) c.cg.init = CgInit::gradient;
  return second_order_update(problem, theta, batch, c, state);
}

/// Rescale every block whose norm exceeds `threshold` down to the threshold.
inline void clip_blocks(ParameterVector& grad,
                        const std::vector<std::pair<Eigen::Index, Eigen::Index>>& blocks,
                        double threshold) {
  for (const auto& [offset, size] : blocks) {
    auto seg = grad.segment(offset, size);
    const double n = seg.norm();
    if (n > threshold) seg *= threshold / n;
  }
}

template <TrainingProblem P>
std::pair<ParameterVector, UpdateRecord> sgd_update(const P& problem, const ParameterVector& theta,
                                                    std::span<const std::size_t> minibatch,
                                                    const OptimizerConfig& cfg,
                                                    OptimizerState& state) {
  if (minibatch.empty()) throw UsageError("empty minibatch");
  detail::Stopwatch clock;
  const double compute0 = problem.compute_used();
  UpdateRecord rec;
  rec.index = ++state.updates;
  Evaluation ev = problem.evaluate(theta, minibatch);
  rec.objective_before = ev.objective;
  clip_blocks(ev.gradient, problem.parameter_blocks(), cfg.clip_threshold);
  ParameterVector next = theta - cfg.learning_rate * ev.gradient;
  rec.objective_after = problem.objective(next, minibatch);
  rec.step_norm = cfg.learning_rate * ev.gradient.norm();
  rec.compute = problem.compute_used() - compute0;
  rec.wall_seconds = clock.seconds();
  return {std::move(next), rec};
}

template <TrainingProblem P>
std::pair<ParameterVector, UpdateRecord> optimizer_update(const P& problem,
                                                          const ParameterVector& theta,
                                                          std::span<const std::size_t> batch,
                                                          const OptimizerConfig& cfg,
                                                          OptimizerState& state) {
  switch (cfg.method) {
    case Method::sgd: return sgd_update(problem, theta, batch, cfg, state);
    case Method::hf: return hf_update(problem, theta, batch, cfg, state);
    case Method::dsag_hf: return dsag_hf_update(problem, theta, batch, cfg, state);
    default: return ng_update(problem, theta, batch, cfg, state);
  }
}

/// Update rebuilt from the eigensystem of an explicit curvature matrix,
///   delta = sum_i (v_i^T b / mu_i) v_i,
/// together with the spectrum it rescales by.
struct EigenDiagnostic {
  ParameterVector delta;
  Vector eigenvalues;      // ascending
  Vector projections;      // v_i^T b
};

inline EigenDiagnostic eigen_diagnostic(const Eigen::MatrixXd& curvature, const ParameterVector& b) {
  if (curvature.rows() != curvature.cols() || curvature.rows() != b.size())
    throw UsageError("eigen diagnostic needs a square matrix matching the gradient");
  if (curvature.rows() > 2000) throw UsageError("eigen diagnostic limited to dimension 2000");
  const double scale = std::max(curvature.cwiseAbs().maxCoeff(), 1e-300);
  if ((curvature - curvature.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
    throw UsageError("eigen diagnostic needs a symmetric matrix");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(curvature);
  if (es.info() != Eigen::Success) throw NumericError("eigendecomposition failed");
  EigenDiagnostic d;
  d.eigenvalues = es.eigenvalues();
  d.projections = es.eigenvectors().transpose() * b;
  d.delta = ParameterVector::Zero(b.size());
  for (Eigen::Index i = 0; i < d.eigenvalues.size(); ++i) {
    if (d.eigenvalues[i] == 0.0) continue;
    d.delta += (d.projections[i] / d.eigenvalues[i]) * es.eigenvectors().col(i);
  }
  return d;
}

}  // namespace seqtrain
