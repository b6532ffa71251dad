// seqtrain/cg.hpp

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

#include <concepts>
#include <optional>
#include <string>
#include <vector>

#include "seqtrain/common.hpp"

namespace seqtrain {

template <typename Op>
concept LinearOperator = requires(const Op& op, const ParameterVector& v) {
  { op.dim() } -> std::convertible_to<Eigen::Index>;
  { op.apply(v) } -> std::convertible_to<ParameterVector>;
};

enum class CgInit { zero, gradient, blended };

inline CgInit parse_cg_init(const std::string& s) {
  if (s == "zero") return CgInit::zero;
  if (s == "gradient") return CgInit::gradient;
  if (s == "blended") return CgInit::blended;
  throw ConfigError("unknown CG initialisation '" + s + "'");
}

inline const char* to_string(CgInit i) {
  switch (i) {
    case CgInit::zero: return "zero";
    case CgInit::gradient: return "gradient";
    default: return "blended";
  }
}

struct CGConfig {
  int max_iters = 5;
  double residual_tol = 1e-10;  // relative to |b|
  CgInit init = CgInit::gradient;
  double blend_weight = 0.5;    // mu, for CgInit::blended

  void validate() const {
    if (max_iters < 1) throw ConfigError("CG needs at least one iteration");
    if (!(residual_tol > 0.0)) throw ConfigError("CG residual tolerance must be positive");
    if (!(blend_weight >= 0.0 && blend_weight <= 1.0))
      throw ConfigError("CG blend weight must lie in [0, 1]");
  }
};

struct CGResult {
  ParameterVector delta;
  // phi_j = -delta_j^T b + 1/2 delta_j^T B delta_j, starting with the initial
  // iterate (j = 0).
  std::vector<double> model_values;
  double residual_norm = 0.0;
  int iterations = 0;      // operator products spent inside the CG loop
  double delta_dot_b = 0.0;
  double delta_b_delta = 0.0;  // delta^T B delta

  double model_value() const { return model_values.back(); }
};

/// Thrown when a search direction has non-positive curvature.
class CgAbort : public Error {
 public:
  CgAbort(double curvature, int iteration)
      : Error(detail::cat("non-positive curvature p^T B p = ", curvature, " at CG iteration ",
                          iteration)),
        curvature_(curvature),
        iteration_(iteration) {}
  double curvature() const { return curvature_; }
  int iteration() const { return iteration_; }

 private:
  double curvature_;
  int iteration_;
};

/// Blend of a previous direction and the current right-hand side, rescaled to
/// the norm of b: mu * prev + (1 - mu) * b.
inline ParameterVector blend_direction(const ParameterVector& previous, const ParameterVector& b,
                                       double mu) {
  if (previous.size() == 0 || mu == 0.0) return b;
  if (previous.size() != b.size()) throw UsageError("blend buffer has the wrong length");
  ParameterVector d = mu * previous + (1.0 - mu) * b;
  const double n = d.norm();
  if (n == 0.0) return b;
  return d * (b.norm() / n);
}

/// Linear conjugate gradient for B x = b, B symmetric positive definite.
/// With an initial direction d (gradient or blended initialisation) the first
/// iterate is the exact minimiser of the quadratic model along d,
/// x_0 = (d^T b / d^T B d) d.
template <LinearOperator Op>
CGResult cg_solve(const Op& op, const ParameterVector& b, const CGConfig& cfg,
                  const std::optional<ParameterVector>& init_direction = std::nullopt) {
  cfg.validate();
  if (b.size() != op.dim()) throw UsageError("right-hand side has the wrong length");
  if (!b.allFinite()) throw NumericError("non-finite right-hand side");
  const Eigen::Index n = b.size();
  CGResult res;
  ParameterVector x = ParameterVector::Zero(n);
  ParameterVector r = b;

  if (cfg.init != CgInit::zero) {
    const ParameterVector d = init_direction ? *init_direction : b;
    if (d.size() != n) throw UsageError("initial direction has the wrong length");
    if (d.squaredNorm() > 0.0) {
      const ParameterVector bd = op.apply(d);
      const double dbd = d.dot(bd);
      if (!(dbd > 0.0)) throw CgAbort(dbd, 0);
      const double alpha = d.dot(b) / dbd;
      x = alpha * d;
      r = b - alpha * bd;
    }
  }
  auto phi = [&] { return -0.5 * x.dot(b + r); };
  res.model_values.push_back(phi());

  const double bnorm = b.norm();
  const double stop = cfg.residual_tol * (bnorm > 0.0 ? bnorm : 1.0);
  ParameterVector p = r;
  double rr = r.squaredNorm();
  for (int j = 0; j < cfg.max_iters; ++j) {
    if (std::sqrt(rr) <= stop) break;
    const ParameterVector bp = op.apply(p);
    const double pbp = p.dot(bp);
    if (!(pbp > 0.0)) throw CgAbort(pbp, j + 1);
    const double alpha = rr / pbp;
    x += alpha * p;
    r -= alpha * bp;
    const double rr_new = r.squaredNorm();
    p = r + (rr_new / rr) * p;
    rr = rr_new;
    ++res.iterations;
    res.model_values.push_back(phi());
  }
  res.residual_norm = std::sqrt(rr);
  res.delta_dot_b = x.dot(b);
  res.delta_b_delta = x.dot(b - r);
  res.delta = std::move(x);
  return res;
}

}  // namespace seqtrain
