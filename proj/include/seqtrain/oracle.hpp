// seqtrain/oracle.hpp

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

// Brute-force reference implementations for tests and diagnostics. Nothing
// here reuses the lattice recursions, the criterion code or the R-op; the
// network is re-evaluated with plain loops over dual numbers.

#include <cmath>
#include <functional>
#include <ostream>
#include <span>
#include <vector>

#include "seqtrain/checkpoint.hpp"
#include "seqtrain/curvature.hpp"

namespace seqtrain::oracle {

inline constexpr Eigen::Index kMaxDenseParams = 500;
inline constexpr std::size_t kMaxPaths = 10000;

inline void check_dense_size(Eigen::Index p) {
  if (p > kMaxDenseParams)
    throw UsageError(detail::cat("dense oracle limited to ", kMaxDenseParams, " parameters, got ", p));
}

// ---------------------------------------------------------------------------
// Network Jacobian by forward-mode differentiation.

struct Dual {
  double v = 0.0;
  double d = 0.0;
};

inline Dual operator+(Dual a, Dual b) { return {a.v + b.v, a.d + b.d}; }
inline Dual operator*(Dual a, Dual b) { return {a.v * b.v, a.d * b.v + a.v * b.d}; }
inline Dual sigmoid(Dual a) {
  const double s = 1.0 / (1.0 + std::exp(-a.v));
  return {s, a.d * s * (1.0 - s)};
}

/// Output activations of one frame with the derivative along parameter `seed`
/// (seed < 0: no derivative).
inline std::vector<Dual> naive_forward(const Network& net, const ParameterVector& theta,
                                       const Vector& frame, Eigen::Index seed) {
  std::vector<Dual> h(static_cast<std::size_t>(frame.size()));
  for (Eigen::Index i = 0; i < frame.size(); ++i) h[static_cast<std::size_t>(i)] = {frame[i], 0.0};
  auto param = [&](Eigen::Index k) { return Dual{theta[k], k == seed ? 1.0 : 0.0}; };
  for (int l = 0; l < net.num_layers(); ++l) {
    const auto& b = net.block(l);
    std::vector<Dual> z(static_cast<std::size_t>(b.fan_out));
    for (int o = 0; o < b.fan_out; ++o) {
      Dual acc = param(b.bias_offset() + o);
      for (int i = 0; i < b.fan_in; ++i)
        acc = acc + param(b.offset + Eigen::Index{o} * b.fan_in + i) * h[static_cast<std::size_t>(i)];
      z[static_cast<std::size_t>(o)] = l + 1 < net.num_layers() ? sigmoid(acc) : acc;
    }
    h = std::move(z);
  }
  return h;
}

/// Output activations (T x D_out) recomputed with plain loops.
inline Matrix naive_outputs(const Network& net, const ParameterVector& theta, const Matrix& frames) {
  Matrix a(frames.rows(), net.output_dim());
  for (Eigen::Index t = 0; t < frames.rows(); ++t) {
    const auto out = naive_forward(net, theta, frames.row(t).transpose(), -1);
    for (int k = 0; k < net.output_dim(); ++k) a(t, k) = out[static_cast<std::size_t>(k)].v;
  }
  return a;
}

/// J with row t * D_out + k holding d a_t[k] / d theta.
inline Eigen::MatrixXd explicit_jacobian(const Network& net, const ParameterVector& theta,
                                         const Matrix& frames) {
  net.check_parameters(theta);
  check_dense_size(net.num_params());
  const int d = net.output_dim();
  Eigen::MatrixXd j(frames.rows() * d, net.num_params());
  for (Eigen::Index p = 0; p < net.num_params(); ++p)
    for (Eigen::Index t = 0; t < frames.rows(); ++t) {
      const auto out = naive_forward(net, theta, frames.row(t).transpose(), p);
      for (int k = 0; k < d; ++k) j(t * d + k, p) = out[static_cast<std::size_t>(k)].d;
    }
  return j;
}

// ---------------------------------------------------------------------------
// Exhaustive lattice enumeration.

struct PathEntry {
  std::vector<int> arcs;
  double score = 0.0;  // kappa * (sum log t_q + sum of acoustic log-likelihoods)
  std::vector<int> symbols;
  std::vector<int> labels;  // one state per frame
  double loss = 0.0;        // sum of the arcs' local losses
};

inline Matrix naive_log_softmax(const Matrix& a) {
  Matrix out(a.rows(), a.cols());
  for (Eigen::Index t = 0; t < a.rows(); ++t) {
    double m = a(t, 0);
    for (Eigen::Index k = 1; k < a.cols(); ++k) m = std::max(m, a(t, k));
    double s = 0.0;
    for (Eigen::Index k = 0; k < a.cols(); ++k) s += std::exp(a(t, k) - m);
    for (Eigen::Index k = 0; k < a.cols(); ++k) out(t, k) = a(t, k) - m - std::log(s);
  }
  return out;
}

/// Every start -> end path, by depth-first search.
inline std::vector<PathEntry> enumerate_paths(const Lattice& lat, const Matrix& activations,
                                              double kappa) {
  if (activations.rows() != lat.num_frames())
    throw UsageError("activations do not match the lattice length");
  const Matrix ll = naive_log_softmax(activations);
  std::vector<PathEntry> paths;
  PathEntry cur;
  std::function<void(int)> walk = [&](int node) {
    if (node == lat.end()) {
      if (paths.size() >= kMaxPaths)
        throw UsageError(detail::cat("lattice has more than ", kMaxPaths, " paths"));
      paths.push_back(cur);
      return;
    }
    for (int q = 0; q < lat.num_arcs(); ++q) {
      const LatticeArc& a = lat.arc(q);
      if (a.src != node) continue;
      const PathEntry saved = cur;
      double s = a.log_weight;
      const int t0 = lat.time(a.src);
      for (std::size_t k = 0; k < a.labels.size(); ++k) {
        s += ll(t0 + static_cast<Eigen::Index>(k), a.labels[k]);
        cur.labels.push_back(a.labels[k]);
      }
      cur.arcs.push_back(q);
      cur.symbols.push_back(a.symbol);
      cur.score += kappa * s;
      cur.loss += a.loss;
      walk(a.dst);
      cur = saved;
    }
  };
  walk(lat.start());
  return paths;
}

inline std::vector<double> path_probabilities(const std::vector<PathEntry>& paths) {
  double m = -std::numeric_limits<double>::infinity();
  for (const auto& p : paths) m = std::max(m, p.score);
  double z = 0.0;
  for (const auto& p : paths) z += std::exp(p.score - m);
  std::vector<double> prob;
  for (const auto& p : paths) prob.push_back(std::exp(p.score - m) / z);
  return prob;
}

inline double enumerated_log_z(const std::vector<PathEntry>& paths) {
  double m = -std::numeric_limits<double>::infinity();
  for (const auto& p : paths) m = std::max(m, p.score);
  double z = 0.0;
  for (const auto& p : paths) z += std::exp(p.score - m);
  return m + std::log(z);
}

/// Enumerated statistics of one lattice under given activations.
struct EnumeratedStats {
  double log_z = 0.0;
  Matrix gamma;         // P(state i at frame t)
  Matrix gamma_hat;     // E[(L - E L) 1(state i at frame t)]
  double expected_loss = 0.0;
  std::vector<PathEntry> paths;
  std::vector<double> prob;
};

inline EnumeratedStats enumerate_stats(const Lattice& lat, const Matrix& activations, double kappa) {
  EnumeratedStats st;
  st.paths = enumerate_paths(lat, activations, kappa);
  st.prob = path_probabilities(st.paths);
  st.log_z = enumerated_log_z(st.paths);
  st.gamma = Matrix::Zero(activations.rows(), activations.cols());
  st.gamma_hat = Matrix::Zero(activations.rows(), activations.cols());
  for (std::size_t n = 0; n < st.paths.size(); ++n) st.expected_loss += st.prob[n] * st.paths[n].loss;
  for (std::size_t n = 0; n < st.paths.size(); ++n) {
    const auto& labels = st.paths[n].labels;
    for (std::size_t t = 0; t < labels.size(); ++t) {
      st.gamma(static_cast<Eigen::Index>(t), labels[t]) += st.prob[n];
      st.gamma_hat(static_cast<Eigen::Index>(t), labels[t]) +=
          st.prob[n] * (st.paths[n].loss - st.expected_loss);
    }
  }
  return st;
}

/// log P(reference | O): the reference is the path spelling the reference states.
inline double enumerated_mmi(const UtteranceExample& utt, const Matrix& activations, double kappa) {
  const EnumeratedStats st = enumerate_stats(utt.denominator, activations, kappa);
  for (std::size_t n = 0; n < st.paths.size(); ++n)
    if (st.paths[n].arcs == utt.numerator) return st.paths[n].score - st.log_z;
  throw DataError("numerator path not found by enumeration");
}

inline double enumerated_mbr(const UtteranceExample& utt, const Matrix& activations, double kappa,
                             LossLevel level) {
  return enumerate_stats(utt.lattice_for(level), activations, kappa).expected_loss;
}

// Derivative w.r.t. activations of a function with derivative g w.r.t. the
// log-softmax outputs.
inline Matrix chain_log_softmax(const Matrix& g, const Matrix& activations) {
  const Matrix y = naive_log_softmax(activations).array().exp().matrix();
  Matrix out = g;
  for (Eigen::Index t = 0; t < g.rows(); ++t) {
    double s = 0.0;
    for (Eigen::Index k = 0; k < g.cols(); ++k) s += g(t, k);
    for (Eigen::Index k = 0; k < g.cols(); ++k) out(t, k) -= s * y(t, k);
  }
  return out;
}

inline Vector flatten(const Matrix& m) {
  Vector v(m.size());
  for (Eigen::Index t = 0; t < m.rows(); ++t)
    for (Eigen::Index k = 0; k < m.cols(); ++k) v[t * m.cols() + k] = m(t, k);
  return v;
}

/// Per-utterance gradient of log P(reference | O) via J^T and enumeration.
inline ParameterVector enumerated_mmi_gradient(const Network& net, const ParameterVector& theta,
                                               const UtteranceExample& utt, double kappa) {
  const Matrix a = naive_outputs(net, theta, utt.features.frames);
  const EnumeratedStats st = enumerate_stats(utt.denominator, a, kappa);
  Matrix g = -kappa * st.gamma;
  for (std::size_t t = 0; t < utt.reference.states.size(); ++t)
    g(static_cast<Eigen::Index>(t), utt.reference.states[t]) += kappa;
  const Eigen::MatrixXd j = explicit_jacobian(net, theta, utt.features.frames);
  return j.transpose() * flatten(chain_log_softmax(g, a));
}

// ---------------------------------------------------------------------------
// Dense curvature.

inline DenseOperator explicit_fisher(const Network& net, const ParameterVector& theta,
                                     std::span<const UtteranceExample> batch, double kappa) {
  check_dense_size(net.num_params());
  if (batch.empty()) throw UsageError("empty batch");
  Eigen::MatrixXd f = Eigen::MatrixXd::Zero(net.num_params(), net.num_params());
  for (const auto& u : batch) {
    const ParameterVector g = enumerated_mmi_gradient(net, theta, u, kappa);
    f += g * g.transpose();
  }
  return DenseOperator(f / static_cast<double>(batch.size()));
}

/// Per-frame loss Hessian matrices assembled from enumerated statistics.
inline std::vector<Eigen::MatrixXd> explicit_loss_hessians(const UtteranceExample& utt,
                                                           const Matrix& activations,
                                                           Criterion criterion, double kappa,
                                                           double num_utterances,
                                                           double total_frames,
                                                           GaussNewtonOptions opts) {
  const Eigen::Index d = activations.cols();
  std::vector<Eigen::MatrixXd> hs;
  if (opts.loss == GaussNewtonLoss::identity) {
    hs.assign(static_cast<std::size_t>(activations.rows()), Eigen::MatrixXd::Identity(d, d));
    return hs;
  }
  Matrix gamma, gamma_hat;
  double scale = kappa * kappa / num_utterances;
  if (criterion == Criterion::ce) {
    gamma = naive_log_softmax(activations).array().exp().matrix();
    scale = 1.0 / total_frames;
  } else if (criterion == Criterion::mmi) {
    gamma = enumerate_stats(utt.denominator, activations, kappa).gamma;
  } else {
    const EnumeratedStats st = enumerate_stats(utt.lattice_for(loss_level_for(criterion)), activations, kappa);
    gamma = st.gamma;
    gamma_hat = st.gamma_hat;
  }
  for (Eigen::Index t = 0; t < activations.rows(); ++t) {
    const Vector g = gamma.row(t).transpose();
    Eigen::MatrixXd h;
    if (criterion == Criterion::ce || criterion == Criterion::mmi) {
      h = Eigen::MatrixXd(g.asDiagonal()) - g * g.transpose();
    } else {
      const Vector gh = gamma_hat.row(t).transpose();
      h = Eigen::MatrixXd(gh.asDiagonal());
      if (opts.symmetrize)
        h -= 0.5 * (gh * g.transpose() + g * gh.transpose());
      else
        h -= gh * g.transpose();
    }
    hs.push_back(scale * h);
  }
  return hs;
}

/// sum_r sum_t J_t^T H_t J_t from explicit Jacobians and loss Hessians.
inline Eigen::MatrixXd explicit_gn_assembled(const Network& net, const ParameterVector& theta,
                                             std::span<const UtteranceExample> batch,
                                             Criterion criterion, double kappa,
                                             GaussNewtonOptions opts = {}) {
  check_dense_size(net.num_params());
  if (batch.empty()) throw UsageError("empty batch");
  double frames = 0.0;
  for (const auto& u : batch) frames += u.num_frames();
  const int d = net.output_dim();
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(net.num_params(), net.num_params());
  for (const auto& u : batch) {
    const Matrix a = naive_outputs(net, theta, u.features.frames);
    const Eigen::MatrixXd j = explicit_jacobian(net, theta, u.features.frames);
    const auto hs = explicit_loss_hessians(u, a, criterion, kappa,
                                           static_cast<double>(batch.size()), frames, opts);
    for (Eigen::Index t = 0; t < a.rows(); ++t) {
      const Eigen::MatrixXd jt = j.middleRows(t * d, d);
      g += jt.transpose() * hs[static_cast<std::size_t>(t)] * jt;
    }
  }
  return g;
}

/// Columns B e_i of any operator.
template <LinearOperator Op>
Eigen::MatrixXd probe_columns(const Op& op) {
  check_dense_size(op.dim());
  Eigen::MatrixXd m(op.dim(), op.dim());
  for (Eigen::Index i = 0; i < op.dim(); ++i)
    m.col(i) = op.apply(ParameterVector::Unit(op.dim(), i));
  return m;
}

inline Eigen::MatrixXd explicit_gn_probed(const Network& net, const ParameterVector& theta,
                                          std::span<const UtteranceExample> batch,
                                          Criterion criterion, double kappa,
                                          GaussNewtonOptions opts = {}) {
  return probe_columns(build_gauss_newton(net, theta, batch, criterion, kappa, 0.0, opts));
}

/// Both constructions, required to agree within 1e-10 (relative to the
/// largest entry). Symmetric forms are checked for symmetry.
inline DenseOperator explicit_gn(const Network& net, const ParameterVector& theta,
                                 std::span<const UtteranceExample> batch, Criterion criterion,
                                 double kappa, GaussNewtonOptions opts = {}) {
  const Eigen::MatrixXd probed = explicit_gn_probed(net, theta, batch, criterion, kappa, opts);
  const Eigen::MatrixXd assembled = explicit_gn_assembled(net, theta, batch, criterion, kappa, opts);
  const double scale = std::max(assembled.cwiseAbs().maxCoeff(), 1e-300);
  if ((probed - assembled).cwiseAbs().maxCoeff() > 1e-10 * scale)
    throw NumericError("probed and assembled Gauss-Newton matrices disagree");
  const bool symmetric_form = opts.symmetrize || criterion == Criterion::ce ||
                              criterion == Criterion::mmi || opts.loss == GaussNewtonLoss::identity;
  if (symmetric_form && (assembled - assembled.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
    throw NumericError("Gauss-Newton matrix is not symmetric");
  return DenseOperator(assembled);
}

// ---------------------------------------------------------------------------
// Finite differences.

inline ParameterVector fd_gradient(const std::function<double(const ParameterVector&)>& f,
                                   const ParameterVector& theta, double eps) {
  if (!(eps > 0.0)) throw UsageError("finite-difference step must be positive");
  ParameterVector g(theta.size());
  ParameterVector x = theta;
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    x[i] = theta[i] + eps;
    const double fp = f(x);
    x[i] = theta[i] - eps;
    const double fm = f(x);
    x[i] = theta[i];
    g[i] = (fp - fm) / (2.0 * eps);
  }
  return g;
}

/// Hessian-vector product by central differences of an analytic gradient.
inline ParameterVector fd_hessian_vector(
    const std::function<ParameterVector(const ParameterVector&)>& grad, const ParameterVector& theta,
    const ParameterVector& v, double eps) {
  if (!(eps > 0.0)) throw UsageError("finite-difference step must be positive");
  return (grad(theta + eps * v) - grad(theta - eps * v)) / (2.0 * eps);
}

/// Full Hessian by double central differences of a scalar function.
inline Eigen::MatrixXd fd_hessian(const std::function<double(const ParameterVector&)>& f,
                                  const ParameterVector& theta, double eps) {
  check_dense_size(theta.size());
  const Eigen::Index n = theta.size();
  Eigen::MatrixXd h(n, n);
  ParameterVector x = theta;
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i; j < n; ++j) {
      auto at = [&](double si, double sj) {
        x = theta;
        x[i] += si * eps;
        x[j] += sj * eps;
        return f(x);
      };
      const double v = (at(1, 1) - at(1, -1) - at(-1, 1) + at(-1, -1)) / (4.0 * eps * eps);
      h(i, j) = h(j, i) = v;
    }
  return h;
}

// ---------------------------------------------------------------------------
// KL geometry.

struct KlCheck {
  double exact_kl = 0.0;
  double quadratic_form = 0.0;  // 1/2 delta^T I delta with the exact Fisher
  double ratio = 0.0;           // exact / quadratic; 0 when both vanish
};

/// Mean over the batch of KL(P_theta(.|O) || P_{theta+delta}(.|O)) over
/// denominator hypotheses, against 1/2 delta^T I delta where
/// I = (1/R) sum_r E_H[s_H s_H^T] and s_H = grad log P_theta(H|O).
inline KlCheck kl_quadratic_check(const Network& net, const ParameterVector& theta,
                                  const ParameterVector& delta,
                                  std::span<const UtteranceExample> batch, double kappa) {
  net.check_parameters(theta);
  net.check_parameters(delta);
  check_dense_size(net.num_params());
  if (batch.empty()) throw UsageError("empty batch");
  KlCheck out;
  const ParameterVector moved = theta + delta;
  for (const auto& u : batch) {
    const Matrix a0 = naive_outputs(net, theta, u.features.frames);
    const Matrix a1 = naive_outputs(net, moved, u.features.frames);
    const EnumeratedStats p = enumerate_stats(u.denominator, a0, kappa);
    const EnumeratedStats q = enumerate_stats(u.denominator, a1, kappa);
    for (std::size_t n = 0; n < p.paths.size(); ++n) {
      const double lp = p.paths[n].score - p.log_z;
      const double lq = q.paths[n].score - q.log_z;
      out.exact_kl += p.prob[n] * (lp - lq);
    }
    // s_H^T delta = (J delta)^T chain(kappa (onehot_H - gamma))
    const Eigen::MatrixXd j = explicit_jacobian(net, theta, u.features.frames);
    const Vector jd = j * delta;
    for (std::size_t n = 0; n < p.paths.size(); ++n) {
      Matrix g = -kappa * p.gamma;
      const auto& labels = p.paths[n].labels;
      for (std::size_t t = 0; t < labels.size(); ++t) g(static_cast<Eigen::Index>(t), labels[t]) += kappa;
      const double s = flatten(chain_log_softmax(g, a0)).dot(jd);
      out.quadratic_form += 0.5 * p.prob[n] * s * s;
    }
  }
  const double r = static_cast<double>(batch.size());
  out.exact_kl /= r;
  out.quadratic_form /= r;
  out.ratio = out.quadratic_form > 0.0 ? out.exact_kl / out.quadratic_form : 0.0;
  return out;
}

// ---------------------------------------------------------------------------
// Text matrix dump: "seqmat 1", "rows R cols C", then R lines of hexfloats.

inline void write_dense_matrix(std::ostream& out, const Eigen::MatrixXd& m) {
  out << "seqmat 1\nrows " << m.rows() << " cols " << m.cols() << '\n';
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) out << (j ? " " : "") << detail::hexfloat(m(i, j));
    out << '\n';
  }
}

inline Eigen::MatrixXd read_dense_matrix(std::istream& in) {
  detail::expect_token(in, "seqmat");
  detail::expect_token(in, "1");
  detail::expect_token(in, "rows");
  Eigen::Index r = 0, c = 0;
  in >> r;
  detail::expect_token(in, "cols");
  in >> c;
  if (!in || r < 0 || c < 0) throw DataError("bad matrix header");
  Eigen::MatrixXd m(r, c);
  std::string tok;
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) {
      if (!(in >> tok)) throw DataError("truncated matrix");
      m(i, j) = detail::parse_double(tok);
    }
  return m;
}

}  // namespace seqtrain::oracle
