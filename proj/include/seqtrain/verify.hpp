// seqtrain/verify.hpp

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

// Oracle property suites shared by the `verify` subcommand and the
// acceptance test. Each suite compares library results with the brute-force
// implementations of oracle.hpp and reports the worst discrepancy found.

#include <chrono>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "seqtrain/cg.hpp"
#include "seqtrain/optim.hpp"
#include "seqtrain/oracle.hpp"
#include "seqtrain/sequence_problem.hpp"
#include "seqtrain/synthetic.hpp"

namespace seqtrain::verify {

struct CheckResult {
  std::string name;
  double measured = 0.0;
  double threshold = 0.0;
  bool passed = false;
  std::string detail;
};

struct SuiteReport {
  std::string name;
  std::vector<CheckResult> checks;
  double seconds = 0.0;

  bool passed() const {
    for (const auto& c : checks)
      if (!c.passed) return false;
    return !checks.empty();
  }
};

struct VerifyOptions {
  int seeds = 10;              // gradient suite
  int lattices = 50;           // lattice suite
  int kl_seeds = 5;            // KL suite
  std::uint64_t base_seed = 1;
};

/// Small task whose lattices stay enumerable; the feature and state
/// dimensions match the default task.
inline SyntheticTaskConfig oracle_task(std::uint64_t seed) {
  SyntheticTaskConfig c;
  c.min_frames = 10;
  c.max_frames = 16;
  c.min_segment = 2;
  c.max_segment = 4;
  c.train_utterances = 3;
  c.validation_utterances = 1;
  c.confusion = 0.5;
  c.shift_ratio = 1.0;
  c.noise = 0.5;
  c.max_paths = 100;
  c.seed = seed;
  return c;
}

/// Network of at most 500 parameters for the dense oracles: 8-12-12.
inline std::vector<int> oracle_layers() { return {8, 12, 12}; }

namespace detail {

class Timer {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count();
  }

 private:
  std::chrono::steady_clock::time_point t0_ = std::chrono::steady_clock::now();
};

/// Check passing when measured < threshold (measured >= threshold for
/// `at_least`).
inline CheckResult make_check(std::string name, double measured, double threshold,
                              bool at_least = false, std::string detail = {}) {
  CheckResult c{std::move(name), measured, threshold, false, std::move(detail)};
  c.passed = at_least ? measured >= threshold : measured < threshold;
  return c;
}

inline ParameterVector random_parameters(const Network& net, std::mt19937_64& rng, double scale) {
  std::normal_distribution<double> n(0.0, scale);
  ParameterVector theta(net.num_params());
  for (auto& x : theta) x = n(rng);
  return theta;
}

inline Eigen::MatrixXd random_spd(int n, double cond, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  Eigen::MatrixXd a(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) a(i, j) = g(rng);
  const Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
  const Eigen::MatrixXd q = qr.householderQ();
  Vector ev(n);
  for (int i = 0; i < n; ++i) ev[i] = std::pow(cond, n > 1 ? static_cast<double>(i) / (n - 1) : 0.0);
  Eigen::MatrixXd m = q * ev.asDiagonal() * q.transpose();
  return 0.5 * (m + m.transpose());
}

inline Vector random_vector(Eigen::Index n, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  Vector v(n);
  for (auto& x : v) x = g(rng);
  return v;
}

/// Worst per-vector relative error between an operator and a dense matrix.
template <typename Op>
double probe_error(const Op& op, const Eigen::MatrixXd& m, int probes, std::mt19937_64& rng) {
  double worst = 0.0;
  for (int i = 0; i < probes; ++i) {
    const Vector v = random_vector(m.cols(), rng);
    worst = std::max(worst, relative_error(op.apply(v), m * v));
  }
  return worst;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Gradients.

/// Analytic criterion gradients against central differences of the
/// objective on the default 8-32-32-12 network.
inline SuiteReport gradient_suite(const VerifyOptions& opt = {}) {
  detail::Timer timer;
  SuiteReport rep{"gradients", {}, 0.0};
  for (Criterion c : {Criterion::ce, Criterion::mmi, Criterion::mpe, Criterion::smbr}) {
    double worst = 0.0;
    for (int s = 0; s < opt.seeds; ++s) {
      const std::uint64_t seed = opt.base_seed + static_cast<std::uint64_t>(s);
      SyntheticTaskConfig tc = oracle_task(seed);
      tc.train_utterances = 2;
      const Dataset ds = generate_task(tc);
      const Network net({8, 32, 32, 12});
      std::mt19937_64 rng(seed * 7919 + 11);
      const ParameterVector theta = init_parameters(net, rng);
      const SequenceProblem p(net, ds.train, c, 0.5);
      const auto all = p.all_indices();
      const ParameterVector g = p.evaluate(theta, all).gradient;
      const ParameterVector fd =
          oracle::fd_gradient([&](const ParameterVector& x) { return p.objective(x, all); }, theta, 1e-5);
      worst = std::max(worst, relative_error(g, fd));
    }
    rep.checks.push_back(detail::make_check(std::string(to_string(c)) + " gradient vs central differences",
                                            worst, 1e-5));
  }
  rep.seconds = timer.seconds();
  return rep;
}

// ---------------------------------------------------------------------------
// Curvature.

inline SuiteReport curvature_suite(const VerifyOptions& opt = {}) {
  detail::Timer timer;
  SuiteReport rep{"curvature", {}, 0.0};
  const Dataset ds = generate_task(oracle_task(opt.base_seed));
  const Network net(oracle_layers());
  std::mt19937_64 rng(opt.base_seed * 104729 + 3);
  const ParameterVector theta = detail::random_parameters(net, rng, 0.5);
  const double kappa = 0.5;
  const std::span<const UtteranceExample> batch(ds.train);

  const DenseOperator fi = oracle::explicit_fisher(net, theta, batch, kappa);
  const FisherOperator fop(build_fisher_gradients(net, theta, batch, kappa), 1.0, 0.0);
  rep.checks.push_back(detail::make_check("fisher_apply vs explicit Fisher",
                                          detail::probe_error(fop, fi.matrix(), 20, rng), 1e-10));

  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(fi.matrix());
  const double top = es.eigenvalues().cwiseAbs().maxCoeff();
  const auto rank = (es.eigenvalues().array().abs() > 1e-10 * top).count();
  rep.checks.push_back(detail::make_check(
      "explicit Fisher rank <= R", static_cast<double>(rank), static_cast<double>(batch.size()) + 0.5,
      false, "rank " + std::to_string(rank) + " of " + std::to_string(net.num_params())));

  for (Criterion c : {Criterion::ce, Criterion::mmi, Criterion::mpe, Criterion::smbr}) {
    const Eigen::MatrixXd dense = oracle::explicit_gn_assembled(net, theta, batch, c, kappa);
    const GaussNewtonOperator gn = build_gauss_newton(net, theta, batch, c, kappa, 0.0);
    rep.checks.push_back(detail::make_check(std::string("gn_apply vs explicit GN (") + to_string(c) + ")",
                                            detail::probe_error(gn, dense, 20, rng), 1e-10));
  }

  // Linear softmax model: the CE Gauss-Newton matrix is the exact Hessian.
  const Network lin({8, 12});
  const ParameterVector phi = detail::random_parameters(lin, rng, 0.5);
  double frames = 0.0;
  for (const auto& u : batch) frames += u.num_frames();
  auto ce = [&](const ParameterVector& x) {
    double f = 0.0;
    for (const auto& u : batch) {
      const Matrix ls = oracle::naive_log_softmax(oracle::naive_outputs(lin, x, u.features.frames));
      for (int t = 0; t < u.num_frames(); ++t) f -= ls(t, u.reference.states[static_cast<std::size_t>(t)]);
    }
    return f / frames;
  };
  const Eigen::MatrixXd h = oracle::fd_hessian(ce, phi, 1e-4);
  const Eigen::MatrixXd gn = oracle::probe_columns(
      build_gauss_newton(lin, phi, batch, Criterion::ce, 1.0, 0.0));
  rep.checks.push_back(detail::make_check("CE GN vs finite-difference Hessian (no hidden layer)",
                                          relative_error(gn, h), 1e-4));
  rep.seconds = timer.seconds();
  return rep;
}

// ---------------------------------------------------------------------------
// Lattices.

/// Forward-backward statistics against exhaustive enumeration on random
/// lattices of at most 100 paths with random activations.
inline SuiteReport lattice_suite(const VerifyOptions& opt = {}) {
  detail::Timer timer;
  SuiteReport rep{"lattice", {}, 0.0};
  double e_z = 0.0, e_gamma = 0.0, e_mmi = 0.0, e_mbr = 0.0, e_sum = 0.0, e_hat = 0.0;
  double max_paths = 0.0;
  std::mt19937_64 rng(opt.base_seed * 15485863 + 5);
  std::uniform_real_distribution<double> conf(0.3, 0.9);
  std::normal_distribution<double> act(0.0, 2.0);
  std::uniform_real_distribution<double> kap(0.2, 1.0);
  int done = 0;
  std::uint64_t seed = opt.base_seed;
  while (done < opt.lattices) {
    SyntheticTaskConfig tc = oracle_task(seed++);
    tc.train_utterances = 1;
    tc.confusion = conf(rng);
    const Dataset ds = generate_task(tc);
    const UtteranceExample& u = ds.train.front();
    if (u.denominator.count_paths() < 2) continue;
    ++done;
    max_paths = std::max(max_paths, u.denominator.count_paths());
    Matrix a(u.num_frames(), tc.num_states);
    for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = act(rng);
    const double kappa = kap(rng);

    const Matrix ll = acoustic_loglikes(a);
    const PosteriorSet ps = forward_backward(u.denominator, ll, kappa);
    const oracle::EnumeratedStats en = oracle::enumerate_stats(u.denominator, a, kappa);
    e_z = std::max(e_z, std::abs(ps.log_z - en.log_z) / std::max(1.0, std::abs(en.log_z)));
    e_z = std::max(e_z, std::abs(ps.log_z_backward - en.log_z) / std::max(1.0, std::abs(en.log_z)));
    e_gamma = std::max(e_gamma, (ps.gamma - en.gamma).cwiseAbs().maxCoeff());
    e_sum = std::max(e_sum, (ps.gamma.rowwise().sum().array() - 1.0).abs().maxCoeff());

    const double mmi = mmi_utterance(u, a, kappa).value;
    const double mmi_ref = oracle::enumerated_mmi(u, a, kappa);
    e_mmi = std::max(e_mmi, std::abs(mmi - mmi_ref) / std::max(1.0, std::abs(mmi_ref)));
    for (LossLevel level : {LossLevel::phone, LossLevel::state}) {
      const UtteranceStats st = mbr_utterance(u, a, kappa, level);
      const oracle::EnumeratedStats el = oracle::enumerate_stats(u.lattice_for(level), a, kappa);
      e_mbr = std::max(e_mbr, std::abs(st.value - el.expected_loss) / std::max(1.0, el.expected_loss));
      e_hat = std::max(e_hat, (st.gamma_hat - el.gamma_hat).cwiseAbs().maxCoeff());
    }
  }
  const std::string n = std::to_string(done) + " lattices, up to " +
                        std::to_string(static_cast<int>(max_paths)) + " paths";
  rep.checks.push_back(detail::make_check("log Z vs enumeration", e_z, 1e-10, false, n));
  rep.checks.push_back(detail::make_check("gamma vs enumeration", e_gamma, 1e-10, false, n));
  rep.checks.push_back(detail::make_check("gamma rows sum to one", e_sum, 1e-10, false, n));
  rep.checks.push_back(detail::make_check("F_MMI vs enumeration", e_mmi, 1e-10, false, n));
  rep.checks.push_back(detail::make_check("F_MBR vs enumeration", e_mbr, 1e-10, false, n));
  rep.checks.push_back(detail::make_check("MBR gamma_hat vs enumeration", e_hat, 1e-10, false, n));
  rep.seconds = timer.seconds();
  return rep;
}

// ---------------------------------------------------------------------------
// Conjugate gradient.

inline SuiteReport cg_suite(const VerifyOptions& opt = {}) {
  detail::Timer timer;
  SuiteReport rep{"cg", {}, 0.0};
  std::mt19937_64 rng(opt.base_seed * 32452843 + 7);
  double worst_res = 0.0, worst_rise = 0.0, worst_eig = 0.0;
  for (int n : {2, 5, 10, 20, 50}) {
    for (CgInit init : {CgInit::zero, CgInit::gradient}) {
      const DenseOperator op(detail::random_spd(n, 10.0, rng));
      const Vector b = detail::random_vector(n, rng);
      CGConfig cfg;
      cfg.max_iters = n;
      cfg.residual_tol = 1e-300;
      cfg.init = init;
      const CGResult r = cg_solve(op, b, cfg);
      worst_res = std::max(worst_res, (b - op.apply(r.delta)).norm() / b.norm());
      for (std::size_t j = 1; j < r.model_values.size(); ++j)
        worst_rise = std::max(worst_rise, (r.model_values[j] - r.model_values[j - 1]) /
                                              std::max(1.0, std::abs(r.model_values[j - 1])));
    }
  }
  rep.checks.push_back(detail::make_check("n-dim SPD solve in n iterations", worst_res, 1e-8));
  rep.checks.push_back(detail::make_check("quadratic model non-increasing", worst_rise, 1e-12));

  // Eigen reconstruction against CG run to convergence: random SPD systems
  // and a damped Gauss-Newton matrix of the oracle network.
  std::vector<Eigen::MatrixXd> systems;
  for (int n : {10, 40}) systems.push_back(detail::random_spd(n, 50.0, rng));
  {
    const Dataset ds = generate_task(oracle_task(opt.base_seed));
    const Network net(oracle_layers());
    const ParameterVector theta = detail::random_parameters(net, rng, 0.5);
    Eigen::MatrixXd g = oracle::explicit_gn_assembled(net, theta, ds.train, Criterion::mmi, 0.5);
    g += 0.1 * Eigen::MatrixXd::Identity(g.rows(), g.cols());
    systems.push_back(0.5 * (g + g.transpose()));
  }
  for (const auto& m : systems) {
    const Vector b = detail::random_vector(m.rows(), rng);
    CGConfig cfg;
    cfg.max_iters = static_cast<int>(20 * m.rows());
    cfg.residual_tol = 1e-14;
    cfg.init = CgInit::zero;
    const CGResult r = cg_solve(DenseOperator(m), b, cfg);
    worst_eig = std::max(worst_eig, relative_error(eigen_diagnostic(m, b).delta, r.delta));
  }
  rep.checks.push_back(detail::make_check("eigen_diagnostic vs converged CG", worst_eig, 1e-8));
  rep.seconds = timer.seconds();
  return rep;
}

// ---------------------------------------------------------------------------
// KL geometry.

/// Remainder of the quadratic KL model, |KL - 1/2 d^T I d| / |d|^2, at a
/// random step d and at 0.1 d. Reports the smallest shrink factor.
inline SuiteReport kl_suite(const VerifyOptions& opt = {}) {
  detail::Timer timer;
  SuiteReport rep{"kl", {}, 0.0};
  double worst = std::numeric_limits<double>::infinity();
  for (int s = 0; s < opt.kl_seeds; ++s) {
    const std::uint64_t seed = opt.base_seed + static_cast<std::uint64_t>(s);
    const Dataset ds = generate_task(oracle_task(seed));
    const Network net(oracle_layers());
    std::mt19937_64 rng(seed * 49979687 + 13);
    const ParameterVector theta = detail::random_parameters(net, rng, 0.5);
    ParameterVector d = detail::random_vector(net.num_params(), rng);
    d *= 2.0 / d.norm();
    auto remainder = [&](const ParameterVector& step) {
      const oracle::KlCheck k = oracle::kl_quadratic_check(net, theta, step, ds.train, 1.0);
      return std::abs(k.exact_kl - k.quadratic_form) / step.squaredNorm();
    };
    const double big = remainder(d);
    const double small = remainder(0.1 * d);
    worst = std::min(worst, small > 0.0 ? big / small : std::numeric_limits<double>::infinity());
  }
  rep.checks.push_back(detail::make_check("KL remainder shrink at 0.1x step", worst, 5.0, true,
                                          std::to_string(opt.kl_seeds) + " seeds"));
  rep.seconds = timer.seconds();
  return rep;
}

inline std::vector<SuiteReport> run_all(const VerifyOptions& opt = {}) {
  return {gradient_suite(opt), curvature_suite(opt), lattice_suite(opt), cg_suite(opt), kl_suite(opt)};
}

}  // namespace seqtrain::verify
