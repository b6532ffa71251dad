// tests/oracle_test.cpp

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


#include <sstream>

#include <gtest/gtest.h>

#include "test_util.hpp"

namespace seqtrain {
namespace {

using testing::random_theta;
using testing::random_vector;

TEST(ExplicitFisherTest, SingleGradientOuterProduct) {
  ParameterVector g(2);
  g << 1.0, 2.0;
  Eigen::Matrix2d want;
  want << 1, 2, 2, 4;
  EXPECT_LT((oracle::probe_columns(FisherOperator({g}, 1.0, 0.0)) - want).norm(), 1e-15);
}

TEST(ExplicitFisherTest, OrthonormalGradients) {
  const std::vector<ParameterVector> gs{Vector::Unit(4, 0), Vector::Unit(4, 2)};
  const Eigen::MatrixXd f = oracle::probe_columns(FisherOperator(gs, 1.0, 0.0));
  const Vector ev = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(f).eigenvalues();
  EXPECT_NEAR(ev[3], 0.5, 1e-15);
  EXPECT_NEAR(ev[2], 0.5, 1e-15);
  EXPECT_NEAR(ev[1], 0.0, 1e-15);
}

TEST(ExplicitFisherTest, MatchesOperatorOnNetwork) {
  const Dataset ds = generate_task(verify::oracle_task(3));
  const Network net(verify::oracle_layers());
  const ParameterVector theta = random_theta(net, 4);
  const DenseOperator dense = oracle::explicit_fisher(net, theta, ds.train, 0.5);
  const FisherOperator op(build_fisher_gradients(net, theta, ds.train, 0.5), 1.0, 0.0);
  for (std::uint64_t k = 0; k < 3; ++k) {
    const ParameterVector v = random_vector(net.num_params(), 10 + k);
    EXPECT_LT(relative_error(dense.apply(v), op.apply(v)), 1e-12);
  }
  const Eigen::MatrixXd m = oracle::probe_columns(dense);
  Eigen::FullPivLU<Eigen::MatrixXd> lu(m);
  EXPECT_LE(lu.setThreshold(1e-10).rank(), static_cast<Eigen::Index>(ds.train.size()));
}

TEST(ExplicitGnTest, ZeroLossHessianGivesZero) {
  const std::vector<UtteranceExample> batch{testing::single_path_example()};
  const Network net({2, 3, 2});
  const Eigen::MatrixXd g =
      oracle::explicit_gn_assembled(net, random_theta(net, 1), batch, Criterion::mpe, 0.5);
  EXPECT_LT(g.cwiseAbs().maxCoeff(), 1e-14);
}

TEST(ExplicitGnTest, SymmetricAndConsistent) {
  const std::vector<UtteranceExample> batch{testing::three_path_example(2)};
  const Network net({2, 4, 3});
  const ParameterVector theta = random_theta(net, 5);
  for (Criterion c : {Criterion::ce, Criterion::mmi, Criterion::mpe, Criterion::smbr}) {
    const Eigen::MatrixXd m = oracle::probe_columns(oracle::explicit_gn(net, theta, batch, c, 0.7));
    EXPECT_LT((m - m.transpose()).cwiseAbs().maxCoeff(), 1e-12) << to_string(c);
  }
  GaussNewtonOptions raw;
  raw.symmetrize = false;
  const Eigen::MatrixXd a = oracle::explicit_gn_assembled(net, theta, batch, Criterion::mpe, 0.7, raw);
  const Eigen::MatrixXd s = oracle::explicit_gn_assembled(net, theta, batch, Criterion::mpe, 0.7);
  EXPECT_LT((0.5 * (a + a.transpose()) - s).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(ExplicitGnTest, LinearCeIsExactHessian) {
  const std::vector<UtteranceExample> batch{testing::three_path_example(3), testing::three_path_example(4)};
  const Network lin({2, 3});
  const ParameterVector theta = random_theta(lin, 6);
  auto ce = [&](const ParameterVector& x) {
    double f = 0.0, frames = 0.0;
    for (const auto& u : batch) {
      const Matrix ls = oracle::naive_log_softmax(oracle::naive_outputs(lin, x, u.features.frames));
      for (int t = 0; t < u.num_frames(); ++t) f -= ls(t, u.reference.states[static_cast<std::size_t>(t)]);
      frames += u.num_frames();
    }
    return f / frames;
  };
  const Eigen::MatrixXd h = oracle::fd_hessian(ce, theta, 1e-4);
  const Eigen::MatrixXd gn = oracle::explicit_gn_assembled(lin, theta, batch, Criterion::ce, 1.0);
  EXPECT_LT(relative_error(gn, h), 1e-5);
  EXPECT_GE(Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(gn).eigenvalues().minCoeff(), -1e-12);
}

TEST(ExplicitGnTest, SizeGuard) {
  const Network big({30, 20, 12});
  ASSERT_GT(big.num_params(), oracle::kMaxDenseParams);
  EXPECT_THROW(oracle::probe_columns(DenseOperator(Eigen::MatrixXd::Identity(501, 501), 0.0)), UsageError);
  EXPECT_THROW(oracle::explicit_jacobian(big, ParameterVector::Zero(big.num_params()), Matrix::Zero(1, 30)),
               UsageError);
}

TEST(FiniteDifferenceTest, ConstantAndQuadratic) {
  const Vector x = random_vector(4, 1);
  EXPECT_EQ(oracle::fd_gradient([](const ParameterVector&) { return 3.0; }, x, 1e-3).norm(), 0.0);
  const Eigen::MatrixXd a = testing::random_spd(4, 2);
  auto q = [&](const ParameterVector& y) { return 0.5 * y.dot(a * y); };
  EXPECT_LT((oracle::fd_gradient(q, x, 1e-3) - a * x).norm(), 1e-10);
  EXPECT_LT((oracle::fd_hessian(q, x, 1e-3) - a).norm(), 1e-7);
  auto grad = [&](const ParameterVector& y) -> ParameterVector { return a * y; };
  const Vector v = random_vector(4, 3);
  EXPECT_LT((oracle::fd_hessian_vector(grad, x, v, 1e-3) - a * v).norm(), 1e-10);
  EXPECT_THROW(oracle::fd_gradient(q, x, 0.0), UsageError);
}

TEST(FiniteDifferenceTest, SecondOrderConvergence) {
  auto f = [](const ParameterVector& y) { return std::sin(y[0]) * std::exp(y[1]); };
  Vector x(2);
  x << 0.3, -0.2;
  const double exact = std::cos(0.3) * std::exp(-0.2);
  const double e1 = std::abs(oracle::fd_gradient(f, x, 1e-2)[0] - exact);
  const double e2 = std::abs(oracle::fd_gradient(f, x, 5e-3)[0] - exact);
  EXPECT_NEAR(e1 / e2, 4.0, 0.05);
}

TEST(EnumerationTest, SinglePath) {
  const UtteranceExample u = testing::single_path_example();
  const Matrix a = testing::random_matrix(3, 2, 9);
  const auto paths = oracle::enumerate_paths(u.denominator, a, 0.5);
  ASSERT_EQ(paths.size(), 1u);
  EXPECT_EQ(paths[0].labels, (std::vector<int>{0, 0, 1}));
  const auto st = oracle::enumerate_stats(u.denominator, a, 0.5);
  EXPECT_NEAR(st.prob[0], 1.0, 1e-15);
  EXPECT_NEAR(st.log_z, paths[0].score, 1e-15);
  EXPECT_LT(st.gamma_hat.cwiseAbs().maxCoeff(), 1e-15);
}

TEST(EnumerationTest, ThreePathLogPartition) {
  const UtteranceExample u = testing::three_path_example();
  const Matrix a = testing::random_matrix(3, 3, 10);
  const Matrix ll = oracle::naive_log_softmax(a);
  const double k = 0.8;
  auto score = [&](double lw, std::vector<int> lab) {
    double s = lw;
    for (std::size_t t = 0; t < lab.size(); ++t) s += ll(static_cast<Eigen::Index>(t), lab[t]);
    return k * s;
  };
  const double s1 = score(std::log(0.5), {0, 0, 1});
  const double s2 = score(std::log(0.3), {2, 2, 1});
  const double s3 = score(std::log(0.2), {0, 1, 1});
  const double want = std::log(std::exp(s1) + std::exp(s2) + std::exp(s3));
  const auto st = oracle::enumerate_stats(u.denominator, a, k);
  ASSERT_EQ(st.paths.size(), 3u);
  EXPECT_NEAR(st.log_z, want, 1e-13);
  EXPECT_NEAR(oracle::enumerated_log_z(st.paths), want, 1e-13);
  double total = 0.0;
  for (double p : st.prob) total += p;
  EXPECT_NEAR(total, 1.0, 1e-15);
  EXPECT_NEAR(oracle::enumerated_mmi(u, a, k), s1 - want, 1e-13);
}

class KlTest : public ::testing::Test {
 protected:
  Dataset ds = generate_task(verify::oracle_task(41));
  Network net{verify::oracle_layers()};
  ParameterVector theta = random_theta(net, 42);
  std::span<const UtteranceExample> batch() const { return std::span(ds.train).first(1); }
};

TEST_F(KlTest, ZeroStep) {
  const auto k = oracle::kl_quadratic_check(net, theta, ParameterVector::Zero(net.num_params()), batch(), 1.0);
  EXPECT_EQ(k.exact_kl, 0.0);
  EXPECT_EQ(k.quadratic_form, 0.0);
  EXPECT_EQ(k.ratio, 0.0);
}

TEST_F(KlTest, QuadraticFormScalesWithSquare) {
  const ParameterVector d = random_vector(net.num_params(), 1).normalized();
  const auto a = oracle::kl_quadratic_check(net, theta, d, batch(), 1.0);
  const auto b = oracle::kl_quadratic_check(net, theta, 0.1 * d, batch(), 1.0);
  EXPECT_NEAR(b.quadratic_form, 0.01 * a.quadratic_form, 1e-12 * a.quadratic_form);
}

TEST_F(KlTest, RatioTendsToOne) {
  const ParameterVector d = random_vector(net.num_params(), 2).normalized();
  double prev = std::numeric_limits<double>::infinity();
  for (double s : {1e-1, 1e-2, 1e-3}) {
    const auto k = oracle::kl_quadratic_check(net, theta, s * d, batch(), 1.0);
    const double gap = std::abs(k.ratio - 1.0);
    EXPECT_LT(gap, prev);
    EXPECT_GE(k.exact_kl, 0.0);
    prev = gap;
  }
  EXPECT_LT(prev, 1e-2);
}

TEST(DenseMatrixIoTest, RoundTripIsExact) {
  const Eigen::MatrixXd m = testing::random_matrix(4, 3, 7) * 1e-3;
  std::stringstream ss;
  oracle::write_dense_matrix(ss, m);
  EXPECT_EQ(oracle::read_dense_matrix(ss), m);
  std::istringstream bad("seqmat 1\nrows 2 cols 2\n0x1p+0 0x1p+0\n");
  EXPECT_THROW(oracle::read_dense_matrix(bad), DataError);
  std::istringstream wrong("matrix 1\n");
  EXPECT_THROW(oracle::read_dense_matrix(wrong), DataError);
}

}  // namespace
}  // namespace seqtrain
