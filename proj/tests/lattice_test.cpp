// tests/lattice_test.cpp

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

using testing::arc;
using testing::random_matrix;
using testing::three_path_example;

double path_entropy(const Lattice& lat, const Matrix& ll, double kappa) {
  const PosteriorSet ps = forward_backward(lat, ll, kappa);
  double expected = 0.0;
  for (int q = 0; q < lat.num_arcs(); ++q)
    expected += ps.arc_posterior[static_cast<std::size_t>(q)] * ps.arc_score[static_cast<std::size_t>(q)];
  return ps.log_z - expected;
}

TEST(LatticeTest, StructuralChecks) {
  EXPECT_THROW(Lattice(2, {0, 2}, 0, 1, {arc(0, 1, 0, 1)}), DataError);   // label count
  EXPECT_THROW(Lattice(2, {0, 2, 1}, 0, 1, {arc(0, 2, 0, 1)}), DataError);  // no complete path
  EXPECT_THROW(Lattice(2, {0, 0}, 0, 1, {arc(0, 1, 0, 0)}), DataError);   // empty span
  EXPECT_THROW(Lattice(2, {1, 2}, 0, 1, {arc(0, 1, 0, 1)}), DataError);   // start time
  EXPECT_THROW(Lattice(2, {0, 2}, 0, 1, {}), UsageError);
  const Lattice ok(2, {0, 2}, 0, 1, {arc(0, 1, 3, 2)});
  EXPECT_EQ(ok.count_paths(), 1.0);
}

TEST(LatticeTest, CountsPaths) {
  const UtteranceExample u = three_path_example();
  EXPECT_EQ(u.denominator.count_paths(), 3.0);
  EXPECT_EQ(u.numerator, (std::vector<int>{0, 2}));
}

TEST(LatticeTest, TextRoundTrip) {
  const UtteranceExample u = three_path_example();
  for (const Lattice* lat : {&u.denominator, &u.phone_lattice, &u.state_lattice}) {
    std::stringstream ss;
    write_lattice(ss, *lat);
    const Lattice back = read_lattice(ss);
    ASSERT_EQ(back.num_arcs(), lat->num_arcs());
    EXPECT_EQ(back.loss_level(), lat->loss_level());
    EXPECT_EQ(back.node_times(), lat->node_times());
    for (int q = 0; q < lat->num_arcs(); ++q) {
      EXPECT_EQ(back.arc(q).labels, lat->arc(q).labels);
      EXPECT_EQ(back.arc(q).log_weight, lat->arc(q).log_weight);
      EXPECT_EQ(back.arc(q).loss, lat->arc(q).loss);
    }
  }
}

TEST(LatticeTest, ReaderRejectsMalformedInput) {
  std::stringstream bad_version("seqlat 2\n");
  EXPECT_THROW(read_lattice(bad_version), DataError);
  std::stringstream missing_loss(
      "seqlat 1\nnodes 2 arcs 1 frames 1\nstart 0 end 1\nloss state\nnode 0 0\nnode 1 1\n"
      "arc 0 1 0 0x0p+0 - 0\n");
  EXPECT_THROW(read_lattice(missing_loss), DataError);
  std::stringstream truncated(
      "seqlat 1\nnodes 2 arcs 1 frames 2\nstart 0 end 1\nloss none\nnode 0 0\nnode 1 2\n"
      "arc 0 1 0 0 - 0\n");
  EXPECT_THROW(read_lattice(truncated), DataError);
  std::stringstream ok(
      "seqlat 1\nnodes 2 arcs 1 frames 2\nstart 0 end 1\nloss none\nnode 0 0\nnode 1 2\n"
      "arc 0 1 0 -0.5 - 0 0\n");
  EXPECT_EQ(read_lattice(ok).arc(0).log_weight, -0.5);
}

TEST(ForwardBackwardTest, SinglePath) {
  const Lattice lat(3, {0, 1, 3}, 0, 2, {arc(0, 1, 0, 1, -0.3), arc(1, 2, 1, 2, -0.1)});
  const Matrix ll = log_softmax_rows(random_matrix(3, 2, 1));
  const double kappa = 0.7;
  const PosteriorSet ps = forward_backward(lat, ll, kappa);
  EXPECT_NEAR(ps.arc_posterior[0], 1.0, 1e-15);
  EXPECT_NEAR(ps.arc_posterior[1], 1.0, 1e-15);
  const double score = kappa * (-0.3 + ll(0, 0) - 0.1 + ll(1, 1) + ll(2, 1));
  EXPECT_NEAR(ps.log_z, score, 1e-14);
}

TEST(ForwardBackwardTest, TwoEqualParallelArcs) {
  Lattice lat(2, {0, 2}, 0, 1, {arc(0, 1, 0, 2), arc(0, 1, 1, 2)});
  Matrix ll = Matrix::Constant(2, 2, std::log(0.5));
  const PosteriorSet ps = forward_backward(lat, ll, 1.0);
  EXPECT_NEAR(ps.arc_posterior[0], 0.5, 1e-15);
  EXPECT_NEAR(ps.arc_posterior[1], 0.5, 1e-15);
}

TEST(ForwardBackwardTest, ThreePathLatticeMatchesEnumeration) {
  const UtteranceExample u = three_path_example();
  const Matrix a = random_matrix(3, 3, 4);
  const double kappa = 0.5;
  const PosteriorSet ps = forward_backward(u.denominator, acoustic_loglikes(a), kappa);
  const oracle::EnumeratedStats en = oracle::enumerate_stats(u.denominator, a, kappa);
  ASSERT_EQ(en.paths.size(), 3u);
  EXPECT_NEAR(ps.log_z, en.log_z, 1e-10);
  EXPECT_NEAR(ps.log_z_backward, en.log_z, 1e-10);
  EXPECT_LT((ps.gamma - en.gamma).cwiseAbs().maxCoeff(), 1e-10);
  // alpha/beta: each arc's posterior from alpha + beta equals the
  // enumerated mass of the paths through it.
  for (int q = 0; q < u.denominator.num_arcs(); ++q) {
    double mass = 0.0;
    for (std::size_t n = 0; n < en.paths.size(); ++n)
      for (int r : en.paths[n].arcs) mass += r == q ? en.prob[n] : 0.0;
    const auto i = static_cast<std::size_t>(q);
    EXPECT_NEAR(std::exp(ps.arc_alpha[i] + ps.arc_beta[i] - en.log_z), mass, 1e-10);
  }
}

TEST(ForwardBackwardTest, OccupanciesAreNormalised) {
  const Dataset ds = generate_task(verify::oracle_task(3));
  for (const auto& u : ds.train) {
    const Matrix ll = acoustic_loglikes(random_matrix(u.num_frames(), 12, 5, 2.0));
    const PosteriorSet ps = forward_backward(u.denominator, ll, 0.5);
    EXPECT_LT((ps.gamma.rowwise().sum().array() - 1.0).abs().maxCoeff(), 1e-10);
    EXPECT_GE(ps.gamma.minCoeff(), 0.0);
    EXPECT_LE(ps.gamma.maxCoeff(), 1.0 + 1e-12);
  }
}

TEST(ForwardBackwardTest, EntropyIncreasesAsKappaDecreases) {
  const Dataset ds = generate_task(verify::oracle_task(4));
  int checked = 0;
  for (const auto& u : ds.train) {
    if (u.denominator.count_paths() < 2) continue;
    const Matrix ll = acoustic_loglikes(random_matrix(u.num_frames(), 12, 6, 2.0));
    const double h1 = path_entropy(u.denominator, ll, 1.0);
    const double h05 = path_entropy(u.denominator, ll, 0.5);
    const double h01 = path_entropy(u.denominator, ll, 0.1);
    EXPECT_LT(h1, h05);
    EXPECT_LT(h05, h01);
    EXPECT_LE(h01, std::log(u.denominator.count_paths()) + 1e-12);
    ++checked;
  }
  EXPECT_GT(checked, 0);
}

TEST(ForwardBackwardTest, RejectsMismatchedInput) {
  const UtteranceExample u = three_path_example();
  EXPECT_THROW(forward_backward(u.denominator, Matrix::Zero(2, 3), 1.0), UsageError);
  EXPECT_THROW(forward_backward(u.denominator, Matrix::Zero(3, 2), 1.0), DataError);
  Matrix nan = Matrix::Zero(3, 3);
  nan(0, 0) = std::nan("");
  EXPECT_THROW(forward_backward(u.denominator, nan, 1.0), NumericError);
}

TEST(LocalLossTest, StateLevelCountsMismatches) {
  // reference states 0 0 1 over three frames
  const Reference ref = testing::make_reference({{0, 2, 0}, {2, 3, 1}}, 1);
  const Lattice lat(3, {0, 3}, 0, 1, {arc(0, 1, 0, 3), {0, 1, 1, 0.0, {1, 1, 1}, 0.0},
                                      {0, 1, 0, 0.0, {0, 0, 1}, 0.0}});
  const Lattice st = annotate_local_loss(lat, ref, LossLevel::state);
  EXPECT_EQ(st.arc(0).loss, 1.0);
  EXPECT_EQ(st.arc(1).loss, 2.0);
  EXPECT_EQ(st.arc(2).loss, 0.0);
}

TEST(LocalLossTest, PhoneLevelMajorityOverlap) {
  // reference symbols 0 0 1 1 1
  const Reference ref = testing::make_reference({{0, 2, 0}, {2, 5, 1}}, 1);
  const Lattice lat(5, {0, 3, 5}, 0, 2,
                    {arc(0, 1, 0, 3), arc(0, 1, 1, 3), arc(1, 2, 1, 2), arc(1, 2, 0, 2)});
  const Lattice ph = annotate_local_loss(lat, ref, LossLevel::phone);
  EXPECT_EQ(ph.arc(0).loss, 0.0);  // 2 of 3 frames
  EXPECT_EQ(ph.arc(1).loss, 1.0);  // 1 of 3
  EXPECT_EQ(ph.arc(2).loss, 0.0);
  EXPECT_EQ(ph.arc(3).loss, 1.0);
}

TEST(LocalLossTest, PathLossIsFrameMismatchCount) {
  const Dataset ds = generate_task(verify::oracle_task(5));
  for (const auto& u : ds.train) {
    const auto paths = oracle::enumerate_paths(u.state_lattice, Matrix::Zero(u.num_frames(), 12), 1.0);
    for (const auto& p : paths) {
      double mismatches = 0.0;
      for (std::size_t t = 0; t < p.labels.size(); ++t) mismatches += p.labels[t] != u.reference.states[t];
      EXPECT_EQ(u.state_lattice.path_loss(p.arcs), mismatches);
    }
    EXPECT_EQ(u.state_lattice.path_loss(u.numerator), 0.0);
    EXPECT_EQ(u.phone_lattice.path_loss(u.numerator), 0.0);
  }
}

TEST(LevenshteinTest, Examples) {
  const std::vector<int> x{1, 2, 3};
  EXPECT_EQ(levenshtein(x, x), 0u);
  EXPECT_EQ(levenshtein({}, std::vector<int>{4, 5, 6, 7}), 4u);
  EXPECT_EQ(levenshtein(std::vector<int>{4, 5}, {}), 2u);
  const std::string k = "kitten", s = "sitting";
  EXPECT_EQ(levenshtein(std::vector<int>(k.begin(), k.end()), std::vector<int>(s.begin(), s.end())), 3u);
}

TEST(ViterbiTest, SinglePath) {
  const Lattice lat(3, {0, 1, 3}, 0, 2, {arc(0, 1, 0, 1), arc(1, 2, 1, 2)});
  const ViterbiResult r = viterbi_decode(lat, log_softmax_rows(random_matrix(3, 2, 2)), 1.0);
  EXPECT_EQ(r.arcs, (std::vector<int>{0, 1}));
  EXPECT_EQ(r.symbols, (std::vector<int>{0, 1}));
}

TEST(ViterbiTest, PicksHigherScore) {
  const Lattice lat(2, {0, 2}, 0, 1, {arc(0, 1, 0, 2), arc(0, 1, 1, 2)});
  Matrix ll(2, 2);
  ll << std::log(0.4), std::log(0.6), std::log(0.4), std::log(0.6);
  EXPECT_EQ(viterbi_decode(lat, ll, 1.0).symbols, std::vector<int>{1});
}

TEST(ViterbiTest, MatchesEnumerationArgmax) {
  // Four paths: two choices in each of two segments.
  const Lattice lat(4, {0, 2, 4}, 0, 2,
                    {arc(0, 1, 0, 2, -0.2), arc(0, 1, 1, 2, -0.4), arc(1, 2, 2, 2, -0.1),
                     arc(1, 2, 0, 2, -0.3)});
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const Matrix a = random_matrix(4, 3, seed, 2.0);
    const auto paths = oracle::enumerate_paths(lat, a, 0.8);
    ASSERT_EQ(paths.size(), 4u);
    std::size_t best = 0;
    for (std::size_t n = 1; n < paths.size(); ++n)
      if (paths[n].score > paths[best].score) best = n;
    const ViterbiResult r = viterbi_decode(lat, acoustic_loglikes(a), 0.8);
    EXPECT_EQ(r.arcs, paths[best].arcs);
    EXPECT_NEAR(r.score, paths[best].score, 1e-12);
  }
}

}  // namespace
}  // namespace seqtrain
