// tests/harness_test.cpp

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


#include <filesystem>
#include <sstream>

#include <gtest/gtest.h>

#include "test_util.hpp"

#ifndef SEQTRAIN_TEST_DATA
#define SEQTRAIN_TEST_DATA "tests/data"
#endif

namespace seqtrain {
namespace {

namespace fs = std::filesystem;

SyntheticTaskConfig small_task(std::uint64_t seed) {
  SyntheticTaskConfig c;
  c.train_utterances = 12;
  c.validation_utterances = 6;
  c.min_frames = 12;
  c.max_frames = 18;
  c.seed = seed;
  return c;
}

RunConfig small_run() { return load_run_config(fs::path(SEQTRAIN_TEST_DATA) / "small_run.ini"); }

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("seqtrain_harness_" + name);
  fs::remove_all(p);
  return p;
}

TEST(SyntheticTest, NoConfusionGivesSinglePath) {
  SyntheticTaskConfig c = small_task(1);
  c.confusion = 0.0;
  for (const auto& u : generate_task(c).train) EXPECT_EQ(u.denominator.count_paths(), 1.0);
}

TEST(SyntheticTest, SeedDeterminism) {
  const Dataset a = generate_task(small_task(5)), b = generate_task(small_task(5));
  const Dataset c = generate_task(small_task(6));
  ASSERT_EQ(a.train.size(), b.train.size());
  bool differs = false;
  for (std::size_t i = 0; i < a.train.size(); ++i) {
    EXPECT_EQ(a.train[i].features.frames, b.train[i].features.frames);
    EXPECT_EQ(a.train[i].reference.states, b.train[i].reference.states);
    EXPECT_EQ(a.train[i].denominator.count_paths(), b.train[i].denominator.count_paths());
    differs = differs || a.train[i].features.frames.size() != c.train[i].features.frames.size() ||
              a.train[i].features.frames != c.train[i].features.frames;
  }
  EXPECT_TRUE(differs);
}

TEST(SyntheticTest, DefaultLatticesAreSmallButConfusable) {
  SyntheticTaskConfig c;
  c.train_utterances = 40;
  c.validation_utterances = 10;
  const Dataset ds = generate_task(c);
  double total = 0.0;
  for (const auto& u : ds.train) {
    const double p = u.denominator.count_paths();
    EXPECT_LE(p, c.max_paths);
    EXPECT_EQ(u.num_frames(), u.features.num_frames());
    EXPECT_GE(u.num_frames(), c.min_frames);
    EXPECT_LE(u.num_frames(), c.max_frames);
    total += p;
  }
  const double mean = total / static_cast<double>(ds.train.size());
  EXPECT_GE(mean, 2.0);
  EXPECT_LE(mean, 100.0);
}

TEST(SyntheticTest, RejectsBadConfig) {
  SyntheticTaskConfig c;
  c.num_states = 13;
  EXPECT_THROW(generate_task(c), ConfigError);
  c = SyntheticTaskConfig{};
  c.confusion = 1.5;
  EXPECT_THROW(c.validate(), ConfigError);
  c = SyntheticTaskConfig{};
  c.max_frames = 1;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(PretrainTest, ZeroEpochsIsIdentity) {
  const Dataset ds = generate_task(small_task(2));
  const Network net({8, 8, 12});
  const ParameterVector theta = testing::random_theta(net, 3);
  std::mt19937_64 rng(1);
  const PretrainResult r = ce_pretrain(net, theta, ds.train, ds.validation, 0, 0.1, rng);
  EXPECT_EQ(r.theta, theta);
  EXPECT_TRUE(r.train_ce.empty());
}

TEST(PretrainTest, SeparableTaskIsLearned) {
  const Dataset ds = generate_task(SyntheticTaskConfig::separable());
  const Network net({4, 16, 4});
  std::mt19937_64 rng(7);
  const ParameterVector theta = init_parameters(net, rng);
  const PretrainResult r = ce_pretrain(net, theta, ds.train, ds.validation, 20, 0.2, rng);
  ASSERT_EQ(r.valid_frame_accuracy.size(), 20u);
  EXPECT_GT(r.valid_frame_accuracy.back(), 0.9);
  EXPECT_LT(r.train_ce.back(), r.train_ce.front());
  EXPECT_THROW(ce_pretrain(net, theta, ds.train, ds.validation, 1, 0.0, rng), ConfigError);
}

TEST(TrainTest, ZeroEpochsIsCeBaseline) {
  RunConfig cfg = small_run();
  const Dataset ds = generate_task(cfg.task);
  const PretrainedModel pre = pretrain_model(cfg, ds);
  cfg.epochs = 0;
  const RunResult r = train_from(cfg, ds, pre.net, pre.theta);
  EXPECT_EQ(r.theta, pre.theta);
  ASSERT_EQ(r.log.rows.size(), 1u);
  const RunSummary base = ce_baseline_summary(small_run(), ds, pre.net, pre.theta);
  EXPECT_EQ(base.method, "ce");
  EXPECT_EQ(base.valid_token_error_rate, r.summary.valid_token_error_rate);
  EXPECT_EQ(base.updates, 0);
}

TEST(TrainTest, LogStructure) {
  const RunConfig cfg = small_run();
  const RunResult r = train(cfg);
  ASSERT_FALSE(r.aborted);
  // 16 utterances in batches of 4: four updates per epoch.
  EXPECT_EQ(r.summary.updates, 8);
  EXPECT_EQ(r.summary.epochs, 2);
  ASSERT_EQ(r.log.rows.size(), 9u);
  EXPECT_EQ(r.log.rows[0].status, "baseline");
  for (std::size_t i = 1; i < r.log.rows.size(); ++i) {
    const MetricsRow& row = r.log.rows[i];
    EXPECT_EQ(row.update, static_cast<long>(i));
    EXPECT_LE(*row.batch_objective_after, *row.batch_objective_before);
    EXPECT_GE(row.compute, r.log.rows[i - 1].compute);
    EXPECT_TRUE(row.train_objective.has_value());
    EXPECT_EQ(row.valid_criterion.has_value(), i % 4 == 0);
  }
  EXPECT_NE(r.log.epoch_end(2), nullptr);
  EXPECT_EQ(r.log.epoch_end(3), nullptr);
}

TEST(TrainTest, SameSeedSameLog) {
  for (Method m : {Method::sgd, Method::ng, Method::dsag_hf}) {
    const RunConfig cfg = small_run().with_method(m);
    std::ostringstream a, b;
    write_metrics_csv(a, train(cfg).log);
    write_metrics_csv(b, train(cfg).log);
    EXPECT_EQ(a.str(), b.str()) << to_string(m);
  }
}

TEST(TrainTest, SecondOrderTrainingLowersObjective) {
  const RunResult r = train(small_run());
  double first = 0.0;
  {
    const RunConfig cfg = small_run();
    const Dataset ds = generate_task(cfg.task);
    const PretrainedModel pre = pretrain_model(cfg, ds);
    const SequenceProblem p(pre.net, ds.train, cfg.criterion, cfg.kappa);
    first = p.objective(pre.theta, p.all_indices());
  }
  EXPECT_LT(*r.log.rows.back().train_objective, first);
}

TEST(TrainTest, SgdImprovesTrainingCriterion) {
  RunConfig cfg = small_run().with_method(Method::sgd);
  cfg.optimizer.learning_rate = 1e-2;
  cfg.epochs = 4;
  const RunResult r = train(cfg);
  EXPECT_LT(*r.log.rows.back().train_criterion, *r.log.rows.front().train_criterion);
}

TEST(ConfigTest, DefaultsValidate) {
  EXPECT_NO_THROW(RunConfig{}.validate());
  std::istringstream empty("");
  const RunConfig c = parse_run_config(empty);
  EXPECT_EQ(c.optimizer.method, Method::ng);
  EXPECT_EQ(c.layer_dims(), (std::vector<int>{8, 32, 32, 12}));
}

TEST(ConfigTest, UnknownKeysAndSections) {
  std::istringstream key("[train]\nkappa = 0.5\nkapa = 0.5\n");
  EXPECT_THROW(parse_run_config(key), ConfigError);
  std::istringstream section("[trainer]\nkappa = 0.5\n");
  EXPECT_THROW(parse_run_config(section), ConfigError);
  std::istringstream value("[train]\nepochs = two\n");
  EXPECT_THROW(parse_run_config(value), ConfigError);
  std::istringstream method("[optimizer]\nmethod = lbfgs\n");
  EXPECT_THROW(parse_run_config(method), ConfigError);
  std::istringstream hidden("[network]\nhidden = 8,x\n");
  EXPECT_THROW(parse_run_config(hidden), ConfigError);
  EXPECT_THROW(load_run_config(fs::path(SEQTRAIN_TEST_DATA) / "bad_kappa.ini"), ConfigError);
  EXPECT_THROW(load_run_config("no/such/file.ini"), ConfigError);
}

TEST(ConfigTest, WriteReadRoundTrip) {
  RunConfig c = small_run();
  c.optimizer.dsag_mu = 0.25;
  c.optimizer.cg.blend_weight = 0.25;
  c.kappa = 1.0 / 3.0;
  std::stringstream ss;
  write_run_config(ss, c);
  const RunConfig d = parse_run_config(ss);
  std::stringstream again;
  write_run_config(again, d);
  EXPECT_EQ(ss.str(), again.str());
  EXPECT_EQ(d.kappa, c.kappa);
  EXPECT_EQ(d.hidden, c.hidden);
  EXPECT_EQ(d.optimizer.method, Method::hf);
}

TEST(ConfigTest, SmallRunFile) {
  const RunConfig c = small_run();
  EXPECT_EQ(c.task.train_utterances, 16);
  EXPECT_EQ(c.hidden, std::vector<int>{8});
  EXPECT_EQ(c.criterion, Criterion::mpe);
  EXPECT_EQ(c.optimizer.method, Method::hf);
  EXPECT_EQ(c.optimizer.cg.max_iters, 5);
  EXPECT_EQ(c.optimizer.curvature_min_utterances, 2);
}

TEST(ConfigTest, WithMethodKeepsSampling) {
  RunConfig c = small_run();
  c.optimizer.batch_fraction = 0.5;
  const RunConfig n = c.with_method(Method::ng);
  EXPECT_EQ(n.optimizer.method, Method::ng);
  EXPECT_EQ(n.optimizer.batch_fraction, 0.5);
  EXPECT_EQ(n.optimizer.curvature_min_utterances, 2);
  EXPECT_EQ(n.optimizer.cg.max_iters, 8);
}

TEST(DatasetIoTest, RoundTrip) {
  const Dataset ds = generate_task(small_task(9));
  const fs::path dir = scratch_dir("dataset");
  save_dataset(dir, ds);
  const Dataset back = load_dataset(dir);
  ASSERT_EQ(back.train.size(), ds.train.size());
  ASSERT_EQ(back.validation.size(), ds.validation.size());
  for (std::size_t i = 0; i < ds.train.size(); ++i) {
    EXPECT_EQ(back.train[i].features.frames, ds.train[i].features.frames);
    EXPECT_EQ(back.train[i].features.utterance_id, ds.train[i].features.utterance_id);
    EXPECT_EQ(back.train[i].reference.states, ds.train[i].reference.states);
    EXPECT_EQ(back.train[i].denominator.count_paths(), ds.train[i].denominator.count_paths());
    const Matrix a = testing::random_matrix(ds.train[i].num_frames(), 12, i);
    EXPECT_EQ(mmi_utterance(back.train[i], a, 0.5).value, mmi_utterance(ds.train[i], a, 0.5).value);
  }
  fs::remove_all(dir);
  EXPECT_THROW(load_dataset(dir), DataError);
}

TEST(OutputTest, RunFiles) {
  RunConfig cfg = small_run();
  cfg.epochs = 1;
  const RunResult r = train(cfg);
  const fs::path dir = scratch_dir("outputs");
  write_run_outputs(dir, cfg, r);
  for (const char* f : {"metrics.csv", "timing.csv", "summary.json", "config.ini", "checkpoint.txt"})
    EXPECT_TRUE(fs::exists(dir / f)) << f;
  std::ifstream m(dir / "metrics.csv");
  std::string header;
  std::getline(m, header);
  EXPECT_EQ(header, metrics_csv_header());
  std::ifstream s(dir / "summary.json");
  const auto j = nlohmann::json::parse(s);
  EXPECT_EQ(j.at("method"), "hf");
  EXPECT_EQ(j.at("updates"), 4);
  EXPECT_DOUBLE_EQ(j.at("valid_token_error_rate").get<double>(), r.summary.valid_token_error_rate);
  const auto [net, theta] = load_checkpoint((dir / "checkpoint.txt").string());
  EXPECT_EQ(theta, r.theta);
  EXPECT_EQ(net.layer_dims(), r.net.layer_dims());
  EXPECT_EQ(load_run_config(dir / "config.ini").task.seed, cfg.task.seed);
  fs::remove_all(dir);
}

TEST(OutputTest, MetricsLogOrdering) {
  MetricsLog log;
  MetricsRow a;
  a.update = 0;
  log.append(a);
  MetricsRow b;
  b.update = 0;
  EXPECT_THROW(log.append(b), UsageError);
  b.update = 1;
  b.step_norm = 0.5;
  log.append(b, 2.0);
  std::ostringstream csv, timing;
  write_metrics_csv(csv, log);
  write_timing_csv(timing, log);
  const std::string text = csv.str();
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 3);
  EXPECT_NE(timing.str().find("1,2\n"), std::string::npos);
}

TEST(OutputTest, SummaryCsvRow) {
  RunSummary s;
  s.method = "ng";
  s.criterion = "mpe";
  std::ostringstream out;
  write_summary_csv_row(out, s);
  const std::string header = summary_csv_header();
  const std::string row = out.str();
  EXPECT_EQ(std::count(header.begin(), header.end(), ','), std::count(row.begin(), row.end(), ','));
}

}  // namespace
}  // namespace seqtrain
