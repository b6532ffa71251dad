// seqtrain/training.hpp

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
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "seqtrain/checkpoint.hpp"
#include "seqtrain/config.hpp"
#include "seqtrain/levenshtein.hpp"
#include "seqtrain/sequence_problem.hpp"
#include "seqtrain/synthetic.hpp"

namespace seqtrain {

/// Criterion, accuracy and token error rate of a model on an utterance set.
///
/// accuracy is 1 - normalised expected loss: MPE divides by the number of
/// reference symbols, sMBR by the number of frames. For MMI it is the mean
/// posterior probability of the reference hypothesis.
struct SetMetrics {
  double criterion = 0.0;  // mean per-utterance F
  double accuracy = 0.0;
  double token_error_rate = 0.0;
  double frame_accuracy = 0.0;
};

inline SetMetrics evaluate_set(const Network& net, const ParameterVector& theta,
                               std::span<const UtteranceExample> data, Criterion criterion,
                               double kappa) {
  if (data.empty()) throw UsageError("cannot evaluate an empty set");
  SetMetrics m;
  double loss = 0.0, units = 0.0, errors = 0.0, tokens = 0.0, correct = 0.0, frames = 0.0;
  for (const auto& u : data) {
    const ActivationRecord rec = forward(net, theta, u.features);
    const UtteranceStats st = criterion_utterance(criterion, u, rec.output, kappa);
    m.criterion += st.value;
    if (criterion == Criterion::mmi) {
      loss += std::exp(st.value);
      units += 1.0;
    } else {
      loss += st.value;
      units += criterion == Criterion::mpe ? static_cast<double>(u.reference.segments.size())
                                           : u.num_frames();
    }
    const Matrix ll = acoustic_loglikes(rec.output);
    const ViterbiResult best = viterbi_decode(u.denominator, ll, kappa);
    const std::vector<int> ref = u.reference.symbols();
    errors += static_cast<double>(levenshtein(best.symbols, ref));
    tokens += static_cast<double>(ref.size());
    for (Eigen::Index t = 0; t < ll.rows(); ++t) {
      Eigen::Index k = 0;
      ll.row(t).maxCoeff(&k);
      correct += k == u.reference.states[static_cast<std::size_t>(t)] ? 1.0 : 0.0;
    }
    frames += u.num_frames();
  }
  const double n = static_cast<double>(data.size());
  m.criterion /= n;
  m.accuracy = criterion == Criterion::mmi ? loss / units : 1.0 - loss / units;
  m.token_error_rate = errors / tokens;
  m.frame_accuracy = correct / frames;
  return m;
}

// ---------------------------------------------------------------------------
// Metrics log.

/// One CSV row. Row 0 (update 0) is the CE baseline; validation columns are
/// filled at epoch ends only.
struct MetricsRow {
  long update = 0;
  int epoch = 0;
  std::string status = "baseline";
  std::optional<double> batch_objective_before;
  std::optional<double> batch_objective_after;
  std::optional<double> train_objective;  // objective on the whole training set
  std::optional<double> train_criterion;
  std::optional<double> train_accuracy;
  std::optional<double> valid_criterion;
  std::optional<double> valid_accuracy;
  std::optional<double> valid_token_error_rate;
  std::optional<double> lambda;
  std::optional<double> cg_iterations;
  std::optional<double> cg_restarts;
  std::optional<double> backtracks;
  std::optional<double> reduction_ratio;
  std::optional<double> step_norm;
  double compute = 0.0;  // cumulative gradient-equivalent cost
};

struct MetricsLog {
  std::string method;
  std::vector<MetricsRow> rows;
  std::vector<double> wall_seconds;  // per row, kept out of the CSV

  void append(MetricsRow row, double wall = 0.0) {
    if (!rows.empty() && row.update <= rows.back().update)
      throw UsageError("metrics rows must be strictly ordered by update index");
    rows.push_back(std::move(row));
    wall_seconds.push_back(wall);
  }

  /// Row with validation metrics for epoch `e` (the last row of that epoch).
  const MetricsRow* epoch_end(int e) const {
    for (auto it = rows.rbegin(); it != rows.rend(); ++it)
      if (it->epoch == e && it->valid_criterion) return &*it;
    return nullptr;
  }
};

inline const char* metrics_csv_header() {
  return "update,epoch,method,status,batch_objective_before,batch_objective_after,"
         "train_objective,train_criterion,train_accuracy,valid_criterion,valid_accuracy,"
         "valid_token_error_rate,lambda,cg_iterations,cg_restarts,backtracks,reduction_ratio,"
         "step_norm,compute";
}

namespace detail {

inline std::string fmt17(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline std::string field(const std::optional<double>& x) { return x ? fmt17(*x) : std::string(); }

}  // namespace detail

inline void write_metrics_csv(std::ostream& out, const MetricsLog& log) {
  out << metrics_csv_header() << '\n';
  for (const auto& r : log.rows) {
    using detail::field;
    out << r.update << ',' << r.epoch << ',' << log.method << ',' << r.status << ','
        << field(r.batch_objective_before) << ',' << field(r.batch_objective_after) << ','
        << field(r.train_objective) << ',' << field(r.train_criterion) << ','
        << field(r.train_accuracy) << ',' << field(r.valid_criterion) << ','
        << field(r.valid_accuracy) << ',' << field(r.valid_token_error_rate) << ','
        << field(r.lambda) << ',' << field(r.cg_iterations) << ',' << field(r.cg_restarts) << ','
        << field(r.backtracks) << ',' << field(r.reduction_ratio) << ',' << field(r.step_norm)
        << ',' << detail::fmt17(r.compute) << '\n';
  }
}

inline void write_timing_csv(std::ostream& out, const MetricsLog& log) {
  out << "update,wall_seconds\n";
  for (std::size_t i = 0; i < log.rows.size(); ++i)
    out << log.rows[i].update << ',' << detail::fmt17(log.wall_seconds[i]) << '\n';
}

/// Final summary row: method, #epochs, #updates, criterion accuracies and
/// validation token error rate.
struct RunSummary {
  std::string method;
  std::string criterion;
  int epochs = 0;
  long updates = 0;
  double train_criterion = 0.0;
  double train_accuracy = 0.0;
  double valid_criterion = 0.0;
  double valid_accuracy = 0.0;
  double valid_token_error_rate = 0.0;
  std::string status = "ok";
};

inline nlohmann::ordered_json to_json(const RunSummary& s) {
  nlohmann::ordered_json j;
  j["method"] = s.method;
  j["criterion"] = s.criterion;
  j["epochs"] = s.epochs;
  j["updates"] = s.updates;
  j["train_criterion"] = s.train_criterion;
  j["train_accuracy"] = s.train_accuracy;
  j["valid_criterion"] = s.valid_criterion;
  j["valid_accuracy"] = s.valid_accuracy;
  j["valid_token_error_rate"] = s.valid_token_error_rate;
  j["status"] = s.status;
  return j;
}

inline const char* summary_csv_header() {
  return "method,criterion,epochs,updates,train_criterion,train_accuracy,valid_criterion,"
         "valid_accuracy,valid_token_error_rate,status";
}

inline void write_summary_csv_row(std::ostream& out, const RunSummary& s) {
  using detail::fmt17;
  out << s.method << ',' << s.criterion << ',' << s.epochs << ',' << s.updates << ','
      << fmt17(s.train_criterion) << ',' << fmt17(s.train_accuracy) << ','
      << fmt17(s.valid_criterion) << ',' << fmt17(s.valid_accuracy) << ','
      << fmt17(s.valid_token_error_rate) << ',' << s.status << '\n';
}

// ---------------------------------------------------------------------------
// CE pre-training.

struct PretrainResult {
  ParameterVector theta;
  std::vector<double> train_ce;             // mean frame CE after each epoch
  std::vector<double> valid_frame_accuracy; // after each epoch
};

/// Plain SGD on the mean frame cross entropy, one utterance per step, in a
/// freshly shuffled utterance order each epoch.
inline PretrainResult ce_pretrain(const Network& net, ParameterVector theta,
                                  std::span<const UtteranceExample> train,
                                  std::span<const UtteranceExample> validation, int epochs,
                                  double learning_rate, std::mt19937_64& rng) {
  if (epochs < 0) throw ConfigError("CE epochs must be >= 0");
  if (!(learning_rate > 0.0)) throw ConfigError("CE learning rate must be positive");
  PretrainResult res;
  const SequenceProblem problem(net, train, Criterion::ce, 1.0);
  std::vector<std::size_t> order = problem.all_indices();
  for (int e = 0; e < epochs; ++e) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t i : order) {
      const std::size_t one[] = {i};
      const Evaluation ev = problem.evaluate(theta, one);
      if (!std::isfinite(ev.objective) || !ev.gradient.allFinite())
        throw NumericError(detail::cat("CE pre-training diverged in epoch ", e));
      theta -= learning_rate * ev.gradient;
    }
    const auto all = problem.all_indices();
    res.train_ce.push_back(problem.objective(theta, all));
    if (!validation.empty())
      res.valid_frame_accuracy.push_back(
          evaluate_set(net, theta, validation, Criterion::mmi, 1.0).frame_accuracy);
  }
  res.theta = std::move(theta);
  return res;
}

// ---------------------------------------------------------------------------
// Sequence training.

struct RunResult {
  MetricsLog log;
  Network net;
  ParameterVector theta;
  RunSummary summary;
  bool aborted = false;
  std::string abort_reason;
};

namespace detail {

inline std::mt19937_64 stream(std::uint64_t seed, std::uint64_t which) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(which)};
  return std::mt19937_64(seq);
}

inline void fill_epoch_metrics(MetricsRow& row, const Network& net, const ParameterVector& theta,
                               const Dataset& ds, const RunConfig& cfg) {
  const SetMetrics tr = evaluate_set(net, theta, ds.train, cfg.criterion, cfg.kappa);
  const SetMetrics va = evaluate_set(net, theta, ds.validation, cfg.criterion, cfg.kappa);
  row.train_objective = objective_sign(cfg.criterion) * tr.criterion;
  row.train_criterion = tr.criterion;
  row.train_accuracy = tr.accuracy;
  row.valid_criterion = va.criterion;
  row.valid_accuracy = va.accuracy;
  row.valid_token_error_rate = va.token_error_rate;
}

inline RunSummary summarize(const MetricsLog& log, const RunConfig& cfg, int epochs, long updates) {
  RunSummary s;
  s.method = log.method;
  s.criterion = to_string(cfg.criterion);
  s.epochs = epochs;
  s.updates = updates;
  for (auto it = log.rows.rbegin(); it != log.rows.rend(); ++it) {
    if (!it->valid_criterion) continue;
    s.train_criterion = *it->train_criterion;
    s.train_accuracy = *it->train_accuracy;
    s.valid_criterion = *it->valid_criterion;
    s.valid_accuracy = *it->valid_accuracy;
    s.valid_token_error_rate = *it->valid_token_error_rate;
    break;
  }
  return s;
}

}  // namespace detail

/// Network and CE-trained parameters for a run; depends only on the seed,
/// the topology and the CE settings.
struct PretrainedModel {
  Network net;
  ParameterVector theta;
  PretrainResult history;
};

inline PretrainedModel pretrain_model(const RunConfig& cfg, const Dataset& ds) {
  PretrainedModel m{Network(cfg.layer_dims()), {}, {}};
  auto init_rng = detail::stream(cfg.seed, 0);
  ParameterVector theta = init_parameters(m.net, init_rng);
  auto ce_rng = detail::stream(cfg.seed, 1);
  m.history = ce_pretrain(m.net, std::move(theta), ds.train, ds.validation, cfg.ce_epochs,
                          cfg.ce_learning_rate, ce_rng);
  m.theta = m.history.theta;
  return m;
}

/// Sequence training from given initial parameters. Each epoch visits every
/// training utterance once, in a fresh utterance-level shuffle, split into
/// batches of round(batch_fraction * N) utterances (SGD: sgd_batch_utterances).
/// Numerical failures end the run early with `aborted` set; the log up to that
/// point is kept.
inline RunResult train_from(const RunConfig& cfg, const Dataset& ds, const Network& net,
                            ParameterVector theta) {
  cfg.validate();
  RunResult res;
  res.net = net;
  res.log.method = to_string(cfg.optimizer.method);
  const SequenceProblem problem(net, ds.train, cfg.criterion, cfg.kappa);
  const SequenceProblem monitor(net, ds.train, cfg.criterion, cfg.kappa);  // uncounted
  const auto all = monitor.all_indices();

  MetricsRow base;
  detail::fill_epoch_metrics(base, net, theta, ds, cfg);
  res.log.append(base);

  OptimizerState state(cfg.optimizer, detail::stream(cfg.seed, 3)());
  auto order_rng = detail::stream(cfg.seed, 2);
  std::vector<std::size_t> order = problem.all_indices();
  const bool sgd = cfg.optimizer.method == Method::sgd;
  const std::size_t n = order.size();
  const std::size_t batch =
      sgd ? static_cast<std::size_t>(cfg.optimizer.sgd_batch_utterances)
          : std::max<std::size_t>(
                1, static_cast<std::size_t>(std::llround(cfg.optimizer.batch_fraction * n)));
  long updates = 0;
  int epochs_done = 0;

  try {
    for (int e = 1; e <= cfg.epochs; ++e) {
      std::shuffle(order.begin(), order.end(), order_rng);
      state.reset_blend();
      for (std::size_t b0 = 0; b0 < n; b0 += batch) {
        std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(b0),
                                     order.begin() + static_cast<std::ptrdiff_t>(std::min(n, b0 + batch)));
        std::sort(idx.begin(), idx.end());
        auto [next, rec] = optimizer_update(problem, theta, idx, cfg.optimizer, state);
        theta = std::move(next);
        ++updates;
        MetricsRow row;
        row.update = updates;
        row.epoch = e;
        row.status = to_string(rec.status);
        row.batch_objective_before = rec.objective_before;
        row.batch_objective_after = rec.objective_after;
        row.step_norm = rec.step_norm;
        row.compute = problem.compute_used();
        if (!sgd) {
          row.lambda = rec.lambda;
          row.cg_iterations = rec.cg_iterations;
          row.cg_restarts = rec.cg_restarts;
          row.backtracks = rec.backtracks;
          row.reduction_ratio = rec.reduction_ratio;
          row.train_objective = monitor.objective(theta, all);
        }
        if (b0 + batch >= n) detail::fill_epoch_metrics(row, net, theta, ds, cfg);
        res.log.append(std::move(row), rec.wall_seconds);
      }
      epochs_done = e;
    }
  } catch (const NumericError& err) {
    res.aborted = true;
    res.abort_reason = err.what();
  }
  res.theta = std::move(theta);
  res.summary = detail::summarize(res.log, cfg, epochs_done, updates);
  if (res.aborted) res.summary.status = "aborted";
  return res;
}

/// CE pre-training followed by sequence training on the configured task.
inline RunResult train(const RunConfig& cfg) {
  cfg.validate();
  const Dataset ds = generate_task(cfg.task);
  PretrainedModel m = pretrain_model(cfg, ds);
  return train_from(cfg, ds, m.net, std::move(m.theta));
}

/// Summary of a run with zero sequence-training epochs.
inline RunSummary ce_baseline_summary(const RunConfig& cfg, const Dataset& ds, const Network& net,
                                      const ParameterVector& theta) {
  RunConfig c = cfg;
  c.epochs = 0;
  RunSummary s = train_from(c, ds, net, theta).summary;
  s.method = "ce";
  return s;
}

struct CompareResult {
  std::vector<RunSummary> rows;    // CE baseline first, then one per method
  std::vector<RunResult> runs;     // one per method
};

/// One dataset and one CE model shared by every method in `methods`.
inline CompareResult compare(const RunConfig& cfg, const std::vector<Method>& methods) {
  cfg.validate();
  const Dataset ds = generate_task(cfg.task);
  const PretrainedModel pre = pretrain_model(cfg, ds);
  CompareResult out;
  out.rows.push_back(ce_baseline_summary(cfg, ds, pre.net, pre.theta));
  for (Method m : methods) {
    RunResult r = train_from(cfg.with_method(m), ds, pre.net, pre.theta);
    out.rows.push_back(r.summary);
    out.runs.push_back(std::move(r));
  }
  return out;
}

/// Writes metrics.csv, timing.csv, summary.json, checkpoint.txt and the
/// resolved config.ini under `dir`.
inline void write_run_outputs(const std::filesystem::path& dir, const RunConfig& cfg,
                              const RunResult& run) {
  std::filesystem::create_directories(dir);
  auto open = [&](const char* name) {
    std::ofstream f(dir / name);
    if (!f) throw DataError("cannot write " + (dir / name).string());
    return f;
  };
  {
    auto f = open("metrics.csv");
    write_metrics_csv(f, run.log);
  }
  {
    auto f = open("timing.csv");
    write_timing_csv(f, run.log);
  }
  {
    auto f = open("summary.json");
    nlohmann::ordered_json j = to_json(run.summary);
    if (run.aborted) j["abort_reason"] = run.abort_reason;
    f << j.dump(2) << '\n';
  }
  {
    auto f = open("config.ini");
    write_run_config(f, cfg);
  }
  save_checkpoint((dir / "checkpoint.txt").string(), run.net, run.theta);
}

}  // namespace seqtrain
