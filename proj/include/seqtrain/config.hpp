// seqtrain/config.hpp

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

// Run configuration file: INI syntax, four sections, every key optional.
//
//   [task]       num_states num_symbols feature_dim min_frames max_frames
//                min_segment max_segment train_utterances
//                validation_utterances confusion shift_ratio bump_width noise
//                max_paths
//                seed
//   [network]    hidden            comma separated hidden layer sizes
//   [train]      criterion (mmi|mpe|smbr) kappa epochs ce_epochs
//                ce_learning_rate seed output
//   [optimizer]  method (sgd|hf|dsag_hf|ng) learning_rate clip_threshold
//                sgd_batch_utterances lambda lambda_min lambda_max
//                lambda_factor batch_fraction curvature_fraction
//                curvature_min_utterances max_backtracks cg_iters
//                cg_residual_tol cg_init (zero|gradient|blended) dsag_mu
//                fisher_floor fisher_smoothing
//
// Unknown sections or keys are configuration errors. Optimizer keys left
// unset take the per-method defaults of OptimizerConfig::defaults().

#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "seqtrain/criteria.hpp"
#include "seqtrain/optim.hpp"
#include "seqtrain/synthetic.hpp"

namespace seqtrain {

struct RunConfig {
  SyntheticTaskConfig task;
  std::vector<int> hidden = {32, 32};
  Criterion criterion = Criterion::mpe;
  double kappa = 0.5;
  int epochs = 10;
  int ce_epochs = 10;
  double ce_learning_rate = 0.2;
  std::uint64_t seed = 1;
  std::string output = "run";
  OptimizerConfig optimizer = OptimizerConfig::defaults(Method::ng);

  std::vector<int> layer_dims() const {
    std::vector<int> d{task.feature_dim};
    d.insert(d.end(), hidden.begin(), hidden.end());
    d.push_back(task.num_states);
    return d;
  }

  /// Same run with another optimiser at its defaults, keeping the batch and
  /// curvature sampling settings.
  RunConfig with_method(Method m) const {
    RunConfig r = *this;
    OptimizerConfig o = OptimizerConfig::defaults(m);
    o.batch_fraction = optimizer.batch_fraction;
    o.curvature_fraction = optimizer.curvature_fraction;
    o.curvature_min_utterances = optimizer.curvature_min_utterances;
    o.max_backtracks = optimizer.max_backtracks;
    r.optimizer = o;
    return r;
  }

  /// Overrides the training seed and derives the task seed from it.
  void set_seed(std::uint64_t s) {
    seed = s;
    task.seed = s;
  }

  void validate() const {
    task.validate();
    for (int h : hidden)
      if (h < 1) throw ConfigError("hidden layer sizes must be positive");
    if (criterion == Criterion::ce)
      throw ConfigError("sequence training criterion must be mmi, mpe or smbr");
    if (!(kappa > 0.0 && kappa <= 1.0)) throw ConfigError("kappa must lie in (0, 1]");
    if (epochs < 0 || ce_epochs < 0) throw ConfigError("epoch counts must be >= 0");
    if (!(ce_learning_rate > 0.0)) throw ConfigError("ce_learning_rate must be positive");
    optimizer.validate();
  }
};

namespace detail {

using boost::property_tree::ptree;

inline std::vector<int> parse_int_list(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    if (b == std::string::npos) continue;
    try {
      std::size_t used = 0;
      out.push_back(std::stoi(item.substr(b), &used));
      if (item.find_first_not_of(" \t", b + used) != std::string::npos) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ConfigError("bad integer list '" + s + "'");
    }
  }
  return out;
}

class SectionReader {
 public:
  SectionReader(const ptree& root, const std::string& name) : name_(name) {
    if (auto c = root.get_child_optional(name)) node_ = &*c;
  }

  template <typename T>
  void read(const std::string& key, T& out) {
    seen_.insert(key);
    if (!node_) return;
    auto v = node_->get_optional<std::string>(key);
    if (!v) return;
    out = convert<T>(key, *v);
  }

  void check_unknown() const {
    if (!node_) return;
    for (const auto& [key, _] : *node_)
      if (!seen_.count(key)) throw ConfigError("unknown key '" + key + "' in [" + name_ + "]");
  }

  bool has(const std::string& key) const { return node_ && node_->get_optional<std::string>(key); }

 private:
  template <typename T>
  T convert(const std::string& key, const std::string& v) const {
    std::istringstream in(v);
    T out{};
    if constexpr (std::is_same_v<T, std::string>) {
      return v;
    } else {
      if (!(in >> out) || !(in >> std::ws).eof())
        throw ConfigError("bad value '" + v + "' for " + name_ + "." + key);
    }
    return out;
  }

  std::string name_;
  const ptree* node_ = nullptr;
  std::set<std::string> seen_;
};

}  // namespace detail

inline RunConfig parse_run_config(std::istream& in) {
  detail::ptree root;
  try {
    boost::property_tree::ini_parser::read_ini(in, root);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError(std::string("config parse error: ") + e.message() + " at line " +
                      std::to_string(e.line()));
  }
  for (const auto& [section, node] : root) {
    static const std::set<std::string> known{"task", "network", "train", "optimizer"};
    if (!known.count(section) || (node.empty() && !node.data().empty()))
      throw ConfigError("unknown section or top-level key '" + section + "'");
  }
  RunConfig rc;

  detail::SectionReader task(root, "task");
  auto& t = rc.task;
  task.read("num_states", t.num_states);
  task.read("num_symbols", t.num_symbols);
  task.read("feature_dim", t.feature_dim);
  task.read("min_frames", t.min_frames);
  task.read("max_frames", t.max_frames);
  task.read("min_segment", t.min_segment);
  task.read("max_segment", t.max_segment);
  task.read("train_utterances", t.train_utterances);
  task.read("validation_utterances", t.validation_utterances);
  task.read("confusion", t.confusion);
  task.read("shift_ratio", t.shift_ratio);
  task.read("bump_width", t.bump_width);
  task.read("noise", t.noise);
  task.read("max_paths", t.max_paths);
  task.read("seed", t.seed);
  task.check_unknown();

  detail::SectionReader network(root, "network");
  std::string hidden;
  network.read("hidden", hidden);
  if (network.has("hidden")) rc.hidden = detail::parse_int_list(hidden);
  network.check_unknown();

  detail::SectionReader train(root, "train");
  std::string criterion = to_string(rc.criterion);
  train.read("criterion", criterion);
  rc.criterion = parse_criterion(criterion);
  train.read("kappa", rc.kappa);
  train.read("epochs", rc.epochs);
  train.read("ce_epochs", rc.ce_epochs);
  train.read("ce_learning_rate", rc.ce_learning_rate);
  train.read("seed", rc.seed);
  train.read("output", rc.output);
  train.check_unknown();

  detail::SectionReader opt(root, "optimizer");
  std::string method = to_string(rc.optimizer.method);
  opt.read("method", method);
  OptimizerConfig& o = rc.optimizer;
  o = OptimizerConfig::defaults(parse_method(method));
  std::string cg_init = to_string(o.cg.init);
  opt.read("learning_rate", o.learning_rate);
  opt.read("clip_threshold", o.clip_threshold);
  opt.read("sgd_batch_utterances", o.sgd_batch_utterances);
  opt.read("lambda", o.lambda);
  opt.read("lambda_min", o.lambda_min);
  opt.read("lambda_max", o.lambda_max);
  opt.read("lambda_factor", o.lambda_factor);
  opt.read("batch_fraction", o.batch_fraction);
  opt.read("curvature_fraction", o.curvature_fraction);
  opt.read("curvature_min_utterances", o.curvature_min_utterances);
  opt.read("max_backtracks", o.max_backtracks);
  opt.read("cg_iters", o.cg.max_iters);
  opt.read("cg_residual_tol", o.cg.residual_tol);
  opt.read("cg_init", cg_init);
  o.cg.init = parse_cg_init(cg_init);
  opt.read("dsag_mu", o.dsag_mu);
  o.cg.blend_weight = o.dsag_mu;
  opt.read("fisher_floor", o.fisher_floor);
  opt.read("fisher_smoothing", o.fisher_smoothing);
  opt.check_unknown();

  rc.validate();
  return rc;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path.string() + "'");
  return parse_run_config(in);
}

inline void write_run_config(std::ostream& out, const RunConfig& rc) {
  const auto& t = rc.task;
  const auto& o = rc.optimizer;
  out.precision(17);
  out << "[task]\nnum_states = " << t.num_states << "\nnum_symbols = " << t.num_symbols
      << "\nfeature_dim = " << t.feature_dim << "\nmin_frames = " << t.min_frames
      << "\nmax_frames = " << t.max_frames << "\nmin_segment = " << t.min_segment
      << "\nmax_segment = " << t.max_segment << "\ntrain_utterances = " << t.train_utterances
      << "\nvalidation_utterances = " << t.validation_utterances << "\nconfusion = " << t.confusion
      << "\nshift_ratio = " << t.shift_ratio
      << "\nbump_width = " << t.bump_width << "\nnoise = " << t.noise
      << "\nmax_paths = " << t.max_paths << "\nseed = " << t.seed << "\n\n[network]\nhidden = ";
  for (std::size_t i = 0; i < rc.hidden.size(); ++i) out << (i ? "," : "") << rc.hidden[i];
  out << "\n\n[train]\ncriterion = " << to_string(rc.criterion) << "\nkappa = " << rc.kappa
      << "\nepochs = " << rc.epochs << "\nce_epochs = " << rc.ce_epochs
      << "\nce_learning_rate = " << rc.ce_learning_rate << "\nseed = " << rc.seed
      << "\noutput = " << rc.output << "\n\n[optimizer]\nmethod = " << to_string(o.method)
      << "\nlearning_rate = " << o.learning_rate << "\nclip_threshold = " << o.clip_threshold
      << "\nsgd_batch_utterances = " << o.sgd_batch_utterances << "\nlambda = " << o.lambda
      << "\nlambda_min = " << o.lambda_min << "\nlambda_max = " << o.lambda_max
      << "\nlambda_factor = " << o.lambda_factor << "\nbatch_fraction = " << o.batch_fraction
      << "\ncurvature_fraction = " << o.curvature_fraction
      << "\ncurvature_min_utterances = " << o.curvature_min_utterances
      << "\nmax_backtracks = " << o.max_backtracks << "\ncg_iters = " << o.cg.max_iters
      << "\ncg_residual_tol = " << o.cg.residual_tol << "\ncg_init = " << to_string(o.cg.init)
      << "\ndsag_mu = " << o.dsag_mu << "\nfisher_floor = " << o.fisher_floor
      << "\nfisher_smoothing = " << o.fisher_smoothing << '\n';
}

}  // namespace seqtrain
