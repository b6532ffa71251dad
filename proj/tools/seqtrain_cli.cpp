// tools/seqtrain_cli.cpp

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

// seqtrain command line driver.
//
//   seqtrain generate [--config F] [--seed N] --out DIR
//   seqtrain train    [--config F] [--seed N] [--out DIR] [--method M]
//   seqtrain verify   [--seed N] [--out DIR]
//   seqtrain compare  [--config F] [--seed N] [--out DIR] [--methods a,b,...]
//
// Exit status: 0 success, 1 failed checks or aborted run, 2 usage or
// configuration error, 3 data or numerical error.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "seqtrain/seqtrain.hpp"

namespace fs = std::filesystem;
using namespace seqtrain;

namespace {

struct CommonOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
};

void add_common(CLI::App* cmd, CommonOptions& o, bool with_config) {
  if (with_config) cmd->add_option("--config", o.config, "run configuration file (INI)");
  cmd->add_option("--seed", o.seed, "seed; overrides the task and training seeds");
  cmd->add_option("--out", o.out, "output directory");
}

RunConfig resolve_config(const CommonOptions& o) {
  RunConfig cfg = o.config.empty() ? RunConfig{} : load_run_config(o.config);
  if (o.seed) cfg.set_seed(*o.seed);
  if (!o.out.empty()) cfg.output = o.out;
  cfg.validate();
  return cfg;
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream f(p);
  if (!f) throw DataError("cannot write " + p.string());
  return f;
}

int cmd_generate(const CommonOptions& o) {
  if (o.out.empty()) throw UsageError("generate needs --out");
  const RunConfig cfg = resolve_config(o);
  const Dataset ds = generate_task(cfg.task);
  save_dataset(o.out, ds);
  auto f = open_out(fs::path(o.out) / "config.ini");
  write_run_config(f, cfg);
  std::cout << "wrote " << ds.train.size() << " train and " << ds.validation.size()
            << " validation utterances to " << o.out << '\n';
  return 0;
}

int cmd_train(const CommonOptions& o, const std::string& method) {
  RunConfig cfg = resolve_config(o);
  if (!method.empty()) cfg = cfg.with_method(parse_method(method));
  const RunResult run = train(cfg);
  write_run_outputs(cfg.output, cfg, run);
  nlohmann::ordered_json j = to_json(run.summary);
  if (run.aborted) j["abort_reason"] = run.abort_reason;
  std::cout << j.dump(2) << '\n';
  if (run.aborted) std::cerr << "seqtrain: run aborted: " << run.abort_reason << '\n';
  return run.aborted ? 1 : 0;
}

int cmd_verify(const CommonOptions& o) {
  verify::VerifyOptions vo;
  if (o.seed) vo.base_seed = *o.seed;
  const auto reports = verify::run_all(vo);
  bool ok = true;
  nlohmann::ordered_json j = nlohmann::ordered_json::array();
  std::ostringstream csv;
  csv << "suite,check,measured,threshold,passed\n";
  for (const auto& r : reports) {
    ok = ok && r.passed();
    for (const auto& c : r.checks) {
      std::printf("%s  %-10s %-52s %.3e (threshold %.3e)%s%s\n", c.passed ? "PASS" : "FAIL",
                  r.name.c_str(), c.name.c_str(), c.measured, c.threshold,
                  c.detail.empty() ? "" : "  ", c.detail.c_str());
      csv << r.name << ",\"" << c.name << "\"," << detail::fmt17(c.measured) << ','
          << detail::fmt17(c.threshold) << ',' << (c.passed ? 1 : 0) << '\n';
      j.push_back({{"suite", r.name},
                   {"check", c.name},
                   {"measured", c.measured},
                   {"threshold", c.threshold},
                   {"passed", c.passed}});
    }
  }
  if (!o.out.empty()) {
    fs::create_directories(o.out);
    open_out(fs::path(o.out) / "verify.csv") << csv.str();
    open_out(fs::path(o.out) / "verify.json") << j.dump(2) << '\n';
  }
  std::printf("%s\n", ok ? "all property checks passed" : "property checks FAILED");
  return ok ? 0 : 1;
}

int cmd_compare(const CommonOptions& o, const std::vector<std::string>& names) {
  const RunConfig cfg = resolve_config(o);
  std::vector<Method> methods;
  for (const auto& n : names) methods.push_back(parse_method(n));
  const CompareResult res = compare(cfg, methods);
  std::ostringstream table;
  table << summary_csv_header() << '\n';
  nlohmann::ordered_json j = nlohmann::ordered_json::array();
  for (const auto& row : res.rows) {
    write_summary_csv_row(table, row);
    j.push_back(to_json(row));
  }
  std::cout << table.str();
  const fs::path dir = cfg.output;
  fs::create_directories(dir);
  open_out(dir / "summary.csv") << table.str();
  open_out(dir / "summary.json") << j.dump(2) << '\n';
  for (std::size_t i = 0; i < res.runs.size(); ++i)
    write_run_outputs(dir / to_string(methods[i]), cfg.with_method(methods[i]), res.runs[i]);
  bool aborted = false;
  for (const auto& r : res.runs) aborted = aborted || r.aborted;
  return aborted ? 1 : 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sequence training with Hessian-free and natural-gradient optimisers"};
  app.require_subcommand(1);

  CommonOptions gen_o, train_o, verify_o, cmp_o;
  std::string method;
  std::vector<std::string> methods{"sgd", "hf", "dsag_hf", "ng"};

  auto* gen = app.add_subcommand("generate", "write a synthetic dataset to files");
  add_common(gen, gen_o, true);
  auto* tr = app.add_subcommand("train", "CE pre-training then sequence training of one run");
  add_common(tr, train_o, true);
  tr->add_option("--method", method, "optimiser: sgd, hf, dsag_hf or ng (overrides the config)");
  auto* ver = app.add_subcommand("verify", "run the oracle property suite");
  add_common(ver, verify_o, false);
  auto* cmp = app.add_subcommand("compare", "train every method from one CE model");
  add_common(cmp, cmp_o, true);
  cmp->add_option("--methods", methods, "methods to compare")->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*gen) return cmd_generate(gen_o);
    if (*tr) return cmd_train(train_o, method);
    if (*ver) return cmd_verify(verify_o);
    if (*cmp) return cmd_compare(cmp_o, methods);
  } catch (const ConfigError& e) {
    std::cerr << "seqtrain: configuration error: " << e.what() << '\n';
    return 2;
  } catch (const UsageError& e) {
    std::cerr << "seqtrain: usage error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "seqtrain: error: " << e.what() << '\n';
    return 3;
  }
  return 2;
}
