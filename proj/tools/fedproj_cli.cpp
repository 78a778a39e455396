// Copyright 2026 The fedproj Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

// fedproj: run experiments, verify properties, emit reproduction series.
// Exit codes: 0 success/pass, 1 check failure or runtime error, 2 config
// error, 3 divergence.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fedproj/bench.hpp"
#include "fedproj/error.hpp"

namespace {

using namespace fedproj;

constexpr int kExitFail = 1;
constexpr int kExitConfig = 2;
constexpr int kExitDiverged = 3;

int exit_code(const Error& e) {
  switch (e.code()) {
    case ErrorCode::kConfig:
    case ErrorCode::kInvalidDimension:
    case ErrorCode::kInfeasibleBudget:
      return kExitConfig;
    case ErrorCode::kDiverged:
    case ErrorCode::kNumeric:
      return kExitDiverged;
    default:
      return kExitFail;
  }
}

int cmd_run(const std::string& path) {
  const auto cfg = bench::load_experiment_config(path);
  const auto out = bench::execute(cfg);
  bench::write_outputs(cfg, out);
  if (cfg.output.records_csv.empty()) std::cout << out.csv;
  if (cfg.output.summary_json.empty()) std::cout << out.json;
  return 0;
}

void print_report(const bench::CheckReport& r) {
  std::printf("[%s] %s (seed=%llu, %.2f s)\n", r.passed ? "PASS" : "FAIL", r.name.c_str(),
              static_cast<unsigned long long>(r.seed), r.seconds);
  for (const auto& line : r.lines) std::printf("  %s\n", line.c_str());
  std::fflush(stdout);
}

int cmd_verify(const std::string& which, const bench::TheoryCheckConfig& overrides) {
  std::vector<std::string> names;
  if (which == "all") {
    names = bench::check_names();
  } else {
    names.push_back(which);
  }
  bool all_passed = true;
  for (const auto& name : names) {
    auto cfg = overrides;
    cfg.which = name;
    const auto report = bench::run_check(bench::with_defaults(cfg));
    print_report(report);
    all_passed = all_passed && report.passed;
  }
  return all_passed ? 0 : kExitFail;
}

int cmd_repro(const std::string& figure, std::uint64_t seed, const std::string& out_path) {
  const auto series = bench::repro(figure, seed);
  if (out_path.empty()) {
    std::cout << series.csv();
  } else {
    std::ofstream out(out_path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::kIo, "cannot write '" + out_path + "'");
    out << series.csv();
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated training with projected updates and seeded random bases"};
  app.require_subcommand(1);

  std::string config_path;
  auto* run = app.add_subcommand("run", "Run an experiment from a JSON config (docs/CONFIG.md)");
  run->add_option("config", config_path, "Experiment config file")->required();

  std::string check;
  bench::TheoryCheckConfig overrides;
  auto* verify = app.add_subcommand("verify", "Run a property check or the full battery");
  verify->add_option("check", check, "Check name or 'all'")->required();
  verify->add_option("--seed", overrides.seed, "Check seed");
  verify->add_option("--trials", overrides.trials, "Trials (check default when 0)");
  verify->add_option("--tolerance", overrides.tolerance, "Tolerance (check default when 0)");
  verify->add_option("--dims", overrides.dims, "Dimensions")->delimiter(',');
  verify->add_option("--budgets", overrides.budgets, "Basis budgets")->delimiter(',');
  verify->add_option("--blocks", overrides.blocks, "Block counts (block-speedup)")->delimiter(',');
  verify->add_option("--epsilons", overrides.epsilons, "ZO step sizes")->delimiter(',');
  verify->add_option("--beta", overrides.beta, "Smoothness (measured when 0)");
  verify->add_option("--sigma", overrides.sigma, "Gradient noise scale (measured when 0)");
  verify->add_option("--gap", overrides.gap, "Initial gap D (measured when 0)");

  std::string figure;
  std::uint64_t repro_seed = 2026;
  std::string repro_out;
  auto* repro = app.add_subcommand("repro", "Emit a reproduction series as CSV");
  repro->add_option("figure", figure, "fig6 | fig7a | fig4-analogue | rounds-curve")->required();
  repro->add_option("--seed", repro_seed, "Series seed");
  repro->add_option("-o,--out", repro_out, "Output file (stdout when omitted)");

  auto* dump = app.add_subcommand("protocol-dump", "Print the frozen PRNG and wire constants");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }

  try {
    if (*run) return cmd_run(config_path);
    if (*verify) return cmd_verify(check, overrides);
    if (*repro) return cmd_repro(figure, repro_seed, repro_out);
    if (*dump) {
      std::cout << bench::protocol_dump();
      return 0;
    }
  } catch (const Error& e) {
    std::fprintf(stderr, "fedproj: %s\n", e.what());
    return exit_code(e);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "fedproj: %s\n", e.what());
    return kExitFail;
  }
  return kExitFail;
}
