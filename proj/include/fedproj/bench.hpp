// Copyright 2026 The fedproj Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

// Experiment configuration, the run pipeline behind `fedproj run`, the
// property checks behind `fedproj verify` and the series behind
// `fedproj repro`. Schemas are documented in docs/CONFIG.md and
// docs/METRICS.md.

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fedproj/federation.hpp"

namespace fedproj::bench {

struct DataSource {
  std::string kind = "synthetic-linear";  // synthetic-linear | synthetic-blobs | file
  std::string path;                       // file: training examples
  std::string eval_path;                  // file: optional held-out set
  std::size_t examples = 1000;            // synthetic: training examples
  std::size_t eval_examples = 200;        // synthetic: held-out examples
  double noise = 0.1;                     // synthetic-linear
  std::size_t classes = 2;                // synthetic-blobs
  double separation = 2.0;                // synthetic-blobs
  std::uint64_t seed = 1;
  bool homogeneous = false;  // every client holds the full training set
};

struct OutputPaths {
  std::string records_csv;   // empty: not written
  std::string summary_json;  // empty: not written
};

struct ExperimentConfig {
  FedConfig fed;
  ModelSpec model;
  DataSource data;
  OutputPaths output;
  std::string transport = "in-process";  // in-process | socket
  std::size_t workers = 2;               // socket transport
};

// Parses the JSON text of a config. Unknown keys and type mismatches throw
// kConfig with `origin:line:column` in the message. Does not touch the
// filesystem.
ExperimentConfig parse_experiment_config(const std::string& text,
                                         const std::string& origin = "<config>");

// Reads `path`, applies FEDPROJ_RECORDS_CSV / FEDPROJ_SUMMARY_JSON
// overrides and checks that referenced input files exist.
ExperimentConfig load_experiment_config(const std::string& path);

// Client datasets and held-out set described by cfg.data.
ExperimentData build_data(const ExperimentConfig& cfg);

// One row per round: round, loss, metric, cumulative_upload,
// cumulative_grad_evals, local_seconds, aggregate_seconds,
// cumulative_download.
std::string records_csv(std::span<const RoundRecord> records);

std::string summary_json(const ExperimentConfig& cfg, const CostSummary& summary,
                         std::span<const RoundRecord> records);

struct RunOutput {
  ExperimentResult result;
  CostSummary summary;
  std::string csv;
  std::string json;
};

// Builds data, runs the experiment with the configured transport and renders
// the outputs (files are written by write_outputs).
RunOutput execute(const ExperimentConfig& cfg);
void write_outputs(const ExperimentConfig& cfg, const RunOutput& out);

// Theory checks. Zero/empty fields fall back to the check's defaults, which
// are the acceptance-battery settings.
struct TheoryCheckConfig {
  std::string which;
  std::vector<std::size_t> dims;
  std::vector<std::size_t> budgets;
  std::vector<std::size_t> blocks;  // block-speedup: baseline and split L
  std::vector<double> epsilons;
  std::size_t trials = 0;
  double tolerance = 0.0;
  std::uint64_t seed = 2026;
  // Convergence constants; 0 means measured from the task.
  double beta = 0.0;
  double sigma = 0.0;
  double gap = 0.0;  // D = L(w0) - min L

  // Throws kConfig for trials == 0 or tolerance <= 0 (after defaults).
  void validate() const;
};

struct CheckReport {
  std::string name;
  bool passed = false;
  std::uint64_t seed = 0;
  std::vector<std::string> lines;  // measured statistic vs bound
  double seconds = 0.0;
};

// Names in acceptance order.
const std::vector<std::string>& check_names();

// Defaults for `which`; throws kConfig for an unknown name.
TheoryCheckConfig default_check(const std::string& which);

// Fills unset fields from default_check(cfg.which).
TheoryCheckConfig with_defaults(TheoryCheckConfig cfg);

CheckReport run_check(const TheoryCheckConfig& cfg);

// A plottable table: header plus rows of numbers.
struct Series {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;

  std::string csv() const;
};

const std::vector<std::string>& repro_names();

// fig6 | fig7a | fig4-analogue | rounds-curve; throws kConfig otherwise.
Series repro(const std::string& figure, std::uint64_t seed = 2026);

// Individual generators, shared with the checks.
Series fig6_series(std::size_t dim, std::span<const std::size_t> budgets,
                   std::size_t seeds, double epsilon, std::uint64_t seed);
Series fig7a_series(std::size_t dim, std::size_t budget, std::span<const std::size_t> steps,
                    double lr, double epsilon, std::uint64_t seed);
Series allocation_curve_series(std::uint64_t seed);
Series rounds_curve_series(std::uint64_t seed, std::size_t fedkseed_rounds);

// Rounds until loss <= threshold (1-based), or 0 when never reached.
std::size_t rounds_to_reach(std::span<const double> losses, double threshold);

// Human-readable dump of the frozen PRNG and wire constants.
std::string protocol_dump();

}  // namespace fedproj::bench
