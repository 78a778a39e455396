// Copyright 2026 The fedproj Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

// Small differentiable models with analytic gradients, and the local
// first-order training loop run by every client.

#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "fedproj/rand_basis.hpp"

namespace fedproj {

struct Example {
  std::vector<double> features;
  double target = 0.0;  // value for regression, class index for classifiers
};

using Dataset = std::vector<Example>;

struct ParamGroup {
  std::string name;
  std::size_t offset = 0;
  std::size_t size = 0;
  std::size_t fan_in = 0;  // 0 for biases (zero-initialized)
};

// Named contiguous groups covering [0, d). Source of block boundaries.
struct ParamLayout {
  std::vector<ParamGroup> groups;

  std::size_t dim() const;
  std::vector<std::size_t> group_sizes() const;
  // Throws kShape unless groups are contiguous from 0 and non-empty.
  void validate() const;
};

enum class ModelKind { kLinearRegression, kLogisticRegression, kMlp };

const char* model_kind_name(ModelKind kind);
ModelKind parse_model_kind(const std::string& name);

// linear-regression: w = [weights(input_dim), bias], loss 1/2 (w.x + b - y)^2.
// logistic-regression: softmax over output_dim classes, cross-entropy.
// mlp: input -> tanh(hidden_dim) -> softmax(output_dim), cross-entropy.
struct ModelSpec {
  ModelKind kind = ModelKind::kLinearRegression;
  std::size_t input_dim = 1;
  std::size_t hidden_dim = 0;
  std::size_t output_dim = 1;
  RandomSeed init_seed;

  void validate() const;
  ParamLayout layout() const;
  std::size_t num_params() const { return layout().dim(); }
  bool is_classifier() const { return kind != ModelKind::kLinearRegression; }
};

// Weights ~ truncated N(0, 1/fan_in) cut at 2 standard deviations, one
// stream per group; biases zero.
std::vector<double> init_params(const ModelSpec& spec);

// Mean per-example loss. Throws NumericError (example index) on non-finite
// features or targets, kShape on dimension mismatch or an empty batch.
double loss(const ModelSpec& spec, std::span<const double> w,
            std::span<const Example> batch);

std::vector<double> grad(const ModelSpec& spec, std::span<const double> w,
                         std::span<const Example> batch);

// Writes the gradient into g (size d) and returns the loss.
double loss_and_grad(const ModelSpec& spec, std::span<const double> w,
                     std::span<const Example> batch, std::span<double> g);

// Accuracy for classifiers, mean squared error for regression.
double eval_metric(const ModelSpec& spec, std::span<const double> w,
                   std::span<const Example> batch);

enum class OptimizerKind { kSgd, kMomentum, kAdam };

const char* optimizer_name(OptimizerKind kind);
OptimizerKind parse_optimizer(const std::string& name);

struct LocalConfig {
  std::size_t iters = 1;
  double lr = 0.01;
  std::size_t batch_size = 0;  // 0 or >= |dataset|: whole dataset, in order
  std::size_t accum = 1;       // micro-batches averaged per step
  OptimizerKind optimizer = OptimizerKind::kSgd;
  double momentum = 0.9;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;

  void validate() const;
};

struct LocalResult {
  std::vector<double> w;
  std::vector<double> delta;  // sum of applied steps, = w_start - w_end
  std::size_t grad_evals = 0;  // micro-batch gradient evaluations
};

// T steps of w <- w - lr * step(g_hat). Micro-batches are drawn with
// replacement from a stream keyed by `rng`. Throws DivergedError with the
// step index on a non-finite loss or gradient.
LocalResult local_sgd(const ModelSpec& spec, std::span<const double> w,
                      std::span<const Example> data, const LocalConfig& cfg,
                      RandomSeed rng);

// Sampled mini-batch of `batch_size` examples (whole data when 0 or too big).
Dataset sample_batch(std::span<const Example> data, std::size_t batch_size,
                     prng::SplitMix64& rng);

}  // namespace fedproj
