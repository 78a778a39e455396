// Copyright 2026 The fedproj Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

// Zeroth-order gradient estimation and the seed-replay local step used by
// the ZO federated baselines. Perturbation directions are whole-model
// truncated-normal vectors (one block of dimension d) drawn from the same
// generator as the projection bases.

#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "fedproj/rand_basis.hpp"
#include "fedproj/subspace.hpp"

namespace fedproj {

// Loss at a parameter point.
using PointLoss = std::function<double(std::span<const double>)>;
// Loss at a parameter point for local step `step` (lets callers switch
// mini-batches between perturbation steps).
using StepLoss = std::function<double(std::span<const double>, std::size_t)>;

struct ZOConfig {
  double epsilon = 0.1;
  std::size_t num_perturbations = 1;
  RandomSeed seed;

  void validate() const;
};

// g_k = (loss(w + eps v_k) - loss(w)) / eps, stored at wire precision.
struct ScalarGrads {
  RandomSeed seed;
  std::vector<float> values;

  bool operator==(const ScalarGrads&) const = default;
};

// Forward differences along K seeded directions; exactly K + 1 loss calls.
// Throws NumericError (index k, or K for the base point) on non-finite loss.
ScalarGrads zo_scalar_grads(const PointLoss& loss_at, std::span<const double> w,
                            const ZOConfig& cfg);

// (1/K) sum_k g_k v_k with the directions regenerated from grads.seed.
std::vector<double> zo_reconstruct(const ScalarGrads& grads,
                                   const BlockPartition& partition);

struct ZOEstimate {
  ScalarGrads grads;
  std::vector<double> gradient;  // (1/K) V g
};

// zo_reconstruct(zo_scalar_grads(...)) generating each direction once.
ZOEstimate zo_gradient_estimate(const PointLoss& loss_at,
                                std::span<const double> w, const ZOConfig& cfg);

struct SeedReplayLog {
  std::vector<double> w;  // parameters after the K steps
  ScalarGrads log;        // seed plus one scalar per step
  std::size_t loss_evals = 0;
};

// K sequential steps w <- w - lr g_k v_k, one fresh direction per step, each
// g_k measured at the current iterate (2 loss calls per step). The log is
// enough to replay the trajectory from the starting point.
SeedReplayLog fedkseed_local_step(std::span<const double> w,
                                  const StepLoss& loss_at, const ZOConfig& cfg,
                                  double lr);

// Re-applies a logged trajectory; bit-identical to the client's own result.
std::vector<double> fedkseed_replay(std::span<const double> w,
                                    const ScalarGrads& log, double lr);

}  // namespace fedproj
