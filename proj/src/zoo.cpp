// Copyright 2026 The fedproj Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#include "fedproj/zoo.hpp"

#include <cmath>
#include <string>

#include "fedproj/error.hpp"

namespace fedproj {

void ZOConfig::validate() const {
  if (!(epsilon > 0.0) || !std::isfinite(epsilon)) {
    throw Error(ErrorCode::kConfig, "ZO epsilon must be > 0");
  }
  if (num_perturbations == 0) {
    throw Error(ErrorCode::kConfig, "ZO needs at least one perturbation");
  }
}

namespace {

double checked(double value, std::size_t index, const char* what) {
  if (!std::isfinite(value)) throw NumericError(index, what);
  return value;
}

float finite_difference(double perturbed, double base, double eps) {
  return static_cast<float>((perturbed - base) / eps);
}

void perturb(std::span<const double> w, std::span<const float> v, double eps,
             std::span<double> out) {
  for (std::size_t i = 0; i < w.size(); ++i) out[i] = w[i] + eps * static_cast<double>(v[i]);
}

}  // namespace

ScalarGrads zo_scalar_grads(const PointLoss& loss_at, std::span<const double> w,
                            const ZOConfig& cfg) {
  cfg.validate();
  if (w.empty()) throw Error(ErrorCode::kShape, "empty parameter vector");
  const std::size_t k_total = cfg.num_perturbations;
  const double base = checked(loss_at(w), k_total, "non-finite loss at base point");
  BasisGenerator gen(w.size());
  std::vector<float> v(w.size());
  std::vector<double> point(w.size());
  ScalarGrads out{cfg.seed, std::vector<float>(k_total)};
  for (std::size_t k = 0; k < k_total; ++k) {
    gen.fill(cfg.seed, 0, k, v);
    perturb(w, v, cfg.epsilon, point);
    const double value = checked(loss_at(point), k, "non-finite perturbed loss");
    out.values[k] = finite_difference(value, base, cfg.epsilon);
  }
  return out;
}

std::vector<double> zo_reconstruct(const ScalarGrads& grads,
                                   const BlockPartition& partition) {
  if (grads.values.empty()) throw Error(ErrorCode::kShape, "no scalar gradients");
  const std::size_t d = partition.total_dim();
  const double inv_k = 1.0 / static_cast<double>(grads.values.size());
  BasisGenerator gen(d);
  std::vector<float> v(d);
  std::vector<double> out(d, 0.0);
  for (std::size_t k = 0; k < grads.values.size(); ++k) {
    gen.fill(grads.seed, 0, k, v);
    const double a = static_cast<double>(grads.values[k]) * inv_k;
    for (std::size_t i = 0; i < d; ++i) out[i] += a * static_cast<double>(v[i]);
  }
  return out;
}

ZOEstimate zo_gradient_estimate(const PointLoss& loss_at,
                                std::span<const double> w, const ZOConfig& cfg) {
  cfg.validate();
  if (w.empty()) throw Error(ErrorCode::kShape, "empty parameter vector");
  const std::size_t d = w.size();
  const std::size_t k_total = cfg.num_perturbations;
  const double base = checked(loss_at(w), k_total, "non-finite loss at base point");
  const double inv_k = 1.0 / static_cast<double>(k_total);
  BasisGenerator gen(d);
  std::vector<float> v(d);
  std::vector<double> point(d);
  ZOEstimate out{ScalarGrads{cfg.seed, std::vector<float>(k_total)},
                 std::vector<double>(d, 0.0)};
  for (std::size_t k = 0; k < k_total; ++k) {
    gen.fill(cfg.seed, 0, k, v);
    perturb(w, v, cfg.epsilon, point);
    const double value = checked(loss_at(point), k, "non-finite perturbed loss");
    const float g = finite_difference(value, base, cfg.epsilon);
    out.grads.values[k] = g;
    const double a = static_cast<double>(g) * inv_k;
    for (std::size_t i = 0; i < d; ++i) out.gradient[i] += a * static_cast<double>(v[i]);
  }
  return out;
}

namespace {

void apply_seed_step(std::span<double> w, std::span<const float> v, float g,
                     double lr) {
  const double step = lr * static_cast<double>(g);
  for (std::size_t i = 0; i < w.size(); ++i) w[i] -= step * static_cast<double>(v[i]);
}

}  // namespace

SeedReplayLog fedkseed_local_step(std::span<const double> w,
                                  const StepLoss& loss_at, const ZOConfig& cfg,
                                  double lr) {
  cfg.validate();
  if (w.empty()) throw Error(ErrorCode::kShape, "empty parameter vector");
  const std::size_t d = w.size();
  SeedReplayLog out;
  out.w.assign(w.begin(), w.end());
  out.log.seed = cfg.seed;
  out.log.values.resize(cfg.num_perturbations);
  BasisGenerator gen(d);
  std::vector<float> v(d);
  std::vector<double> point(d);
  for (std::size_t k = 0; k < cfg.num_perturbations; ++k) {
    gen.fill(cfg.seed, 0, k, v);
    const double base = checked(loss_at(out.w, k), k, "non-finite loss");
    perturb(out.w, v, cfg.epsilon, point);
    const double value = checked(loss_at(point, k), k, "non-finite perturbed loss");
    out.loss_evals += 2;
    const float g = finite_difference(value, base, cfg.epsilon);
    out.log.values[k] = g;
    apply_seed_step(out.w, v, g, lr);
  }
  return out;
}

std::vector<double> fedkseed_replay(std::span<const double> w,
                                    const ScalarGrads& log, double lr) {
  std::vector<double> out(w.begin(), w.end());
  BasisGenerator gen(out.size());
  std::vector<float> v(out.size());
  for (std::size_t k = 0; k < log.values.size(); ++k) {
    gen.fill(log.seed, 0, k, v);
    apply_seed_step(out, v, log.values[k], lr);
  }
  return out;
}

}  // namespace fedproj
