// Copyright 2026 The fedproj Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#include "fedproj/rand_basis.hpp"

#include <algorithm>
#include <cmath>

#include "fedproj/error.hpp"
#include "fedproj/normal.hpp"

namespace fedproj {

namespace prng {

std::uint64_t SplitMix64::below(std::uint64_t n) noexcept {
  // Rejects the top partial bucket so every residue is equally likely.
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
  std::uint64_t x = next();
  while (x >= limit) x = next();
  return x % n;
}

double SplitMix64::normal() noexcept { return normal::ppf(uniform()); }

double SplitMix64::gamma(double shape) noexcept {
  if (shape < 1.0) {
    // Boost: Gamma(a) = Gamma(a + 1) * U^(1/a).
    const double g = gamma(shape + 1.0);
    return g * std::pow(uniform(), 1.0 / shape);
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  while (true) {
    double x, v;
    do {
      x = normal();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = uniform();
    if (std::log(u) < 0.5 * x * x + d - d * v + d * std::log(v)) return d * v;
  }
}

}  // namespace prng

RandomSeed derive_subseed(RandomSeed root, std::uint64_t client,
                          std::uint64_t round, std::uint64_t block,
                          std::uint64_t basis_index) {
  const std::uint64_t fields[4] = {client, round, block, basis_index};
  std::uint64_t h = prng::mix64(root.value ^ prng::kRootSalt);
  for (int j = 0; j < 4; ++j) {
    h = prng::mix64((h + prng::kGolden) ^
                    prng::mix64(fields[j] + prng::kLaneSalt[j]));
  }
  return RandomSeed{h};
}

namespace {

// Variance of N(0,1) truncated to [-a, a] from the power series of the two
// integrals of x^2 exp(-x^2/2) and exp(-x^2/2) over [0, a]. Avoids the
// cancellation of the closed form when a is small.
double truncated_variance_series(double a) {
  const double t = a * a;
  double term = 1.0;  // (-t/2)^n / n!
  double s1 = 0.0;    // sum term / (2n + 1)
  double s3 = 0.0;    // sum term / (2n + 3)
  for (int n = 0; n < 64; ++n) {
    s1 += term / (2.0 * n + 1.0);
    s3 += term / (2.0 * n + 3.0);
    term *= -0.5 * t / (n + 1.0);
    if (std::fabs(term) < 1e-22) break;
  }
  return t * s3 / s1;
}

double truncated_variance_closed_form(double a) {
  return 1.0 - (2.0 * normal::pdf(a) * a) / (2.0 * normal::cdf(a) - 1.0);
}

}  // namespace

TruncGaussStats trunc_gauss_stats(std::size_t dim) {
  if (dim == 0) {
    throw Error(ErrorCode::kInvalidDimension, "block dimension must be >= 1");
  }
  TruncGaussStats stats;
  stats.dim = dim;
  stats.bound = 1.0 / std::sqrt(static_cast<double>(dim));
  // The closed form loses ~log10(1/rho) digits to cancellation; past d = 8
  // the series is used instead.
  stats.rho = dim < 8 ? truncated_variance_closed_form(stats.bound)
                      : truncated_variance_series(stats.bound);
  return stats;
}

TruncatedNormalSampler::TruncatedNormalSampler(double bound)
    : bound_(bound),
      half_mass_(normal::half_mass(bound)),
      central_only_(half_mass_ <= 0.425) {
  if (!(bound > 0.0) || !std::isfinite(bound)) {
    throw Error(ErrorCode::kInvalidDimension, "truncation bound must be > 0");
  }
  bound_f_ = static_cast<float>(bound);
  if (static_cast<double>(bound_f_) > bound) {
    bound_f_ = std::nextafter(bound_f_, 0.0f);
  }
}

void TruncatedNormalSampler::fill(RandomSeed key, std::span<float> out) const {
  const std::uint64_t k = key.value;
  if (central_only_) {
    for (std::size_t i = 0; i < out.size(); ++i) {
      const double u = prng::stream_uniform(k, i);
      const double x = normal::detail::ppf_central((2.0 * u - 1.0) * half_mass_);
      out[i] = std::clamp(static_cast<float>(x), -bound_f_, bound_f_);
    }
    return;
  }
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double u = prng::stream_uniform(k, i);
    const double x = normal::ppf_centered((2.0 * u - 1.0) * half_mass_);
    out[i] = std::clamp(static_cast<float>(x), -bound_f_, bound_f_);
  }
}

void TruncatedNormalSampler::fill(RandomSeed key, std::span<double> out) const {
  const std::uint64_t k = key.value;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double u = prng::stream_uniform(k, i);
    const double x = normal::ppf_centered((2.0 * u - 1.0) * half_mass_);
    out[i] = std::clamp(x, -bound_, bound_);
  }
}

BasisGenerator::BasisGenerator(std::size_t block_dim)
    : block_dim_(block_dim), sampler_(trunc_gauss_stats(block_dim).bound) {}

void BasisGenerator::fill(RandomSeed seed, std::uint64_t block,
                          std::uint64_t basis_index,
                          std::span<float> out) const {
  if (out.size() != block_dim_) {
    throw Error(ErrorCode::kShape, "basis buffer does not match block dim");
  }
  sampler_.fill(basis_chunk_seed(seed, block, basis_index), out);
}

BasisChunk sample_block_basis(RandomSeed seed, std::uint64_t block,
                              std::size_t block_dim,
                              std::uint64_t basis_index) {
  BasisGenerator gen(block_dim);
  BasisChunk chunk{seed, basis_index, block_dim,
                   std::vector<float>(block_dim)};
  gen.fill(seed, block, basis_index, chunk.values);
  return chunk;
}

BasisChunk sample_basis(RandomSeed seed, std::size_t block_dim,
                        std::uint64_t basis_index) {
  return sample_block_basis(seed, 0, block_dim, basis_index);
}

}  // namespace fedproj
