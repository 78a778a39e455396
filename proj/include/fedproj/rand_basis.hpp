// Copyright 2026 The fedproj Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace fedproj {

// Shared-randomness identity. Everything random in the protocol is a pure
// function of one of these plus integer indices.
struct RandomSeed {
  std::uint64_t value = 0;

  friend auto operator<=>(const RandomSeed&, const RandomSeed&) = default;
};

namespace prng {

// Frozen wire constants; see docs/PROTOCOL.md. Changing any of these breaks
// cross-implementation reproducibility.
inline constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;
inline constexpr std::uint64_t kRootSalt = 0x6a09e667f3bcc909ULL;
inline constexpr std::uint64_t kLaneSalt[4] = {
    0xbb67ae8584caa73bULL,  // client
    0x3c6ef372fe94f82bULL,  // round
    0xa54ff53a5f1d36f1ULL,  // block
    0x510e527fade682d1ULL,  // basis index
};
inline constexpr std::uint8_t kSeedDerivationVersion = 1;

// splitmix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// i-th 64-bit output of the counter stream keyed by `key`.
constexpr std::uint64_t stream_bits(std::uint64_t key, std::uint64_t i) noexcept {
  return mix64(key + (i + 1) * kGolden);
}

// i-th uniform of the counter stream, strictly inside (0, 1) on the 2^-53 grid.
constexpr double stream_uniform(std::uint64_t key, std::uint64_t i) noexcept {
  return (static_cast<double>(stream_bits(key, i) >> 11) + 0.5) * 0x1.0p-53;
}

// Small sequential generator for non-protocol uses (data sampling, splits).
// Deterministic across platforms, unlike the <random> distributions.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() noexcept {
    state_ += kGolden;
    return mix64(state_);
  }
  double uniform() noexcept {
    return (static_cast<double>(next() >> 11) + 0.5) * 0x1.0p-53;
  }
  // Unbiased integer in [0, n) by rejection; n >= 1.
  std::uint64_t below(std::uint64_t n) noexcept;
  double normal() noexcept;
  // Gamma(shape, 1) by Marsaglia-Tsang; shape > 0.
  double gamma(double shape) noexcept;

 private:
  std::uint64_t state_;
};

}  // namespace prng

// Deterministic mix of (root, client, round, block, basis_index). Stateless.
RandomSeed derive_subseed(RandomSeed root, std::uint64_t client,
                          std::uint64_t round, std::uint64_t block,
                          std::uint64_t basis_index);

// Chunk key for basis `basis_index` of block `block` under a message seed.
inline RandomSeed basis_chunk_seed(RandomSeed seed, std::uint64_t block,
                                   std::uint64_t basis_index) {
  return derive_subseed(seed, 0, 0, block, basis_index);
}

// Statistics of N(0,1) truncated to [-1/sqrt(dim), 1/sqrt(dim)].
struct TruncGaussStats {
  std::size_t dim = 0;
  double bound = 0.0;
  // Per-entry second moment (= variance), the unbiasing factor.
  double rho = 0.0;
};

TruncGaussStats trunc_gauss_stats(std::size_t dim);

// Samples N(0,1) restricted to [-bound, bound] by inverse-CDF transform of the
// counter stream, one uniform per entry.
class TruncatedNormalSampler {
 public:
  explicit TruncatedNormalSampler(double bound);

  double bound() const noexcept { return bound_; }

  // out[i] = sample i of the stream keyed by `key`.
  void fill(RandomSeed key, std::span<float> out) const;
  void fill(RandomSeed key, std::span<double> out) const;

 private:
  double bound_;
  double half_mass_;
  // Every |q| stays inside the central rational branch of the inverse CDF.
  bool central_only_;
  float bound_f_;
};

// One basis vector of one block.
struct BasisChunk {
  RandomSeed seed;
  std::uint64_t basis_index = 0;
  std::size_t block_dim = 0;
  std::vector<float> values;
};

// Streams the basis chunks of a block of dimension block_dim.
class BasisGenerator {
 public:
  explicit BasisGenerator(std::size_t block_dim);

  std::size_t block_dim() const noexcept { return block_dim_; }

  // Writes basis (block, basis_index) under `seed` into out (size block_dim).
  void fill(RandomSeed seed, std::uint64_t block, std::uint64_t basis_index,
            std::span<float> out) const;

 private:
  std::size_t block_dim_;
  TruncatedNormalSampler sampler_;
};

// Single-block form: basis `basis_index` of block 0.
BasisChunk sample_basis(RandomSeed seed, std::size_t block_dim,
                        std::uint64_t basis_index);

// Same, for an explicit block index.
BasisChunk sample_block_basis(RandomSeed seed, std::uint64_t block,
                              std::size_t block_dim, std::uint64_t basis_index);

}  // namespace fedproj
