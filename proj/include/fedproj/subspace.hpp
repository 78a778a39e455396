// Copyright 2026 The fedproj Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "fedproj/rand_basis.hpp"

namespace fedproj {

// Layout of the model dimension d = sum(block_dims) into L blocks, each with
// its own basis budget K_l (sum = K). One partition is shared by every
// client of an experiment.
class BlockPartition {
 public:
  BlockPartition() = default;

  // Validates d_l >= 1, 1 <= K_l <= d_l and equal lengths.
  BlockPartition(std::vector<std::size_t> block_dims,
                 std::vector<std::size_t> block_budgets,
                 std::uint32_t id = 0);

  // Single block of dimension d with budget K.
  static BlockPartition single(std::size_t d, std::size_t k,
                               std::uint32_t id = 0);

  std::uint32_t id() const noexcept { return id_; }
  std::size_t num_blocks() const noexcept { return dims_.size(); }
  std::size_t total_dim() const noexcept { return total_dim_; }
  std::size_t total_budget() const noexcept { return total_budget_; }

  std::size_t block_dim(std::size_t l) const { return dims_.at(l); }
  std::size_t block_budget(std::size_t l) const { return budgets_.at(l); }
  std::size_t block_offset(std::size_t l) const { return offsets_.at(l); }
  const TruncGaussStats& block_stats(std::size_t l) const {
    return stats_.at(l);
  }

  const std::vector<std::size_t>& block_dims() const noexcept { return dims_; }
  const std::vector<std::size_t>& block_budgets() const noexcept {
    return budgets_;
  }
  const std::vector<TruncGaussStats>& stats() const noexcept { return stats_; }

  bool operator==(const BlockPartition& other) const {
    return id_ == other.id_ && dims_ == other.dims_ &&
           budgets_ == other.budgets_;
  }

 private:
  std::uint32_t id_ = 0;
  std::vector<std::size_t> dims_;
  std::vector<std::size_t> budgets_;
  std::vector<std::size_t> offsets_;
  std::vector<TruncGaussStats> stats_;
  std::size_t total_dim_ = 0;
  std::size_t total_budget_ = 0;
};

// Splits every group larger than max_block_dim into near-equal pieces.
// max_block_dim == 0 disables splitting.
std::vector<std::size_t> split_block_dims(std::span<const std::size_t> group_dims,
                                          std::size_t max_block_dim);

// K_l proportional to sqrt(norm_l / rho_l), largest-remainder rounding,
// floor 1 and cap d_l (= stats[l].dim) with the excess redistributed.
std::vector<std::size_t> allocate_budgets(std::span<const double> block_norms,
                                          std::span<const TruncGaussStats> stats,
                                          std::size_t total_budget);

// Equal split of K under the same floor/cap/rounding rules.
std::vector<std::size_t> uniform_budgets(std::span<const std::size_t> block_dims,
                                         std::size_t total_budget);

// Multiply count sum_l d_l * K_l of block-wise projection.
std::uint64_t block_cost(const BlockPartition& partition);

// Same count from raw dims and budgets, without partition validation.
std::uint64_t block_cost(std::span<const std::size_t> block_dims,
                         std::span<const std::size_t> block_budgets);

// Per-block l2 norms of `update` under `partition`.
std::vector<double> block_norms(std::span<const double> update,
                                const BlockPartition& partition);

// The O(K) wire object: one seed and K coordinates split by block.
struct ProjectedUpdate {
  std::uint8_t version = prng::kSeedDerivationVersion;
  std::uint32_t partition_id = 0;
  RandomSeed seed;
  std::vector<std::vector<float>> coords;

  std::size_t num_coords() const;
  bool operator==(const ProjectedUpdate&) const = default;
};

// coords[l][k] = (rho_l K_l)^-1 <v_{l,k}, update_l>, bases regenerated from
// `seed` one chunk at a time.
ProjectedUpdate project(std::span<const double> update,
                        const BlockPartition& partition, RandomSeed seed);

// update_l ~ sum_k coords[l][k] v_{l,k}, accumulated in ascending k.
std::vector<double> reconstruct(const ProjectedUpdate& proj,
                                const BlockPartition& partition);

// Same as reconstruct, writing into `out` (size d).
void reconstruct_into(const ProjectedUpdate& proj,
                      const BlockPartition& partition, std::span<double> out);

// reconstruct(project(update, seed)) generating each chunk once. Bit-identical
// to the two-step form.
std::vector<double> project_reconstruct(std::span<const double> update,
                                        const BlockPartition& partition,
                                        RandomSeed seed);

// Least-squares coordinates (V^T V)^-1 V^T update per block, by
// materializing V. Small dimensions only.
ProjectedUpdate exact_project(std::span<const double> update,
                              const BlockPartition& partition,
                              RandomSeed seed);

// Column-major d_l x K_l basis matrix of block l, in double.
std::vector<double> materialize_block_basis(const BlockPartition& partition,
                                            std::size_t block, RandomSeed seed);

// Vector helpers shared by the verification code.
double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> a);
double cosine_similarity(std::span<const double> a, std::span<const double> b);

}  // namespace fedproj
