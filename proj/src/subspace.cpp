// Copyright 2026 The fedproj Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#include "fedproj/subspace.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "fedproj/error.hpp"

namespace fedproj {

BlockPartition::BlockPartition(std::vector<std::size_t> block_dims,
                               std::vector<std::size_t> block_budgets,
                               std::uint32_t id)
    : id_(id), dims_(std::move(block_dims)), budgets_(std::move(block_budgets)) {
  if (dims_.empty()) {
    throw Error(ErrorCode::kShape, "partition needs at least one block");
  }
  if (dims_.size() != budgets_.size()) {
    throw Error(ErrorCode::kShape, "block_dims and block_budgets differ in length");
  }
  offsets_.reserve(dims_.size());
  stats_.reserve(dims_.size());
  for (std::size_t l = 0; l < dims_.size(); ++l) {
    if (dims_[l] == 0) {
      throw Error(ErrorCode::kInvalidDimension,
                  "block " + std::to_string(l) + " has dimension 0");
    }
    if (budgets_[l] == 0 || budgets_[l] > dims_[l]) {
      throw Error(ErrorCode::kInfeasibleBudget,
                  "block " + std::to_string(l) + " budget " +
                      std::to_string(budgets_[l]) + " outside [1, " +
                      std::to_string(dims_[l]) + "]");
    }
    offsets_.push_back(total_dim_);
    stats_.push_back(trunc_gauss_stats(dims_[l]));
    total_dim_ += dims_[l];
    total_budget_ += budgets_[l];
  }
}

BlockPartition BlockPartition::single(std::size_t d, std::size_t k,
                                      std::uint32_t id) {
  return BlockPartition({d}, {k}, id);
}

std::vector<std::size_t> split_block_dims(std::span<const std::size_t> group_dims,
                                          std::size_t max_block_dim) {
  std::vector<std::size_t> out;
  for (std::size_t g : group_dims) {
    if (g == 0) continue;
    if (max_block_dim == 0 || g <= max_block_dim) {
      out.push_back(g);
      continue;
    }
    const std::size_t pieces = (g + max_block_dim - 1) / max_block_dim;
    const std::size_t base = g / pieces;
    const std::size_t extra = g % pieces;
    for (std::size_t p = 0; p < pieces; ++p) out.push_back(base + (p < extra));
  }
  return out;
}

namespace {

// Integer allocation of `total` proportional to `weights` with floor 1 and
// per-block caps. Blocks that hit the floor or a cap are pinned and the rest
// is re-split among the remaining ones.
std::vector<std::size_t> allocate_proportional(std::span<const double> weights,
                                               std::span<const std::size_t> caps,
                                               std::size_t total) {
  const std::size_t n = weights.size();
  if (total < n) {
    throw Error(ErrorCode::kInfeasibleBudget,
                "budget " + std::to_string(total) + " below block count " +
                    std::to_string(n));
  }
  const std::size_t capacity =
      std::accumulate(caps.begin(), caps.end(), std::size_t{0});
  if (total > capacity) {
    throw Error(ErrorCode::kInfeasibleBudget,
                "budget " + std::to_string(total) +
                    " exceeds total dimension " + std::to_string(capacity));
  }
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) {
      throw Error(ErrorCode::kNumeric, "allocation weights must be finite and >= 0");
    }
  }

  std::vector<std::size_t> out(n, 0);
  std::vector<bool> pinned(n, false);
  for (;;) {
    std::size_t remaining = total;
    double weight_sum = 0.0;
    std::vector<std::size_t> active;
    for (std::size_t l = 0; l < n; ++l) {
      if (pinned[l]) {
        remaining -= out[l];
      } else {
        active.push_back(l);
        weight_sum += weights[l];
      }
    }
    if (active.empty()) break;

    std::vector<double> remainders(n, 0.0);
    std::size_t assigned = 0;
    for (std::size_t l : active) {
      const double share = weight_sum > 0.0
                               ? static_cast<double>(remaining) * weights[l] / weight_sum
                               : static_cast<double>(remaining) / active.size();
      const double whole = std::floor(share);
      out[l] = static_cast<std::size_t>(whole);
      remainders[l] = share - whole;
      assigned += out[l];
    }
    std::vector<std::size_t> order = active;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return remainders[a] > remainders[b];
    });
    for (std::size_t i = 0; assigned < remaining; ++i, ++assigned) {
      ++out[order[i % order.size()]];
    }

    bool changed = false;
    for (std::size_t l : active) {
      if (out[l] == 0) {
        out[l] = 1;
        pinned[l] = true;
        changed = true;
      }
    }
    if (!changed) {
      for (std::size_t l : active) {
        if (out[l] > caps[l]) {
          out[l] = caps[l];
          pinned[l] = true;
          changed = true;
        }
      }
    }
    if (!changed) break;
  }
  return out;
}

}  // namespace

std::vector<std::size_t> allocate_budgets(std::span<const double> block_norms,
                                          std::span<const TruncGaussStats> stats,
                                          std::size_t total_budget) {
  if (block_norms.size() != stats.size() || block_norms.empty()) {
    throw Error(ErrorCode::kShape, "block_norms and stats must be non-empty and equal length");
  }
  std::vector<double> weights(block_norms.size());
  std::vector<std::size_t> caps(block_norms.size());
  for (std::size_t l = 0; l < block_norms.size(); ++l) {
    if (!(block_norms[l] >= 0.0)) {
      throw Error(ErrorCode::kNumeric, "block norms must be >= 0");
    }
    weights[l] = std::sqrt(block_norms[l] / stats[l].rho);
    caps[l] = stats[l].dim;
  }
  return allocate_proportional(weights, caps, total_budget);
}

std::vector<std::size_t> uniform_budgets(std::span<const std::size_t> block_dims,
                                         std::size_t total_budget) {
  if (block_dims.empty()) {
    throw Error(ErrorCode::kShape, "no blocks to allocate");
  }
  std::vector<double> weights(block_dims.size(), 1.0);
  return allocate_proportional(weights, block_dims, total_budget);
}

std::uint64_t block_cost(std::span<const std::size_t> block_dims,
                         std::span<const std::size_t> block_budgets) {
  if (block_dims.size() != block_budgets.size()) {
    throw Error(ErrorCode::kShape, "block_dims and block_budgets differ in length");
  }
  std::uint64_t cost = 0;
  for (std::size_t l = 0; l < block_dims.size(); ++l) {
    cost += static_cast<std::uint64_t>(block_dims[l]) * block_budgets[l];
  }
  return cost;
}

std::uint64_t block_cost(const BlockPartition& partition) {
  return block_cost(partition.block_dims(), partition.block_budgets());
}

std::vector<double> block_norms(std::span<const double> update,
                                const BlockPartition& partition) {
  if (update.size() != partition.total_dim()) {
    throw Error(ErrorCode::kShape, "update length does not match partition");
  }
  std::vector<double> out(partition.num_blocks());
  for (std::size_t l = 0; l < partition.num_blocks(); ++l) {
    out[l] = norm2(update.subspan(partition.block_offset(l), partition.block_dim(l)));
  }
  return out;
}

std::size_t ProjectedUpdate::num_coords() const {
  std::size_t n = 0;
  for (const auto& c : coords) n += c.size();
  return n;
}

namespace {

void check_update(std::span<const double> update, const BlockPartition& partition) {
  if (update.size() != partition.total_dim()) {
    throw Error(ErrorCode::kShape,
                "update has " + std::to_string(update.size()) +
                    " entries, partition expects " +
                    std::to_string(partition.total_dim()));
  }
}

void check_projection(const ProjectedUpdate& proj, const BlockPartition& partition) {
  if (proj.version != prng::kSeedDerivationVersion) {
    throw Error(ErrorCode::kProtocol,
                "unknown seed derivation version " + std::to_string(proj.version));
  }
  if (proj.partition_id != partition.id() ||
      proj.coords.size() != partition.num_blocks()) {
    throw Error(ErrorCode::kShape, "projection does not match partition");
  }
  for (std::size_t l = 0; l < partition.num_blocks(); ++l) {
    if (proj.coords[l].size() != partition.block_budget(l)) {
      throw Error(ErrorCode::kShape,
                  "block " + std::to_string(l) + " coordinate count mismatch");
    }
  }
}

inline double dot_basis(std::span<const float> v, std::span<const double> x) {
  double acc = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) acc += static_cast<double>(v[i]) * x[i];
  return acc;
}

inline void axpy_basis(double a, std::span<const float> v, std::span<double> y) {
  for (std::size_t i = 0; i < v.size(); ++i) y[i] += a * static_cast<double>(v[i]);
}

inline float projected_coordinate(std::span<const float> v,
                                  std::span<const double> x, double inv_scale) {
  return static_cast<float>(dot_basis(v, x) * inv_scale);
}

double inverse_scale(const BlockPartition& partition, std::size_t l) {
  return 1.0 / (partition.block_stats(l).rho *
                static_cast<double>(partition.block_budget(l)));
}

}  // namespace

ProjectedUpdate project(std::span<const double> update,
                        const BlockPartition& partition, RandomSeed seed) {
  check_update(update, partition);
  ProjectedUpdate out;
  out.partition_id = partition.id();
  out.seed = seed;
  out.coords.resize(partition.num_blocks());
  std::vector<float> chunk;
  for (std::size_t l = 0; l < partition.num_blocks(); ++l) {
    const std::size_t dim = partition.block_dim(l);
    const std::size_t budget = partition.block_budget(l);
    const auto slice = update.subspan(partition.block_offset(l), dim);
    const double inv_scale = inverse_scale(partition, l);
    BasisGenerator gen(dim);
    chunk.resize(dim);
    out.coords[l].resize(budget);
    for (std::size_t k = 0; k < budget; ++k) {
      gen.fill(seed, l, k, chunk);
      out.coords[l][k] = projected_coordinate(chunk, slice, inv_scale);
    }
  }
  return out;
}

void reconstruct_into(const ProjectedUpdate& proj,
                      const BlockPartition& partition, std::span<double> out) {
  check_projection(proj, partition);
  if (out.size() != partition.total_dim()) {
    throw Error(ErrorCode::kShape, "output length does not match partition");
  }
  std::fill(out.begin(), out.end(), 0.0);
  std::vector<float> chunk;
  for (std::size_t l = 0; l < partition.num_blocks(); ++l) {
    const std::size_t dim = partition.block_dim(l);
    auto slice = out.subspan(partition.block_offset(l), dim);
    BasisGenerator gen(dim);
    chunk.resize(dim);
    for (std::size_t k = 0; k < proj.coords[l].size(); ++k) {
      gen.fill(proj.seed, l, k, chunk);
      axpy_basis(static_cast<double>(proj.coords[l][k]), chunk, slice);
    }
  }
}

std::vector<double> reconstruct(const ProjectedUpdate& proj,
                                const BlockPartition& partition) {
  std::vector<double> out(partition.total_dim());
  reconstruct_into(proj, partition, out);
  return out;
}

std::vector<double> project_reconstruct(std::span<const double> update,
                                        const BlockPartition& partition,
                                        RandomSeed seed) {
  check_update(update, partition);
  std::vector<double> out(partition.total_dim(), 0.0);
  std::vector<float> chunk;
  for (std::size_t l = 0; l < partition.num_blocks(); ++l) {
    const std::size_t dim = partition.block_dim(l);
    const auto in_slice = update.subspan(partition.block_offset(l), dim);
    auto out_slice = std::span<double>(out).subspan(partition.block_offset(l), dim);
    const double inv_scale = inverse_scale(partition, l);
    BasisGenerator gen(dim);
    chunk.resize(dim);
    for (std::size_t k = 0; k < partition.block_budget(l); ++k) {
      gen.fill(seed, l, k, chunk);
      const float coord = projected_coordinate(chunk, in_slice, inv_scale);
      axpy_basis(static_cast<double>(coord), chunk, out_slice);
    }
  }
  return out;
}

std::vector<double> materialize_block_basis(const BlockPartition& partition,
                                            std::size_t block, RandomSeed seed) {
  const std::size_t dim = partition.block_dim(block);
  const std::size_t budget = partition.block_budget(block);
  BasisGenerator gen(dim);
  std::vector<float> chunk(dim);
  std::vector<double> out(dim * budget);
  for (std::size_t k = 0; k < budget; ++k) {
    gen.fill(seed, block, k, chunk);
    std::copy(chunk.begin(), chunk.end(), out.begin() + k * dim);
  }
  return out;
}

ProjectedUpdate exact_project(std::span<const double> update,
                              const BlockPartition& partition, RandomSeed seed) {
  check_update(update, partition);
  ProjectedUpdate out;
  out.partition_id = partition.id();
  out.seed = seed;
  out.coords.resize(partition.num_blocks());
  for (std::size_t l = 0; l < partition.num_blocks(); ++l) {
    const auto dim = static_cast<Eigen::Index>(partition.block_dim(l));
    const auto budget = static_cast<Eigen::Index>(partition.block_budget(l));
    const std::vector<double> basis = materialize_block_basis(partition, l, seed);
    const Eigen::Map<const Eigen::MatrixXd> v(basis.data(), dim, budget);
    const Eigen::Map<const Eigen::VectorXd> x(
        update.data() + partition.block_offset(l), dim);
    const Eigen::MatrixXd gram = v.transpose() * v;
    const Eigen::LDLT<Eigen::MatrixXd> solver(gram);
    if (solver.info() != Eigen::Success || !solver.isPositive() ||
        solver.vectorD().minCoeff() <= 1e-14 * solver.vectorD().maxCoeff()) {
      throw Error(ErrorCode::kNumeric,
                  "singular basis Gram matrix in block " + std::to_string(l));
    }
    const Eigen::VectorXd gamma = solver.solve(v.transpose() * x);
    out.coords[l].resize(static_cast<std::size_t>(budget));
    for (Eigen::Index k = 0; k < budget; ++k) {
      out.coords[l][static_cast<std::size_t>(k)] = static_cast<float>(gamma[k]);
    }
  }
  return out;
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw Error(ErrorCode::kShape, "dot: length mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  const double na = norm2(a);
  const double nb = norm2(b);
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot(a, b) / (na * nb);
}

}  // namespace fedproj
