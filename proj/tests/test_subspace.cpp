#include <Eigen/Dense>
#include <cmath>
#include <numeric>
#include <vector>

#include "doctest.h"
#include "fedproj/error.hpp"
#include "fedproj/subspace.hpp"

using namespace fedproj;

namespace {

std::vector<double> gaussian_vector(std::size_t d, std::uint64_t seed) {
  prng::SplitMix64 rng(seed);
  std::vector<double> v(d);
  for (auto& x : v) x = rng.normal();
  return v;
}

double rel_dist(std::span<const double> a, std::span<const double> b) {
  double num = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) num += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(num) / norm2(b);
}

// Explicit (rho_l K_l)^-1 V_l^T x for one block, in 64-bit arithmetic.
Eigen::VectorXd oracle_coords(const BlockPartition& p, std::size_t l,
                              RandomSeed seed, std::span<const double> x) {
  const auto dim = static_cast<Eigen::Index>(p.block_dim(l));
  const auto k = static_cast<Eigen::Index>(p.block_budget(l));
  Eigen::MatrixXd v(dim, k);
  for (Eigen::Index j = 0; j < k; ++j) {
    const BasisChunk c = sample_block_basis(seed, l, p.block_dim(l), j);
    for (Eigen::Index i = 0; i < dim; ++i) v(i, j) = c.values[i];
  }
  const Eigen::Map<const Eigen::VectorXd> xs(x.data() + p.block_offset(l), dim);
  return v.transpose() * xs / (p.block_stats(l).rho * double(k));
}

}  // namespace

TEST_CASE("partition validation") {
  CHECK_NOTHROW(BlockPartition({3, 5}, {2, 5}));
  CHECK_THROWS_AS(BlockPartition({3, 5}, {4, 1}), Error);
  CHECK_THROWS_AS(BlockPartition({3, 0}, {1, 1}), Error);
  CHECK_THROWS_AS(BlockPartition({3}, {1, 1}), Error);
  CHECK_THROWS_AS(BlockPartition({3, 5}, {0, 1}), Error);
  const BlockPartition p({3, 5}, {2, 5}, 9);
  CHECK(p.total_dim() == 8);
  CHECK(p.total_budget() == 7);
  CHECK(p.block_offset(1) == 3);
  CHECK(p.block_stats(1).dim == 5);
  CHECK(p.id() == 9);
}

TEST_CASE("split_block_dims") {
  const std::vector<std::size_t> groups{10, 3, 7};
  CHECK(split_block_dims(groups, 0) == groups);
  CHECK(split_block_dims(groups, 4) == std::vector<std::size_t>{4, 3, 3, 3, 4, 3});
}

TEST_CASE("project of zero is zero and reconstruct of that is zero") {
  const auto p = BlockPartition({40, 24}, {5, 3});
  const std::vector<double> zero(64, 0.0);
  const ProjectedUpdate proj = project(zero, p, RandomSeed{3});
  for (const auto& block : proj.coords)
    for (float c : block) CHECK(c == 0.0f);
  for (double x : reconstruct(proj, p)) CHECK(x == 0.0);
}

TEST_CASE("project matches the explicit matrix product (d=4, K=2, seed 42)") {
  const auto p = BlockPartition::single(4, 2);
  const std::vector<double> delta{1, 2, 3, 4};
  const ProjectedUpdate proj = project(delta, p, RandomSeed{42});
  const Eigen::VectorXd expected = oracle_coords(p, 0, RandomSeed{42}, delta);
  REQUIRE(proj.coords.size() == 1);
  REQUIRE(proj.coords[0].size() == 2);
  // Frozen from tests/oracles/protocol_oracle.py.
  CHECK(proj.coords[0][0] == 7.447896480560303f);
  CHECK(proj.coords[0][1] == 2.507652759552002f);
  for (int k = 0; k < 2; ++k)
    CHECK(proj.coords[0][k] == doctest::Approx(expected[k]).epsilon(1e-6));
}

TEST_CASE("multi-block projection equals per-block explicit products") {
  const auto p = BlockPartition({100, 37, 63}, {7, 3, 6});
  const auto x = gaussian_vector(200, 11);
  const ProjectedUpdate proj = project(x, p, RandomSeed{5});
  for (std::size_t l = 0; l < 3; ++l) {
    const Eigen::VectorXd expected = oracle_coords(p, l, RandomSeed{5}, x);
    for (std::size_t k = 0; k < p.block_budget(l); ++k)
      CHECK(proj.coords[l][k] == doctest::Approx(expected[k]).epsilon(1e-6));
  }
  // Block l of the concatenation only depends on slice l.
  auto y = x;
  for (std::size_t i = 0; i < 100; ++i) y[i] = -7.0;
  const ProjectedUpdate proj_y = project(y, p, RandomSeed{5});
  CHECK(proj_y.coords[1] == proj.coords[1]);
  CHECK(proj_y.coords[2] == proj.coords[2]);
}

TEST_CASE("projection and reconstruction are linear") {
  const auto p = BlockPartition::single(128, 8);
  const auto a = gaussian_vector(128, 1);
  const auto b = gaussian_vector(128, 2);
  const RandomSeed seed{99};
  const ProjectedUpdate pa = project(a, p, seed);

  std::vector<double> scaled(a);
  for (auto& x : scaled) x *= -3.5;
  const ProjectedUpdate ps = project(scaled, p, seed);
  for (std::size_t k = 0; k < 8; ++k)
    CHECK(ps.coords[0][k] == doctest::Approx(-3.5 * pa.coords[0][k]).epsilon(1e-6));

  std::vector<double> sum(128);
  for (std::size_t i = 0; i < 128; ++i) sum[i] = a[i] + b[i];
  const auto ra = reconstruct(pa, p);
  const auto rb = reconstruct(project(b, p, seed), p);
  const auto rs = reconstruct(project(sum, p, seed), p);
  std::vector<double> ra_rb(128);
  for (std::size_t i = 0; i < 128; ++i) ra_rb[i] = ra[i] + rb[i];
  CHECK(rel_dist(rs, ra_rb) < 1e-6);
}

TEST_CASE("fused project_reconstruct is bit-identical to the two-step form") {
  const auto p = BlockPartition({300, 212}, {12, 9}, 4);
  const auto x = gaussian_vector(512, 8);
  for (std::uint64_t s = 0; s < 5; ++s) {
    const auto two_step = reconstruct(project(x, p, RandomSeed{s}), p);
    CHECK(project_reconstruct(x, p, RandomSeed{s}) == two_step);
  }
}

TEST_CASE("shape and protocol errors") {
  const auto p = BlockPartition({10, 10}, {2, 2}, 1);
  const std::vector<double> wrong(19, 1.0);
  CHECK_THROWS_AS(project(wrong, p, RandomSeed{1}), Error);
  const std::vector<double> ok(20, 1.0);
  ProjectedUpdate proj = project(ok, p, RandomSeed{1});
  const auto other = BlockPartition({10, 10}, {2, 2}, 2);
  try {
    reconstruct(proj, other);
    FAIL("expected shape error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kShape);
  }
  proj.version = 7;
  try {
    reconstruct(proj, p);
    FAIL("expected protocol error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kProtocol);
  }
}

TEST_CASE("reconstruction is unbiased: error decays as M^-1/2") {
  // Monte-Carlo mean of reconstruct(project(x)) over M seeds. Per seed the
  // squared error is (d - 0.2)/K |x|^2 for this basis distribution, so the
  // mean over M seeds has relative error sqrt((d - 0.2)/(K M)).
  constexpr std::size_t kDim = 256;
  constexpr std::size_t kBudget = 16;
  const auto p = BlockPartition::single(kDim, kBudget);
  const auto x = gaussian_vector(kDim, 123);
  std::vector<double> acc(kDim, 0.0);
  std::vector<double> log_m, log_err;
  std::size_t done = 0;
  for (std::size_t m : {100u, 1000u, 10000u}) {
    for (; done < m; ++done) {
      const auto r = project_reconstruct(x, p, RandomSeed{done + 1});
      for (std::size_t i = 0; i < kDim; ++i) acc[i] += r[i];
    }
    std::vector<double> mean(acc);
    for (auto& v : mean) v /= double(m);
    const double err = rel_dist(mean, x);
    const double predicted = std::sqrt((kDim - 0.2) / double(kBudget * m));
    CAPTURE(m);
    CHECK(err < 1.3 * predicted);
    CHECK(err > 0.7 * predicted);
    log_m.push_back(std::log(double(m)));
    log_err.push_back(std::log(err));
  }
  const double mx = (log_m[0] + log_m[1] + log_m[2]) / 3.0;
  const double my = (log_err[0] + log_err[1] + log_err[2]) / 3.0;
  double sxy = 0.0, sxx = 0.0;
  for (int i = 0; i < 3; ++i) {
    sxy += (log_m[i] - mx) * (log_err[i] - my);
    sxx += (log_m[i] - mx) * (log_m[i] - mx);
  }
  CHECK(std::fabs(sxy / sxx + 0.5) < 0.1);
}

TEST_CASE("reconstruction error stays under the theoretical bound") {
  for (auto [d, k] : {std::pair<std::size_t, std::size_t>{1024, 32}, {2048, 48}}) {
    const auto p = BlockPartition::single(d, k);
    const auto x = gaussian_vector(d, d);
    double mean_err = 0.0;
    constexpr int kTrials = 200;
    for (int t = 0; t < kTrials; ++t)
      mean_err += rel_dist(project_reconstruct(x, p, RandomSeed{std::uint64_t(t) + 500}), x);
    mean_err /= kTrials;
    const double rho_k = p.block_stats(0).rho * double(k);
    const double l = 2.0 * std::log(2.0 * double(d)) / rho_k;
    CHECK(mean_err <= std::max(2.0 * std::sqrt(l), l));
  }
}

TEST_CASE("cosine similarity grows with K") {
  constexpr std::size_t kDim = 10000;
  const auto x = gaussian_vector(kDim, 31);
  double prev = 0.0;
  for (std::size_t k : {64u, 128u, 256u, 512u}) {
    const auto p = BlockPartition::single(kDim, k);
    double cos = 0.0;
    for (std::uint64_t s = 0; s < 50; ++s)
      cos += cosine_similarity(project_reconstruct(x, p, RandomSeed{s}), x);
    cos /= 50.0;
    CAPTURE(k);
    CHECK(cos >= prev);
    prev = cos;
  }
}

TEST_CASE("exact projection interpolates when K = d") {
  const auto p = BlockPartition::single(16, 16);
  const auto x = gaussian_vector(16, 4);
  const auto r = reconstruct(exact_project(x, p, RandomSeed{3}), p);
  CHECK(rel_dist(r, x) < 1e-5);
}

TEST_CASE("exact projection minimizes the residual") {
  const auto p = BlockPartition::single(64, 8);
  const auto x = gaussian_vector(64, 10);
  const auto exact = reconstruct(exact_project(x, p, RandomSeed{7}), p);
  const auto approx = reconstruct(project(x, p, RandomSeed{7}), p);
  CHECK(rel_dist(exact, x) <= rel_dist(approx, x));
  // Also against a direct Eigen least-squares solve.
  const auto basis = materialize_block_basis(p, 0, RandomSeed{7});
  const Eigen::Map<const Eigen::MatrixXd> v(basis.data(), 64, 8);
  const Eigen::Map<const Eigen::VectorXd> xs(x.data(), 64);
  const Eigen::VectorXd gamma = v.colPivHouseholderQr().solve(xs);
  const Eigen::VectorXd fit = v * gamma;
  CHECK(std::fabs(rel_dist(exact, std::vector<double>(fit.data(), fit.data() + 64)) ) < 1e-5);
}

TEST_CASE("V^T V concentrates around rho d I") {
  // Normalized by the expected squared basis norm rho * d.
  const auto p = BlockPartition::single(4096, 32);
  const auto basis = materialize_block_basis(p, 0, RandomSeed{1});
  const Eigen::Map<const Eigen::MatrixXd> v(basis.data(), 4096, 32);
  const Eigen::MatrixXd gram = v.transpose() * v / (p.block_stats(0).rho * 4096.0);
  const Eigen::MatrixXd dev = gram - Eigen::MatrixXd::Identity(32, 32);
  CHECK(dev.cwiseAbs().maxCoeff() < 0.15);
}

TEST_CASE("allocate_budgets") {
  const auto st = trunc_gauss_stats(1000);
  const std::vector<TruncGaussStats> four(4, st), two(2, st);
  CHECK(allocate_budgets(std::vector<double>{1, 1, 1, 1}, four, 16) ==
        std::vector<std::size_t>{4, 4, 4, 4});
  CHECK(allocate_budgets(std::vector<double>{16, 1}, two, 15) ==
        std::vector<std::size_t>{12, 3});
  const auto with_zero = allocate_budgets(std::vector<double>{5, 0, 5, 5}, four, 16);
  CHECK(with_zero[1] == 1);
  CHECK(std::accumulate(with_zero.begin(), with_zero.end(), std::size_t{0}) == 16);
  CHECK_THROWS_AS(allocate_budgets(std::vector<double>{1, 1, 1, 1}, four, 3), Error);

  // Caps: a tiny block cannot take more than its dimension.
  const std::vector<TruncGaussStats> mixed{trunc_gauss_stats(2), trunc_gauss_stats(1000)};
  const auto capped = allocate_budgets(std::vector<double>{1000, 1}, mixed, 40);
  CHECK(capped == std::vector<std::size_t>{2, 38});
  // Proportional to sqrt(norm / rho): unequal rho shifts budget to the
  // block with smaller rho (larger dimension).
  const std::vector<TruncGaussStats> dims{trunc_gauss_stats(100), trunc_gauss_stats(400)};
  const auto by_rho = allocate_budgets(std::vector<double>{1, 1}, dims, 30);
  CHECK(by_rho[1] > by_rho[0]);
  CHECK(uniform_budgets(std::vector<std::size_t>{100, 100, 3}, 12) ==
        std::vector<std::size_t>{5, 4, 3});
}

TEST_CASE("block_cost") {
  CHECK(block_cost(BlockPartition::single(100, 7)) == 700);
  const std::vector<std::size_t> dims{3, 5}, budgets{2, 6};
  CHECK(block_cost(dims, budgets) == 36);
  CHECK(block_cost(dims, budgets) < 8u * 8u);
  CHECK(block_cost(BlockPartition({3, 5}, {2, 5})) == 31);
  const std::size_t d = 1u << 20, k = 256, l = 16;
  const BlockPartition eq(std::vector<std::size_t>(l, d / l),
                          std::vector<std::size_t>(l, k / l));
  CHECK(block_cost(eq) == std::uint64_t(d) * k / l);
}
