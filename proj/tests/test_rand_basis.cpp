#include <bit>
#include <boost/math/special_functions/erf.hpp>
#include <boost/multiprecision/cpp_bin_float.hpp>
#include <cmath>
#include <thread>
#include <vector>

#include "doctest.h"
#include "fedproj/error.hpp"
#include "fedproj/normal.hpp"
#include "fedproj/rand_basis.hpp"

using namespace fedproj;

namespace {

using Big = boost::multiprecision::cpp_bin_float_50;

// Closed-form truncated-normal variance evaluated in 50 digits.
double rho_oracle(std::size_t dim) {
  const Big a = 1 / boost::multiprecision::sqrt(Big(dim));
  const Big pi = boost::math::constants::pi<Big>();
  const Big pdf = boost::multiprecision::exp(-a * a / 2) / boost::multiprecision::sqrt(2 * pi);
  const Big mass = boost::math::erf(a / boost::multiprecision::sqrt(Big(2)));
  return static_cast<double>(1 - (2 * pdf * a) / mass);
}

std::vector<std::uint32_t> bits_of(const std::vector<float>& v) {
  std::vector<std::uint32_t> out;
  for (float x : v) out.push_back(std::bit_cast<std::uint32_t>(x));
  return out;
}

}  // namespace

TEST_CASE("derive_subseed matches the frozen protocol values") {
  // Values from tests/oracles/protocol_oracle.py.
  const RandomSeed s{42};
  CHECK(derive_subseed(s, 0, 0, 0, 0).value == 0x27f4ca44a0f72ec9ULL);
  CHECK(derive_subseed(s, 0, 0, 0, 1).value == 0x37631ca19f6e4b5dULL);
  CHECK(derive_subseed(s, 0, 0, 0, 2).value == 0xc1a87c31df68c9aaULL);
  CHECK(derive_subseed(s, 1, 2, 0, 0).value == 0xfbd5a62e279a193aULL);
  CHECK(derive_subseed(s, 2, 1, 0, 0).value == 0x6b532d0106dfb5eeULL);
  CHECK(derive_subseed(s, 0, 0, 0, 1) != derive_subseed(s, 0, 0, 0, 2));
  CHECK(derive_subseed(s, 1, 2, 0, 0) != derive_subseed(s, 2, 1, 0, 0));
}

TEST_CASE("derive_subseed has no collisions over a small grid") {
  std::vector<std::uint64_t> seen;
  for (std::uint64_t c = 0; c < 8; ++c)
    for (std::uint64_t r = 0; r < 8; ++r)
      for (std::uint64_t b = 0; b < 8; ++b)
        for (std::uint64_t k = 0; k < 16; ++k)
          seen.push_back(derive_subseed(RandomSeed{42}, c, r, b, k).value);
  std::sort(seen.begin(), seen.end());
  CHECK(std::adjacent_find(seen.begin(), seen.end()) == seen.end());
}

TEST_CASE("inverse normal CDF is accurate to 1e-9 relative") {
  double worst = 0.0;
  for (int i = 1; i < 2000; ++i) {
    const double p = i / 2000.0;
    const double expected = -std::sqrt(2.0) * boost::math::erfc_inv(2.0 * p);
    const double got = normal::ppf(p);
    if (expected != 0.0) worst = std::max(worst, std::fabs(got / expected - 1.0));
  }
  for (double p : {1e-300, 1e-20, 1e-10, 1e-5, 0.01, 0.99, 1 - 1e-10}) {
    const double expected = -std::sqrt(2.0) * boost::math::erfc_inv(2.0 * p);
    worst = std::max(worst, std::fabs(normal::ppf(p) / expected - 1.0));
  }
  CHECK(worst <= 1e-9);
  CHECK(normal::ppf_centered(0.0) == 0.0);
  CHECK(normal::ppf_centered(0.3) == doctest::Approx(normal::ppf(0.8)).epsilon(1e-14));
  CHECK(normal::ppf_centered(-0.49) == doctest::Approx(normal::ppf(0.01)).epsilon(1e-12));
}

TEST_CASE("trunc_gauss_stats matches a 50-digit oracle") {
  for (std::size_t d : {1u, 2u, 3u, 7u, 8u, 10u, 64u, 1000u, 1000000u, 1000000000u}) {
    const TruncGaussStats st = trunc_gauss_stats(d);
    CAPTURE(d);
    CHECK(st.dim == d);
    CHECK(st.bound == doctest::Approx(1.0 / std::sqrt(double(d))).epsilon(1e-15));
    CHECK(std::fabs(st.rho / rho_oracle(d) - 1.0) <= 1e-12);
    CHECK(st.rho > 0.0);
    CHECK(st.rho < 1.0);
  }
  // psi(1) = 0.2419707, Phi(1) = 0.8413447.
  CHECK(trunc_gauss_stats(1).rho == doctest::Approx(0.291131).epsilon(1e-5));
  CHECK(std::fabs(trunc_gauss_stats(1000000).rho * 1e6 * 3.0 - 1.0) < 1e-3);
  CHECK_THROWS_AS(trunc_gauss_stats(0), Error);
}

TEST_CASE("rho is strictly decreasing in d") {
  double prev = trunc_gauss_stats(1).rho;
  for (std::size_t d = 2; d <= 10000; ++d) {
    const double rho = trunc_gauss_stats(d).rho;
    REQUIRE(rho < prev);
    prev = rho;
  }
}

TEST_CASE("sample_basis reproduces frozen chunks bit-exactly") {
  const BasisChunk c = sample_basis(RandomSeed{42}, 8, 0);
  CHECK(bits_of(c.values) == std::vector<std::uint32_t>{
                                 0xbe9dcfbe, 0xbeb28ee9, 0x3e44b9dd, 0x3ea504c6,
                                 0x3e8435b4, 0xbe4644a3, 0x3e4cf4af, 0xbe09551d});
  const BasisChunk b = sample_block_basis(RandomSeed{7}, 2, 5, 3);
  CHECK(bits_of(b.values) == std::vector<std::uint32_t>{
                                 0xbe3d99de, 0x3d2affed, 0xbe5800b1, 0x3ed106d0,
                                 0x3e0c6cd4});
  CHECK(sample_basis(RandomSeed{42}, 8, 0).values == c.values);
  CHECK_THROWS_AS(sample_basis(RandomSeed{1}, 0, 0), Error);
}

TEST_CASE("basis entries respect the truncation bound and unit norm") {
  for (std::size_t d : {1u, 2u, 3u, 17u, 256u, 4099u}) {
    const double bound = 1.0 / std::sqrt(double(d));
    for (std::uint64_t k = 0; k < 50; ++k) {
      const BasisChunk c = sample_basis(RandomSeed{d * 1000 + k}, d, k);
      double sq = 0.0;
      for (float x : c.values) {
        REQUIRE(std::fabs(static_cast<double>(x)) <= bound);
        sq += static_cast<double>(x) * x;
      }
      REQUIRE(std::sqrt(sq) <= 1.0);
    }
  }
}

TEST_CASE("parallel generation equals serial generation") {
  constexpr std::size_t kDim = 1000;
  constexpr std::size_t kChunks = 64;
  std::vector<std::vector<float>> serial(kChunks), parallel(kChunks);
  for (std::size_t k = 0; k < kChunks; ++k)
    serial[k] = sample_basis(RandomSeed{9}, kDim, k).values;
  std::vector<std::thread> workers;
  for (std::size_t t = 0; t < 4; ++t) {
    workers.emplace_back([&, t] {
      for (std::size_t k = t; k < kChunks; k += 4)
        parallel[k] = sample_basis(RandomSeed{9}, kDim, k).values;
    });
  }
  for (auto& w : workers) w.join();
  CHECK(serial == parallel);
}

TEST_CASE("entry moments converge to zero mean and rho") {
  // d = 64 pooled over 1e4 chunks.
  constexpr std::size_t kDim = 64;
  constexpr std::size_t kChunks = 10000;
  BasisGenerator gen(kDim);
  std::vector<float> v(kDim);
  double sum = 0.0, sum_sq = 0.0;
  for (std::size_t k = 0; k < kChunks; ++k) {
    gen.fill(RandomSeed{2024}, 0, k, v);
    for (float x : v) {
      sum += x;
      sum_sq += static_cast<double>(x) * x;
    }
  }
  const double n = double(kDim * kChunks);
  const double rho = trunc_gauss_stats(kDim).rho;
  // 4 standard errors of the mean, in units of the entry scale.
  CHECK(std::fabs(sum / n) < 4.0 * std::sqrt(rho) / std::sqrt(n));
  CHECK(std::fabs(sum / n) < 4.0 / std::sqrt(n));
  CHECK(std::fabs(sum_sq / n / rho - 1.0) < 0.01);
}

TEST_CASE("basis covariance is rho times identity") {
  constexpr std::size_t kDim = 16;
  constexpr std::size_t kChunks = 100000;
  BasisGenerator gen(kDim);
  std::vector<float> v(kDim);
  std::vector<double> cov(kDim * kDim, 0.0);
  for (std::size_t k = 0; k < kChunks; ++k) {
    gen.fill(RandomSeed{77}, 0, k, v);
    for (std::size_t i = 0; i < kDim; ++i)
      for (std::size_t j = 0; j < kDim; ++j)
        cov[i * kDim + j] += static_cast<double>(v[i]) * v[j];
  }
  const double rho = trunc_gauss_stats(kDim).rho;
  double max_off = 0.0;
  for (std::size_t i = 0; i < kDim; ++i) {
    CHECK(std::fabs(cov[i * kDim + i] / kChunks / rho - 1.0) < 0.02);
    for (std::size_t j = 0; j < kDim; ++j)
      if (i != j) max_off = std::max(max_off, std::fabs(cov[i * kDim + j] / kChunks));
  }
  // Correlation scale: off-diagonal means have standard deviation rho/sqrt(M).
  CHECK(max_off / rho < 5.0 / std::sqrt(double(kChunks)));
  CHECK(max_off < 5.0 / std::sqrt(double(kChunks)));
}

TEST_CASE("SplitMix64 helpers are deterministic and in range") {
  prng::SplitMix64 a(5), b(5);
  for (int i = 0; i < 100; ++i) {
    const auto x = a.below(7);
    CHECK(x == b.below(7));
    CHECK(x < 7);
  }
  const double u = a.uniform();
  CHECK(u > 0.0);
  CHECK(u < 1.0);
}
