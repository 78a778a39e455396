// Copyright 2026 The fedproj Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <string>

#include <Eigen/Dense>

#include "fedproj/bench.hpp"
#include "fedproj/datasets.hpp"
#include "fedproj/error.hpp"

namespace fedproj::bench {

namespace {

using Clock = std::chrono::steady_clock;

// Lanes for check-local randomness: derive_subseed(seed, trial, 0, lane, 0).
constexpr std::uint64_t kVectorLane = 0xda;
constexpr std::uint64_t kBasisLane = 0xb0;

RandomSeed trial_seed(std::uint64_t seed, std::uint64_t lane, std::uint64_t trial) {
  return derive_subseed(RandomSeed{seed}, trial, 0, lane, 0);
}

std::vector<double> gaussian(std::size_t n, RandomSeed seed) {
  prng::SplitMix64 rng(seed.value);
  std::vector<double> x(n);
  for (auto& v : x) v = rng.normal();
  return x;
}

std::string num(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6g", x);
  return buf;
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

double rel_error(std::span<const double> approx, std::span<const double> exact) {
  double num2 = 0.0;
  for (std::size_t i = 0; i < exact.size(); ++i) {
    const double e = approx[i] - exact[i];
    num2 += e * e;
  }
  return std::sqrt(num2) / norm2(exact);
}

double sum_sin2(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) {
    const double t = std::sin(v);
    s += t * t;
  }
  return s;
}

double sum_sq(std::span<const double> x) { return dot(x, x); }

void require(bool ok, const std::string& what) {
  if (!ok) throw Error(ErrorCode::kConfig, what);
}

// --- convergence task -------------------------------------------------------

struct ConvergenceTask {
  ModelSpec spec;
  ExperimentData data;
  double beta = 0.0;    // smoothness of the training loss
  double sigma2 = 0.0;  // mini-batch gradient variance at w0
  double gap = 0.0;     // L(w0) - min L
  double lr = 0.0;
  std::size_t clients = 8;
  std::size_t iters = 10;
  std::size_t batch = 64;
  std::size_t rounds = 20;
  RandomSeed root;
};

// Largest eigenvalue of the mean of x~ x~^T, x~ = (x, 1).
double linear_smoothness(const Dataset& data, std::size_t dim) {
  std::vector<double> v(dim, 1.0 / std::sqrt(static_cast<double>(dim)));
  std::vector<double> hv(dim);
  double lambda = 0.0;
  for (int it = 0; it < 100; ++it) {
    std::fill(hv.begin(), hv.end(), 0.0);
    for (const auto& ex : data) {
      double p = v[dim - 1];
      for (std::size_t i = 0; i + 1 < dim; ++i) p += ex.features[i] * v[i];
      for (std::size_t i = 0; i + 1 < dim; ++i) hv[i] += p * ex.features[i];
      hv[dim - 1] += p;
    }
    for (auto& h : hv) h /= static_cast<double>(data.size());
    const double n = norm2(hv);
    const double next = dot(v, hv);
    for (std::size_t i = 0; i < dim; ++i) v[i] = hv[i] / n;
    if (std::abs(next - lambda) <= 1e-10 * next) {
      lambda = next;
      break;
    }
    lambda = next;
  }
  return lambda;
}

double linear_min_loss(const ModelSpec& spec, const Dataset& data) {
  const std::size_t dim = spec.input_dim + 1;
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(dim, dim);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(dim);
  Eigen::VectorXd x(dim);
  for (const auto& ex : data) {
    for (std::size_t i = 0; i < spec.input_dim; ++i) x[i] = ex.features[i];
    x[spec.input_dim] = 1.0;
    h.selfadjointView<Eigen::Lower>().rankUpdate(x);
    b += ex.target * x;
  }
  const Eigen::VectorXd w = h.selfadjointView<Eigen::Lower>().ldlt().solve(b);
  return loss(spec, std::vector<double>(w.data(), w.data() + dim), data);
}

double gradient_variance(const ModelSpec& spec, std::span<const double> w,
                         const Dataset& data) {
  const auto full = grad(spec, w, data);
  double acc = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto gi = grad(spec, w, std::span<const Example>(&data[i], 1));
    for (std::size_t j = 0; j < gi.size(); ++j) {
      const double e = gi[j] - full[j];
      acc += e * e;
    }
  }
  return acc / static_cast<double>(data.size());
}

// Homogeneous linear regression: every client holds the same 4096 examples
// of a d = 1024 model; local rate 1 / (20 beta T).
ConvergenceTask convergence_task(std::uint64_t seed, double beta_override) {
  ConvergenceTask task;
  const std::size_t input = 1023;
  const std::size_t n = 4096;
  task.spec = ModelSpec{ModelKind::kLinearRegression, input, 0, 1,
                        derive_subseed(RandomSeed{seed}, 0, 0, 0xc1, 1)};
  task.root = derive_subseed(RandomSeed{seed}, 0, 0, 0xc1, 2);
  Dataset all = make_linear_regression(n + 1000, input, 0.1,
                                       derive_subseed(RandomSeed{seed}, 0, 0, 0xc1, 0));
  Dataset train(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n));
  task.data.eval.assign(all.begin() + static_cast<std::ptrdiff_t>(n), all.end());
  for (std::size_t c = 0; c < task.clients; ++c) {
    task.data.clients.push_back({static_cast<std::uint32_t>(c), train, "homogeneous"});
  }
  task.beta = beta_override > 0.0 ? beta_override : linear_smoothness(train, input + 1);
  const auto w0 = init_params(task.spec);
  task.gap = loss(task.spec, w0, train) - linear_min_loss(task.spec, train);
  task.sigma2 = gradient_variance(task.spec, w0, train) / static_cast<double>(task.batch);
  task.lr = 1.0 / (20.0 * task.beta * static_cast<double>(task.iters));
  return task;
}

std::vector<double> convergence_losses(const ConvergenceTask& task, Method method,
                                       std::size_t rounds) {
  FedConfig cfg;
  cfg.method = method;
  cfg.num_clients = task.clients;
  cfg.rounds = rounds;
  cfg.total_bases = task.spec.num_params() / 4;
  cfg.local.iters = task.iters;
  cfg.local.lr = task.lr;
  cfg.local.batch_size = task.batch;
  cfg.root_seed = task.root;
  const Federation fed(cfg, task.spec, task.data);
  const auto result = run_experiment(fed);
  std::vector<double> losses;
  for (const auto& r : result.records) losses.push_back(r.global_loss);
  return losses;
}

struct ConvergenceCurves {
  ConvergenceTask task;
  std::vector<double> fedavg;
  std::vector<double> ferret;
  std::vector<double> fedkseed;
};

ConvergenceCurves convergence_curves(std::uint64_t seed, double beta,
                                     std::size_t fedkseed_rounds) {
  ConvergenceCurves c;
  c.task = convergence_task(seed, beta);
  c.fedavg = convergence_losses(c.task, Method::kFedAvg, c.task.rounds);
  c.ferret = convergence_losses(c.task, Method::kFerret, c.task.rounds);
  c.fedkseed = convergence_losses(c.task, Method::kFedKSeed, fedkseed_rounds);
  return c;
}

// --- checks -----------------------------------------------------------------

void check_unbiased(const TheoryCheckConfig& c, CheckReport& r) {
  const std::size_t d = c.dims.at(0);
  const std::size_t k = c.budgets.at(0);
  const auto part = BlockPartition::single(d, k);
  const auto delta = gaussian(d, trial_seed(c.seed, kVectorLane, 0));
  std::vector<double> mean(d, 0.0);
  for (std::size_t t = 0; t < c.trials; ++t) {
    const auto rec = project_reconstruct(delta, part, trial_seed(c.seed, kBasisLane, t));
    for (std::size_t i = 0; i < d; ++i) mean[i] += rec[i];
  }
  for (auto& m : mean) m /= static_cast<double>(c.trials);
  const double rel = rel_error(mean, delta);
  const double expected =
      std::sqrt((static_cast<double>(d) - 0.2) / static_cast<double>(k * c.trials));
  r.lines.push_back("d=" + std::to_string(d) + " K=" + std::to_string(k) +
                    " seeds=" + std::to_string(c.trials) + ": ||mean - delta||/||delta|| = " +
                    num(rel) + " (bound " + num(c.tolerance) + ", Monte-Carlo expectation " +
                    num(expected) + ")");
  r.passed = rel <= c.tolerance;
}

void check_error_bound(const TheoryCheckConfig& c, CheckReport& r) {
  require(c.dims.size() == c.budgets.size(), "error-bound needs one budget per dim");
  r.passed = true;
  for (std::size_t i = 0; i < c.dims.size(); ++i) {
    const std::size_t d = c.dims[i];
    const std::size_t k = c.budgets[i];
    const auto part = BlockPartition::single(d, k);
    const double rho = trunc_gauss_stats(d).rho;
    const double l = std::log(2.0 * static_cast<double>(d)) / (rho * static_cast<double>(k));
    const double bound = c.tolerance * std::max(2.0 * std::sqrt(2.0 * l), 2.0 * l);
    double sum = 0.0;
    double worst = 0.0;
    std::size_t violations = 0;
    for (std::size_t t = 0; t < c.trials; ++t) {
      const auto delta = gaussian(d, trial_seed(c.seed, kVectorLane + i, t));
      const auto rec = project_reconstruct(delta, part, trial_seed(c.seed, kBasisLane + i, t));
      const double e = rel_error(rec, delta);
      sum += e;
      worst = std::max(worst, e);
      if (e > bound) ++violations;
    }
    const double mean = sum / static_cast<double>(c.trials);
    r.lines.push_back("d=" + std::to_string(d) + " K=" + std::to_string(k) +
                      ": mean relative error " + num(mean) + ", max " + num(worst) +
                      ", bound " + num(bound) + ", violations " + std::to_string(violations) +
                      "/" + std::to_string(c.trials));
    if (violations > 0 || mean > bound) r.passed = false;
  }
}

void check_zo_connection(const TheoryCheckConfig& c, CheckReport& r) {
  const std::size_t d = c.dims.at(0);
  const std::size_t k = c.budgets.at(0);
  const double beta = c.beta > 0.0 ? c.beta : 1.0;
  const PointLoss quad = [beta](std::span<const double> w) { return 0.5 * beta * sum_sq(w); };
  BasisGenerator gen(d);
  std::vector<float> v(d);
  r.passed = true;
  for (std::size_t e = 0; e < c.epsilons.size(); ++e) {
    const double eps = c.epsilons[e];
    const double bound = c.tolerance * beta * eps / 2.0;
    std::size_t holds = 0;
    double worst = 0.0;
    for (std::size_t t = 0; t < c.trials; ++t) {
      const auto w = gaussian(d, trial_seed(c.seed, kVectorLane + e, t));
      const RandomSeed seed = trial_seed(c.seed, kBasisLane + e, t);
      const auto est = zo_gradient_estimate(quad, w, ZOConfig{eps, k, seed});
      std::vector<double> ref(d, 0.0);
      for (std::size_t j = 0; j < k; ++j) {
        gen.fill(seed, 0, j, v);
        double a = 0.0;
        for (std::size_t i = 0; i < d; ++i) a += static_cast<double>(v[i]) * beta * w[i];
        a /= static_cast<double>(k);
        for (std::size_t i = 0; i < d; ++i) ref[i] += a * static_cast<double>(v[i]);
      }
      double err2 = 0.0;
      for (std::size_t i = 0; i < d; ++i) err2 += (est.gradient[i] - ref[i]) * (est.gradient[i] - ref[i]);
      const double err = std::sqrt(err2);
      worst = std::max(worst, err);
      if (err <= bound) ++holds;
    }
    r.lines.push_back("eps=" + num(eps) + ": ||Vg/K - VV^T grad/K|| max " + num(worst) +
                      " vs bound " + num(bound) + ", holds " + std::to_string(holds) + "/" +
                      std::to_string(c.trials));
    if (holds != c.trials) r.passed = false;
  }
}

void check_rho_rate(const TheoryCheckConfig& c, CheckReport& r) {
  require(c.dims.size() >= 2, "rho-rate needs at least two dims");
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  const double n = static_cast<double>(c.dims.size());
  for (std::size_t d : c.dims) {
    const double rho = trunc_gauss_stats(d).rho;
    const double x = std::log(static_cast<double>(d));
    const double y = std::log(1.0 / rho);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    r.lines.push_back("d=" + std::to_string(d) + ": 1/rho = " + num(1.0 / rho) +
                      ", rho*d = " + num(rho * static_cast<double>(d)));
  }
  const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  const std::size_t d_max = c.dims.back();
  const double rd = trunc_gauss_stats(d_max).rho * static_cast<double>(d_max);
  const double rel = std::abs(rd * 3.0 - 1.0);
  r.lines.push_back("log-log slope " + num(slope) + " (want 1 +/- " + num(c.tolerance) + ")");
  r.lines.push_back("rho*d at d=" + std::to_string(d_max) + " differs from 1/3 by " +
                    num(rel * 100.0) + "% (want <= 0.1%)");
  r.passed = std::abs(slope - 1.0) <= c.tolerance && rel <= 1e-3;
}

void check_recon_vs_k(const TheoryCheckConfig& c, CheckReport& r) {
  const auto s = fig6_series(c.dims.at(0), c.budgets, c.trials, c.epsilons.at(0), c.seed);
  r.passed = true;
  for (std::size_t i = 0; i < s.rows.size(); ++i) {
    const auto& row = s.rows[i];
    r.lines.push_back("K=" + num(row[0]) + ": ferret cos " + num(row[1]) + ", zo cos " +
                      num(row[2]));
    if (row[1] < row[2]) r.passed = false;
    if (i > 0 && row[1] < s.rows[i - 1][1]) r.passed = false;
  }
  r.lines.push_back("ferret monotone in K and >= zo at every K: " +
                    std::string(r.passed ? "yes" : "no"));
}

std::vector<std::size_t> drift_steps(std::size_t t_max) {
  std::vector<std::size_t> steps;
  for (std::size_t t : {1, 2, 5}) {
    if (t <= t_max) steps.push_back(t);
  }
  for (std::size_t t = 10; t <= t_max; t += 5) steps.push_back(t);
  if (steps.empty() || steps.back() != t_max) steps.push_back(t_max);
  return steps;
}

void check_drift(const TheoryCheckConfig& c, CheckReport& r) {
  const auto steps = drift_steps(c.trials);
  const auto s = fig7a_series(c.dims.at(0), c.budgets.at(0), steps, 0.1, c.epsilons.at(0), c.seed);
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (const auto& row : s.rows) {
    lo = std::min(lo, row[1]);
    hi = std::max(hi, row[1]);
    r.lines.push_back("T=" + num(row[0]) + ": ferret cos " + num(row[1]) + ", zo cos " +
                      num(row[2]));
  }
  const auto& last = s.rows.back();
  r.lines.push_back("ferret spread " + num(hi - lo) + " (want < " + num(c.tolerance) +
                    "); final zo " + num(last[2]) + " vs ferret " + num(last[1]));
  r.passed = hi - lo < c.tolerance && last[2] < last[1];
}

BlockPartition equal_blocks(std::size_t d, std::size_t k, std::size_t l) {
  require(l >= 1 && d % l == 0 && k % l == 0, "dims and budgets must split evenly into blocks");
  return BlockPartition(std::vector<std::size_t>(l, d / l), std::vector<std::size_t>(l, k / l));
}

void check_block_speedup(const TheoryCheckConfig& c, CheckReport& r) {
  constexpr double kMinSpeedup = 4.0;
  const std::size_t d = c.dims.at(0);
  const std::size_t k = c.budgets.at(0);
  require(c.blocks.size() == 2, "block-speedup needs two block counts");
  bool exact = true;
  for (std::size_t l = 1; l <= c.blocks[1]; l *= 2) {
    const auto part = equal_blocks(d, k, l);
    const std::uint64_t cost = block_cost(part);
    const std::uint64_t want = static_cast<std::uint64_t>(d) * k / l;
    if (cost != want) exact = false;
    r.lines.push_back("L=" + std::to_string(l) + ": sum d_l K_l = " + std::to_string(cost) +
                      " (dK/L = " + std::to_string(want) + ")");
  }
  const auto x = gaussian(d, trial_seed(c.seed, kVectorLane, 0));
  std::vector<double> update(d);
  for (std::size_t i = 0; i < d; ++i) update[i] = std::sin(2.0 * x[i]);
  const RandomSeed seed = trial_seed(c.seed, kBasisLane, 0);
  double best[2];
  double cos[2];
  for (int j = 0; j < 2; ++j) {
    const auto part = equal_blocks(d, k, c.blocks[j]);
    best[j] = std::numeric_limits<double>::infinity();
    for (std::size_t t = 0; t < c.trials; ++t) {
      const auto t0 = Clock::now();
      const auto proj = project(update, part, seed);
      best[j] = std::min(best[j], seconds_since(t0));
      if (proj.num_coords() != k) exact = false;
    }
    cos[j] = cosine_similarity(project_reconstruct(update, part, seed), update);
    r.lines.push_back("L=" + std::to_string(c.blocks[j]) + ": project " + num(best[j]) +
                      " s (best of " + std::to_string(c.trials) + "), cosine " + num(cos[j]));
  }
  const double speedup = best[0] / best[1];
  r.lines.push_back("speedup " + num(speedup) + " (want >= " + num(kMinSpeedup) +
                    "), cosine gap " + num(std::abs(cos[0] - cos[1])) + " (want <= " +
                    num(c.tolerance) + ")");
  r.passed = exact && speedup >= kMinSpeedup && std::abs(cos[0] - cos[1]) <= c.tolerance;
}

void check_allocation(const TheoryCheckConfig& c, CheckReport& r) {
  const std::vector<double> norms = {10.0, 1.0, 1.0, 1.0};
  require(c.dims.size() == norms.size(), "allocation uses four blocks");
  const std::size_t k = c.budgets.at(0);
  std::vector<TruncGaussStats> stats;
  for (std::size_t d : c.dims) stats.push_back(trunc_gauss_stats(d));
  const BlockPartition uniform(c.dims, uniform_budgets(c.dims, k));
  const BlockPartition sqrt_alloc(c.dims, allocate_budgets(norms, stats, k));
  const std::size_t d = uniform.total_dim();
  double err_u = 0.0;
  double err_n = 0.0;
  for (std::size_t t = 0; t < c.trials; ++t) {
    auto delta = gaussian(d, trial_seed(c.seed, kVectorLane, t));
    for (std::size_t l = 0; l < norms.size(); ++l) {
      std::span<double> block(delta.data() + uniform.block_offset(l), uniform.block_dim(l));
      const double s = norms[l] / norm2(block);
      for (auto& v : block) v *= s;
    }
    const RandomSeed seed = trial_seed(c.seed, kBasisLane, t);
    err_u += rel_error(project_reconstruct(delta, uniform, seed), delta);
    err_n += rel_error(project_reconstruct(delta, sqrt_alloc, seed), delta);
  }
  err_u /= static_cast<double>(c.trials);
  err_n /= static_cast<double>(c.trials);
  auto list = [](const std::vector<std::size_t>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
    return s;
  };
  r.lines.push_back("norms (10,1,1,1), K=" + std::to_string(k) + ": uniform K_l=(" +
                    list(uniform.block_budgets()) + ") mean error " + num(err_u));
  r.lines.push_back("norm-sqrt K_l=(" + list(sqrt_alloc.block_budgets()) + ") mean error " +
                    num(err_n));
  r.passed = err_n <= err_u;
}

void check_convergence(const TheoryCheckConfig& c, CheckReport& r) {
  const auto curves = convergence_curves(c.seed, c.beta, c.trials);
  const auto& task = curves.task;
  const double threshold = curves.fedavg.at(9);
  const std::size_t ferret_rounds = rounds_to_reach(curves.ferret, threshold);
  const std::size_t kseed_rounds = rounds_to_reach(curves.fedkseed, threshold);
  const double fa = curves.fedavg.back();
  const double fe = curves.ferret.back();
  const double gap = std::abs(fe - fa) / fa;
  r.lines.push_back("d=" + std::to_string(task.spec.num_params()) + " N=" +
                    std::to_string(task.clients) + " T=" + std::to_string(task.iters) +
                    " R=" + std::to_string(task.rounds) + " K=d/4");
  r.lines.push_back("beta " + num(task.beta) + ", sigma^2 " +
                    num(c.sigma > 0.0 ? c.sigma * c.sigma : task.sigma2) + ", D " +
                    num(c.gap > 0.0 ? c.gap : task.gap) + ", eta = 1/(20 beta T) = " +
                    num(task.lr));
  r.lines.push_back("final loss fedavg " + num(fa) + ", ferret " + num(fe) + " (gap " +
                    num(gap * 100.0) + "%, want <= " + num(c.tolerance * 100.0) + "%)");
  auto rounds = [](std::size_t n, std::size_t limit) {
    return n == 0 ? "> " + std::to_string(limit) : std::to_string(n);
  };
  r.lines.push_back("rounds to fedavg round-10 loss " + num(threshold) + ": ferret " +
                    rounds(ferret_rounds, curves.ferret.size()) + ", fedkseed " +
                    rounds(kseed_rounds, curves.fedkseed.size()));
  r.passed = gap <= c.tolerance && ferret_rounds > 0 &&
             (kseed_rounds == 0 || kseed_rounds > ferret_rounds);
}

CostSummary accounting_run(Method method, std::size_t d, std::size_t k, std::uint64_t seed) {
  const ModelSpec spec{ModelKind::kLinearRegression, d - 1, 0, 1, RandomSeed{seed}};
  ExperimentData data;
  data.clients.push_back(
      {0, make_linear_regression(2, d - 1, 0.1, RandomSeed{seed + 1}), "single"});
  FedConfig cfg;
  cfg.method = method;
  cfg.num_clients = 1;
  cfg.rounds = 1;
  cfg.total_bases = k;
  cfg.local.iters = 1;
  cfg.local.lr = 1e-7;
  cfg.local.batch_size = 1;
  cfg.max_block_dim = 16384;
  cfg.zo_epsilon = 1e-3;
  cfg.root_seed = RandomSeed{seed};
  const Federation fed(cfg, spec, data);
  const auto result = run_experiment(fed);
  return account_costs(fed, result.records);
}

void check_accounting(const TheoryCheckConfig& c, CheckReport& r) {
  const std::size_t d = c.dims.at(0);
  const std::size_t k = c.budgets.at(0);
  std::map<Method, CostSummary> s;
  for (Method m : {Method::kFerret, Method::kFedAvg, Method::kFedKSeed, Method::kFedZO}) {
    s[m] = accounting_run(m, d, k, c.seed);
    r.lines.push_back(std::string(method_name(m)) + ": upload per client-round " +
                      num(s[m].upload_per_client_round) + ", download per round " +
                      num(s[m].download_per_round));
  }
  const auto& fe = s[Method::kFerret];
  const auto& fa = s[Method::kFedAvg];
  const bool ratio_exact = fe.total_upload * fa.dim == (k + 1) * fa.total_upload &&
                           fa.total_upload == fa.dim;
  r.lines.push_back("ferret/fedavg upload ratio " +
                    num(fe.upload_per_client_round / fa.upload_per_client_round) +
                    " vs (K+1)/d = " + num(static_cast<double>(k + 1) / static_cast<double>(d)) +
                    (ratio_exact ? " (exact)" : " (mismatch)"));
  const bool kseed_eq = s[Method::kFedKSeed].total_upload == fe.total_upload;
  const bool zo_eq = s[Method::kFedZO].total_upload == fa.total_upload;
  r.lines.push_back(std::string("fedkseed == ferret: ") + (kseed_eq ? "yes" : "no") +
                    ", fedzo == fedavg: " + (zo_eq ? "yes" : "no"));
  r.passed = ratio_exact && kseed_eq && zo_eq;
}

ExperimentConfig determinism_config(Method method, std::uint64_t seed) {
  ExperimentConfig cfg;
  cfg.fed.method = method;
  cfg.fed.num_clients = 6;
  cfg.fed.rounds = 4;
  cfg.fed.participation = 0.5;
  cfg.fed.total_bases = 24;
  cfg.fed.local.iters = 3;
  cfg.fed.local.lr = 0.05;
  cfg.fed.local.batch_size = 8;
  cfg.fed.skew = DataSkew{DataSkew::Kind::kLabelSkew, 0.5};
  cfg.fed.max_block_dim = 64;
  cfg.fed.allocation = AllocationPolicy::kNormSqrt;
  cfg.fed.root_seed = RandomSeed{seed};
  cfg.model = ModelSpec{ModelKind::kMlp, 8, 12, 3, RandomSeed{seed + 1}};
  cfg.data.kind = "synthetic-blobs";
  cfg.data.examples = 240;
  cfg.data.eval_examples = 60;
  cfg.data.classes = 3;
  cfg.data.seed = seed + 2;
  return cfg;
}

void check_determinism(const TheoryCheckConfig& c, CheckReport& r) {
  r.passed = true;
  const auto base = determinism_config(Method::kFerret, c.seed);
  const auto a = execute(base);
  const auto b = execute(base);
  const bool same = a.csv == b.csv && a.json == b.json;
  r.lines.push_back(std::string("two runs, byte-identical CSV and JSON: ") + (same ? "yes" : "no"));
  if (!same) r.passed = false;
  for (Method m : {Method::kFerret, Method::kFedAvg, Method::kFedZO, Method::kFedKSeed}) {
    auto cfg = determinism_config(m, c.seed);
    const auto in_proc = execute(cfg);
    cfg.transport = "socket";
    cfg.workers = 3;
    const auto socket = execute(cfg);
    const bool eq = in_proc.result.records == socket.result.records &&
                    in_proc.result.w == socket.result.w;
    r.lines.push_back(std::string(method_name(m)) +
                      ": in-process vs socket records and weights identical: " +
                      (eq ? "yes" : "no"));
    if (!eq) r.passed = false;
  }
}

using CheckFn = void (*)(const TheoryCheckConfig&, CheckReport&);

struct CheckEntry {
  const char* name;
  CheckFn fn;
};

const std::vector<CheckEntry>& registry() {
  static const std::vector<CheckEntry> entries = {
      {"unbiased", check_unbiased},
      {"error-bound", check_error_bound},
      {"zo-connection", check_zo_connection},
      {"rho-rate", check_rho_rate},
      {"recon-vs-k", check_recon_vs_k},
      {"drift", check_drift},
      {"block-speedup", check_block_speedup},
      {"allocation", check_allocation},
      {"convergence", check_convergence},
      {"accounting", check_accounting},
      {"determinism", check_determinism},
  };
  return entries;
}

}  // namespace

void TheoryCheckConfig::validate() const {
  if (trials == 0) throw Error(ErrorCode::kConfig, which + ": trials must be >= 1");
  if (!(tolerance > 0.0) || !std::isfinite(tolerance)) {
    throw Error(ErrorCode::kConfig, which + ": tolerance must be > 0");
  }
  for (std::size_t d : dims) {
    if (d == 0) throw Error(ErrorCode::kInvalidDimension, which + ": dims must be >= 1");
  }
  for (std::size_t k : budgets) {
    if (k == 0) throw Error(ErrorCode::kInfeasibleBudget, which + ": budgets must be >= 1");
  }
  if (dims.size() == budgets.size()) {
    for (std::size_t i = 0; i < dims.size(); ++i) {
      if (budgets[i] > dims[i]) {
        throw Error(ErrorCode::kInfeasibleBudget,
                    which + ": budget " + std::to_string(budgets[i]) + " exceeds dim " +
                        std::to_string(dims[i]));
      }
    }
  }
  for (double e : epsilons) {
    if (!(e > 0.0)) throw Error(ErrorCode::kConfig, which + ": epsilons must be > 0");
  }
}

const std::vector<std::string>& check_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (const auto& e : registry()) out.emplace_back(e.name);
    return out;
  }();
  return names;
}

TheoryCheckConfig default_check(const std::string& which) {
  TheoryCheckConfig c;
  c.which = which;
  if (which == "unbiased") {
    c.dims = {256};
    c.budgets = {16};
    c.trials = 20000;
    c.tolerance = 0.02;
  } else if (which == "error-bound") {
    c.dims = {1024, 4096, 16384};
    c.budgets = {32, 64, 128};
    c.trials = 200;
    c.tolerance = 1.0;  // multiplier on the bound
  } else if (which == "zo-connection") {
    c.dims = {512};
    c.budgets = {32};
    c.epsilons = {0.1, 0.01};
    c.trials = 100;
    c.tolerance = 1.0;  // multiplier on beta * eps / 2
    c.beta = 1.0;
  } else if (which == "rho-rate") {
    c.dims = {100, 1000, 10000, 100000, 1000000};
    c.trials = 1;
    c.tolerance = 0.05;
  } else if (which == "recon-vs-k") {
    c.dims = {10000};
    c.budgets = {64, 128, 256, 512};
    c.epsilons = {0.1};
    c.trials = 20;
    c.tolerance = 1.0;  // unused
  } else if (which == "drift") {
    c.dims = {50000};
    c.budgets = {500};
    c.epsilons = {0.1};
    c.trials = 50;  // GD steps
    c.tolerance = 0.02;
  } else if (which == "block-speedup") {
    c.dims = {std::size_t{1} << 20};
    c.budgets = {256};
    c.blocks = {1, 16};
    c.trials = 3;  // timing repetitions
    c.tolerance = 0.02;
  } else if (which == "allocation") {
    c.dims = {1000, 1000, 1000, 1000};
    c.budgets = {64};
    c.trials = 100;
    c.tolerance = 1.0;  // unused
  } else if (which == "convergence") {
    c.trials = 60;  // fedkseed rounds
    c.tolerance = 0.1;
  } else if (which == "accounting") {
    c.dims = {1000000};
    c.budgets = {4096};
    c.trials = 1;
    c.tolerance = 1.0;  // unused
  } else if (which == "determinism") {
    c.trials = 1;
    c.tolerance = 1.0;  // unused
  } else {
    throw Error(ErrorCode::kConfig, "unknown check '" + which + "'");
  }
  return c;
}

TheoryCheckConfig with_defaults(TheoryCheckConfig cfg) {
  const TheoryCheckConfig d = default_check(cfg.which);
  if (cfg.dims.empty()) cfg.dims = d.dims;
  if (cfg.budgets.empty()) cfg.budgets = d.budgets;
  if (cfg.blocks.empty()) cfg.blocks = d.blocks;
  if (cfg.epsilons.empty()) cfg.epsilons = d.epsilons;
  if (cfg.trials == 0) cfg.trials = d.trials;
  if (cfg.tolerance == 0.0) cfg.tolerance = d.tolerance;
  if (cfg.beta == 0.0) cfg.beta = d.beta;
  return cfg;
}

CheckReport run_check(const TheoryCheckConfig& cfg) {
  const auto it = std::find_if(registry().begin(), registry().end(),
                               [&](const CheckEntry& e) { return cfg.which == e.name; });
  if (it == registry().end()) throw Error(ErrorCode::kConfig, "unknown check '" + cfg.which + "'");
  cfg.validate();
  CheckReport r;
  r.name = cfg.which;
  r.seed = cfg.seed;
  const auto t0 = Clock::now();
  it->fn(cfg, r);
  r.seconds = seconds_since(t0);
  return r;
}

// --- repro series -----------------------------------------------------------

Series fig6_series(std::size_t dim, std::span<const std::size_t> budgets, std::size_t seeds,
                   double epsilon, std::uint64_t seed) {
  Series s{{"K", "ferret_cos", "zo_cos"}, {}};
  const PointLoss f = [](std::span<const double> x) { return sum_sq(x); };
  for (std::size_t k : budgets) {
    const auto part = BlockPartition::single(dim, k);
    double fe = 0.0;
    double zo = 0.0;
    for (std::size_t t = 0; t < seeds; ++t) {
      const auto x = gaussian(dim, trial_seed(seed, kVectorLane, t));
      std::vector<double> g(dim);
      for (std::size_t i = 0; i < dim; ++i) g[i] = 2.0 * x[i];
      const RandomSeed bs = trial_seed(seed, kBasisLane, t);
      fe += cosine_similarity(project_reconstruct(g, part, bs), g);
      zo += cosine_similarity(zo_gradient_estimate(f, x, ZOConfig{epsilon, k, bs}).gradient, g);
    }
    s.rows.push_back({static_cast<double>(k), fe / static_cast<double>(seeds),
                      zo / static_cast<double>(seeds)});
  }
  return s;
}

Series fig7a_series(std::size_t dim, std::size_t budget, std::span<const std::size_t> steps,
                    double lr, double epsilon, std::uint64_t seed) {
  Series s{{"T", "ferret_cos", "zo_cos"}, {}};
  const auto x0 = gaussian(dim, trial_seed(seed, kVectorLane, 0));
  const RandomSeed bs = trial_seed(seed, kBasisLane, 0);
  const auto part = BlockPartition::single(dim, budget);
  const PointLoss f = [](std::span<const double> x) { return sum_sin2(x); };
  auto x_gd = x0;
  auto x_zo = x0;
  std::size_t t = 0;
  for (std::size_t checkpoint : steps) {
    for (; t < checkpoint; ++t) {
      for (auto& v : x_gd) v -= lr * std::sin(2.0 * v);
      const auto est = zo_gradient_estimate(f, x_zo, ZOConfig{epsilon, budget, bs});
      for (std::size_t i = 0; i < dim; ++i) x_zo[i] -= lr * est.gradient[i];
    }
    std::vector<double> delta(dim);
    std::vector<double> zo_delta(dim);
    for (std::size_t i = 0; i < dim; ++i) {
      delta[i] = x0[i] - x_gd[i];
      zo_delta[i] = x0[i] - x_zo[i];
    }
    s.rows.push_back({static_cast<double>(checkpoint),
                      cosine_similarity(project_reconstruct(delta, part, bs), delta),
                      cosine_similarity(zo_delta, delta)});
  }
  return s;
}

Series allocation_curve_series(std::uint64_t seed) {
  const ModelSpec spec{ModelKind::kMlp, 20, 32, 4, derive_subseed(RandomSeed{seed}, 0, 0, 0xa1, 1)};
  const Dataset all = make_blobs(2500, 20, 4, 3.0, derive_subseed(RandomSeed{seed}, 0, 0, 0xa1, 0));
  const RandomSeed root = derive_subseed(RandomSeed{seed}, 0, 0, 0xa1, 2);
  ExperimentData data;
  data.eval.assign(all.begin() + 2000, all.end());
  data.clients = partition_data(Dataset(all.begin(), all.begin() + 2000), 4, {}, root);
  Series s{{"round", "loss_uniform", "loss_norm_sqrt", "metric_uniform", "metric_norm_sqrt"}, {}};
  std::vector<RoundRecord> curves[2];
  const AllocationPolicy policies[2] = {AllocationPolicy::kUniform, AllocationPolicy::kNormSqrt};
  for (int p = 0; p < 2; ++p) {
    FedConfig cfg;
    cfg.num_clients = 4;
    cfg.rounds = 30;
    cfg.total_bases = 64;
    cfg.local.iters = 5;
    cfg.local.lr = 0.05;
    cfg.local.batch_size = 32;
    cfg.allocation = policies[p];
    cfg.root_seed = root;
    curves[p] = run_experiment(Federation(cfg, spec, data)).records;
  }
  for (std::size_t r = 0; r < curves[0].size(); ++r) {
    s.rows.push_back({static_cast<double>(r), curves[0][r].global_loss, curves[1][r].global_loss,
                      curves[0][r].eval_metric, curves[1][r].eval_metric});
  }
  return s;
}

Series rounds_curve_series(std::uint64_t seed, std::size_t fedkseed_rounds) {
  const auto c = convergence_curves(seed, 0.0, fedkseed_rounds);
  Series s{{"round", "fedavg", "ferret", "fedkseed"}, {}};
  const double nan = std::numeric_limits<double>::quiet_NaN();
  const std::size_t n = std::max({c.fedavg.size(), c.ferret.size(), c.fedkseed.size()});
  auto at = [&](const std::vector<double>& v, std::size_t r) { return r < v.size() ? v[r] : nan; };
  for (std::size_t r = 0; r < n; ++r) {
    s.rows.push_back({static_cast<double>(r), at(c.fedavg, r), at(c.ferret, r), at(c.fedkseed, r)});
  }
  return s;
}

const std::vector<std::string>& repro_names() {
  static const std::vector<std::string> names = {"fig6", "fig7a", "fig4-analogue", "rounds-curve"};
  return names;
}

Series repro(const std::string& figure, std::uint64_t seed) {
  if (figure == "fig6") {
    const auto c = default_check("recon-vs-k");
    return fig6_series(c.dims[0], c.budgets, c.trials, c.epsilons[0], seed);
  }
  if (figure == "fig7a") {
    const auto c = default_check("drift");
    std::vector<std::size_t> steps;
    for (std::size_t t = 1; t <= c.trials; ++t) steps.push_back(t);
    return fig7a_series(c.dims[0], c.budgets[0], steps, 0.1, c.epsilons[0], seed);
  }
  if (figure == "fig4-analogue") return allocation_curve_series(seed);
  if (figure == "rounds-curve") return rounds_curve_series(seed, default_check("convergence").trials);
  throw Error(ErrorCode::kConfig, "unknown figure '" + figure + "'");
}

}  // namespace fedproj::bench
