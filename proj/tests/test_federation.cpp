#include <Eigen/Dense>
#include <algorithm>
#include <boost/random/gamma_distribution.hpp>
#include <boost/random/mersenne_twister.hpp>
#include <cmath>

#include "doctest.h"
#include "fedproj/datasets.hpp"
#include "fedproj/error.hpp"
#include "fedproj/federation.hpp"
#include "fedproj/wire.hpp"

using namespace fedproj;

namespace {

ExperimentData linreg_data(std::size_t n_clients, std::size_t per_client, std::size_t in,
                           std::uint64_t seed) {
  const auto all = make_linear_regression(n_clients * per_client + 50, in, 0.1, RandomSeed{seed});
  const Dataset train(all.begin(), all.end() - 50);
  ExperimentData d;
  d.clients = partition_data(train, n_clients, {}, RandomSeed{seed});
  d.eval.assign(all.end() - 50, all.end());
  return d;
}

FedConfig base_config(Method m, std::size_t n, std::size_t k) {
  FedConfig c;
  c.method = m;
  c.num_clients = n;
  c.rounds = 3;
  c.total_bases = k;
  c.local.iters = 2;
  c.local.lr = 0.05;
  c.root_seed = RandomSeed{17};
  return c;
}

ModelSpec linreg(std::size_t in) {
  return ModelSpec{ModelKind::kLinearRegression, in, 0, 1, RandomSeed{5}};
}

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
  return m;
}

}  // namespace

TEST_CASE("partition_data splits") {
  const auto data = make_blobs(1000, 2, 3, 1.0, RandomSeed{1});
  const auto one = partition_data(data, 1, {}, RandomSeed{1});
  REQUIRE(one.size() == 1);
  CHECK(one[0].examples.size() == 1000);

  const auto iid = partition_data(data, 10, {}, RandomSeed{2});
  for (const auto& c : iid) CHECK(c.examples.size() == 100);
  CHECK(iid[0].skew_label == "iid");
  const auto again = partition_data(data, 10, {}, RandomSeed{2});
  CHECK(again[3].examples[7].features == iid[3].examples[7].features);

  CHECK_THROWS_AS(partition_data(Dataset(3, Example{{0.0}, 0}), 4, {}, RandomSeed{1}), Error);
}

TEST_CASE("label skew concentrates client classes") {
  const auto data = make_blobs(600, 2, 3, 1.0, RandomSeed{3});
  const DataSkew skew{DataSkew::Kind::kLabelSkew, 0.1};
  double engine = 0.0;
  for (std::uint64_t s = 0; s < 100; ++s) {
    const auto parts = partition_data(data, 6, skew, RandomSeed{s});
    std::size_t total = 0;
    for (const auto& c : parts) {
      REQUIRE_FALSE(c.examples.empty());
      total += c.examples.size();
      std::size_t counts[3] = {0, 0, 0};
      for (const auto& ex : c.examples) ++counts[static_cast<int>(ex.target)];
      engine += double(*std::max_element(counts, counts + 3)) / double(c.examples.size());
    }
    CHECK(total == 600);
  }
  engine /= 600.0;

  // Direct sampler: class c's mass at client i is Dirichlet(0.1)_i over
  // clients; per-client class share follows from those masses.
  boost::random::mt19937 gen(7);
  boost::random::gamma_distribution<double> gamma(0.1);
  double oracle = 0.0;
  for (int s = 0; s < 100; ++s) {
    double mass[3][6];
    for (auto& row : mass) {
      double sum = 0.0;
      for (double& x : row) sum += (x = gamma(gen));
      for (double& x : row) x /= sum;
    }
    for (int i = 0; i < 6; ++i) {
      const double tot = mass[0][i] + mass[1][i] + mass[2][i];
      oracle += std::max({mass[0][i], mass[1][i], mass[2][i]}) / tot;
    }
  }
  oracle /= 600.0;
  MESSAGE("mean max-class share engine " << engine << " direct " << oracle);
  CHECK(engine > 0.6);
  CHECK(oracle > 0.6);
}

TEST_CASE("client sampling") {
  auto cfg = base_config(Method::kFedAvg, 8, 1);
  cfg.participation = 0.25;
  const Federation fed(cfg, linreg(3), linreg_data(8, 10, 3, 1));
  const auto a = fed.sample_clients(0);
  CHECK(a.size() == 2);
  CHECK(std::is_sorted(a.begin(), a.end()));
  CHECK(a == fed.sample_clients(0));
  bool changed = false;
  for (std::size_t r = 1; r < 10; ++r) changed |= fed.sample_clients(r) != a;
  CHECK(changed);
  cfg.participation = 0.3;
  CHECK(cfg.clients_per_round() == 3);
}

TEST_CASE("zero learning rate leaves the model unchanged") {
  for (Method m : {Method::kFerret, Method::kFedAvg, Method::kFedZO, Method::kFedKSeed}) {
    auto cfg = base_config(m, 3, 4);
    cfg.local.lr = 0.0;
    const Federation fed(cfg, linreg(6), linreg_data(3, 20, 6, 2));
    const auto w0 = init_params(fed.model());
    InProcessExecutor exec;
    const auto res = run_round(fed, exec, w0, 0, {});
    CHECK(res.w == w0);
  }
}

TEST_CASE("interpolating projection reproduces one SGD step") {
  const std::size_t in = 7, d = 8;
  auto cfg = base_config(Method::kFerret, 1, d);
  cfg.local.iters = 1;
  cfg.local.lr = 0.1;
  cfg.server_lr = 1.5;
  cfg.exact_projection = true;
  const auto data = linreg_data(1, 30, in, 3);
  const Federation fed(cfg, linreg(in), data);
  const auto w0 = init_params(fed.model());
  const auto res = ferret_round(fed, w0, 0);
  const auto g = grad(fed.model(), w0, data.clients[0].examples);
  // Coordinates travel as f32, so the interpolation is exact to ~1e-7.
  std::vector<double> sgd(d);
  for (std::size_t i = 0; i < d; ++i) sgd[i] = w0[i] - 1.5 * 0.1 * g[i];
  CHECK(max_abs_diff(res.w, sgd) < 1e-5);

  auto avg_cfg = cfg;
  avg_cfg.method = Method::kFedAvg;
  const Federation avg(avg_cfg, linreg(in), data);
  CHECK(max_abs_diff(fedavg_round(avg, w0, 0).w, res.w) < 1e-5);
}

TEST_CASE("two-client ferret aggregate matches explicit matrices") {
  const std::size_t in = 7, d = 8, k = 4;
  auto cfg = base_config(Method::kFerret, 2, k);
  const auto data = linreg_data(2, 15, in, 4);
  const Federation fed(cfg, linreg(in), data);
  const auto w0 = init_params(fed.model());
  const auto res = ferret_round(fed, w0, 0);

  // Block-diagonal V: one d_l x K_l block per parameter group.
  const BlockPartition& part = fed.partition();
  REQUIRE(part.num_blocks() == 2);
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(d);
  for (std::uint32_t c = 0; c < 2; ++c) {
    const auto local = local_sgd(fed.model(), w0, data.clients[c].examples, cfg.local,
                                 fed.data_seed(c, 0));
    const Eigen::VectorXd delta = Eigen::Map<const Eigen::VectorXd>(local.delta.data(), d);
    for (std::size_t l = 0; l < part.num_blocks(); ++l) {
      const std::size_t dl = part.block_dim(l), kl = part.block_budget(l);
      Eigen::MatrixXd v(dl, kl);
      for (std::size_t j = 0; j < kl; ++j) {
        const auto chunk = sample_block_basis(fed.message_seed(c, 0), l, dl, j);
        for (std::size_t i = 0; i < dl; ++i) v(i, j) = chunk.values[i];
      }
      const double rho = trunc_gauss_stats(dl).rho;
      const auto seg = delta.segment(part.block_offset(l), dl);
      mean.segment(part.block_offset(l), dl) +=
          v * (v.transpose() * seg) / (rho * double(kl)) / 2.0;
    }
  }
  for (std::size_t i = 0; i < d; ++i) {
    CHECK(res.w[i] == doctest::Approx(w0[i] - mean(i)).epsilon(1e-6));
  }
}

TEST_CASE("two-client fedavg average") {
  const std::size_t in = 7;
  auto cfg = base_config(Method::kFedAvg, 2, 1);
  cfg.server_lr = 2.0;
  const auto data = linreg_data(2, 15, in, 5);
  const Federation fed(cfg, linreg(in), data);
  const auto w0 = init_params(fed.model());
  const auto res = fedavg_round(fed, w0, 0);
  const auto d1 = local_sgd(fed.model(), w0, data.clients[0].examples, cfg.local, fed.data_seed(0, 0)).delta;
  const auto d2 = local_sgd(fed.model(), w0, data.clients[1].examples, cfg.local, fed.data_seed(1, 0)).delta;
  for (std::size_t i = 0; i < w0.size(); ++i) {
    CHECK(res.w[i] == doctest::Approx(w0[i] - 2.0 * (d1[i] + d2[i]) / 2.0).epsilon(1e-12));
  }
  for (const auto& m : res.msgs) CHECK(m.upload_units == w0.size());
}

TEST_CASE("server regenerates the client's reconstruction bit-exactly") {
  auto cfg = base_config(Method::kFerret, 3, 40);
  cfg.max_block_dim = 30;
  const auto data = linreg_data(3, 20, 99, 6);
  const Federation fed(cfg, linreg(99), data);
  CHECK(fed.partition().num_blocks() == 5);  // 99 weights in 4 pieces + bias
  const auto w0 = init_params(fed.model());
  for (std::uint32_t c = 0; c < 3; ++c) {
    const auto msg = fed.client_update(c, 0, w0);
    const auto local = local_sgd(fed.model(), w0, data.clients[c].examples, cfg.local,
                                 fed.data_seed(c, 0));
    CHECK(fed.decode_update(msg, w0) ==
          project_reconstruct(local.delta, fed.partition(), fed.message_seed(c, 0)));
    CHECK(msg.upload_units == 41);
  }
}

TEST_CASE("aggregation is independent of message order and thread count") {
  auto cfg = base_config(Method::kFerret, 5, 12);
  const auto data = linreg_data(5, 20, 30, 7);
  const Federation fed(cfg, linreg(30), data);
  const auto w0 = init_params(fed.model());
  InProcessExecutor exec;
  const auto res = run_round(fed, exec, w0, 0, {});
  auto reversed = res.msgs;
  std::reverse(reversed.begin(), reversed.end());
  CHECK(fed.aggregate(w0, reversed) == res.w);

  cfg.threads = 3;
  const Federation threaded(cfg, linreg(30), data);
  CHECK(run_round(threaded, exec, w0, 0, {}).w == res.w);
}

TEST_CASE("round-end aggregation equals the deferred per-client form") {
  auto cfg = base_config(Method::kFerret, 3, 10);
  const auto data = linreg_data(3, 20, 25, 8);
  const Federation fed(cfg, linreg(25), data);
  const auto w0 = init_params(fed.model());
  const auto engine = run_experiment(fed, w0);

  // Each client keeps its own copy, applies the previous round's aggregate
  // from the broadcast (seed, coords) pairs, then trains.
  std::vector<std::vector<double>> local_w(3, w0);
  std::vector<ProjectedUpdate> last;
  std::vector<double> w_engine = w0;
  for (std::size_t r = 0; r < 3; ++r) {
    for (std::uint32_t c = 0; c < 3; ++c) {
      for (const auto& p : last) {
        const auto rec = reconstruct(p, fed.partition());
        for (std::size_t i = 0; i < rec.size(); ++i) local_w[c][i] -= rec[i] / 3.0;
      }
      CHECK(max_abs_diff(local_w[c], w_engine) < 1e-12);
    }
    std::vector<ProjectedUpdate> sent;
    for (std::uint32_t c = 0; c < 3; ++c) {
      const auto l = local_sgd(fed.model(), local_w[c], data.clients[c].examples, cfg.local,
                               fed.data_seed(c, r));
      sent.push_back(project(l.delta, fed.partition(), fed.message_seed(c, r)));
    }
    last = sent;
    InProcessExecutor exec;
    w_engine = run_round(fed, exec, w_engine, r, {}).w;
  }
  for (std::uint32_t c = 0; c < 3; ++c) {
    for (const auto& p : last) {
      const auto rec = reconstruct(p, fed.partition());
      for (std::size_t i = 0; i < rec.size(); ++i) local_w[c][i] -= rec[i] / 3.0;
    }
    CHECK(max_abs_diff(local_w[c], engine.w) < 1e-12);
  }
  CHECK(engine.w == w_engine);
}

TEST_CASE("cumulative accounting") {
  auto cfg = base_config(Method::kFerret, 6, 9);
  cfg.participation = 0.5;
  cfg.rounds = 4;
  const Federation fed(cfg, linreg(20), linreg_data(6, 10, 20, 9));
  const auto res = run_experiment(fed);
  REQUIRE(res.records.size() == 4);
  std::uint64_t prev = 0, prev_evals = 0;
  for (const auto& r : res.records) {
    CHECK(r.cumulative_upload - prev == 3 * 10);
    CHECK(r.cumulative_grad_evals - prev_evals == 3 * 2);
    prev = r.cumulative_upload;
    prev_evals = r.cumulative_grad_evals;
  }
  const auto summary = account_costs(fed, res.records);
  CHECK(summary.upload_per_client_round == 10.0);
  CHECK(summary.total_download == 4u * 3 * 2 * 10);
}

TEST_CASE("upload units per method") {
  const auto data = linreg_data(2, 10, 15, 10);
  const std::size_t d = 16;
  for (Method m : {Method::kFerret, Method::kFedAvg, Method::kFedZO, Method::kFedKSeed}) {
    auto cfg = base_config(m, 2, 5);
    cfg.local.lr = 0.01;
    const Federation fed(cfg, linreg(15), data);
    const auto msg = fed.client_update(1, 0, init_params(fed.model()));
    const std::uint64_t expected = (m == Method::kFerret || m == Method::kFedKSeed) ? 6 : d;
    CHECK(msg.upload_units == expected);
    const auto frame = encode_client_update(msg);
    CHECK(decode_client_update(client_update_tag(msg), frame) == msg);
    if (m == Method::kFedZO) CHECK(msg.grad_evals == 2 * 6);
    if (m == Method::kFedKSeed) CHECK(msg.grad_evals == 2 * 5);
  }
}

TEST_CASE("doubling the server step doubles the applied update") {
  auto cfg = base_config(Method::kFerret, 4, 8);
  const auto data = linreg_data(4, 12, 20, 11);
  const Federation a(cfg, linreg(20), data);
  cfg.server_lr = 2.0;
  const Federation b(cfg, linreg(20), data);
  const auto w0 = init_params(a.model());
  const auto wa = ferret_round(a, w0, 0).w;
  const auto wb = ferret_round(b, w0, 0).w;
  for (std::size_t i = 0; i < w0.size(); ++i) {
    CHECK(wb[i] - w0[i] == doctest::Approx(2.0 * (wa[i] - w0[i])).epsilon(1e-12).scale(1e-15));
  }
}

TEST_CASE("protocol and divergence errors") {
  auto cfg = base_config(Method::kFerret, 2, 4);
  const auto data = linreg_data(2, 10, 10, 12);
  const Federation fed(cfg, linreg(10), data);
  const auto w0 = init_params(fed.model());
  auto msg = fed.client_update(0, 0, w0);
  std::get<ProjectedUpdate>(msg.payload).partition_id ^= 1;
  try {
    fed.aggregate(w0, {msg});
    FAIL("expected protocol error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kProtocol);
  }
  auto wrong_kind = fed.client_update(1, 0, w0);
  wrong_kind.payload = std::vector<double>(11, 0.0);
  CHECK_THROWS_AS(fed.aggregate(w0, {wrong_kind}), Error);

  cfg.local.lr = 1e4;
  cfg.local.iters = 50;
  const Federation wild(cfg, linreg(10), data);
  try {
    run_experiment(wild);
    FAIL("expected divergence");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kDiverged);
    CHECK(std::string(e.what()).rfind("round 0: client 0", 0) == 0);
  }
}

TEST_CASE("empty experiment") {
  auto cfg = base_config(Method::kFedAvg, 2, 1);
  cfg.rounds = 0;
  const Federation fed(cfg, linreg(4), linreg_data(2, 5, 4, 13));
  const std::vector<double> w0 = {1, 2, 3, 4, 5};
  const auto res = run_experiment(fed, w0);
  CHECK(res.records.empty());
  CHECK(res.w == w0);
}

TEST_CASE("norm-sqrt allocation and static seeds") {
  auto cfg = base_config(Method::kFerret, 2, 12);
  cfg.allocation = AllocationPolicy::kNormSqrt;
  cfg.seed_policy = SeedPolicy::kStatic;
  const ModelSpec mlp{ModelKind::kMlp, 6, 8, 3, RandomSeed{1}};
  ExperimentData data;
  data.clients = partition_data(make_blobs(60, 6, 3, 2.0, RandomSeed{2}), 2, {}, RandomSeed{3});
  const Federation fed(cfg, mlp, data);
  CHECK(fed.partition().num_blocks() == 4);
  CHECK(fed.partition().total_budget() == 12);
  CHECK(fed.message_seed(1, 0) == fed.message_seed(1, 5));
  CHECK(fed.message_seed(0, 0) != fed.message_seed(1, 0));
  const auto res = run_experiment(fed);
  CHECK(res.records.size() == 3);
}

TEST_CASE("socket workers reproduce in-process records") {
  for (Method m : {Method::kFerret, Method::kFedAvg, Method::kFedZO, Method::kFedKSeed}) {
    auto cfg = base_config(m, 5, 6);
    cfg.participation = 0.8;
    cfg.local.lr = 0.02;
    const Federation fed(cfg, linreg(12), linreg_data(5, 12, 12, 14));
    const auto local = run_experiment(fed);
    SocketExecutor sockets(fed, 2);
    const auto remote = run_experiment(fed, sockets);
    CHECK(local.records == remote.records);
    CHECK(local.w == remote.w);
  }
}

TEST_CASE("socket workers forward client errors") {
  auto cfg = base_config(Method::kFedAvg, 2, 1);
  cfg.local.lr = 1e4;
  cfg.local.iters = 50;
  const Federation fed(cfg, linreg(10), linreg_data(2, 10, 10, 12));
  SocketExecutor sockets(fed, 2);
  try {
    run_experiment(fed, sockets);
    FAIL("expected divergence");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kDiverged);
  }
}
