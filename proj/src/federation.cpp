// Copyright 2026 The fedproj Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#include "fedproj/federation.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <map>
#include <thread>

#include "fedproj/error.hpp"

namespace fedproj {

namespace {

template <typename E, std::size_t N>
E parse_enum(const std::string& name, const E (&all)[N], const char* (*fn)(E),
             const char* what) {
  for (E e : all) {
    if (name == fn(e)) return e;
  }
  throw Error(ErrorCode::kConfig, std::string("unknown ") + what + " '" + name + "'");
}

}  // namespace

const char* method_name(Method m) {
  switch (m) {
    case Method::kFerret: return "ferret";
    case Method::kFedAvg: return "fedavg";
    case Method::kFedZO: return "fedzo";
    case Method::kFedKSeed: return "fedkseed";
  }
  return "?";
}

Method parse_method(const std::string& name) {
  static constexpr Method kAll[] = {Method::kFerret, Method::kFedAvg, Method::kFedZO,
                                    Method::kFedKSeed};
  return parse_enum(name, kAll, method_name, "method");
}

const char* allocation_name(AllocationPolicy p) {
  return p == AllocationPolicy::kUniform ? "uniform" : "norm-sqrt";
}

AllocationPolicy parse_allocation(const std::string& name) {
  static constexpr AllocationPolicy kAll[] = {AllocationPolicy::kUniform,
                                              AllocationPolicy::kNormSqrt};
  return parse_enum(name, kAll, allocation_name, "allocation policy");
}

const char* seed_policy_name(SeedPolicy p) {
  return p == SeedPolicy::kPerRound ? "per-round" : "static";
}

SeedPolicy parse_seed_policy(const std::string& name) {
  static constexpr SeedPolicy kAll[] = {SeedPolicy::kPerRound, SeedPolicy::kStatic};
  return parse_enum(name, kAll, seed_policy_name, "seed policy");
}

std::string DataSkew::label() const {
  if (kind == Kind::kIid) return "iid";
  char buf[48];
  std::snprintf(buf, sizeof buf, "label-skew(%g)", alpha);
  return buf;
}

void FedConfig::validate() const {
  local.validate();
  if (num_clients == 0) throw Error(ErrorCode::kConfig, "num_clients must be >= 1");
  if (total_bases == 0) throw Error(ErrorCode::kConfig, "total_bases must be >= 1");
  if (!(participation > 0.0 && participation <= 1.0)) {
    throw Error(ErrorCode::kConfig, "participation must be in (0, 1]");
  }
  if (!std::isfinite(server_lr)) throw Error(ErrorCode::kConfig, "server_lr must be finite");
  if (!(zo_epsilon > 0.0) || !std::isfinite(zo_epsilon)) {
    throw Error(ErrorCode::kConfig, "zo_epsilon must be > 0");
  }
  if (skew.kind == DataSkew::Kind::kLabelSkew && !(skew.alpha > 0.0)) {
    throw Error(ErrorCode::kConfig, "label-skew alpha must be > 0");
  }
  if (threads == 0) throw Error(ErrorCode::kConfig, "threads must be >= 1");
}

std::size_t FedConfig::clients_per_round() const {
  const double n = std::ceil(participation * static_cast<double>(num_clients) - 1e-9);
  return std::clamp<std::size_t>(static_cast<std::size_t>(n), 1, num_clients);
}

namespace {

void shuffle_indices(std::vector<std::size_t>& idx, prng::SplitMix64& rng) {
  for (std::size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[rng.below(i)]);
}

}  // namespace

std::vector<ClientDataset> partition_data(const Dataset& full, std::size_t n,
                                          const DataSkew& skew, RandomSeed seed) {
  if (n == 0 || full.size() < n) {
    throw Error(ErrorCode::kPartition, "cannot split " + std::to_string(full.size()) +
                                           " examples over " + std::to_string(n) + " clients");
  }
  prng::SplitMix64 rng(derive_subseed(seed, 0, 0, seed_tag::kSplit, 0).value);
  std::vector<std::vector<std::size_t>> shares(n);

  if (skew.kind == DataSkew::Kind::kIid || n == 1) {
    std::vector<std::size_t> idx(full.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    if (n > 1) shuffle_indices(idx, rng);
    const std::size_t base = idx.size() / n, extra = idx.size() % n;
    std::size_t pos = 0;
    for (std::size_t c = 0; c < n; ++c) {
      const std::size_t len = base + (c < extra ? 1 : 0);
      shares[c].assign(idx.begin() + pos, idx.begin() + pos + len);
      pos += len;
    }
  } else {
    std::map<double, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < full.size(); ++i) by_class[full[i].target].push_back(i);
    constexpr int kMaxDraws = 1000;
    bool ok = false;
    for (int draw = 0; draw < kMaxDraws && !ok; ++draw) {
      for (auto& s : shares) s.clear();
      for (auto& [label, members] : by_class) {
        std::vector<std::size_t> idx = members;
        shuffle_indices(idx, rng);
        std::vector<double> p(n);
        double sum = 0.0;
        for (double& x : p) sum += (x = rng.gamma(skew.alpha));
        // Cumulative cut points; the last client takes the remainder.
        double cum = 0.0;
        std::size_t pos = 0;
        for (std::size_t c = 0; c < n; ++c) {
          cum += p[c] / sum;
          const std::size_t end =
              c + 1 == n ? idx.size()
                         : std::min(idx.size(), static_cast<std::size_t>(std::llround(
                                                    cum * static_cast<double>(idx.size()))));
          if (end > pos) shares[c].insert(shares[c].end(), idx.begin() + pos, idx.begin() + end);
          pos = std::max(pos, end);
        }
      }
      ok = std::all_of(shares.begin(), shares.end(), [](const auto& s) { return !s.empty(); });
    }
    if (!ok) throw Error(ErrorCode::kPartition, "label-skew split left a client empty");
  }

  std::vector<ClientDataset> out(n);
  for (std::size_t c = 0; c < n; ++c) {
    out[c].client_id = static_cast<std::uint32_t>(c);
    out[c].skew_label = skew.label();
    std::sort(shares[c].begin(), shares[c].end());
    for (std::size_t i : shares[c]) out[c].examples.push_back(full[i]);
  }
  return out;
}

namespace {

std::uint32_t partition_fingerprint(const std::vector<std::size_t>& dims,
                                    const std::vector<std::size_t>& budgets) {
  std::uint64_t h = prng::mix64(dims.size());
  for (std::size_t x : dims) h = prng::mix64(h ^ x);
  for (std::size_t x : budgets) h = prng::mix64((h + prng::kGolden) ^ x);
  return static_cast<std::uint32_t>(h);
}

Dataset all_client_data(const ExperimentData& data) {
  Dataset out;
  for (const auto& c : data.clients) out.insert(out.end(), c.examples.begin(), c.examples.end());
  return out;
}

}  // namespace

Federation::Federation(FedConfig cfg, ModelSpec spec, ExperimentData data)
    : cfg_(std::move(cfg)), spec_(std::move(spec)), data_(std::move(data)) {
  cfg_.validate();
  const ParamLayout layout = spec_.layout();
  dim_ = layout.dim();
  if (data_.clients.size() != cfg_.num_clients) {
    throw Error(ErrorCode::kConfig, "expected " + std::to_string(cfg_.num_clients) +
                                        " client datasets, got " +
                                        std::to_string(data_.clients.size()));
  }
  for (std::size_t c = 0; c < data_.clients.size(); ++c) {
    if (data_.clients[c].examples.empty()) {
      throw Error(ErrorCode::kPartition, "client " + std::to_string(c) + " has no data");
    }
    data_.clients[c].client_id = static_cast<std::uint32_t>(c);
  }

  if (cfg_.method != Method::kFerret) {
    partition_ = BlockPartition::single(dim_, 1);
    return;
  }
  const auto group_sizes = layout.group_sizes();
  const auto dims = split_block_dims(group_sizes, cfg_.max_block_dim);
  std::vector<std::size_t> budgets;
  if (cfg_.allocation == AllocationPolicy::kUniform) {
    budgets = uniform_budgets(dims, cfg_.total_bases);
  } else {
    // Calibrated once from the full-batch gradient at the initial model.
    const auto w0 = init_params(spec_);
    const auto g = grad(spec_, w0, all_client_data(data_));
    const BlockPartition shape(dims, std::vector<std::size_t>(dims.size(), 1));
    budgets = allocate_budgets(block_norms(g, shape), shape.stats(), cfg_.total_bases);
  }
  partition_ = BlockPartition(dims, budgets, partition_fingerprint(dims, budgets));
}

std::vector<std::uint32_t> Federation::sample_clients(std::size_t round) const {
  const std::size_t n = cfg_.num_clients, m = cfg_.clients_per_round();
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  if (m < n) {
    prng::SplitMix64 rng(derive_subseed(cfg_.root_seed, 0, round, seed_tag::kSelect, 0).value);
    for (std::size_t i = 0; i < m; ++i) std::swap(idx[i], idx[i + rng.below(n - i)]);
  }
  std::vector<std::uint32_t> out(idx.begin(), idx.begin() + m);
  std::sort(out.begin(), out.end());
  return out;
}

RandomSeed Federation::message_seed(std::uint32_t client, std::size_t round) const {
  const std::size_t r = cfg_.seed_policy == SeedPolicy::kStatic ? 0 : round;
  return derive_subseed(cfg_.root_seed, client, r, seed_tag::kBasis, 0);
}

RandomSeed Federation::data_seed(std::uint32_t client, std::size_t round) const {
  return derive_subseed(cfg_.root_seed, client, round, seed_tag::kData, 0);
}

ClientUpdateMsg Federation::client_update(std::uint32_t client, std::size_t round,
                                          std::span<const double> w) const {
  if (client >= cfg_.num_clients) throw Error(ErrorCode::kConfig, "client id out of range");
  if (w.size() != dim_) throw Error(ErrorCode::kShape, "global model has wrong dimension");
  try {
    switch (cfg_.method) {
      case Method::kFerret: return ferret_client(client, round, w);
      case Method::kFedAvg: return fedavg_client(client, round, w);
      case Method::kFedZO: return fedzo_client(client, round, w);
      case Method::kFedKSeed: return fedkseed_client(client, round, w);
    }
  } catch (const Error& e) {
    throw e.with_context("client " + std::to_string(client));
  }
  throw Error(ErrorCode::kConfig, "unknown method");
}

ClientUpdateMsg Federation::ferret_client(std::uint32_t client, std::size_t round,
                                          std::span<const double> w) const {
  const LocalResult local =
      local_sgd(spec_, w, data_.clients[client].examples, cfg_.local, data_seed(client, round));
  const RandomSeed seed = message_seed(client, round);
  ProjectedUpdate p = cfg_.exact_projection ? exact_project(local.delta, partition_, seed)
                                            : project(local.delta, partition_, seed);
  ClientUpdateMsg msg;
  msg.client_id = client;
  msg.round = static_cast<std::uint32_t>(round);
  msg.upload_units = p.num_coords() + 1;
  msg.grad_evals = local.grad_evals;
  msg.payload = std::move(p);
  return msg;
}

ClientUpdateMsg Federation::fedavg_client(std::uint32_t client, std::size_t round,
                                          std::span<const double> w) const {
  LocalResult local =
      local_sgd(spec_, w, data_.clients[client].examples, cfg_.local, data_seed(client, round));
  ClientUpdateMsg msg;
  msg.client_id = client;
  msg.round = static_cast<std::uint32_t>(round);
  msg.upload_units = dim_;
  msg.grad_evals = local.grad_evals;
  msg.payload = std::move(local.delta);
  return msg;
}

namespace {

void check_finite_params(std::span<const double> w, std::size_t step) {
  for (double x : w) {
    if (!std::isfinite(x)) throw DivergedError(step, "non-finite local parameters");
  }
}

}  // namespace

ClientUpdateMsg Federation::fedzo_client(std::uint32_t client, std::size_t round,
                                         std::span<const double> w) const {
  const Dataset& data = data_.clients[client].examples;
  prng::SplitMix64 rng(data_seed(client, round).value);
  const std::size_t r = cfg_.seed_policy == SeedPolicy::kStatic ? 0 : round;
  std::vector<double> cur(w.begin(), w.end()), delta(dim_, 0.0);
  std::uint64_t evals = 0;
  for (std::size_t t = 0; t < cfg_.local.iters; ++t) {
    const Dataset batch = sample_batch(data, cfg_.local.batch_size, rng);
    const PointLoss f = [&](std::span<const double> x) { return loss(spec_, x, batch); };
    const ZOConfig zc{cfg_.zo_epsilon, cfg_.total_bases,
                      derive_subseed(cfg_.root_seed, client, r, seed_tag::kZO, t)};
    ZOEstimate est;
    try {
      est = zo_gradient_estimate(f, cur, zc);
    } catch (const NumericError&) {
      throw DivergedError(t, "non-finite zeroth-order loss");
    }
    evals += cfg_.total_bases + 1;
    for (std::size_t i = 0; i < dim_; ++i) {
      const double step = cfg_.local.lr * est.gradient[i];
      cur[i] -= step;
      delta[i] += step;
    }
    check_finite_params(cur, t);
  }
  ClientUpdateMsg msg;
  msg.client_id = client;
  msg.round = static_cast<std::uint32_t>(round);
  msg.upload_units = dim_;
  msg.grad_evals = evals;
  msg.payload = std::move(delta);
  return msg;
}

ClientUpdateMsg Federation::fedkseed_client(std::uint32_t client, std::size_t round,
                                            std::span<const double> w) const {
  const Dataset& data = data_.clients[client].examples;
  prng::SplitMix64 rng(data_seed(client, round).value);
  // Both evaluations of a step share that step's mini-batch.
  std::size_t batch_step = static_cast<std::size_t>(-1);
  Dataset batch;
  const StepLoss f = [&](std::span<const double> x, std::size_t step) {
    if (step != batch_step) {
      batch = sample_batch(data, cfg_.local.batch_size, rng);
      batch_step = step;
    }
    return loss(spec_, x, batch);
  };
  const ZOConfig zc{cfg_.zo_epsilon, cfg_.total_bases, message_seed(client, round)};
  SeedReplayLog out;
  try {
    out = fedkseed_local_step(w, f, zc, cfg_.local.lr);
  } catch (const NumericError& e) {
    throw DivergedError(e.index(), "non-finite zeroth-order loss");
  }
  check_finite_params(out.w, cfg_.total_bases);
  ClientUpdateMsg msg;
  msg.client_id = client;
  msg.round = static_cast<std::uint32_t>(round);
  msg.upload_units = out.log.values.size() + 1;
  msg.grad_evals = out.loss_evals;
  msg.payload = std::move(out.log);
  return msg;
}

std::vector<double> Federation::decode_update(const ClientUpdateMsg& msg,
                                              std::span<const double> w) const {
  switch (cfg_.method) {
    case Method::kFerret: {
      const auto* p = std::get_if<ProjectedUpdate>(&msg.payload);
      if (!p) throw Error(ErrorCode::kProtocol, "ferret expects a projected update");
      if (p->partition_id != partition_.id()) {
        throw Error(ErrorCode::kProtocol, "client " + std::to_string(msg.client_id) +
                                              " used partition " +
                                              std::to_string(p->partition_id));
      }
      try {
        return reconstruct(*p, partition_);
      } catch (const Error& e) {
        if (e.code() == ErrorCode::kShape) throw Error(ErrorCode::kProtocol, e.what());
        throw;
      }
    }
    case Method::kFedKSeed: {
      const auto* g = std::get_if<ScalarGrads>(&msg.payload);
      if (!g) throw Error(ErrorCode::kProtocol, "fedkseed expects scalar gradients");
      if (g->values.size() != cfg_.total_bases) {
        throw Error(ErrorCode::kProtocol, "fedkseed log has the wrong length");
      }
      const auto moved = fedkseed_replay(w, *g, cfg_.local.lr);
      std::vector<double> delta(dim_);
      for (std::size_t i = 0; i < dim_; ++i) delta[i] = w[i] - moved[i];
      return delta;
    }
    case Method::kFedAvg:
    case Method::kFedZO: {
      const auto* v = std::get_if<std::vector<double>>(&msg.payload);
      if (!v) throw Error(ErrorCode::kProtocol, "expected a raw update");
      if (v->size() != dim_) throw Error(ErrorCode::kProtocol, "raw update has wrong length");
      return *v;
    }
  }
  throw Error(ErrorCode::kConfig, "unknown method");
}

std::vector<double> Federation::aggregate(std::span<const double> w,
                                          std::vector<ClientUpdateMsg> msgs) const {
  if (msgs.empty()) throw Error(ErrorCode::kProtocol, "no client updates to aggregate");
  std::sort(msgs.begin(), msgs.end(),
            [](const auto& a, const auto& b) { return a.client_id < b.client_id; });
  std::vector<double> sum(dim_, 0.0);
  for (const auto& m : msgs) {
    const auto delta = decode_update(m, w);
    for (std::size_t i = 0; i < dim_; ++i) sum[i] += delta[i];
  }
  const double scale = cfg_.server_lr / static_cast<double>(msgs.size());
  std::vector<double> out(w.begin(), w.end());
  for (std::size_t i = 0; i < dim_; ++i) out[i] -= scale * sum[i];
  return out;
}

std::uint64_t Federation::download_units(std::size_t n_sampled) const {
  switch (cfg_.method) {
    case Method::kFerret:
      return std::uint64_t{n_sampled} * (n_sampled - 1) * (partition_.total_budget() + 1);
    case Method::kFedKSeed:
      return std::uint64_t{n_sampled} * (n_sampled - 1) * (cfg_.total_bases + 1);
    case Method::kFedAvg:
    case Method::kFedZO:
      return std::uint64_t{n_sampled} * dim_;
  }
  return 0;
}

std::vector<ClientUpdateMsg> InProcessExecutor::run(const Federation& fed, std::size_t round,
                                                    std::span<const double> w,
                                                    std::span<const std::uint32_t> clients) {
  std::vector<ClientUpdateMsg> out(clients.size());
  const std::size_t threads = std::min(fed.config().threads, clients.size());
  if (threads <= 1) {
    for (std::size_t i = 0; i < clients.size(); ++i) out[i] = fed.client_update(clients[i], round, w);
    return out;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(clients.size());
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < clients.size(); i = next++) {
        try {
          out[i] = fed.client_update(clients[i], round, w);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  // Lowest client id wins so the reported error is schedule-independent.
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

void evaluate_global(const Federation& fed, std::span<const double> w, RoundRecord& rec) {
  const Dataset& eval = fed.data().eval;
  if (!eval.empty()) {
    rec.global_loss = loss(fed.model(), w, eval);
    rec.eval_metric = eval_metric(fed.model(), w, eval);
    return;
  }
  const Dataset all = all_client_data(fed.data());
  rec.global_loss = loss(fed.model(), w, all);
  rec.eval_metric = eval_metric(fed.model(), w, all);
}

}  // namespace

RoundResult run_round(const Federation& fed, ClientExecutor& exec,
                      std::span<const double> w, std::size_t round,
                      const RoundRecord& prev) {
  const auto clients = fed.sample_clients(round);
  const bool timing = fed.config().timing;

  auto t0 = Clock::now();
  RoundResult res;
  res.msgs = exec.run(fed, round, w, clients);
  const double local_s = timing ? seconds_since(t0) : 0.0;

  t0 = Clock::now();
  res.w = fed.aggregate(w, res.msgs);
  const double agg_s = timing ? seconds_since(t0) : 0.0;

  RoundRecord& rec = res.record;
  rec.round = round;
  rec.cumulative_upload = prev.cumulative_upload;
  rec.cumulative_grad_evals = prev.cumulative_grad_evals;
  for (const auto& m : res.msgs) {
    rec.cumulative_upload += m.upload_units;
    rec.cumulative_grad_evals += m.grad_evals;
  }
  rec.cumulative_download = prev.cumulative_download + fed.download_units(clients.size());
  rec.local_seconds = local_s;
  rec.aggregate_seconds = agg_s;
  for (double x : res.w) {
    if (!std::isfinite(x)) throw DivergedError(round, "non-finite global model");
  }
  evaluate_global(fed, res.w, rec);
  if (!std::isfinite(rec.global_loss)) throw DivergedError(round, "non-finite global loss");
  return res;
}

namespace {

RoundResult checked_round(const Federation& fed, Method expected, std::span<const double> w,
                          std::size_t round, const RoundRecord& prev) {
  if (fed.config().method != expected) {
    throw Error(ErrorCode::kConfig, std::string("federation is configured for ") +
                                        method_name(fed.config().method));
  }
  InProcessExecutor exec;
  return run_round(fed, exec, w, round, prev);
}

}  // namespace

RoundResult ferret_round(const Federation& fed, std::span<const double> w,
                         std::size_t round, const RoundRecord& prev) {
  return checked_round(fed, Method::kFerret, w, round, prev);
}

RoundResult fedavg_round(const Federation& fed, std::span<const double> w,
                         std::size_t round, const RoundRecord& prev) {
  return checked_round(fed, Method::kFedAvg, w, round, prev);
}

ExperimentResult run_experiment(const Federation& fed, ClientExecutor& exec,
                                std::vector<double> w0) {
  ExperimentResult out;
  out.w = w0.empty() ? init_params(fed.model()) : std::move(w0);
  if (out.w.size() != fed.dim()) throw Error(ErrorCode::kShape, "initial model has wrong dimension");
  RoundRecord prev;
  for (std::size_t r = 0; r < fed.config().rounds; ++r) {
    try {
      RoundResult res = run_round(fed, exec, out.w, r, prev);
      out.w = std::move(res.w);
      prev = res.record;
      out.records.push_back(res.record);
    } catch (const Error& e) {
      throw e.with_context("round " + std::to_string(r));
    }
  }
  return out;
}

ExperimentResult run_experiment(const Federation& fed, std::vector<double> w0) {
  InProcessExecutor exec;
  return run_experiment(fed, exec, std::move(w0));
}

CostSummary account_costs(const Federation& fed, std::span<const RoundRecord> records) {
  CostSummary s;
  s.method = method_name(fed.config().method);
  s.rounds = records.size();
  s.clients_per_round = fed.config().clients_per_round();
  s.dim = fed.dim();
  for (const auto& r : records) {
    s.local_seconds += r.local_seconds;
    s.aggregate_seconds += r.aggregate_seconds;
  }
  if (!records.empty()) {
    s.total_upload = records.back().cumulative_upload;
    s.total_download = records.back().cumulative_download;
    s.total_grad_evals = records.back().cumulative_grad_evals;
    const double rounds = static_cast<double>(records.size());
    s.upload_per_round = static_cast<double>(s.total_upload) / rounds;
    s.upload_per_client_round = s.upload_per_round / static_cast<double>(s.clients_per_round);
    s.download_per_round = static_cast<double>(s.total_download) / rounds;
    s.grad_evals_per_round = static_cast<double>(s.total_grad_evals) / rounds;
  }
  return s;
}

}  // namespace fedproj
